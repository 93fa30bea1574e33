"""Fixed-design problem generators with analytically known spectra.

On the uniform grid x_i = (i-1)/n every translation-invariant periodic
kernel yields a circulant Gram matrix, so its exact eigenvalues follow from
folding the kernel's Fourier coefficients over residues mod n:

    eig_r = n * sum_{i >= 1, i = +/- r (mod n)} mu_i,   r = 0..n-1.

Polynomial tails are summed exactly through the Hurwitz zeta function and
exponential tails through geometric closed forms, so no truncation error
enters at all. Signals f(x) = sum_i 2 sqrt(nu_i) cos(2 i pi x) are built the
same way on grids; off-grid evaluation uses closed forms where they exist
and the polylogarithm otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import pi

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .errors import ConfigError
from .kernels import (
    SUPPORTED_BETAS,
    KernelMatrix,
    KernelSpec,
    _periodic_poly_values,
    cross_gram,
    gram,
)

POLYNOMIAL = "polynomial"
EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class DecayLaw:
    """Eigenvalue or signal-coefficient decay: i^(-2 rate) or exp(-rate i)."""

    kind: str
    rate: float

    def __post_init__(self):
        if self.kind == POLYNOMIAL:
            if self.rate <= 0.5:
                raise ConfigError("polynomial decay needs rate > 1/2 for summability")
        elif self.kind == EXPONENTIAL:
            if self.rate <= 0:
                raise ConfigError("exponential decay needs rate > 0")
        else:
            raise ConfigError(f"unknown decay kind {self.kind!r}")

    def values(self, idx) -> np.ndarray:
        """mu_i (or nu_i) at the given 1-based indices."""
        i = np.asarray(idx, dtype=float)
        if self.kind == POLYNOMIAL:
            return i ** (-2.0 * self.rate)
        return np.exp(-self.rate * i)


@dataclass(frozen=True)
class SpectrumSpec:
    """Decay laws for kernel eigenvalues (mu) and signal coefficients (nu)."""

    mu: DecayLaw
    nu: DecayLaw

    @classmethod
    def polynomial(cls, beta: float, delta: float) -> "SpectrumSpec":
        return cls(DecayLaw(POLYNOMIAL, beta), DecayLaw(POLYNOMIAL, delta))


@dataclass
class FixedDesignProblem:
    """Design points, kernel matrix, noiseless target, and noise level."""

    points: np.ndarray
    K: KernelMatrix
    z: np.ndarray
    sigma2: float
    spectrum: SpectrumSpec | None = None
    exact_eigs: np.ndarray | None = None  # frequency order r = 0..n-1 (grid designs)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def kernel_spec_for(mu: DecayLaw) -> KernelSpec:
    """The closed-form periodic kernel whose Fourier coefficients are 2 mu_i."""
    if mu.kind == POLYNOMIAL:
        beta = mu.rate
        if int(beta) != beta or int(beta) not in SUPPORTED_BETAS:
            raise ConfigError(
                f"grid problems need beta in {SUPPORTED_BETAS} (got {beta!r})"
            )
        return KernelSpec.periodic_poly(int(beta))
    return KernelSpec.periodic_exp(mu.rate)


def _residue_fold(law: DecayLaw, scale: float, n: int) -> np.ndarray:
    """a_r = sum_{i>=1, i = r (mod n)} law_i^scale for r = 0..n-1, exactly.

    ``scale`` = 1 folds mu_i (eigenvalues), 1/2 folds sqrt(nu_i) (signal).
    """
    r = np.arange(n, dtype=float)
    if law.kind == POLYNOMIAL:
        s = 2.0 * law.rate * scale
        if s <= 1.0:
            raise ConfigError(
                f"series sum_i i^(-{s:g}) diverges; decay rate too small"
            )
        out = np.empty(n)
        out[1:] = n ** (-s) * hurwitz_zeta(s, r[1:] / n)
        out[0] = n ** (-s) * hurwitz_zeta(s, 1.0)
        return out
    a = law.rate * scale
    common = 1.0 / (1.0 - np.exp(-a * n))
    out = np.exp(-a * r) * common
    out[0] = np.exp(-a * n) * common
    return out


def eig_circulant(mu: DecayLaw, n: int, tail_tol: float = 1e-12) -> np.ndarray:
    """Exact eigenvalues of the grid kernel matrix, in frequency order.

    eig_r = n (a_r + a_{(n-r) mod n}) where a is the residue fold of mu;
    wrap-around tails are closed forms (Hurwitz zeta / geometric series), so
    ``tail_tol`` is honored trivially.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    a = _residue_fold(mu, 1.0, n)
    return n * (a + a[(-np.arange(n)) % n])


def signal_on_grid(nu: DecayLaw, n: int) -> np.ndarray:
    """z_j = f((j-1)/n) for f(x) = sum_i 2 sqrt(nu_i) cos(2 i pi x), exactly.

    The series is folded over residues mod n and evaluated with one inverse
    FFT; all wrap-around tails are closed forms.
    """
    amp = 2.0 * _residue_fold(nu, 0.5, n)
    return n * np.real(np.fft.ifft(amp))


def signal_values(nu: DecayLaw, x) -> np.ndarray:
    """f(x) = sum_i 2 sqrt(nu_i) cos(2 i pi x) at arbitrary points.

    Exponential decay and even-integer polynomial decay have closed forms;
    other polynomial rates fall back to the polylogarithm (mpmath).
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if nu.kind == EXPONENTIAL:
        # geometric series with ratio exp(-kappa/2 + 2 pi i x)
        h = nu.rate / 2.0
        c = np.cos(2.0 * pi * xs)
        eh = np.exp(h)
        return 2.0 * (eh * c - 1.0) / (eh * eh - 2.0 * eh * c + 1.0)
    s = nu.rate  # exponent of sqrt(nu_i) = i^(-s)
    if s <= 1.0:
        raise ConfigError(f"signal series diverges for delta <= 1 (got {s!r})")
    if s == int(s) and int(s) % 2 == 0:
        return np.asarray(_periodic_poly_values(xs, int(s) // 2), dtype=float)
    import mpmath

    out = np.empty_like(xs)
    for k, xi in enumerate(xs):
        out[k] = 2.0 * float(
            mpmath.re(mpmath.polylog(s, mpmath.exp(2j * mpmath.pi * float(xi))))
        )
    return out


def _circulant_gram(spec: KernelSpec, n: int) -> KernelMatrix:
    """Grid Gram matrix built from its first row, exactly circulant.

    The row is mirrored around n/2 before tiling so that K is also exactly
    symmetric (k((n-r)/n) equals k(r/n) only up to an ulp otherwise).
    """
    pts = np.arange(n, dtype=float) / n
    row0 = cross_gram(np.zeros(1), pts, spec).reshape(-1)
    r = np.arange(n)
    row0 = row0[np.minimum(r, n - r)]
    shift = (r[None, :] - r[:, None]) % n
    return KernelMatrix(row0[shift])


def grid_problem(n: int, spectrum: SpectrumSpec, sigma2: float) -> FixedDesignProblem:
    """Uniform-grid problem: x_i = (i-1)/n, circulant K, exact eigenvalues."""
    if n < 2:
        raise ConfigError("n must be >= 2")
    if sigma2 < 0:
        raise ConfigError("sigma2 must be >= 0")
    spec = kernel_spec_for(spectrum.mu)
    K = _circulant_gram(spec, n)
    z = signal_on_grid(spectrum.nu, n)
    eigs = eig_circulant(spectrum.mu, n)
    return FixedDesignProblem(
        points=np.arange(n, dtype=float) / n,
        K=K,
        z=z,
        sigma2=float(sigma2),
        spectrum=spectrum,
        exact_eigs=eigs,
    )


def random_design_problem(
    n: int, spectrum: SpectrumSpec, sigma2: float, seed
) -> FixedDesignProblem:
    """Same kernel and signal on i.i.d. uniform points in [0, 1]."""
    if n < 2:
        raise ConfigError("n must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = rng.random(n)
    spec = kernel_spec_for(spectrum.mu)
    return FixedDesignProblem(
        points=pts,
        K=gram(pts, spec),
        z=signal_values(spectrum.nu, pts),
        sigma2=float(sigma2),
        spectrum=spectrum,
        exact_eigs=None,
    )


def draw_noise(n: int, sigma2: float, trials: int, seed) -> np.ndarray:
    """trials x n matrix of i.i.d. centered Gaussian noise, seeded."""
    if sigma2 < 0:
        raise ConfigError("sigma2 must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if sigma2 == 0.0:
        return np.zeros((trials, n))
    return np.sqrt(sigma2) * rng.standard_normal((trials, n))


def sigma2_for_snr(z, snr: float) -> float:
    """Noise variance giving signal power / noise power = snr^2."""
    if snr <= 0:
        raise ConfigError("snr must be > 0")
    return float(np.mean(np.square(z))) / (snr * snr)


def save_problem(problem: FixedDesignProblem, csv_path) -> None:
    """points,z as CSV plus a JSON metadata sidecar ``<csv_path>.meta.json``."""
    lines = ["point,z"]
    for x, v in zip(problem.points, problem.z):
        lines.append(f"{float(x)!r},{float(v)!r}")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {"sigma2": problem.sigma2, "n": problem.n}
    if problem.spectrum is not None:
        meta["mu"] = {"kind": problem.spectrum.mu.kind, "rate": problem.spectrum.mu.rate}
        meta["nu"] = {"kind": problem.spectrum.nu.kind, "rate": problem.spectrum.nu.rate}
    with open(str(csv_path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
