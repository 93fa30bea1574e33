"""Kernel functions and Gram-matrix assembly.

Two families of translation-invariant kernels on [0, 1] with known Fourier
coefficients, plus a Gaussian kernel for vector data:

* ``periodic_poly_kernel``: k(x, y) = sum_{i>=1} 2 i^(-2 beta) cos(2 i pi (x - y)),
  evaluated in closed form through Bernoulli polynomials.
* ``periodic_exp_kernel``: k(x, y) = sum_{i>=1} 2 exp(-rho i) cos(2 i pi (x - y)),
  evaluated as the real part of a geometric series.
* ``gaussian_kernel``: exp(-||x - y||^2 / (2 bandwidth^2)).

All functions are pure; concurrent calls are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, exp, factorial, pi

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError

# Degrees 2*beta with tabulated Bernoulli polynomial coefficients.
SUPPORTED_BETAS = (1, 2, 3, 4, 8)
BERNOULLI_DEGREES = tuple(2 * b for b in SUPPORTED_BETAS)


def _bernoulli_numbers(n_max: int) -> list[Fraction]:
    """First Bernoulli numbers B_0..B_n_max (B_1 = -1/2) as exact fractions."""
    bern = [Fraction(0)] * (n_max + 1)
    bern[0] = Fraction(1)
    for n in range(1, n_max + 1):
        acc = sum(Fraction(comb(n + 1, k)) * bern[k] for k in range(n))
        bern[n] = -acc / (n + 1)
    return bern


def _bernoulli_poly_coeffs(degree: int) -> np.ndarray:
    """Coefficients of B_degree(x), highest power first (np.polyval order)."""
    bern = _bernoulli_numbers(degree)
    coeffs = [Fraction(comb(degree, k)) * bern[degree - k] for k in range(degree + 1)]
    return np.array([float(c) for c in reversed(coeffs)])


# Generated once at import from the recurrence; exact rational arithmetic.
BERNOULLI_POLY_COEFFS: dict[int, np.ndarray] = {
    deg: _bernoulli_poly_coeffs(deg) for deg in BERNOULLI_DEGREES
}


def _frac(delta):
    """Fractional part delta - floor(delta), in [0, 1) for any sign."""
    return delta - np.floor(delta)


def _fold_half(u):
    """Map u in [0, 1) to [0, 0.5] using the symmetry B_2m(u) = B_2m(1 - u).

    The folded argument is bit-identical for u and 1 - u, which makes the
    periodic kernels exactly symmetric in floating point.
    """
    return 0.5 - np.abs(u - 0.5)


def _periodic_poly_values(delta, beta: int):
    """Vectorized closed form of the polynomial-decay periodic kernel."""
    if beta not in SUPPORTED_BETAS:
        raise ConfigError(
            f"beta must be one of {SUPPORTED_BETAS} (got {beta!r}); "
            "only these have tabulated Bernoulli polynomials"
        )
    m = 2 * beta
    u = _fold_half(_frac(delta))
    scale = (-1.0) ** (beta + 1) * (2.0 * pi) ** m / factorial(m)
    return scale * np.polyval(BERNOULLI_POLY_COEFFS[m], u)


def _periodic_exp_values(delta, rho: float):
    """Vectorized closed form of the exponential-decay periodic kernel."""
    if rho <= 0:
        raise ConfigError(f"rho must be > 0 (got {rho!r})")
    c = np.cos(2.0 * pi * _fold_half(_frac(delta)))
    er = exp(rho)
    return 2.0 * (er * c - 1.0) / (er * er - 2.0 * er * c + 1.0)


def periodic_poly_kernel(x: float, y: float, beta: int) -> float:
    """Periodic kernel with Fourier coefficients 2 i^(-2 beta).

    Parameters
    ----------
    x, y : float
        Points in [0, 1] (any reals are accepted; the kernel is 1-periodic).
    beta : int
        Decay exponent; one of ``SUPPORTED_BETAS``.

    Returns
    -------
    float
        sum_{i>=1} 2 i^(-2 beta) cos(2 i pi (x - y)), computed as
        (-1)^(beta+1) (2 pi)^(2 beta) B_{2 beta}(frac(x - y)) / (2 beta)!.
    """
    return float(_periodic_poly_values(np.float64(x - y), beta))


def periodic_exp_kernel(x: float, y: float, rho: float) -> float:
    """Periodic kernel with Fourier coefficients 2 exp(-rho i).

    Equals 2 (e^rho cos(2 pi (x-y)) - 1) / (e^(2 rho) - 2 e^rho cos(2 pi (x-y)) + 1).
    """
    return float(_periodic_exp_values(np.float64(x - y), rho))


def gaussian_kernel(x, y, bandwidth: float) -> float:
    """Gaussian kernel exp(-||x - y||^2 / (2 bandwidth^2)) for equal-length vectors."""
    if bandwidth <= 0:
        raise ConfigError(f"bandwidth must be > 0 (got {bandwidth!r})")
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    if xv.shape != yv.shape:
        raise ConfigError(f"dimension mismatch: {xv.shape} vs {yv.shape}")
    sq = float(np.sum((xv - yv) ** 2))
    return exp(-sq / (2.0 * bandwidth * bandwidth))


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its single parameter.

    ``kind`` is one of ``"periodic-polynomial"`` (param = beta > 1/2, integer,
    tabulated), ``"periodic-exponential"`` (param = rho > 0) or ``"gaussian"``
    (param = bandwidth > 0).
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "periodic-polynomial":
            if self.param <= 0.5:
                raise ConfigError("beta must be > 1/2 for a summable series")
            if int(self.param) != self.param or int(self.param) not in SUPPORTED_BETAS:
                raise ConfigError(
                    f"beta must be an integer in {SUPPORTED_BETAS} (got {self.param!r})"
                )
        elif self.kind == "periodic-exponential":
            if self.param <= 0:
                raise ConfigError("rho must be > 0")
        elif self.kind == "gaussian":
            if self.param <= 0:
                raise ConfigError("bandwidth must be > 0")
        else:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def periodic_poly(cls, beta: int) -> "KernelSpec":
        return cls("periodic-polynomial", beta)

    @classmethod
    def periodic_exp(cls, rho: float) -> "KernelSpec":
        return cls("periodic-exponential", rho)

    @classmethod
    def gaussian(cls, bandwidth: float) -> "KernelSpec":
        return cls("gaussian", bandwidth)

    @property
    def is_periodic(self) -> bool:
        return self.kind in ("periodic-polynomial", "periodic-exponential")

    def __call__(self, x, y) -> float:
        if self.kind == "periodic-polynomial":
            return periodic_poly_kernel(float(x), float(y), int(self.param))
        if self.kind == "periodic-exponential":
            return periodic_exp_kernel(float(x), float(y), self.param)
        return gaussian_kernel(x, y, self.param)


@dataclass
class KernelMatrix:
    """Symmetric PSD Gram matrix with a cached diagonal."""

    entries: np.ndarray
    diag: np.ndarray = field(repr=False, default=None)
    n: int = 0

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise ConfigError(f"kernel matrix must be square, got {self.entries.shape}")
        self.n = self.entries.shape[0]
        if self.diag is None:
            self.diag = np.ascontiguousarray(np.diag(self.entries))

    @property
    def max_diag(self) -> float:
        """R^2 = max_i K_ii, the squared feature-norm bound."""
        return float(np.max(self.diag))

    def trace(self) -> float:
        return float(np.sum(self.diag))

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.entries.astype(dtype)
        return self.entries


def _as_points(points, spec: KernelSpec) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if spec.is_periodic:
        return pts.reshape(-1)
    if pts.ndim == 1:
        return pts.reshape(-1, 1)
    return pts


def cross_gram(points_a, points_b, spec: KernelSpec) -> np.ndarray:
    """Rectangular kernel matrix k(a_i, b_j)."""
    pa, pb = _as_points(points_a, spec), _as_points(points_b, spec)
    if spec.kind == "periodic-polynomial":
        return _periodic_poly_values(pa[:, None] - pb[None, :], int(spec.param))
    if spec.kind == "periodic-exponential":
        return _periodic_exp_values(pa[:, None] - pb[None, :], spec.param)
    sq = cdist(pa, pb, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.param ** 2))


def gram(points, spec: KernelSpec) -> KernelMatrix:
    """Assemble the n x n Gram matrix K_ij = k(x_i, x_j).

    The output is symmetric by construction: periodic kernels are evaluated
    through an argument folded onto [0, 0.5] (identical floats for +/- the
    same difference), and the Gaussian through symmetric squared distances.
    """
    pts = _as_points(points, spec)
    n = pts.shape[0]
    if n < 1:
        raise ConfigError("gram needs at least one point")
    entries = cross_gram(pts, pts, spec)
    if spec.kind == "gaussian":
        np.fill_diagonal(entries, 1.0)
    return KernelMatrix(entries)


def kernel_column(points, spec: KernelSpec, j: int) -> np.ndarray:
    """Single Gram-matrix column, for algorithms that never hold all of K."""
    pts = _as_points(points, spec)
    return cross_gram(pts, pts[j : j + 1], spec).reshape(-1)


def median_distance_bandwidth(features, subsample: int = 500, seed: int = 0) -> float:
    """Median pairwise distance on a subsample; standard Gaussian bandwidth heuristic."""
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if n > subsample:
        idx = np.random.default_rng(seed).choice(n, size=subsample, replace=False)
        X = X[np.sort(idx)]
    d = cdist(X, X)
    off = d[np.triu_indices_from(d, k=1)]
    med = float(np.median(off)) if off.size else 1.0
    return med if med > 0 else 1.0
