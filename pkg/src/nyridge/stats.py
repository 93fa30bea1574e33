"""Degrees of freedom, exact bias/variance, rank bounds, and rate fitting.

For the ridge smoother zhat = K (K + n lambda I)^(-1) y with fixed design,
E y = z and noise covariance sigma^2 I, the expected in-sample error splits
into closed forms

    bias     = n lambda^2 z^T (K + n lambda I)^(-2) z
    variance = (sigma^2 / n) tr K^2 (K + n lambda I)^(-2)

so every experiment here evaluates errors analytically; Monte-Carlo noise
draws appear only as cross-check oracles in the tests.

Three degrees-of-freedom quantities are tracked, with
d_max >= d_trace >= d_ave:

    d_max   = n max_i [K (K + n lambda I)^(-1)]_ii
    d_trace = tr K (K + n lambda I)^(-1)
    d_ave   = tr K^2 (K + n lambda I)^(-2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, VacuousBoundError
from .lowrank import nested_factor, nystrom, sample_columns
from .synthetic import FixedDesignProblem


def _rng_for(seed, *key) -> np.random.Generator:
    """Deterministic per-work-item generator: (master seed, row key)."""
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        base = np.random.SeedSequence(seed)
    return np.random.default_rng(
        np.random.SeedSequence(entropy=base.entropy, spawn_key=tuple(int(k) for k in key))
    )


def _eig_psd(K) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with negatives clipped to zero (PSD inputs)."""
    s, u = np.linalg.eigh(np.asarray(K, dtype=float))
    return np.clip(s, 0.0, None), u


@dataclass
class DofReport:
    d_max: float
    d_trace: float
    d_ave: float
    bias: float
    variance: float
    lam: float
    n: int


def dof(K, lam: float) -> tuple[float, float, float]:
    """(d_max, d_trace, d_ave) from one symmetric eigendecomposition."""
    if lam <= 0:
        raise ConfigError("lambda must be > 0")
    A = np.asarray(K, dtype=float)
    n = A.shape[0]
    s, u = _eig_psd(A)
    r = s / (s + n * lam)
    leverage = np.einsum("ji,i,ji->j", u, r, u)
    return float(n * np.max(leverage)), float(np.sum(r)), float(np.sum(r * r))


def dof_from_eigs(eigs, lam: float, constant_leverage: bool = True):
    """(d_max, d_trace, d_ave) from known eigenvalues.

    For circulant matrices (grid designs) the smoother diagonal is constant,
    so d_max = d_trace exactly; pass constant_leverage=False to get NaN for
    d_max when that is not known.
    """
    s = np.asarray(eigs, dtype=float)
    n = s.shape[0]
    r = np.clip(s, 0.0, None) / (np.clip(s, 0.0, None) + n * lam)
    d_trace = float(np.sum(r))
    d_ave = float(np.sum(r * r))
    d_max = d_trace if constant_leverage else float("nan")
    return d_max, d_trace, d_ave


def bias_variance(K, z, sigma2: float, lam: float) -> tuple[float, float]:
    """Closed-form expected in-sample error terms for the exact smoother."""
    if lam <= 0:
        raise ConfigError("lambda must be > 0")
    if sigma2 < 0:
        raise ConfigError("sigma2 must be >= 0")
    A = np.asarray(K, dtype=float)
    z = np.asarray(z, dtype=float)
    n = A.shape[0]
    s, u = _eig_psd(A)
    return _bias_variance_spectral(s, (u.T @ z) ** 2, sigma2, lam, n)


def _bias_variance_spectral(eigs, coef2, sigma2, lam, n) -> tuple[float, float]:
    nl = n * lam
    bias = n * lam * lam * float(np.sum(coef2 / (eigs + nl) ** 2))
    ratio = eigs / (eigs + nl)
    var = sigma2 / n * float(np.sum(ratio * ratio))
    return bias, var


def bias_variance_from_eigs(eigs, coef2, sigma2: float, lam: float) -> tuple[float, float]:
    """Spectral-path bias/variance given eigenvalues and squared coefficients.

    ``coef2[i]`` is the squared coefficient of z on the i-th (unit-norm)
    eigenvector; for grid designs that is |fft(z)|^2 / n in frequency order.
    """
    eigs = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    return _bias_variance_spectral(eigs, np.asarray(coef2, dtype=float), sigma2, lam, eigs.size)


def lowrank_bias_variance(phi, z, sigma2: float, lam: float) -> tuple[float, float]:
    """Bias/variance of the smoother built on L = Phi Phi^T, via thin SVD.

    O(n p^2) instead of a dense n x n eigendecomposition: directions
    orthogonal to the column space carry eigenvalue zero, so their bias
    contribution is ||z_perp||^2 / n.
    """
    phi = np.asarray(phi, dtype=float)
    z = np.asarray(z, dtype=float)
    n = phi.shape[0]
    nl = n * lam
    u, s, _ = np.linalg.svd(phi, full_matrices=False)
    ev = s * s
    uz = u.T @ z
    resid2 = max(float(z @ z - uz @ uz), 0.0)
    bias = n * lam * lam * float(np.sum(uz * uz / (ev + nl) ** 2)) + resid2 / n
    ratio = ev / (ev + nl)
    var = sigma2 / n * float(np.sum(ratio * ratio))
    return bias, var


def expected_error(K, z, sigma2: float, lam: float) -> float:
    b, v = bias_variance(K, z, sigma2, lam)
    return b + v


def dof_report(K, z, sigma2: float, lam: float) -> DofReport:
    """All degrees-of-freedom quantities plus bias and variance."""
    A = np.asarray(K, dtype=float)
    n = A.shape[0]
    d_max, d_trace, d_ave = dof(A, lam)
    b, v = bias_variance(A, z, sigma2, lam)
    return DofReport(d_max, d_trace, d_ave, b, v, lam, n)


def theorem_rank_bound(d_max: float, delta: float, n: int, r2: float, lam: float) -> int:
    """Sufficient rank ceil((32 d / delta + 2) log(n R^2 / (delta lambda))).

    Raises :class:`VacuousBoundError` when n R^2 <= delta lambda, where the
    logarithm is non-positive and the bound carries no information.
    """
    if not (0.0 < delta < 1.0):
        raise ConfigError("delta must be in (0, 1)")
    if lam <= 0:
        raise ConfigError("lambda must be > 0")
    arg = n * r2 / (delta * lam)
    if arg <= 1.0:
        raise VacuousBoundError(
            f"rank bound vacuous: n R^2 / (delta lambda) = {arg:.3e} <= 1"
        )
    return int(math.ceil((32.0 * d_max / delta + 2.0) * math.log(arg)))


@dataclass
class TheoremCheck:
    """Monte-Carlo check of the column-sampling error-ratio bound."""

    ratio_mean: float
    bound: float  # 1 + 4 delta
    holds: bool
    high_prob_threshold: float  # (1 - delta/2)^(-2)
    frac_above_threshold: float
    high_prob_bound: float  # n exp(-p / (32 d / delta + 2))
    p: int
    trials: int
    err_full: float
    ratios: np.ndarray


def verify_theorem(
    problem: FixedDesignProblem,
    lam: float,
    delta: float,
    p: int,
    trials: int,
    seed,
) -> TheoremCheck:
    """Empirical mean of [bias(L) + variance(L)] / [bias(K) + variance(K)].

    Both errors are closed forms (no noise sampling needed in fixed design);
    randomness enters only through the column subsets. Also reports the
    fraction of draws whose ratio exceeds the high-probability threshold
    (1 - delta/2)^(-2), next to its bound n exp(-p / (32 d / delta + 2)).
    """
    if not (0.0 < delta < 1.0):
        raise ConfigError("delta must be in (0, 1)")
    A = problem.K.entries
    n = problem.n
    if not (1 <= p <= n):
        raise ConfigError(f"need 1 <= p <= n, got p={p}")
    b, v = bias_variance(A, problem.z, problem.sigma2, lam)
    err_full = b + v
    ratios = np.empty(trials)
    for t in range(trials):
        sel = sample_columns(n, p, _rng_for(seed, t))
        factor = nystrom(A, sel)
        bl, vl = lowrank_bias_variance(factor.phi, problem.z, problem.sigma2, lam)
        ratios[t] = (bl + vl) / err_full
    d_max, _, _ = dof(A, lam)
    thresh = (1.0 - delta / 2.0) ** -2
    return TheoremCheck(
        ratio_mean=float(np.mean(ratios)),
        bound=1.0 + 4.0 * delta,
        holds=bool(np.mean(ratios) <= 1.0 + 4.0 * delta),
        high_prob_threshold=thresh,
        frac_above_threshold=float(np.mean(ratios > thresh)),
        high_prob_bound=float(min(1.0, n * math.exp(-p / (32.0 * d_max / delta + 2.0)))),
        p=p,
        trials=trials,
        err_full=err_full,
        ratios=ratios,
    )


def verify_lemma_tail(psi, p: int, t_grid, trials: int, seed) -> list[tuple[float, float, float]]:
    """Monte-Carlo tail of lambda_max[Psi^T Psi / n - Psi_I^T Psi_I / p].

    Returns rows (t, empirical_prob, bound) where the bound is
    r exp(-p t^2 / 2 / (lambda_max(Psi^T Psi / n) (R^2 + t/3))) clipped to 1,
    with R^2 the computed maximum squared row norm.
    """
    psi = np.asarray(psi, dtype=float)
    n, r = psi.shape
    if not (1 <= p <= n):
        raise ConfigError(f"need 1 <= p <= n, got p={p}")
    A = psi.T @ psi / n
    lam_max = float(np.linalg.eigvalsh(A)[-1])
    r2 = float(np.max(np.sum(psi * psi, axis=1)))
    devs = np.empty(trials)
    for t in range(trials):
        idx = _rng_for(seed, t).choice(n, size=p, replace=False)
        sub = psi[idx]
        B = sub.T @ sub / p
        devs[t] = np.linalg.eigvalsh(A - B)[-1]
    rows = []
    for tval in np.asarray(t_grid, dtype=float):
        emp = float(np.mean(devs > tval))
        bound = min(1.0, r * math.exp(-p * tval * tval / 2.0 / (lam_max * (r2 + tval / 3.0))))
        rows.append((float(tval), emp, bound))
    return rows


class RankSweeper:
    """Sufficient-rank searches over a lambda grid with factor reuse.

    Random trials draw one permutation each; prefixes of a fixed-order
    Cholesky factor then give every nested column subset at once. The
    pivoted path is deterministic, so a single greedy factor serves all
    requested ranks. Per-(trial, p) spectra are cached, making repeated
    sufficient-rank queries across a lambda grid cheap.
    """

    def __init__(self, problem: FixedDesignProblem, trials: int = 10, seed=0):
        self.problem = problem
        self.trials = trials
        self.seed = seed
        self._perm_factors: list[np.ndarray] | None = None
        self._pivoted: np.ndarray | None = None
        self._spectra: dict = {}

    def factors(self, method: str) -> list[np.ndarray]:
        A = self.problem.K.entries
        n = self.problem.n
        if method == "random":
            if self._perm_factors is None:
                self._perm_factors = [
                    nested_factor(A, _rng_for(self.seed, t).permutation(n))
                    for t in range(self.trials)
                ]
            return self._perm_factors
        if method == "pivoted":
            if self._pivoted is None:
                order = _greedy_order(A)
                self._pivoted = nested_factor(A, order)
            return [self._pivoted]
        raise ConfigError(f"unknown method {method!r}")

    def _spectrum(self, method: str, t: int, p: int):
        key = (method, t, p)
        got = self._spectra.get(key)
        if got is None:
            phi = self.factors(method)[t][:, :p]
            z = self.problem.z
            u, s, _ = np.linalg.svd(phi, full_matrices=False)
            uz = u.T @ z
            resid2 = max(float(z @ z - uz @ uz), 0.0)
            got = (s * s, uz * uz, resid2)
            self._spectra[key] = got
        return got

    def error(self, method: str, p: int, lam: float) -> float:
        """Mean closed-form expected error of the rank-p approximation."""
        n = self.problem.n
        nl = n * lam
        sigma2 = self.problem.sigma2
        total = 0.0
        count = len(self.factors(method))
        for t in range(count):
            ev, uz2, resid2 = self._spectrum(method, t, p)
            bias = n * lam * lam * float(np.sum(uz2 / (ev + nl) ** 2)) + resid2 / n
            ratio = ev / (ev + nl)
            var = sigma2 / n * float(np.sum(ratio * ratio))
            total += bias + var
        return total / count

    def full_error(self, lam: float) -> float:
        return expected_error(self.problem.K.entries, self.problem.z, self.problem.sigma2, lam)

    def sufficient_rank(self, lam: float, method: str, tol: float = 0.01) -> int:
        """Smallest p with mean error <= (1 + tol) * full error; doubling + bisection."""
        if tol <= 0:
            raise ConfigError("tol must be > 0")
        n = self.problem.n

        def ok(p: int) -> bool:
            return self.error(method, p, lam) <= target

        target = (1.0 + tol) * self.full_error(lam)
        p = 1
        while p < n and not ok(p):
            p *= 2
        p = min(p, n)
        if not ok(p):
            return n
        if p == 1:
            return 1
        lo, hi = p // 2, p
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return hi


def _greedy_order(A: np.ndarray) -> np.ndarray:
    """Pivot order of the greedy diagonal-pivoted Cholesky, full depth."""
    n = A.shape[0]
    d = np.diag(A).astype(float).copy()
    floor = 1e-12 * float(np.max(d))
    phi = np.zeros((n, n))
    order = np.empty(n, dtype=int)
    used = np.zeros(n, dtype=bool)
    for k in range(n):
        masked = np.where(used, -np.inf, d)
        j = int(np.argmax(masked))
        order[k] = j
        used[j] = True
        if d[j] > floor:
            resid = A[:, j] - phi[:, :k] @ phi[j, :k]
            phi[:, k] = resid / np.sqrt(d[j])
            d -= phi[:, k] ** 2
            np.clip(d, 0.0, None, out=d)
        d[j] = 0.0
    return order


def sufficient_rank(
    problem: FixedDesignProblem,
    lam: float,
    tol: float = 0.01,
    trials: int = 10,
    method: str = "random",
    seed=0,
) -> int:
    """Smallest rank within (1 + tol) of the full-matrix expected error.

    Random selection averages the closed-form error over ``trials`` nested
    column draws; the pivoted path is deterministic (trials ignored).
    Returns n when no smaller rank suffices.
    """
    sweeper = RankSweeper(problem, trials=trials if method == "random" else 1, seed=seed)
    return sweeper.sufficient_rank(lam, method, tol)


@dataclass
class LambdaChoice:
    lambda_star: float
    error_star: float
    saturated: bool
    grid_index: int


def default_lambda_grid(trace_over_n: float, num: int = 40) -> np.ndarray:
    """40 log-spaced points spanning [1e-16, 1] times tr(K)/n."""
    return trace_over_n * np.logspace(-16.0, 0.0, num)


def optimal_lambda(problem: FixedDesignProblem, grid=None) -> LambdaChoice:
    """Grid minimizer of the closed-form error, with one local refinement.

    The spectrum comes from a floating-point eigendecomposition of K (what
    any solver actually sees), so for very fast eigenvalue decays the
    minimizer can hit the machine-precision floor; that regime is flagged
    through ``saturated`` (argmin at the smallest grid point or
    lambda* < 1e-15).
    """
    A = problem.K.entries
    z = problem.z
    n = problem.n
    if grid is None:
        grid = default_lambda_grid(problem.K.trace() / n)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ConfigError("lambda grid must be nonempty and increasing")
    s, u = _eig_psd(A)
    coef2 = (u.T @ z) ** 2
    errs = np.array(
        [sum(_bias_variance_spectral(s, coef2, problem.sigma2, lam, n)) for lam in grid]
    )
    i = int(np.argmin(errs))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    sub = np.geomspace(lo, hi, 12)
    sub_errs = np.array(
        [sum(_bias_variance_spectral(s, coef2, problem.sigma2, lam, n)) for lam in sub]
    )
    j = int(np.argmin(sub_errs))
    lam_star, err_star = float(sub[j]), float(sub_errs[j])
    if errs[i] < err_star:
        lam_star, err_star = float(grid[i]), float(errs[i])
    return LambdaChoice(
        lambda_star=lam_star,
        error_star=err_star,
        saturated=bool(i == 0 or lam_star < 1e-15),
        grid_index=i,
    )


@dataclass
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    inputs: tuple


def fit_rate(pairs) -> RateFit:
    """Least-squares slope of log(value) against log(n)."""
    pts = [(float(a), float(b)) for a, b in pairs]
    if len(pts) < 4:
        raise ConfigError(f"rate fit needs >= 4 pairs, got {len(pts)}")
    if any(v <= 0 for _, v in pts) or any(a <= 0 for a, _ in pts):
        raise ConfigError("rate fit needs positive sizes and values")
    x = np.log([a for a, _ in pts])
    y = np.log([v for _, v in pts])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.sum(resid * resid))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(
        exponent=float(coef[0]),
        intercept=float(coef[1]),
        r_squared=r2,
        inputs=tuple(pts),
    )
