"""Column-sampled low-rank factorizations of PSD kernel matrices.

Given a subset I of columns, the approximation is
L = K(V, I) K(I, I)^+ K(V, I)^T, represented by a factor Phi with
Phi Phi^T = L. Phi is built through the symmetric pseudo-root
Phi = K(V, I) K(I, I)^(+1/2), so the whitener needed for explicit feature
maps comes out as a byproduct.

Factorizations are sequential internally (pivot order is a data
dependence); factors are immutable after construction and safe to share
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericalError
from .kernels import KernelMatrix, KernelSpec, cross_gram

# Relative eigenvalue cutoff for pseudo-inverting K(I, I); kernel submatrices
# are routinely numerically singular.
PINV_RTOL = 1e-12

# Residual diagonals below -BREAKDOWN_RTOL * max(diag) indicate breakdown.
BREAKDOWN_RTOL = 1e-10


@dataclass(frozen=True)
class ColumnSelection:
    """Ordered distinct column indices out of {0, ..., n-1}."""

    indices: np.ndarray
    method: str  # "uniform-random" or "greedy-pivoted"
    n: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1 or idx.size == 0:
            raise ConfigError("selection must contain at least one index")
        if np.unique(idx).size != idx.size:
            raise ConfigError("selection indices must be distinct")
        if idx.min() < 0 or idx.max() >= self.n:
            raise ConfigError("selection indices out of range")

    @property
    def p(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class LowRankFactor:
    """Factor Phi (n x p) with Phi Phi^T = L, plus the selection that built it.

    ``whitener`` is the symmetric pseudo inverse square root of K(I, I); it
    maps raw kernel evaluations (k(x_i, x))_{i in I} to the explicit
    p-dimensional feature vector. ``trace_residual_trail`` (pivoted path
    only) holds tr(K - L_k) after each of the k = 1..p pivot steps.
    """

    phi: np.ndarray
    selection: ColumnSelection
    whitener: np.ndarray
    trace_residual_trail: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def rank(self) -> int:
        return self.phi.shape[1]

    def gram(self) -> np.ndarray:
        """Dense L = Phi Phi^T (n x n); for diagnostics on small problems."""
        return self.phi @ self.phi.T


def sample_columns(n: int, p: int, seed) -> ColumnSelection:
    """Uniform random p-subset of {0, ..., n-1}, without replacement.

    Deterministic given ``seed`` (an int or a numpy Generator).
    """
    if p < 1 or p > n:
        raise ConfigError(f"need 1 <= p <= n, got p={p}, n={n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.choice(n, size=p, replace=False)
    return ColumnSelection(indices=idx, method="uniform-random", n=n)


def _pseudo_root_inv(w: np.ndarray) -> np.ndarray:
    """Symmetric pseudo inverse square root of a PSD matrix."""
    s, u = np.linalg.eigh(w)
    cut = PINV_RTOL * max(s[-1], 0.0)
    keep = s > cut
    if not np.any(keep):
        return np.zeros_like(w)
    uk = u[:, keep]
    return (uk / np.sqrt(s[keep])) @ uk.T


def nystrom(K, selection: ColumnSelection) -> LowRankFactor:
    """Column approximation L = K(V, I) K(I, I)^+ K(I, V) as a factor.

    Eigenvalues of K(I, I) below ``PINV_RTOL`` times the largest are treated
    as zero. Cost O(p^2 n) given the p columns.
    """
    A = np.asarray(K, dtype=float)
    idx = selection.indices
    cols = A[:, idx]
    w = A[np.ix_(idx, idx)]
    whitener = _pseudo_root_inv(w)
    phi = cols @ whitener
    return LowRankFactor(phi=phi, selection=selection, whitener=whitener)


def pivoted_ichol(
    column_oracle: Callable[[int], np.ndarray],
    diag: np.ndarray,
    max_rank: int | None = None,
    trace_tol: float | None = None,
) -> LowRankFactor:
    """Incomplete Cholesky with greedy diagonal pivoting.

    At each step the pivot is the argmax of the residual diagonal (ties go to
    the smallest index, which np.argmax guarantees). The residual diagonal is
    maintained online, so ``trace_residual_trail[k]`` equals tr(K - L_{k+1})
    exactly and at most ``max_rank`` full kernel columns are ever evaluated;
    K itself is never materialized (O(p^2 n) time, O(p n) memory).

    Stops after ``max_rank`` pivots or once the trace residual drops to
    ``trace_tol`` (at least one of the two must be given).
    """
    d = np.array(diag, dtype=float, copy=True)
    n = d.shape[0]
    if max_rank is None and trace_tol is None:
        raise ConfigError("give max_rank, trace_tol, or both")
    pmax = n if max_rank is None else min(int(max_rank), n)
    if pmax < 1:
        raise ConfigError(f"max_rank must be >= 1, got {max_rank}")
    breakdown = -BREAKDOWN_RTOL * float(np.max(d))

    phi = np.zeros((n, pmax))
    trail = np.zeros(pmax)
    pivots: list[int] = []
    fetched: list[np.ndarray] = []
    for k in range(pmax):
        j = int(np.argmax(d))
        pivot = d[j]
        if pivot <= 0.0:
            break
        col = np.asarray(column_oracle(j), dtype=float)
        fetched.append(col)
        resid = col - phi[:, :k] @ phi[j, :k]
        phi[:, k] = resid / np.sqrt(pivot)
        d -= phi[:, k] ** 2
        d[j] = 0.0
        low = float(np.min(d))
        if low < breakdown:
            raise NumericalError(
                f"pivoted Cholesky breakdown: residual diagonal {low:.3e} "
                f"below {breakdown:.3e} after {k + 1} pivots"
            )
        np.clip(d, 0.0, None, out=d)
        pivots.append(j)
        trail[k] = float(np.sum(d))
        if trace_tol is not None and trail[k] <= trace_tol:
            k += 1
            break
    else:
        k = pmax

    phi = phi[:, :k]
    trail = trail[:k]
    if not pivots:
        raise NumericalError("pivoted Cholesky made no progress (zero diagonal)")
    # K(P, P) from the fetched columns; whitener for the feature map.
    w = np.column_stack(fetched)[pivots, :]
    w = 0.5 * (w + w.T)
    return LowRankFactor(
        phi=phi,
        selection=ColumnSelection(np.array(pivots), "greedy-pivoted", n),
        whitener=_pseudo_root_inv(w),
        trace_residual_trail=trail,
    )


def nested_factor(K, order: Sequence[int], rel_tol: float = PINV_RTOL) -> np.ndarray:
    """Cholesky factor with an externally fixed pivot order.

    Column k of the result depends only on order[:k+1], so every prefix
    phi[:, :p] is itself a factor of the column approximation built from
    order[:p]. Columns whose residual diagonal has collapsed below
    ``rel_tol * max(diag)`` are left at zero (the pseudo-inverse drops them
    too, so prefixes still match ``nystrom`` on the same index set).
    """
    A = np.asarray(K, dtype=float)
    n = A.shape[0]
    order = np.asarray(order, dtype=int)
    d = np.array(np.diag(A), dtype=float, copy=True)
    floor = rel_tol * float(np.max(d))
    phi = np.zeros((n, order.size))
    for k, j in enumerate(order):
        pivot = d[j]
        if pivot <= floor:
            continue
        resid = A[:, j] - phi[:, :k] @ phi[j, :k]
        phi[:, k] = resid / np.sqrt(pivot)
        d -= phi[:, k] ** 2
        np.clip(d, 0.0, None, out=d)
        d[j] = 0.0
    return phi


def feature_map(spec: KernelSpec, landmarks, whitener: np.ndarray, x) -> np.ndarray:
    """Explicit p-dimensional feature vector of a single input point."""
    return feature_matrix(spec, landmarks, whitener, [x]).reshape(-1)


def feature_matrix(spec: KernelSpec, landmarks, whitener: np.ndarray, points) -> np.ndarray:
    """Feature vectors for many points, one row per point.

    Row x equals K(I, I)^(-1/2) (k(x_i, x))_{i in I}; inner products of rows
    reproduce the low-rank Gram matrix L and extend it to unseen points.
    """
    kvals = cross_gram(points, landmarks, spec)
    return kvals @ whitener


def approx_error(K, factor, norm: str = "trace") -> float:
    """Error ||K - Phi Phi^T|| in the trace, operator, or Frobenius norm.

    For the PSD residual of a column approximation the trace norm is simply
    tr(K - L).
    """
    A = np.asarray(K, dtype=float)
    phi = factor.phi if isinstance(factor, LowRankFactor) else np.asarray(factor)
    if norm == "trace":
        return float(np.trace(A) - np.sum(phi * phi))
    resid = A - phi @ phi.T
    if norm == "operator":
        ev = np.linalg.eigvalsh(resid)
        return float(max(ev[-1], -ev[0], 0.0))
    if norm == "frobenius":
        return float(np.linalg.norm(resid))
    raise ConfigError(f"unknown norm {norm!r}")


FACTOR_FORMAT_VERSION = 1


def save_factor(path, factor: LowRankFactor) -> None:
    """Write a factor as CSV: metadata comments, then Phi rows (row-major).

    Layout: ``# n=..``, ``# p=..``, ``# method=..``, ``# indices=i0;i1;...``,
    optional ``# trail=t0;t1;...``, then one comma-separated row of Phi per
    line using shortest round-trip float formatting.
    """
    lines = [
        f"# nyridge-factor v{FACTOR_FORMAT_VERSION}",
        f"# n={factor.n}",
        f"# p={factor.rank}",
        f"# method={factor.selection.method}",
        "# indices=" + ";".join(str(int(i)) for i in factor.selection.indices),
    ]
    if factor.trace_residual_trail is not None:
        lines.append("# trail=" + ";".join(repr(float(t)) for t in factor.trace_residual_trail))
    lines.append("# whitener rows, then phi rows")
    for row in factor.whitener:
        lines.append(",".join(repr(float(v)) for v in row))
    for row in factor.phi:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_factor(path) -> LowRankFactor:
    """Inverse of :func:`save_factor`; bit-exact round trip."""
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    meta[key.strip()] = val
                continue
            rows.append([float(tok) for tok in line.split(",")])
    n, p = int(meta["n"]), int(meta["p"])
    indices = np.array([int(t) for t in meta["indices"].split(";")])
    if len(rows) != n + p:
        raise ConfigError(f"expected {n + p} matrix rows, found {len(rows)}")
    whitener = np.array(rows[:p])
    phi = np.array(rows[p:])
    trail = None
    if "trail" in meta:
        trail = np.array([float(t) for t in meta["trail"].split(";")])
    return LowRankFactor(
        phi=phi,
        selection=ColumnSelection(indices, meta.get("method", "uniform-random"), n),
        whitener=whitener,
        trace_residual_trail=trail,
    )


def make_column_oracle(K) -> Callable[[int], np.ndarray]:
    """Column oracle over an already-materialized matrix, for tests and demos."""
    A = np.asarray(K, dtype=float)
    return lambda j: A[:, j].copy()


def materialized_diag(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        return K.diag.copy()
    return np.diag(np.asarray(K, dtype=float)).copy()
