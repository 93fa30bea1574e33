"""CSV dataset ingestion and cross-validated lambda selection.

Real-data runs follow the low-rank path end to end: a pivoted incomplete
Cholesky factor (rank chosen by a relative trace tolerance) on each
training fold, the reduced ridge solve, and feature-map prediction on the
held-out fold.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MissingValueError, NonNumericError, ParseError
from .kernels import KernelSpec, cross_gram
from .lowrank import feature_matrix, pivoted_ichol
from .regression import krr_lowrank

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    features: np.ndarray  # n x d, standardized unless load was told otherwise
    targets: np.ndarray  # length n, centered unless load was told otherwise
    name: str
    feature_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.features.shape[0]


def load_dataset(
    path,
    target_column: str,
    feature_columns=None,
    standardize: bool = True,
    min_rows: int = 10,
) -> Dataset:
    """Read a numeric CSV with a header row into a Dataset.

    Features are standardized per column (zero mean, unit variance) and the
    target centered; zero-variance feature columns are dropped with a
    warning. Row order is the file order. Parse failures, missing values,
    and non-numeric cells raise distinct error types.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise ParseError(f"{path}: need a header row plus data rows")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise ConfigError(f"target column {target_column!r} not in header {header}")
    if feature_columns is None:
        feature_columns = [h for h in header if h != target_column]
    missing = [c for c in feature_columns if c not in header]
    if missing:
        raise ConfigError(f"feature columns not in header: {missing}")
    col_idx = {h: i for i, h in enumerate(header)}
    width = len(header)

    def cell(row, line_no, col):
        i = col_idx[col]
        if i >= len(row):
            raise MissingValueError(f"{path}:{line_no}: missing value in {col!r}")
        tok = row[i].strip()
        if tok == "" or tok.lower() in ("na", "nan", "null", "none"):
            raise MissingValueError(f"{path}:{line_no}: missing value in {col!r}")
        try:
            return float(tok)
        except ValueError:
            raise NonNumericError(
                f"{path}:{line_no}: non-numeric cell {tok!r} in {col!r}"
            ) from None

    feats, targs = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) > width:
            raise ParseError(f"{path}:{line_no}: {len(row)} cells, header has {width}")
        feats.append([cell(row, line_no, c) for c in feature_columns])
        targs.append(cell(row, line_no, target_column))

    X = np.array(feats, dtype=float)
    y = np.array(targs, dtype=float)
    if X.shape[0] < min_rows:
        raise ConfigError(f"{path}: need at least {min_rows} rows, found {X.shape[0]}")
    names = list(feature_columns)
    if standardize:
        std = X.std(axis=0)
        keep = std > 0
        if not np.all(keep):
            dropped = [names[i] for i in np.flatnonzero(~keep)]
            logger.warning("dropping zero-variance feature columns: %s", dropped)
            X = X[:, keep]
            names = [nm for nm, k in zip(names, keep) if k]
            std = std[keep]
        if X.shape[1] == 0:
            raise ConfigError(f"{path}: no usable feature columns")
        X = (X - X.mean(axis=0)) / std
        y = y - y.mean()
    return Dataset(features=X, targets=y, name=str(path), feature_names=tuple(names))


def _fold_slices(n: int, folds: int, seed) -> list[np.ndarray]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


@dataclass
class CVResult:
    lambda_star: float
    error_star: float
    lambda_grid: np.ndarray
    errors: np.ndarray
    ranks: tuple[int, ...]


def cross_validate_lambda(
    data: Dataset,
    spec: KernelSpec,
    lambda_grid,
    folds: int = 5,
    seed=0,
    trace_rtol: float = 1e-3,
    max_rank: int | None = None,
) -> CVResult:
    """Pick lambda by k-fold CV of low-rank kernel ridge regression.

    Each fold factors its training Gram matrix with pivoted incomplete
    Cholesky until the trace residual falls below ``trace_rtol`` times the
    full trace, then scores every lambda on the held-out fold.
    """
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("lambda grid must be nonempty")
    n = data.n
    if n // folds < 2:
        raise ConfigError(f"fold size {n // folds} too small (need >= 2)")
    X, y = data.features, data.targets
    fold_errs = np.zeros((folds, grid.size))
    ranks = []
    for f, val_idx in enumerate(_fold_slices(n, folds, seed)):
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        Xtr, ytr = X[mask], y[mask]
        Xval, yval = X[val_idx], y[val_idx]
        ntr = Xtr.shape[0]
        if spec.is_periodic:
            if Xtr.shape[1] != 1:
                raise ConfigError("periodic kernels need a single feature column")
            diag = np.full(ntr, spec(0.0, 0.0))  # stationary: constant diagonal
        else:
            diag = np.ones(ntr)  # gaussian: k(x, x) = 1
        oracle = lambda j: cross_gram(Xtr, Xtr[j : j + 1], spec).reshape(-1)
        factor = pivoted_ichol(
            oracle,
            diag,
            max_rank=max_rank or ntr,
            trace_tol=trace_rtol * float(np.sum(diag)),
        )
        ranks.append(factor.rank)
        landmarks = Xtr[factor.selection.indices]
        val_feats = feature_matrix(spec, landmarks, factor.whitener, Xval)
        for g, lam in enumerate(grid):
            fit, _ = krr_lowrank(factor, ytr, float(lam))
            pred = val_feats @ fit.coef
            fold_errs[f, g] = float(np.mean((pred - yval) ** 2))
    errors = fold_errs.mean(axis=0)
    g = int(np.argmin(errors))
    return CVResult(
        lambda_star=float(grid[g]),
        error_star=float(errors[g]),
        lambda_grid=grid,
        errors=errors,
        ranks=tuple(ranks),
    )


def write_dataset_csv(path, features, targets, feature_names=None, target_name="target"):
    """Write a feature/target table; inverse of load_dataset(standardize=False)."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]
    lines = [",".join([*feature_names, target_name])]
    for row, t in zip(X, y):
        lines.append(",".join([repr(float(v)) for v in row] + [repr(float(t))]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
