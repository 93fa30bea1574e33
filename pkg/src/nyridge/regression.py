"""Kernel ridge regression: exact smoother, reduced low-rank solver, Newton.

All solvers use the (... + n lambda I) convention; callers always pass the
per-sample regularization parameter lambda, never n * lambda.

Linear systems go through a symmetric positive-definite factorization with
an eigendecomposition-based pseudo-solve fallback, since useful lambdas can
sit near machine precision for fast-decay kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .errors import ConfigError, NumericalError
from .kernels import KernelSpec, cross_gram
from .lowrank import LowRankFactor, feature_matrix

LOSSES = ("square", "logistic")


@dataclass
class RidgeFit:
    """A fitted model: exact (alpha, length n) or low-rank (w, length p)."""

    mode: str  # "exact" or "lowrank"
    lam: float
    loss: str
    coef: np.ndarray
    indices: np.ndarray | None = None  # selected columns, low-rank mode
    iterations: int = 1


def _solve_psd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive (semi)definite A.

    Cholesky first; on failure, eigendecomposition pseudo-solve with
    non-positive eigenvalues dropped. Inputs that are indefinite beyond
    rounding tolerance are a caller error and raise instead of being masked.
    """
    try:
        c, low = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        return scipy.linalg.cho_solve((c, low), b, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        s, u = np.linalg.eigh(A)
        if s[0] < -1e-8 * max(abs(s[-1]), 1e-300):
            raise NumericalError(
                f"matrix is not positive semidefinite beyond tolerance "
                f"(eigenvalue range [{s[0]:.3e}, {s[-1]:.3e}])"
            ) from None
        inv = np.where(s > 0.0, 1.0 / np.where(s > 0.0, s, 1.0), 0.0)
        return u @ (inv * (u.T @ b))


def krr_exact(K, y, lam: float):
    """Exact ridge smoother: alpha = (K + n lambda I)^(-1) y, zhat = K alpha.

    Returns (fit, zhat); O(n^3).
    """
    if lam <= 0:
        raise ConfigError(f"lambda must be > 0, got {lam!r}")
    A = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = A.shape[0]
    alpha = _solve_psd(A + n * lam * np.eye(n), y)
    zhat = A @ alpha
    return RidgeFit(mode="exact", lam=lam, loss="square", coef=alpha), zhat


def krr_lowrank(factor: LowRankFactor, y, lam: float):
    """Reduced ridge solve (Phi^T Phi + n lambda I) w = Phi^T y, zhat = Phi w.

    By the push-through identity zhat equals L (L + n lambda I)^(-1) y for
    L = Phi Phi^T; cost O(p^2 n + p^3).
    """
    if lam <= 0:
        raise ConfigError(f"lambda must be > 0, got {lam!r}")
    phi = factor.phi
    y = np.asarray(y, dtype=float)
    n, p = phi.shape
    G = phi.T @ phi + n * lam * np.eye(p)
    w = _solve_psd(G, phi.T @ y)
    fit = RidgeFit(
        mode="lowrank", lam=lam, loss="square", coef=w, indices=factor.selection.indices
    )
    return fit, phi @ w


def _loss_terms(loss: str, y: np.ndarray, u: np.ndarray):
    """Pointwise value, first and second derivative in the margin u."""
    if loss == "square":
        r = u - y
        return 0.5 * r * r, r, np.ones_like(u)
    if loss == "logistic":
        m = y * u
        val = np.logaddexp(0.0, -m)
        sig = scipy.special.expit(-m)  # sigma(-m)
        return val, -y * sig, sig * (1.0 - sig)
    raise ConfigError(f"unsupported loss {loss!r}")


def _objective(loss, phi, y, w, lam):
    val, _, _ = _loss_terms(loss, y, phi @ w)
    return float(np.mean(val) + 0.5 * lam * (w @ w))


def newton_solve(
    factor: LowRankFactor,
    y,
    lam: float,
    loss: str = "square",
    max_iter: int = 100,
    grad_rtol: float = 1e-10,
) -> RidgeFit:
    """Damped Newton on (1/n) sum loss(y_i, (Phi w)_i) + (lambda/2) ||w||^2.

    The square loss converges in exactly one step; the logistic loss uses
    the exact Hessian Phi^T D Phi / n + lambda I and a halving line search
    that only accepts descent steps. Labels must be in {-1, +1} for the
    logistic loss.
    """
    if lam <= 0:
        raise ConfigError(f"lambda must be > 0, got {lam!r}")
    if loss not in LOSSES:
        raise ConfigError(f"loss must be one of {LOSSES}, got {loss!r}")
    phi = factor.phi
    y = np.asarray(y, dtype=float)
    n, p = phi.shape
    if loss == "logistic" and not np.all(np.isin(y, (-1.0, 1.0))):
        raise ConfigError("logistic loss needs labels in {-1, +1}")

    tol = grad_rtol * max(1.0, float(np.linalg.norm(phi.T @ y)) / n)
    w = np.zeros(p)
    obj = _objective(loss, phi, y, w, lam)
    for it in range(1, max_iter + 1):
        u = phi @ w
        _, d1, d2 = _loss_terms(loss, y, u)
        grad = phi.T @ d1 / n + lam * w
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return RidgeFit(
                mode="lowrank", lam=lam, loss=loss, coef=w,
                indices=factor.selection.indices, iterations=it - 1,
            )
        H = (phi.T * d2) @ phi / n + lam * np.eye(p)
        step = _solve_psd(H, -grad)
        t = 1.0
        for _ in range(60):
            w_new = w + t * step
            obj_new = _objective(loss, phi, y, w_new, lam)
            if obj_new < obj:
                break
            t *= 0.5
        else:
            raise NumericalError(
                f"Newton line search stalled at iteration {it} "
                f"(|grad|={gnorm:.3e}, objective={obj:.6e})"
            )
        w, obj = w_new, obj_new
    u = phi @ w
    _, d1, _ = _loss_terms(loss, y, u)
    gnorm = float(np.linalg.norm(phi.T @ d1 / n + lam * w))
    if gnorm <= tol:
        return RidgeFit(
            mode="lowrank", lam=lam, loss=loss, coef=w,
            indices=factor.selection.indices, iterations=max_iter,
        )
    raise NumericalError(
        f"Newton failed to converge in {max_iter} iterations "
        f"(|grad|={gnorm:.3e}, tolerance={tol:.3e})"
    )


def predict(
    fit: RidgeFit,
    test_points,
    spec: KernelSpec,
    train_points=None,
    landmarks=None,
    whitener: np.ndarray | None = None,
) -> np.ndarray:
    """Evaluate a fit on new points.

    Exact mode needs ``train_points`` (f(x) = sum_i alpha_i k(x, x_i));
    low-rank mode needs ``landmarks`` and ``whitener`` (f(x) = <w, phi(x)>).
    """
    if fit.mode == "exact":
        if train_points is None:
            raise ConfigError("exact fit needs train_points")
        return cross_gram(test_points, train_points, spec) @ fit.coef
    if fit.mode == "lowrank":
        if landmarks is None or whitener is None:
            raise ConfigError("low-rank fit needs landmarks and whitener")
        return feature_matrix(spec, landmarks, whitener, test_points) @ fit.coef
    raise ConfigError(f"unknown fit mode {fit.mode!r}")


def save_fit(path, fit: RidgeFit) -> None:
    """CSV serialization: mode, lambda, loss, coefficients, indices."""
    lines = [
        "# nyridge-fit v1",
        f"# mode={fit.mode}",
        f"# lambda={fit.lam!r}",
        f"# loss={fit.loss}",
    ]
    if fit.indices is not None:
        lines.append("# indices=" + ";".join(str(int(i)) for i in fit.indices))
    lines.append("coef")
    lines.extend(repr(float(c)) for c in fit.coef)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_fit(path) -> RidgeFit:
    meta: dict[str, str] = {}
    coefs: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line == "coef":
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v
                continue
            coefs.append(float(line))
    indices = None
    if "indices" in meta:
        indices = np.array([int(t) for t in meta["indices"].split(";")])
    return RidgeFit(
        mode=meta["mode"],
        lam=float(meta["lambda"]),
        loss=meta["loss"],
        coef=np.array(coefs),
        indices=indices,
    )
