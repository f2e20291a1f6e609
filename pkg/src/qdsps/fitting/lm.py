"""Bounded Levenberg-Marquardt least squares with Marquardt diagonal damping."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

LAMBDA0 = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 10.0
LAMBDA_MAX = 1e16
FTOL = 1e-10
GTOL = 1e-10


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    residuals: np.ndarray
    jacobian: np.ndarray
    n_iterations: int
    converged: bool
    message: str


def _projected_gradient(grad, x, lower, upper):
    g = grad.copy()
    # a component pushing into an active bound cannot be reduced further
    g[(x <= lower) & (g > 0)] = 0.0
    g[(x >= upper) & (g < 0)] = 0.0
    return g


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0,
    lower=None,
    upper=None,
    max_iter: int = 500,
    ftol: float = FTOL,
    gtol: float = GTOL,
) -> LMResult:
    """Minimise 0.5*||residual(x)||^2 subject to lower <= x <= upper.

    Steps solve (J^T J + lam diag(J^T J)) dx = -J^T r and are clipped to the
    box. lam starts at 1e-3 and is divided (multiplied) by 10 after an
    accepted (rejected) step. Convergence is declared when an accepted step
    changes the cost by less than `ftol` relative, or when the scaled
    projected gradient falls below `gtol`. Singular normal equations never
    raise; the step is taken from a least-squares solve instead.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("inconsistent bounds")
    x = np.clip(x, lower, upper)

    r = np.asarray(residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals at the initial point are not finite")
    cost = 0.5 * float(r @ r)
    J = np.asarray(jacobian(x), dtype=float)
    lam = LAMBDA0
    message = "maximum number of iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        grad = J.T @ r
        col = np.sqrt(np.einsum("ij,ij->j", J, J))
        pg = _projected_gradient(grad, x, lower, upper)
        scale = np.where(col > 0, col, 1.0) * np.sqrt(2.0 * cost)
        if np.max(np.abs(pg) / scale) < gtol:
            converged, message = True, "gradient tolerance reached"
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam <= LAMBDA_MAX:
            M = A + lam * np.diag(diag)
            try:
                step = np.linalg.solve(M, -grad)
                if not np.all(np.isfinite(step)):
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(M, -grad, rcond=None)[0]
            x_new = np.clip(x + step, lower, upper)
            r_new = np.asarray(residual(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new <= cost:
                accepted = True
                break
            lam *= LAMBDA_UP
        if not accepted:
            message = "damping parameter overflow; no decrease possible"
            break
        rel = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        J = np.asarray(jacobian(x), dtype=float)
        lam = max(lam / LAMBDA_DOWN, 1e-12)
        if rel < ftol:
            converged, message = True, "relative cost change below tolerance"
            break
    return LMResult(x, cost, r, J, it, converged, message)


def covariance_from_jacobian(J: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """(J^T J)^-1 via SVD; variances along unidentifiable directions are inf."""
    n = J.shape[1]
    if J.shape[0] == 0:
        return np.full((n, n), np.inf)
    _, s, vt = np.linalg.svd(J, full_matrices=False)
    smax = s[0] if s.size else 0.0
    good = s > rcond * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    cov = (vt[good].T / s[good] ** 2) @ vt[good]
    if not good.all():
        bad = np.any(np.abs(vt[~good]) > 1e-8, axis=0)
        cov[bad, :] = np.inf
        cov[:, bad] = np.inf
    return cov
