"""Damped least squares (Levenberg-Marquardt) for small smooth models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FTOL = 1e-10
XTOL = 1e-12
MAX_ITER = 200


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    residual: np.ndarray
    jac: np.ndarray
    n_iter: int
    converged: bool
    message: str

    def covariance(self, absolute_sigma: bool = False) -> np.ndarray:
        """Parameter covariance from the Gauss-Newton Hessian.

        Unless ``absolute_sigma``, it is rescaled by the reduced chi-square.
        """
        J = self.jac
        n, p = J.shape
        cov = inverse_normal_matrix(J)
        if not absolute_sigma:
            dof = max(n - p, 1)
            cov = cov * (2.0 * self.cost / dof)
        return cov


def inverse_normal_matrix(J) -> np.ndarray:
    """(J^T J)^-1 via the SVD of the column-scaled Jacobian.

    Nothing is truncated: a direction the data do not constrain gets a huge
    or infinite variance instead of the zero a pseudo-inverse would report.
    """
    J = np.asarray(J, dtype=float)
    norms = np.linalg.norm(J, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    _, s, vt = np.linalg.svd(J / safe, full_matrices=False)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        V = vt.T / np.maximum(s, np.finfo(float).tiny)
        cov = (V @ V.T) / np.outer(safe, safe)
    cov[norms == 0, :] = np.inf
    cov[:, norms == 0] = np.inf
    return cov


def numeric_jacobian(fun, x, f0=None, rel_step=None):
    """Central differences; one column per parameter."""
    x = np.asarray(x, dtype=float)
    if rel_step is None:
        rel_step = np.finfo(float).eps ** (1.0 / 3.0)
    cols = []
    for k in range(x.size):
        h = rel_step * max(abs(x[k]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols)


def damped_least_squares(fun, x0, jac=None, max_iter=MAX_ITER, ftol=FTOL, xtol=XTOL,
                         lam0=1e-3) -> LMResult:
    """Minimize 0.5*||fun(x)||^2.

    The damping term uses Marquardt's diagonal scaling diag(J^T J).
    Convergence: both actual and predicted relative reduction of the cost
    below ``ftol`` on an accepted step, or a step shorter than
    ``xtol * (xtol + ||x||)``.
    """
    x = np.array(x0, dtype=float)
    jac_fn = jac if jac is not None else (lambda v: numeric_jacobian(fun, v))
    r = np.asarray(fun(x), dtype=float)
    cost = 0.5 * float(r @ r)
    cost0 = cost
    J = jac_fn(x)
    lam = lam0
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if cost <= 1e-32 * max(cost0, 1e-300) or cost == 0.0:
            converged, message = True, "residual vanished"
            break
        A = J.T @ J
        g = J.T @ r
        d = np.diag(A).copy()
        d[d <= 0] = max(float(np.max(d)), 1.0) * 1e-12
        accepted = False
        while lam < 1e16:
            try:
                step = -np.linalg.solve(A + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill direction left at working precision
            gnorm = np.max(np.abs(g) / np.sqrt(d))
            converged = bool(gnorm <= 1e-6 * np.sqrt(2.0 * cost + 1e-300))
            message = "damping saturated" + (" at a stationary point" if converged else "")
            break
        lin = r + J @ step
        predicted = (cost - 0.5 * float(lin @ lin)) / cost
        actual = (cost - cost_new) / cost
        small_step = np.linalg.norm(step) <= xtol * (xtol + np.linalg.norm(x))
        x, r, cost = x_new, r_new, cost_new
        J = jac_fn(x)
        lam = max(lam / 10.0, 1e-12)
        if actual <= ftol and abs(predicted) <= ftol:
            converged, message = True, "relative cost reduction below ftol"
            break
        if small_step:
            converged, message = True, "step below xtol"
            break
    return LMResult(x, cost, r, J, it, converged, message)
