"""Damped (Levenberg-Marquardt style) least squares with named parameters.

A deliberately small trust-damped Gauss-Newton solver: multiplicative
damping of the normal equations, acceptance by cost decrease, analytic
Jacobian when supplied and forward differences otherwise.  Convergence is
declared when the relative step drops below 1e-10 or the relative cost
change below 1e-12; the iteration cap is 200.

Standard errors come from the pseudo-inverse of J^T J at the optimum,
scaled by the residual variance, and are omitted when the normal matrix
is numerically singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FitError

STEP_TOL = 1e-10
COST_TOL = 1e-12
MAX_ITER = 200


@dataclass
class FitResult:
    """Outcome of a least-squares fit."""

    params: dict
    stderr: dict | None
    residual_norm: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self) -> dict:
        out = {
            "params": {k: float(v) for k, v in self.params.items()},
            "stderr": ({k: float(v) for k, v in self.stderr.items()}
                       if self.stderr is not None else None),
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }
        if self.flags:
            out["flags"] = dict(self.flags)
        return out


def _fd_jacobian(residual_fn, p, r0):
    n, m = r0.size, p.size
    jac = np.empty((n, m))
    for j in range(m):
        step = 1e-7 * max(abs(p[j]), 1e-12)
        pj = p.copy()
        pj[j] += step
        jac[:, j] = (residual_fn(pj) - r0) / step
    return jac


def damped_least_squares(residual_fn, p0, names, jacobian=None,
                         max_iter=MAX_ITER, raise_on_failure=False) -> FitResult:
    """Minimize ||residual_fn(p)||^2 over p, starting from p0.

    Parameters
    ----------
    residual_fn : callable
        Maps a parameter vector to the residual vector.
    p0 : array_like
        Starting point.
    names : sequence of str
        Parameter names, used to key the result dicts.
    jacobian : callable, optional
        Analytic Jacobian d(residual)/d(params), shape (n_res, n_par).
        Forward differences are used when omitted.
    raise_on_failure : bool
        Raise FitError instead of returning a non-converged result.
    """
    p = np.asarray(p0, dtype=float).copy()
    if p.ndim != 1 or len(names) != p.size:
        raise ValueError("p0 and names must agree in length")

    r = np.asarray(residual_fn(p), dtype=float)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        jac = (np.asarray(jacobian(p), dtype=float) if jacobian is not None
               else _fd_jacobian(residual_fn, p, r))
        jtj = jac.T @ jac
        jtr = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = 1.0

        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + step
            r_try = np.asarray(residual_fn(p_try), dtype=float)
            cost_try = float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try <= cost:
                rel_step = np.linalg.norm(step) / max(np.linalg.norm(p), 1e-300)
                rel_drop = (cost - cost_try) / max(cost, 1e-300)
                p, r, cost = p_try, r_try, cost_try
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                if rel_step < STEP_TOL or rel_drop < COST_TOL:
                    converged = True
                break
            lam *= 3.0
        if not accepted:
            # damping saturated: no downhill step exists at this scale
            converged = cost == 0.0 or lam > 1e10
            break
        if converged:
            break

    result = _finalize(residual_fn, jacobian, p, r, cost, names,
                       converged, iterations)
    if raise_on_failure and not result.converged:
        raise FitError(
            f"fit did not converge after {iterations} iterations "
            f"(residual norm {result.residual_norm:.3e})",
            last_params=result.params, residual_norm=result.residual_norm)
    return result


def _finalize(residual_fn, jacobian, p, r, cost, names, converged, iterations):
    jac = (np.asarray(jacobian(p), dtype=float) if jacobian is not None
           else _fd_jacobian(residual_fn, p, r))
    jtj = jac.T @ jac
    dof = max(r.size - p.size, 1)
    sigma2 = cost / dof
    stderr = None
    covariance = None
    # reject stderr when the normal matrix is numerically singular
    if np.all(np.isfinite(jtj)):
        cond = np.linalg.cond(jtj) if jtj.size else np.inf
        if np.isfinite(cond) and cond < 1e14:
            covariance = sigma2 * np.linalg.pinv(jtj)
            stderr = {name: float(np.sqrt(max(covariance[i, i], 0.0)))
                      for i, name in enumerate(names)}
    return FitResult(
        params={name: float(p[i]) for i, name in enumerate(names)},
        stderr=stderr,
        residual_norm=float(np.sqrt(cost)),
        converged=converged,
        iterations=iterations,
        covariance=covariance,
    )


def linear_through_origin(x, y, errors=None) -> FitResult:
    """Weighted least-squares slope of y = slope * x (zero intercept)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points for a slope")
    if np.all(x == 0):
        raise FitError("all x values are zero: slope undetermined")
    w = np.ones_like(x) if errors is None else 1.0 / np.asarray(errors, float) ** 2
    sxx = float(np.sum(w * x * x))
    slope = float(np.sum(w * x * y)) / sxx
    resid = y - slope * x
    dof = max(x.size - 1, 1)
    var = float(np.sum(w * resid**2)) / dof / sxx
    return FitResult(
        params={"slope": slope},
        stderr={"slope": float(np.sqrt(var))},
        residual_norm=float(np.sqrt(np.sum(w * resid**2))),
        converged=True,
        iterations=1,
    )
