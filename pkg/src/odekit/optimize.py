"""Box-constrained quasi-Newton minimisation.

A projected BFGS method: the inverse-Hessian approximation acts on the
variables that are not held at a bound, trial points are projected back onto
the box, and an Armijo backtracking search accepts only decreasing steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EstimationError, IntegrationError, SimulationError

_RECOVERABLE = (IntegrationError, DomainError, SimulationError, FloatingPointError)


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    jac: np.ndarray
    converged: bool
    iterations: int
    message: str
    trace: list = field(default_factory=list)


def minimize_box(fun_grad, x0, lower=None, upper=None, gtol=1e-6, ftol=1e-10,
                 max_iter=500, strict=True) -> OptimizeResult:
    """Minimise ``f`` given ``fun_grad(x) -> (f, g)`` inside ``[lower, upper]``.

    Converges when the infinity norm of the projected gradient drops below
    ``gtol`` or the relative decrease of ``f`` in an accepted step is below
    ``ftol``.  Raises :class:`EstimationError` when ``max_iter`` is reached,
    unless ``strict`` is false, in which case the last iterate is returned
    with ``converged=False``.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lower >= upper):
        raise ValueError("every lower bound must be below its upper bound")
    x = np.clip(x, lower, upper)
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise EstimationError(f"objective is not finite at the starting point {x.tolist()}")
    trace = [float(f)]
    H = None
    for it in range(max_iter):
        pg = x - np.clip(x - g, lower, upper)
        if np.max(np.abs(pg), initial=0.0) < gtol:
            return OptimizeResult(x, f, g, True, it, "projected gradient below tolerance", trace)
        at_lower = (x <= lower) & (g > 0)
        at_upper = (x >= upper) & (g < 0)
        free = ~(at_lower | at_upper)
        if H is None:
            H = np.eye(n) / max(1.0, np.max(np.abs(g[free]), initial=1.0))
        d = np.zeros(n)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        if g @ d >= 0:
            H = np.eye(n) / max(1.0, np.max(np.abs(g[free]), initial=1.0))
            d[free] = -H[np.ix_(free, free)] @ g[free]
        alpha = 1.0
        while True:
            x_new = np.clip(x + alpha * d, lower, upper)
            s = x_new - x
            if not np.any(s):
                return OptimizeResult(x, f, g, True, it, "no feasible descent step", trace)
            try:
                f_new, g_new = fun_grad(x_new)
            except _RECOVERABLE:
                f_new, g_new = np.inf, None
            if np.isfinite(f_new) and f_new <= f + 1e-4 * (g @ s):
                break
            alpha *= 0.5
            if alpha < 1e-14:
                return OptimizeResult(x, f, g, True, it, "line search cannot reduce the objective", trace)
        y = g_new - g
        # update only in the subspace of variables that moved
        y[s == 0] = 0.0
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 0:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append(float(f))
        if decrease <= ftol * max(abs(f), abs(f + decrease), 1e-300):
            return OptimizeResult(x, f, g, True, it + 1, "relative cost change below tolerance", trace)
    if strict:
        raise EstimationError(f"no convergence within {max_iter} iterations")
    return OptimizeResult(x, f, g, False, max_iter, "iteration limit reached", trace)
