"""Confidence intervals for fitted parameters.

Three methods share one result type:

* asymptotic: ``theta_i +/- z * sqrt([H^-1]_ii)`` with ``H`` the Hessian of the
  cost at the estimate;
* profile: where ``2 * (cost*(theta_i) - cost(theta_hat))`` crosses the
  chi-square(1) quantile, with the other parameters re-optimised;
* bootstrap: percentile interval of refits to data rebuilt from the fitted
  values plus resampled residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from . import _parallel
from .errors import EstimationError, SingularMatrixError
from .loss import BaseLoss, _bounds_arrays, fit
from .optimize import minimize_box


@dataclass
class IntervalResult:
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    method: str
    estimate: np.ndarray
    names: tuple
    replicates: np.ndarray | None = None
    flags: dict = field(default_factory=dict)
    seed: int | None = None

    def __iter__(self):
        # unpacks as (lower, upper)
        return iter((self.lower, self.upper))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def as_dict(self) -> dict:
        out = {
            "method": self.method,
            "alpha": self.alpha,
            "parameters": {n: {"estimate": float(e), "lower": float(lo), "upper": float(hi)}
                           for n, e, lo, hi in zip(self.names, self.estimate, self.lower, self.upper)},
            "flags": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.flags.items()},
        }
        if self.seed is not None:
            out["seed"] = self.seed
        if self.replicates is not None:
            out["replicates"] = self.replicates.tolist()
        return out


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def z_quantile(alpha: float) -> float:
    """Two-sided standard normal quantile ``z_{1 - alpha/2}``."""
    return NormalDist().inv_cdf(1.0 - _check_alpha(alpha) / 2.0)


def chi2_1_quantile(alpha: float) -> float:
    """``1 - alpha`` quantile of chi-square with one degree of freedom."""
    return z_quantile(alpha) ** 2


def _is_positive_definite(H) -> bool:
    try:
        np.linalg.cholesky(H)
        return True
    except np.linalg.LinAlgError:
        return False


def _inverse(H) -> np.ndarray:
    if not np.all(np.isfinite(H)):
        raise SingularMatrixError("information matrix has non-finite entries")
    if np.linalg.cond(H) > 1e14:
        raise SingularMatrixError("information matrix is singular")
    return np.linalg.inv(H)


def ci_asymptotic(loss: BaseLoss, theta, alpha: float = 0.05) -> IntervalResult:
    """Normal-approximation interval from the inverse Hessian.

    Falls back to the Gauss-Newton matrix when the Hessian is not positive
    definite; ``flags["gauss_newton"]`` records this.
    """
    z = z_quantile(alpha)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    H = loss.hessian(theta)
    fallback = not _is_positive_definite(H)
    if fallback:
        H = loss.fisher_information(theta)
        if not _is_positive_definite(H):
            raise SingularMatrixError("neither the Hessian nor its Gauss-Newton approximation "
                                      "is positive definite")
    se = np.sqrt(np.diag(_inverse(H)))
    return IntervalResult(theta - z * se, theta + z * se, alpha, "asymptotic", theta,
                          loss.names, flags={"gauss_newton": fallback})


# -- profile ---------------------------------------------------------------

class _Profile:
    """Cost minimised over every parameter except ``i``, which is held fixed.

    Nuisance starting values are extrapolated along the ridge traced so far,
    beginning with the slope implied by the Hessian at the estimate.
    """

    def __init__(self, loss, theta, i, lo, hi, H):
        self.loss = loss
        self.i = i
        self.keep = [k for k in range(len(theta)) if k != i]
        self.lo, self.hi = lo[self.keep], hi[self.keep]
        self.slope = np.zeros(len(self.keep))
        if self.keep:
            try:
                self.slope = -np.linalg.solve(H[np.ix_(self.keep, self.keep)], H[self.keep, i])
            except np.linalg.LinAlgError:
                pass
        self.points = [(theta[i], theta[self.keep].copy())]

    def guess(self, value, ref=None):
        if ref is not None:
            (v0, n0), (v1, n1) = ref
        elif len(self.points) >= 2:
            (v0, n0), (v1, n1) = self.points[-2], self.points[-1]
        else:
            v1, n1 = self.points[-1]
            return np.clip(n1 + self.slope * (value - v1), self.lo, self.hi)
        w = (value - v1) / (v1 - v0)
        return np.clip(n1 + w * (n1 - n0), self.lo, self.hi)

    def __call__(self, value, warm):
        if not self.keep:
            return self.loss.cost(np.array([value])), warm
        full = np.empty(len(self.keep) + 1)
        full[self.i] = value

        def fg(nuisance):
            full[self.keep] = nuisance
            f, g = self.loss.cost_and_gradient(full.copy())
            return f, g[self.keep]

        res = minimize_box(fg, warm, self.lo, self.hi, strict=False)
        return res.fun, res.x


def _profile_side(loss, theta, i, side, threshold, cost_hat, lo, hi, H, max_expand=40,
                  xtol=1e-8):
    """Value of parameter ``i`` on one side where the deviance hits ``threshold``.

    Returns ``(value, crossed)``; when the deviance never reaches the
    threshold the bound (or infinity) comes back with ``crossed=False``.
    """
    prof = _Profile(loss, theta, i, lo, hi, H)
    limit = hi[i] if side > 0 else lo[i]
    step = 1.0 / math.sqrt(H[i, i]) if H[i, i] > 0 else 0.1 * max(abs(theta[i]), 1e-3)
    step = min(step, 0.5 * abs(limit - theta[i])) if math.isfinite(limit) else step
    if step <= 0:
        return limit, False
    inside = prof.points[-1]
    for _ in range(max_expand):
        cand = inside[0] + side * step
        at_limit = (side > 0 and cand >= limit) or (side < 0 and cand <= limit)
        if at_limit:
            cand = limit
        c, nu = prof(cand, prof.guess(cand))
        if 2.0 * (c - cost_hat) >= threshold:
            break
        if at_limit:
            return limit, False
        inside = (cand, nu)
        prof.points.append(inside)
        step *= 2.0
    else:
        return side * math.inf, False
    outside = (cand, nu)
    tol = xtol * max(1.0, abs(theta[i]))
    while abs(outside[0] - inside[0]) > tol:
        mid = 0.5 * (inside[0] + outside[0])
        c, nu = prof(mid, prof.guess(mid, (inside, outside)) if len(nu) else nu)
        if 2.0 * (c - cost_hat) >= threshold:
            outside = (mid, nu)
        else:
            inside = (mid, nu)
    return 0.5 * (inside[0] + outside[0]), True


def ci_profile(loss: BaseLoss, theta, alpha: float = 0.05, bounds=None,
               workers=None) -> IntervalResult:
    """Profile-deviance interval, searched outwards then refined by bisection.

    ``flags["no_crossing_lower"/"no_crossing_upper"]`` mark sides where the
    deviance stayed below the threshold; those ends are the bound or +/-inf.
    """
    threshold = chi2_1_quantile(alpha)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = theta.size
    lo, hi = _bounds_arrays(bounds, p)
    if np.any(theta < lo) or np.any(theta > hi):
        raise EstimationError("estimate lies outside the bounds")
    cost_hat = loss.cost(theta)
    H = loss.hessian(theta)
    if not _is_positive_definite(H):
        H = loss.fisher_information(theta)

    def task(j):
        i, side = divmod(j, 2)
        return _profile_side(loss, theta, i, 1 if side else -1, threshold, cost_hat, lo, hi, H)

    out = _parallel.pmap(task, 2 * p, workers)
    lower = np.array([out[2 * i][0] for i in range(p)])
    upper = np.array([out[2 * i + 1][0] for i in range(p)])
    flags = {"no_crossing_lower": np.array([not out[2 * i][1] for i in range(p)]),
             "no_crossing_upper": np.array([not out[2 * i + 1][1] for i in range(p)])}
    return IntervalResult(lower, upper, alpha, "profile", theta, loss.names, flags=flags)


# -- bootstrap -------------------------------------------------------------

def ci_bootstrap(loss: BaseLoss, theta, alpha: float = 0.05, iterations: int = 100,
                 bounds=None, full_output: bool = False, seed=None,
                 workers=None) -> IntervalResult:
    """Semi-parametric percentile bootstrap.

    Residuals at ``theta`` are divided by their per-state root mean square,
    pooled, resampled with replacement, rescaled and added back to the fitted
    values; each replicate is refitted from ``theta`` within ``bounds``.  The
    first failing replicate (by index) aborts the call.
    """
    alpha = _check_alpha(alpha)
    if iterations < 2:
        raise ValueError("bootstrap needs at least 2 iterations")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    seed = _parallel.fresh_seed() if seed is None else int(seed)
    yhat = loss.fitted(theta)
    resid = loss.y - yhat
    scale = np.sqrt(np.mean(resid ** 2, axis=0))
    scale[scale == 0] = 1.0
    pooled = (resid / scale).ravel()

    def one(b):
        rng = _parallel.stream(seed, b)
        eps = rng.choice(pooled, size=resid.shape, replace=True) * scale
        replicate = loss.with_observations(yhat + eps)
        try:
            res = fit(replicate, bounds, theta0=theta)
        except Exception as exc:
            raise EstimationError(f"bootstrap replicate {b} failed: {exc}") from exc
        if not res.converged:
            raise EstimationError(f"bootstrap replicate {b} did not converge")
        return res.theta

    est = np.array(_parallel.pmap(one, iterations, workers))
    lower, upper = np.quantile(est, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    return IntervalResult(lower, upper, alpha, "bootstrap", theta, loss.names,
                          replicates=est if full_output else None, seed=seed)


METHODS = {"asymptotic": ci_asymptotic, "profile": ci_profile, "bootstrap": ci_bootstrap}
