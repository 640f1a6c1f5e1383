"""Objective functions for fitting model parameters to observations.

A loss object binds a model, its initial condition, observation times and
observed values of one or more states.  The free parameters ``theta`` are a
subset of the model parameters (``target_param``); the rest stay at the values
attached to the model.

Gradients come from forward sensitivities (the model augmented with
``dx/dtheta``) or from the adjoint equations solved backwards in time.  Both
give the same vector to integration accuracy.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EstimationError, ModelError
from .integrate import SolverConfig, solve_ivp
from .optimize import minimize_box

POISSON_FLOOR = 1e-10
# epidemic fits start from tiny infected fractions, so absolute error must be small
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-12


@dataclass
class FitResult:
    """Outcome of :func:`fit`."""
    theta: np.ndarray
    cost: float
    converged: bool
    iterations: int
    active_lower: np.ndarray
    active_upper: np.ndarray
    names: tuple
    message: str = ""

    @property
    def active_bounds(self) -> np.ndarray:
        return self.active_lower | self.active_upper

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.theta.tolist()))


class BaseLoss:
    """Shared machinery; subclasses supply the per-observation loss.

    Parameters
    ----------
    theta : initial guess, sequence or mapping name -> value.
    ode : an :class:`~odekit.model.OdeModel` with values for every
        parameter outside ``target_param``.
    x0, t0 : initial state and time.
    t : observation times, strictly increasing and after ``t0``.
    y : observations, ``(len(t),)`` or ``(len(t), len(state_name))``.
    state_name : observed state(s).
    state_weight : per-state weights (sequence of length ``len(state_name)``)
        or a full weight matrix shaped like ``y``.
    target_param : names of the free parameters; default all of them.
    """

    #: Gauss-Newton Hessian equals ``factor * J^T J``
    gauss_newton_factor = 1.0

    def __init__(self, theta, ode, x0, t0, t, y, state_name, state_weight=None,
                 target_param: Sequence[str] | None = None, config: SolverConfig | None = None):
        self.model = ode
        if isinstance(theta, Mapping):
            if target_param is None:
                target_param = list(theta)
            theta = [theta[p] for p in target_param]
        names = list(ode.params) if target_param is None else list(
            [target_param] if isinstance(target_param, str) else target_param)
        unknown = [p for p in names if p not in ode.params]
        if unknown:
            raise ModelError(f"unknown target parameters {unknown}")
        if len(set(names)) != len(names):
            raise ModelError("target parameters must be distinct")
        self.names = tuple(names)
        self.theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.theta.shape != (len(names),):
            raise EstimationError(f"theta has {self.theta.size} values for {len(names)} target parameters")
        self._free = [ode.params.index(p) for p in names]
        base = dict(ode.parameters)
        fixed = [p for p in ode.params if p not in names and p not in base]
        if fixed:
            raise ModelError(f"non-target parameters {fixed} have no values")
        self._base = np.array([base.get(p, 0.0) for p in ode.params], dtype=float)

        self.x0 = np.asarray(x0, dtype=float)
        if self.x0.shape != (ode.num_state,):
            raise EstimationError(f"x0 must have {ode.num_state} entries")
        self.t0 = float(t0)
        self.t = np.asarray(t, dtype=float)
        if self.t.ndim != 1 or len(self.t) == 0:
            raise EstimationError("t must be a non-empty vector")
        if np.any(np.diff(self.t) <= 0) or self.t[0] <= self.t0:
            raise EstimationError("observation times must be strictly increasing and after t0")

        states = [state_name] if isinstance(state_name, str) else list(state_name)
        missing = [s for s in states if s not in ode.states]
        if missing:
            raise ModelError(f"unknown observed states {missing}")
        self.state_name = tuple(states)
        self._obs = [ode.states.index(s) for s in states]
        y = np.asarray(y, dtype=float)
        self._y_ndim = y.ndim
        y = y.reshape(len(self.t), -1) if y.ndim == 1 else y
        if y.shape != (len(self.t), len(states)):
            raise EstimationError(f"y has shape {y.shape}, expected {(len(self.t), len(states))}")
        if not np.all(np.isfinite(y)):
            raise EstimationError("observations must be finite")
        self.y = y
        self.weights = self._weights(state_weight)
        self.config = config or SolverConfig(rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL)
        self._cache_key = None
        self._cache_val = None

    # -- setup ---------------------------------------------------------------

    def _weights(self, w):
        shape = self.y.shape
        if w is None:
            return np.ones(shape)
        w = np.asarray(w, dtype=float)
        if w.ndim == 0:
            w = np.full(shape, float(w))
        elif w.ndim == 1 and w.size == shape[1]:
            w = np.tile(w, (shape[0], 1))
        elif w.ndim == 1 and shape[1] == 1 and w.size == shape[0]:
            w = w.reshape(shape)
        if w.shape != shape:
            raise EstimationError(f"weights of shape {w.shape} do not match observations {shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise EstimationError("weights must be positive and finite")
        return w

    def params_for(self, theta) -> np.ndarray:
        """Full model parameter vector with ``theta`` substituted."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (len(self._free),):
            raise EstimationError(f"expected {len(self._free)} parameter values, got {theta.size}")
        p = self._base.copy()
        p[self._free] = theta
        return p

    # -- solutions -----------------------------------------------------------

    def solve(self, theta=None) -> np.ndarray:
        """Full state at the observation times, ``(len(t), #states)``."""
        num = self.model.numeric(self.params_for(self._theta(theta)))
        values, _ = solve_ivp(num.f, self.t0, self.x0, self.t, self.config)
        return values

    def fitted(self, theta=None) -> np.ndarray:
        """Model prediction of the observed states.

        Taken from the sensitivity solve so that cost, residuals and
        gradient all describe the same trajectory.
        """
        return self._sens(theta)[0]

    def _theta(self, theta):
        return self.theta if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))

    def _sens(self, theta):
        """``(yhat, S)`` with ``S[i, j, k] = d yhat[i, j] / d theta[k]``."""
        theta = self._theta(theta)
        key = theta.tobytes()
        if key == self._cache_key:
            return self._cache_val
        num = self.model.numeric(self.params_for(theta))
        n, p = self.model.num_state, len(self._free)
        free = self._free

        def aug(t, z):
            f, J, G = num.fjg(t, z[:n])
            S = z[n:].reshape(n, p)
            return np.concatenate([f, (J @ S + G[:, free]).ravel()])

        z0 = np.concatenate([self.x0, np.zeros(n * p)])
        Z, _ = solve_ivp(aug, self.t0, z0, self.t, self.config)
        X = Z[:, :n]
        S = Z[:, n:].reshape(len(self.t), n, p)
        val = (X[:, self._obs], S[:, self._obs, :])
        self._cache_key, self._cache_val = key, val
        return val

    # -- loss specific, overridden -------------------------------------------

    def _pointwise(self, yhat) -> np.ndarray:
        raise NotImplementedError

    def _dpointwise(self, yhat) -> np.ndarray:
        """Derivative of each pointwise loss with respect to ``yhat``."""
        raise NotImplementedError

    def _jac_scale(self, yhat) -> np.ndarray:
        """Row scaling so that ``factor * J^T J`` is the Gauss-Newton Hessian."""
        raise NotImplementedError

    # -- public interface ----------------------------------------------------

    def cost(self, theta=None) -> float:
        return float(np.sum(self._pointwise(self.fitted(theta))))

    def residual(self, theta=None) -> np.ndarray:
        """Unweighted ``y - yhat``, shaped ``(len(t), #observed states)``."""
        return self.y - self.fitted(theta)

    residuals = residual

    def sensitivity(self, theta=None) -> np.ndarray:
        """Gradient of the cost from forward sensitivities."""
        yhat, S = self._sens(theta)
        return np.einsum("ij,ijk->k", self._dpointwise(yhat), S)

    sensitivity_gradient = sensitivity
    gradient = sensitivity

    def cost_and_gradient(self, theta=None):
        yhat, S = self._sens(theta)
        return float(np.sum(self._pointwise(yhat))), np.einsum("ij,ijk->k", self._dpointwise(yhat), S)

    def adjoint(self, theta=None) -> np.ndarray:
        """Gradient of the cost from the adjoint equations."""
        theta = self._theta(theta)
        num = self.model.numeric(self.params_for(theta))
        n, p = self.model.num_state, len(self._free)
        free = self._free
        cfg = self.config
        tight = SolverConfig(rtol=min(cfg.rtol, 1e-10), atol=min(cfg.atol, 1e-10),
                             max_steps=cfg.max_steps)
        X, dense = solve_ivp(num.f, self.t0, self.x0, self.t, tight, dense=True)
        dl = self._dpointwise(X[:, self._obs])

        def back(t, z):
            _, J, G = num.fjg(t, dense(t))
            lam = z[:n]
            return np.concatenate([-J.T @ lam, -G[:, free].T @ lam])

        z = np.zeros(n + p)
        stops = np.concatenate([[self.t0], self.t])
        for i in range(len(self.t), 0, -1):
            z[:n][self._obs] += dl[i - 1]
            if stops[i - 1] != stops[i]:
                z = solve_ivp(back, stops[i], z, [stops[i - 1]], tight)[0][0]
        return z[n:].copy()

    adjoint_gradient = adjoint

    def jac(self, theta=None) -> np.ndarray:
        """Jacobian of the scaled residuals, ``(len(t) * #observed, #theta)``.

        Rows run over observation times first, then observed states.  Its sign
        follows ``r = y - yhat`` so ``d r / d theta = -d yhat / d theta``.
        """
        yhat, S = self._sens(theta)
        J = -self._jac_scale(yhat)[:, :, None] * S
        return J.reshape(-1, S.shape[2])

    residual_jacobian = jac

    def jtj(self, theta=None) -> np.ndarray:
        J = self.jac(theta)
        return J.T @ J

    def fisher_information(self, theta=None) -> np.ndarray:
        """Gauss-Newton approximation of the Hessian of the cost."""
        return self.gauss_newton_factor * self.jtj(theta)

    def hessian(self, theta=None, rel_step: float = 1e-5) -> np.ndarray:
        """Hessian of the cost by central differences of the analytic gradient."""
        theta = self._theta(theta)
        p = theta.size
        H = np.empty((p, p))
        for k in range(p):
            h = rel_step * max(abs(theta[k]), 1e-3)
            up, dn = theta.copy(), theta.copy()
            up[k] += h
            dn[k] -= h
            H[:, k] = (self.sensitivity(up) - self.sensitivity(dn)) / (2 * h)
        return 0.5 * (H + H.T)

    def fit(self, bounds=None, theta0=None, **kwargs) -> FitResult:
        return fit(self, bounds, theta0=theta0, **kwargs)

    def with_observations(self, y) -> "BaseLoss":
        """Copy of this loss with different observed values."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        y = np.asarray(y, dtype=float).reshape(self.y.shape)
        clone.y = y
        clone._cache_key = None
        clone._cache_val = None
        return clone

    def _shape_out(self, a):
        return a[:, 0] if self._y_ndim == 1 else a


class SquareLoss(BaseLoss):
    """Weighted sum of squares ``sum w * (y - yhat)^2``."""

    gauss_newton_factor = 2.0

    def _pointwise(self, yhat):
        return self.weights * (self.y - yhat) ** 2

    def _dpointwise(self, yhat):
        return -2.0 * self.weights * (self.y - yhat)

    def _jac_scale(self, yhat):
        return np.sqrt(self.weights)


class NormalLoss(BaseLoss):
    """Negative log-likelihood of independent normal errors.

    Weights are read as inverse standard deviations, ``sigma = 1 / w``.
    """

    def _pointwise(self, yhat):
        w = self.weights
        return 0.5 * (w * (self.y - yhat)) ** 2 - np.log(w) + 0.5 * math.log(2 * math.pi)

    def _dpointwise(self, yhat):
        return -(self.weights ** 2) * (self.y - yhat)

    def _jac_scale(self, yhat):
        return self.weights


class PoissonLoss(BaseLoss):
    """Negative log-likelihood of Poisson counts with mean ``yhat``.

    Predictions below a small floor are clamped, with a warning, so that the
    logarithm stays finite.  Weights are not supported.
    """

    def __init__(self, theta, ode, x0, t0, t, y, state_name, state_weight=None,
                 target_param=None, config=None):
        if state_weight is not None:
            raise EstimationError("PoissonLoss does not take weights")
        super().__init__(theta, ode, x0, t0, t, y, state_name, None, target_param, config)
        if np.any(self.y < 0):
            raise EstimationError("Poisson observations must be non-negative")
        self._lgamma = np.vectorize(math.lgamma)(self.y + 1.0)

    def _clamp(self, yhat):
        if np.any(yhat < POISSON_FLOOR):
            warnings.warn(f"predictions below {POISSON_FLOOR} clamped in Poisson loss",
                          RuntimeWarning, stacklevel=3)
            return np.maximum(yhat, POISSON_FLOOR)
        return yhat

    def _pointwise(self, yhat):
        mu = self._clamp(yhat)
        return mu - self.y * np.log(mu) + self._lgamma

    def _dpointwise(self, yhat):
        mu = self._clamp(yhat)
        d = 1.0 - self.y / mu
        d[yhat < POISSON_FLOOR] = 0.0  # flat where clamped
        return d

    def _jac_scale(self, yhat):
        return 1.0 / np.sqrt(self._clamp(yhat))


LOSSES = {"square": SquareLoss, "normal": NormalLoss, "poisson": PoissonLoss}


def make_loss(kind: str, *args, **kwargs) -> BaseLoss:
    try:
        cls = LOSSES[kind]
    except KeyError:
        raise ValueError(f"unknown loss {kind!r}; choose from {sorted(LOSSES)}") from None
    return cls(*args, **kwargs)


def _bounds_arrays(bounds, p):
    if bounds is None:
        return np.full(p, -np.inf), np.full(p, np.inf)
    b = np.asarray(bounds, dtype=float)
    if b.shape != (p, 2):
        raise EstimationError(f"bounds must be {p} (lower, upper) pairs")
    lo = np.where(np.isnan(b[:, 0]), -np.inf, b[:, 0])
    hi = np.where(np.isnan(b[:, 1]), np.inf, b[:, 1])
    return lo, hi


def fit(loss: BaseLoss, bounds=None, theta0=None, gtol: float = 1e-6, ftol: float = 1e-10,
        max_iter: int = 500) -> FitResult:
    """Minimise ``loss`` over its target parameters within ``bounds``.

    ``bounds`` is a list of ``(lower, upper)`` pairs, ``None`` entries of
    which mean unbounded.  The starting point (``loss.theta`` by default) is
    projected into the box first.
    """
    p = len(loss.names)
    lo, hi = _bounds_arrays(None if bounds is None else
                            [(np.nan if a is None else a, np.nan if b is None else b)
                             for a, b in bounds], p)
    x0 = loss.theta if theta0 is None else np.asarray(theta0, dtype=float)
    res = minimize_box(loss.cost_and_gradient, x0, lo, hi, gtol=gtol, ftol=ftol, max_iter=max_iter)
    return FitResult(theta=res.x, cost=float(res.fun), converged=res.converged,
                     iterations=res.iterations, active_lower=res.x <= lo,
                     active_upper=res.x >= hi, names=loss.names, message=res.message)
