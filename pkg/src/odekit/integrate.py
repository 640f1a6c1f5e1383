"""Deterministic initial value problems.

The solver is the Dormand-Prince 5(4) embedded Runge-Kutta pair with
error-per-step control and cubic Hermite interpolation between accepted
steps.  It is not suitable for stiff systems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, IntegrationError, ModelError

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between 5th and embedded 4th order weights
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                    -92097 / 339200, 187 / 2100, 1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class SolverConfig:
    rtol: float = 1e-8
    atol: float = 1e-8
    max_steps: int = 500_000
    first_step: float | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass
class Trajectory:
    """Solution sampled on a time grid, one row per time point."""

    times: np.ndarray
    values: np.ndarray
    states: tuple = ()

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.times)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def column(self, state: str) -> np.ndarray:
        return self.values[:, list(self.states).index(state)]

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.column(key)
        return self.values[key]


class DenseOutput:
    """Piecewise cubic Hermite interpolant over accepted steps."""

    def __init__(self, ts, ys, fs):
        self.ts = np.asarray(ts, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.fs = np.asarray(fs, dtype=float)
        if len(self.ts) > 1 and self.ts[-1] < self.ts[0]:
            self.ts, self.ys, self.fs = self.ts[::-1], self.ys[::-1], self.fs[::-1]

    def __call__(self, t: float) -> np.ndarray:
        ts = self.ts
        if len(ts) == 1:
            return self.ys[0].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        return _hermite(ts[i], self.ys[i], self.fs[i], ts[i + 1], self.ys[i + 1], self.fs[i + 1], t)


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1)


def _rms(v):
    return math.sqrt(float(np.dot(v, v)) / v.size) if v.size else 0.0


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def solve_ivp(fun: Callable, t0: float, y0, t_eval: Sequence[float],
              config: SolverConfig | None = None, dense: bool = False):
    """Integrate ``y' = fun(t, y)`` from ``(t0, y0)`` and sample at ``t_eval``.

    ``t_eval`` must be monotone and on one side of ``t0``; it may run
    backwards in time.  Returns ``(values, dense_output_or_None)``.
    """
    cfg = config or SolverConfig()
    y = np.array(y0, dtype=float)
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((len(t_eval), y.size))
    if len(t_eval) == 0:
        return out, (DenseOutput([t0], [y], [fun(t0, y)]) if dense else None)
    t_end = float(t_eval[-1])
    direction = 1.0 if t_end >= t0 else -1.0
    if np.any(direction * np.diff(t_eval) < 0) or direction * (t_eval[0] - t0) < 0:
        raise ValueError("evaluation times must be monotone and start at or after t0")

    t = float(t0)
    f = _eval(fun, t, y)
    idx = 0
    while idx < len(t_eval) and t_eval[idx] == t:
        out[idx] = y
        idx += 1
    ts, ys, fs = ([t], [y.copy()], [f.copy()]) if dense else (None, None, None)
    if idx == len(t_eval):
        return out, (DenseOutput(ts, ys, fs) if dense else None)

    rtol, atol = cfg.rtol, cfg.atol
    span = abs(t_end - t)
    h = cfg.first_step if cfg.first_step else _initial_step(
        lambda tt, yy: _eval(fun, tt, yy), t, y, f, direction, rtol, atol, span)
    K = np.empty((7, y.size))
    steps = 0
    while idx < len(t_eval):
        if steps >= cfg.max_steps:
            raise IntegrationError(f"step limit {cfg.max_steps} exhausted", t, y)
        steps += 1
        remaining = abs(t_end - t)
        last = h >= remaining
        if last:
            h = remaining
        hs = direction * h
        if t + hs == t:
            raise IntegrationError("step size underflow", t, y)
        K[0] = f
        for i in range(1, 7):
            K[i] = _eval(fun, t + _C[i] * hs, y + hs * (_A[i] @ K[:i]))
        y_new = y + hs * (_B[:6] @ K[:6])
        if not np.all(np.isfinite(K)) or not np.all(np.isfinite(y_new)):
            h *= MIN_FACTOR
            continue
        err = hs * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = _rms(err / scale)
        if err_norm <= 1.0:
            t_new = t_end if last else t + hs
            f_new = K[6]
            while idx < len(t_eval) and direction * (t_eval[idx] - t_new) <= 0:
                tau = t_eval[idx]
                out[idx] = y_new if tau == t_new else _hermite(t, y, f, t_new, y_new, f_new, tau)
                idx += 1
            t, y, f = t_new, y_new, f_new.copy()
            if dense:
                ts.append(t)
                ys.append(y.copy())
                fs.append(f.copy())
            factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
        else:
            factor = max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
        h *= factor
    return out, (DenseOutput(ts, ys, fs) if dense else None)


def _eval(fun, t, y):
    try:
        v = fun(t, y)
    except DomainError as exc:
        raise IntegrationError(f"right-hand side undefined: {exc}", t, y) from exc
    return v


def _check_finite(values, times):
    bad = ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise IntegrationError("non-finite state encountered", times[i], values[i])


def integrate(model, times, config: SolverConfig | None = None, params=None) -> Trajectory:
    """Solve the bound model on ``times``.

    ``times[0]`` may equal the initial time, in which case the initial state
    is echoed as the first row, or lie after it.
    """
    if model.initial_values is None:
        raise ModelError("initial values are not set")
    x0, t0 = model.initial_values
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if len(times) and times[0] < t0:
        raise ValueError(f"times start at {times[0]} before the initial time {t0}")
    num = model.numeric(params)
    values, _ = solve_ivp(num.f, t0, x0, times, config)
    _check_finite(values, times)
    return Trajectory(times, values, model.states)


def rhs_at(model, x, t) -> np.ndarray:
    return model.numeric().f(t, x)


def rhs_at_T(model, t, x) -> np.ndarray:
    return rhs_at(model, x, t)


def jacobian_at(model, x, t) -> np.ndarray:
    return model.numeric().jac(t, x)


def jacobian_at_T(model, t, x) -> np.ndarray:
    return jacobian_at(model, x, t)


def grad_at(model, x, t) -> np.ndarray:
    return model.numeric().grad(t, x)
