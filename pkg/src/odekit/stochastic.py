"""Stochastic realizations of a model.

Two sources of randomness are supported: parameters drawn from
distributions and fed to the deterministic solver (:func:`simulate_param`),
and discrete jump processes driven by the transition rates
(:func:`simulate_jump`, exact direct-method SSA or adaptive tau-leaping).
"""
from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import _parallel
from . import expr as ex
from .distributions import Distribution, draw
from .errors import DomainError, IntegrationError, ModelError, SimulationError
from .integrate import SolverConfig, Trajectory, integrate

TAU_LEAP = "tau_leap"
EXACT = "exact"


def _is_random(value) -> bool:
    return isinstance(value, Distribution) or (
        isinstance(value, tuple) and len(value) == 2 and callable(value[0]))


def simulate_param(model, times, params: Mapping | None = None, iterations: int = 1,
                   seed=None, full_output: bool = True, workers=None,
                   config: SolverConfig | None = None):
    """Integrate the model once per parameter draw.

    ``params`` maps every model parameter to a constant, a
    :class:`Distribution` or a ``(callable, kwargs)`` pair.  Parameters
    missing from ``params`` keep the values attached to the model.

    Returns ``(mean, realizations)`` where ``mean`` is the elementwise
    average trajectory; with ``full_output=False`` only the mean.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    spec = dict(model.parameters)
    spec.update(params or {})
    missing = [p for p in model.params if p not in spec]
    if missing:
        raise ModelError(f"no value or distribution for parameters {missing}")
    seed = _parallel.fresh_seed() if seed is None else seed
    times = np.asarray(times, dtype=float)

    def one(i):
        rng = _parallel.stream(seed, i)
        values = {}
        for p in model.params:
            v = spec[p]
            values[p] = float(draw(v, 1, rng)[0]) if _is_random(v) else float(v)
        try:
            return integrate(model, times, config, params=values)
        except (IntegrationError, DomainError) as exc:
            raise SimulationError(f"iteration {i}: {exc}") from exc

    sims = _parallel.pmap(one, iterations, workers)
    mean = Trajectory(times, np.mean([s.values for s in sims], axis=0), model.states)
    return (mean, sims) if full_output else mean


# -- jump processes -------------------------------------------------------

class _JumpSystem:
    """Propensities and stoichiometry of a transition-form model."""

    def __init__(self, model, params=None):
        if not model.is_transition_form:
            raise ModelError("jump simulation needs a model made of T/B/D transitions; "
                             "call unroll() first")
        rates = model.channel_rates()
        for j, r in enumerate(rates):
            if ex.TIME in ex.free_symbols(r):
                raise ModelError(f"channel {j} rate {r} depends on time")
        self.V = model.stoichiometry()
        self.n, self.m = self.V.shape
        vals = model.numeric(params).params.tolist()
        self._rates = model._factory("rates")(*vals)
        self.changes = [[(i, int(self.V[i, j])) for i in range(self.n) if self.V[i, j]]
                        for j in range(self.m)]
        self.consumed = [[(i, -int(self.V[i, j])) for i in range(self.n) if self.V[i, j] < 0]
                         for j in range(self.m)]
        self._orders(model, rates)

    def _orders(self, model, rates):
        # highest reaction order per species and how many copies it needs there
        self.hor = np.zeros(self.n, dtype=int)
        self.need = np.ones(self.n, dtype=int)
        self.reactant = np.zeros(self.n, dtype=bool)
        for r in rates:
            deg = ex.polynomial_degree(r, model.states)
            order = int(sum(math.ceil(float(k)) for k in deg.values()))
            for name, k in deg.items():
                i = model.states.index(name)
                self.reactant[i] = True
                k = int(math.ceil(float(k)))
                if order > self.hor[i] or (order == self.hor[i] and k > self.need[i]):
                    self.hor[i] = order
                    self.need[i] = k

    def propensities(self, t, x) -> list:
        try:
            a = self._rates(t, *x)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise SimulationError(f"propensity evaluation failed at t={t}: {exc}") from None
        for j, v in enumerate(a):
            if v < 0:
                raise SimulationError(f"negative propensity {v} in channel {j} at t={t}, state={list(x)}")
        return a

    def g(self, x) -> np.ndarray:
        out = np.ones(self.n)
        for i in range(self.n):
            h, k, xi = self.hor[i], self.need[i], x[i]
            if h <= 1:
                out[i] = 1.0
            elif h == 2:
                out[i] = 2.0 + (1.0 / (xi - 1) if k >= 2 and xi > 1 else 0.0)
            else:
                if k >= 3 and xi > 2:
                    out[i] = 3.0 + 1.0 / (xi - 1) + 2.0 / (xi - 2)
                elif k == 2 and xi > 1:
                    out[i] = 1.5 * (2.0 + 1.0 / (xi - 1))
                else:
                    out[i] = float(h)
        return out


def _initial_integer_state(model):
    if model.initial_values is None:
        raise ModelError("initial values are not set")
    x0, t0 = model.initial_values
    if np.any(x0 != np.round(x0)):
        raise SimulationError(f"jump simulation needs an integer initial state, got {x0.tolist()}")
    if np.any(x0 < 0):
        raise SimulationError("initial state must be non-negative")
    return [int(v) for v in x0], t0


def _fill(out, grid, k, upto, x, inclusive=False):
    """Hold ``x`` on grid points before ``upto``; return the next grid index."""
    n = len(grid)
    while k < n and (grid[k] < upto or (inclusive and grid[k] <= upto)):
        out[k] = x
        k += 1
    return k


def _ssa_step(system, t, x, rng):
    """One direct-method event; returns ``(t_next, channel)`` or ``(inf, None)``."""
    a = system.propensities(t, x)
    a0 = math.fsum(a)
    if a0 <= 0:
        return math.inf, None
    tau = -math.log(1.0 - rng.random()) / a0
    r = rng.random() * a0
    acc = 0.0
    j = len(a) - 1
    for idx, v in enumerate(a):
        acc += v
        if r < acc:
            j = idx
            break
    while a[j] <= 0:
        j -= 1
    return t + tau, j


def _apply(system, x, j):
    for i, d in system.changes[j]:
        x[i] += d


def _run_exact(system, x0, t0, grid, rng):
    x = list(x0)
    t = t0
    out = np.empty((len(grid), system.n))
    events = []
    k = _fill(out, grid, 0, t0, x, inclusive=False)
    t_end = grid[-1]
    while k < len(grid):
        t_next, j = _ssa_step(system, t, x, rng)
        if t_next > t_end:
            k = _fill(out, grid, k, math.inf, x)
            break
        k = _fill(out, grid, k, t_next, x)
        _apply(system, x, j)
        t = t_next
        events.append(t)
    return out, np.asarray(events)


def _cao_tau(system, x, a, noncritical, eps):
    V = system.V
    mu = V[:, noncritical] @ a[noncritical]
    sigma2 = (V[:, noncritical] ** 2) @ a[noncritical]
    g = system.g(x)
    tau = math.inf
    for i in range(system.n):
        if not system.reactant[i]:
            continue
        bound = max(eps * x[i] / g[i], 1.0)
        if mu[i] != 0:
            tau = min(tau, bound / abs(mu[i]))
        if sigma2[i] != 0:
            tau = min(tau, bound * bound / sigma2[i])
    return tau


def _run_tau_leap(system, x0, t0, grid, rng, eps=0.03, n_critical=10, ssa_steps=100,
                  max_halvings=10):
    x = np.array(x0, dtype=np.int64)
    t = t0
    out = np.empty((len(grid), system.n))
    events = []
    k = _fill(out, grid, 0, t0, x)
    t_end = grid[-1]
    V = system.V
    while k < len(grid):
        a = np.array(system.propensities(t, x.tolist()), dtype=float)
        a0 = a.sum()
        if a0 <= 0:
            k = _fill(out, grid, k, math.inf, x)
            break
        L = np.full(system.m, np.inf)
        for j, cons in enumerate(system.consumed):
            if cons:
                L[j] = min(x[i] // c for i, c in cons)
        critical = (a > 0) & (L < n_critical)
        noncritical = ~critical
        tau1 = _cao_tau(system, x, a, noncritical, eps) if noncritical.any() else math.inf
        if tau1 < 10.0 / a0:
            # leaping would gain little: take a batch of exact steps
            xs = x.tolist()
            for _ in range(ssa_steps):
                t_next, j = _ssa_step(system, t, xs, rng)
                if t_next > t_end:
                    t = math.inf
                    break
                k = _fill(out, grid, k, t_next, xs)
                _apply(system, xs, j)
                t = t_next
                events.append(t)
            x = np.array(xs, dtype=np.int64)
            if t == math.inf:
                k = _fill(out, grid, k, math.inf, x)
                break
            continue
        a0c = a[critical].sum()
        accepted = False
        for _ in range(max_halvings + 1):
            tau2 = rng.exponential(1.0 / a0c) if a0c > 0 else math.inf
            fires = np.zeros(system.m, dtype=np.int64)
            if tau1 < tau2:
                tau = tau1
            else:
                tau = tau2
                pc = a * critical
                fires[rng.choice(system.m, p=pc / pc.sum())] = 1
            if t + tau > t_end:
                tau = t_end - t
                fires[:] = 0
            lam = a * noncritical * tau
            fires += rng.poisson(lam)
            x_new = x + V @ fires
            if np.all(x_new >= 0):
                accepted = True
                break
            tau1 /= 2.0
        if not accepted:
            xs = x.tolist()
            t_next, j = _ssa_step(system, t, xs, rng)
            if t_next > t_end:
                k = _fill(out, grid, k, math.inf, x)
                break
            k = _fill(out, grid, k, t_next, x)
            _apply(system, xs, j)
            x = np.array(xs, dtype=np.int64)
            t = t_next
            events.append(t)
            continue
        t_next = t + tau
        k = _fill(out, grid, k, t_next, x)
        x = x_new
        t = t_next
        events.append(t)
        if t >= t_end:
            k = _fill(out, grid, k, math.inf, x)
            break
    return out, np.asarray(events)


def simulate_jump(model, times, iterations: int = 1, method: str = TAU_LEAP, seed=None,
                  full_output: bool = True, workers=None, epsilon: float = 0.03, params=None):
    """Realizations of the continuous-time Markov jump process.

    Returns ``(values, jump_times)``: one ``(len(times), #states)`` matrix per
    realization sampled on ``times`` by holding the last state, and the
    event (exact) or leap (tau-leap) times of each realization.  With
    ``full_output=False`` only the list of value matrices.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if method not in (TAU_LEAP, EXACT):
        raise ValueError(f"method must be {TAU_LEAP!r} or {EXACT!r}")
    system = _JumpSystem(model, params)
    x0, t0 = _initial_integer_state(model)
    grid = np.asarray(times, dtype=float)
    if len(grid) == 0 or grid[0] < t0 or np.any(np.diff(grid) <= 0):
        raise ValueError("times must be strictly increasing and start at or after t0")
    seed = _parallel.fresh_seed() if seed is None else seed

    def one(i):
        rng = _parallel.stream(seed, i)
        if method == EXACT:
            return _run_exact(system, x0, t0, grid, rng)
        return _run_tau_leap(system, x0, t0, grid, rng, eps=epsilon)

    runs = _parallel.pmap(one, iterations, workers)
    values = [r[0] for r in runs]
    jumps = [r[1] for r in runs]
    return (values, jumps) if full_output else values
