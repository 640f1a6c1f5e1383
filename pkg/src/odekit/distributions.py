"""Random draws named after their R counterparts.

Every generator takes the number of draws first, then the distribution
parameters under R's argument names, e.g. ``rgamma(10, shape=2, rate=3)``.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


def _rng(rng):
    return rng if rng is not None else np.random.default_rng()


def _check_n(n):
    n = int(n)
    if n < 1:
        raise ValueError("number of draws must be at least 1")
    return n


def rgamma(n, shape, rate=1.0, scale=None, rng=None):
    n = _check_n(n)
    if scale is None:
        if rate <= 0:
            raise ValueError("gamma rate must be positive")
        scale = 1.0 / rate
    if shape <= 0 or scale <= 0:
        raise ValueError("gamma shape and scale must be positive")
    return _rng(rng).gamma(shape, scale, n)


def rnorm(n, mean=0.0, sd=1.0, rng=None):
    n = _check_n(n)
    if sd < 0:
        raise ValueError("normal sd must be non-negative")
    return _rng(rng).normal(mean, sd, n)


def runif(n, min=0.0, max=1.0, rng=None):  # noqa: A002 - R argument names
    n = _check_n(n)
    if not min <= max:
        raise ValueError("uniform requires min <= max")
    return _rng(rng).uniform(min, max, n)


def rpois(n, rng=None, **kwargs):
    """``rpois(n, **{"lambda": 4.0})``; ``lam`` is accepted as well."""
    n = _check_n(n)
    lam = kwargs.pop("lambda", kwargs.pop("lam", None))
    if kwargs or lam is None:
        raise TypeError("rpois takes a single 'lambda' parameter")
    if lam < 0:
        raise ValueError("poisson lambda must be non-negative")
    return _rng(rng).poisson(lam, n).astype(float)


def rbeta(n, shape1, shape2, rng=None):
    n = _check_n(n)
    if shape1 <= 0 or shape2 <= 0:
        raise ValueError("beta shapes must be positive")
    return _rng(rng).beta(shape1, shape2, n)


def rlnorm(n, meanlog=0.0, sdlog=1.0, rng=None):
    n = _check_n(n)
    if sdlog < 0:
        raise ValueError("lognormal sdlog must be non-negative")
    return _rng(rng).lognormal(meanlog, sdlog, n)


GENERATORS: dict = {
    "gamma": rgamma,
    "normal": rnorm,
    "uniform": runif,
    "poisson": rpois,
    "beta": rbeta,
    "lognormal": rlnorm,
}


@dataclass(frozen=True)
class Distribution:
    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in GENERATORS:
            raise ValueError(f"unknown distribution family {self.family!r}; "
                             f"choose from {sorted(GENERATORS)}")
        # validate eagerly with a throwaway draw
        GENERATORS[self.family](1, rng=np.random.default_rng(0), **dict(self.params))

    def sample(self, n, rng=None) -> np.ndarray:
        return GENERATORS[self.family](n, rng=rng, **dict(self.params))


def draw(dist, n, rng=None) -> np.ndarray:
    """Draw ``n`` samples from a :class:`Distribution` or a ``(callable, kwargs)`` pair."""
    if isinstance(dist, Distribution):
        return dist.sample(n, rng)
    fn, kwargs = dist
    kwargs = dict(kwargs)
    if _accepts_rng(fn):
        kwargs.setdefault("rng", rng)
    return np.asarray(fn(n, **kwargs), dtype=float).reshape(-1)


def _accepts_rng(fn: Callable) -> bool:
    try:
        sig = inspect.signature(fn)
    except (TypeError, ValueError):
        return False
    return "rng" in sig.parameters or any(
        p.kind is inspect.Parameter.VAR_KEYWORD for p in sig.parameters.values())
