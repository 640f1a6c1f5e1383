"""Ready-made compartmental models.

Every builder takes an optional parameter mapping.  When given it must name
every model parameter and the values are attached to the returned model;
without it the model is returned unbound, which is what symbolic work such as
``r0`` needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import ModelError
from .model import OdeModel, Transition, TransitionType

T = TransitionType.T
B = TransitionType.B
D = TransitionType.D
ODE = TransitionType.ODE


def _bind(model: OdeModel, params: Mapping | None) -> OdeModel:
    if params is None:
        return model
    params = dict(params)
    missing = [p for p in model.params if p not in params]
    if missing:
        raise ModelError(f"missing parameter values {missing}")
    extra = [p for p in params if p not in model.params]
    if extra:
        raise ModelError(f"unknown parameters {extra}")
    model.parameters = params
    return model


def sir(params: Mapping | None = None) -> OdeModel:
    """SIR on proportions: ``S -> I`` at ``beta*S*I``, ``I -> R`` at ``gamma*I``."""
    model = OdeModel(["S", "I", "R"], ["beta", "gamma"], transition=[
        Transition("S", "beta*S*I", T, "I"),
        Transition("I", "gamma*I", T, "R"),
    ])
    return _bind(model, params)


def sir_population(params: Mapping | None = None) -> OdeModel:
    """SIR on counts with frequency-dependent infection ``beta*S*I/N``."""
    model = OdeModel(["S", "I", "R"], ["beta", "gamma", "N"], transition=[
        Transition("S", "beta*S*I/N", T, "I"),
        Transition("I", "gamma*I", T, "R"),
    ])
    return _bind(model, params)


def sir_birth_death(params: Mapping | None = None) -> OdeModel:
    """Counts SIR with constant births ``B`` into S and deaths ``mu`` from S and I."""
    model = OdeModel(["S", "I", "R"], ["beta", "gamma", "N", "B", "mu"], transition=[
        Transition("S", "beta*S*I/N", T, "I"),
        Transition("I", "gamma*I", T, "R"),
    ], birth_death=[
        Transition("S", "B", B),
        Transition("S", "mu*S", D),
        Transition("I", "mu*I", D),
    ])
    return _bind(model, params)


def seir(params: Mapping | None = None) -> OdeModel:
    """SEIR on proportions with incubation rate ``alpha``."""
    model = OdeModel(["S", "E", "I", "R"], ["beta", "alpha", "gamma"], transition=[
        Transition("S", "beta*S*I", T, "E"),
        Transition("E", "alpha*E", T, "I"),
        Transition("I", "gamma*I", T, "R"),
    ])
    return _bind(model, params)


def sis_vector_host(params: Mapping | None = None) -> OdeModel:
    """Vector-host SIS written as explicit ODEs.

    Hosts and vectors are recruited at ``lambda_h``/``lambda_v`` and die at
    ``mu_h``/``mu_v``; infected hosts recover at ``gamma``.
    """
    states = ["S_v", "S_h", "I_v", "I_h"]
    param = ["beta_v", "beta_h", "mu_v", "mu_h", "lambda_v", "lambda_h", "gamma"]
    model = OdeModel(states, param, ode=[
        Transition("S_h", "lambda_h-mu_h*S_h-beta_h*S_h*I_v+gamma*I_h", ODE),
        Transition("S_v", "lambda_v-mu_v*S_v-beta_v*S_v*I_h", ODE),
        Transition("I_h", "beta_h*S_h*I_v-(mu_h+gamma)*I_h", ODE),
        Transition("I_v", "beta_v*S_v*I_h-mu_v*I_v", ODE),
    ])
    return _bind(model, params)


@dataclass(frozen=True)
class ModelTemplate:
    name: str
    builder: Callable[..., OdeModel]
    description: str

    def __call__(self, params: Mapping | None = None) -> OdeModel:
        return self.builder(params)


TEMPLATES = {t.name: t for t in (
    ModelTemplate("sir", sir, "SIR on proportions"),
    ModelTemplate("sir_population", sir_population, "SIR on counts with population size N"),
    ModelTemplate("sir_birth_death", sir_birth_death, "counts SIR with births and deaths"),
    ModelTemplate("seir", seir, "SEIR on proportions"),
    ModelTemplate("sis_vector_host", sis_vector_host, "vector-host SIS as explicit ODEs"),
)}

# capitalised aliases
SIR = sir
SEIR = seir


def get_model(name: str, params: Mapping | None = None) -> OdeModel:
    """Build the template called ``name``."""
    try:
        template = TEMPLATES[name.lower()]
    except KeyError:
        raise ModelError(f"unknown model {name!r}; available: {sorted(TEMPLATES)}") from None
    return template(params)
