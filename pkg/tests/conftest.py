import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from odekit import SquareLoss, Transition, TransitionType, OdeModel, sir  # noqa: E402

N_TUTORIAL = 7781984.0
X0_TUTORIAL = [0.065 * N_TUTORIAL, 123 * (5.0 / 30.0), 0.0]
MODELS_DIR = Path(__file__).resolve().parent.parent / "models"


def tutorial_sir(beta=3.6, gamma=0.2):
    """The counts SIR built from its two transitions, with the walk-through values."""
    model = OdeModel(["S", "I", "R"], ["beta", "gamma", "N"], transition=[
        Transition(origin="S", destination="I", equation="beta*S*I/N",
                   transition_type=TransitionType.T),
        Transition("I", "gamma*I", "T", "R"),
    ])
    model.parameters = [("beta", beta), ("gamma", gamma), ("N", N_TUTORIAL)]
    model.initial_values = (X0_TUTORIAL, 0.0)
    return model


def fitting_problem(seed, theta0=(0.5, 0.5), loss_cls=SquareLoss, noise=True):
    """SIR on proportions observed through R with multiplicative noise 0.9 + U(0, 0.2)."""
    model = sir({"beta": 0.5, "gamma": 1.0 / 3.0})
    x0 = [1.0, 1.27e-6, 0.0]
    t = np.linspace(0, 100, 50)
    model.initial_values = (x0, t[0])
    y = model.integrate(t[1:]).column("R")
    if noise:
        y = y * (0.90 + np.random.default_rng(seed).random(len(y)) / 5.0)
    return loss_cls(list(theta0), model, x0, t[0], t[1:], y, ["R"])


BOUNDS = [(0.0, 2.0), (0.0, 2.0)]


@pytest.fixture
def sir_tutorial():
    return tutorial_sir()


@pytest.fixture
def paper_problem():
    return fitting_problem(seed=0)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
