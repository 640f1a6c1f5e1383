import math

import numpy as np
import pytest

from odekit.common_models import TEMPLATES
from odekit.errors import IntegrationError, ModelError
from odekit.integrate import (SolverConfig, integrate, jacobian_at, rhs_at, rhs_at_T, solve_ivp)
from odekit.model import OdeModel, Transition

import oracles
from conftest import N_TUTORIAL, X0_TUTORIAL, tutorial_sir


def decay(k=1.0, x0=1.0):
    m = OdeModel(["x"], ["k"], ode=[Transition("x", "-k*x")])
    m.parameters = {"k": k}
    m.initial_values = ([x0], 0.0)
    return m


def test_exponential_decay():
    t = np.linspace(0, 5, 21)
    traj = integrate(decay(), t, SolverConfig(rtol=1e-10, atol=1e-12))
    assert np.allclose(traj.values[:, 0], np.exp(-t), rtol=1e-8, atol=0)


def test_first_row_echoes_initial_state():
    traj = integrate(decay(x0=3.0), [0.0, 1.0])
    assert traj.values[0, 0] == 3.0


def test_zero_rhs_is_constant():
    m = OdeModel(["x", "y"], ["a"], ode=[Transition("x", "0"), Transition("y", "0*a")])
    m.parameters = {"a": 1.0}
    m.initial_values = ([2.5, -1.0], 0.0)
    traj = integrate(m, np.linspace(0, 10, 5))
    assert np.all(traj.values == [2.5, -1.0])


def test_time_dependent_forcing():
    m = OdeModel(["x"], ["a"], ode=[Transition("x", "a*cos(t)")])
    m.parameters = {"a": 2.0}
    m.initial_values = ([0.0], 0.0)
    t = np.linspace(0.1, 6, 15)
    traj = integrate(m, t, SolverConfig(rtol=1e-10, atol=1e-12))
    assert np.allclose(traj.values[:, 0], 2 * np.sin(t), atol=1e-8)


def test_tutorial_sir_conserves_population():
    t = np.linspace(0, 150, 151)
    traj = integrate(tutorial_sir(), t)
    total = traj.values.sum(axis=1)
    assert np.max(np.abs(total - total[0])) / total[0] < 1e-6
    assert np.all(traj.values >= -1e-6)


def test_tutorial_sir_matches_rk4_oracle():
    end = integrate(tutorial_sir(), [0.0, 150.0]).values[-1]
    ref = oracles.rk4_sir(3.6, 0.2, N_TUTORIAL, X0_TUTORIAL, 150.0)
    assert np.allclose(end, ref, rtol=1e-6, atol=1e-6 * N_TUTORIAL * 1e-3)


TEMPLATE_CASES = {
    "sir": ({"beta": 0.5, "gamma": 1 / 3}, [0.99, 0.01, 0.0], oracles.sir_rhs),
    "sir_population": ({"beta": 0.9, "gamma": 0.2, "N": 1000.0}, [990.0, 10.0, 0.0],
                       oracles.sir_population_rhs),
    "sir_birth_death": ({"beta": 0.9, "gamma": 0.2, "N": 1000.0, "B": 5.0, "mu": 0.005},
                        [990.0, 10.0, 0.0], oracles.sir_birth_death_rhs),
    "seir": ({"beta": 1.2, "alpha": 0.3, "gamma": 0.2}, [0.98, 0.01, 0.01, 0.0], oracles.seir_rhs),
    "sis_vector_host": ({"beta_v": 0.3, "beta_h": 0.2, "mu_v": 0.1, "mu_h": 0.05, "lambda_v": 1.0,
                         "lambda_h": 0.5, "gamma": 0.4}, [10.0, 10.0, 0.1, 0.1],
                        oracles.vector_host_rhs),
}


@pytest.mark.parametrize("name", sorted(TEMPLATE_CASES))
def test_templates_match_rk4_oracle(name):
    params, x0, rhs = TEMPLATE_CASES[name]
    m = TEMPLATES[name](params)
    m.initial_values = (x0, 0.0)
    end = integrate(m, [5.0], SolverConfig(rtol=1e-11, atol=1e-12)).values[-1]
    ref = oracles.rk4(rhs(*[params[p] for p in m.params]), x0, 0.0, 5.0, h=1e-3)
    assert np.allclose(end, ref, rtol=1e-8, atol=1e-10)


def test_transition_and_explicit_forms_identical():
    a = tutorial_sir()
    b = OdeModel(a.states, a.params, ode=[Transition(s, f) for s, f in zip(a.states, a.rhs)])
    b.parameters = a.parameters
    b.initial_values = a.initial_values
    t = np.linspace(0, 50, 11)
    assert integrate(a, t).values.tobytes() == integrate(b, t).values.tobytes()


def test_rhs_and_jacobian_at_a_point():
    m = tutorial_sir()
    x = np.array([1000.0, 10.0, 5.0])
    b, g, N = 3.6, 0.2, N_TUTORIAL
    assert np.allclose(rhs_at(m, x, 0.0), [-b * 1e4 / N, b * 1e4 / N - g * 10, g * 10])
    assert np.array_equal(rhs_at(m, x, 0.0), rhs_at_T(m, 0.0, x))
    J = jacobian_at(m, x, 0.0)
    h = 1e-4
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (rhs_at(m, x + e, 0.0) - rhs_at(m, x - e, 0.0)) / (2 * h)
        assert np.allclose(J[:, k], fd, rtol=1e-7, atol=1e-12)


def test_backwards_integration():
    out, _ = solve_ivp(lambda t, y: -y, 2.0, [math.exp(-2.0)], [1.0, 0.0],
                       SolverConfig(rtol=1e-10, atol=1e-12))
    assert np.allclose(out[:, 0], [math.exp(-1), 1.0], rtol=1e-8)


def test_dense_output_interpolates():
    _, dense = solve_ivp(lambda t, y: -y, 0.0, [1.0], [3.0], SolverConfig(rtol=1e-10, atol=1e-12), dense=True)
    for t in (0.3, 1.7, 2.9):
        assert abs(dense(t)[0] - math.exp(-t)) < 1e-6


def test_errors():
    m = decay()
    with pytest.raises(ValueError):
        integrate(m, [1.0, 0.5])
    m.initial_values = ([1.0], 1.0)
    with pytest.raises(ValueError):
        integrate(m, [0.5, 2.0])
    bare = OdeModel(["x"], ["k"], ode=[Transition("x", "-k*x")])
    bare.parameters = {"k": 1.0}
    with pytest.raises(ModelError):
        integrate(bare, [1.0])
    with pytest.raises(ValueError):
        SolverConfig(rtol=0)


def test_blow_up_is_reported():
    m = OdeModel(["x"], ["a"], ode=[Transition("x", "a*x^2")])
    m.parameters = {"a": 1.0}
    m.initial_values = ([1.0], 0.0)
    with pytest.raises(IntegrationError):
        integrate(m, [2.0], SolverConfig(max_steps=5000))


def test_domain_error_during_solve():
    m = OdeModel(["x"], ["a"], ode=[Transition("x", "-a*sqrt(x)")])
    m.parameters = {"a": 1.0}
    m.initial_values = ([1.0], 0.0)
    # reaches zero at t = 2 and steps past it
    with pytest.raises(IntegrationError):
        integrate(m, [5.0])


def test_trajectory_accessors():
    traj = integrate(tutorial_sir(), [0.0, 1.0])
    assert np.array_equal(traj["I"], traj.values[:, 1])
    assert np.asarray(traj).shape == (2, 3)
    assert len(traj) == 2
