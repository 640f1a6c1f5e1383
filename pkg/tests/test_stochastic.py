import numpy as np
import pytest

from odekit import sir_population
from odekit.distributions import Distribution, draw, rgamma, rpois
from odekit.errors import ModelError, SimulationError
from odekit.integrate import integrate
from odekit.model import OdeModel, Transition
from odekit.stochastic import simulate_jump, simulate_param

import oracles
from conftest import tutorial_sir


def small_sir(n=100, i0=1, beta=3.6, gamma=0.2):
    m = sir_population({"beta": beta, "gamma": gamma, "N": float(n)})
    m.initial_values = ([n - i0, i0, 0], 0.0)
    return m


def test_gamma_draw_moments():
    x = rgamma(200_000, shape=100, rate=200, rng=np.random.default_rng(0))
    assert abs(x.mean() - 0.5) < 2e-3
    assert abs(x.var() - 100 / 200 ** 2) < 1e-4


def test_distribution_validation():
    with pytest.raises(ValueError):
        Distribution("gamma", {"shape": -1})
    with pytest.raises(ValueError):
        Distribution("cauchy")
    assert rpois(3, rng=np.random.default_rng(0), **{"lambda": 2.0}).shape == (3,)


def test_callable_pairs_are_accepted():
    rng = np.random.default_rng(1)
    a = draw((rgamma, {"shape": 2.0, "rate": 1.0}), 5, np.random.default_rng(1))
    b = rgamma(5, shape=2.0, rate=1.0, rng=rng)
    assert np.array_equal(a, b)


def test_constant_parameters_reproduce_integration():
    m = tutorial_sir()
    t = np.linspace(0, 20, 11)
    mean, sims = simulate_param(m, t, iterations=3, seed=0)
    ref = integrate(m, t).values
    assert all(np.array_equal(s.values, ref) for s in sims)
    assert np.allclose(mean.values, ref, rtol=1e-14, atol=0)


def test_gamma_distributed_beta_realizations():
    m = tutorial_sir()
    t = np.linspace(0, 150, 100)
    mean, sims = simulate_param(m, t, {"beta": Distribution("gamma", {"shape": 100.0, "rate": 200.0}),
                                       "gamma": 0.2}, iterations=10, seed=4)
    assert len(sims) == 10
    finals = np.array([s.values[-1] for s in sims])
    assert np.unique(finals[:, 2]).size == 10
    assert np.allclose(mean.values, np.mean([s.values for s in sims], axis=0))


def test_random_rate_expectation_matches_moment_generating_function():
    # x' = -k x with k ~ Gamma(shape, rate): E[x(t)] = (1 + t/rate)^-shape
    m = OdeModel(["x"], ["k"], ode=[Transition("x", "-k*x")])
    m.initial_values = ([1.0], 0.0)
    shape, rate = 4.0, 2.0
    t = np.array([0.5, 1.0, 2.0])
    mean = simulate_param(m, t, {"k": Distribution("gamma", {"shape": shape, "rate": rate})},
                          iterations=500, seed=11, full_output=False)
    expect = (1 + t / rate) ** -shape
    # Monte-Carlo standard error from the exact second moment
    se = np.sqrt(((1 + 2 * t / rate) ** -shape - expect ** 2) / 500)
    assert np.all(np.abs(mean.values[:, 0] - expect) < 4 * se)


def test_missing_parameter_distribution():
    m = OdeModel(["x"], ["k"], ode=[Transition("x", "-k*x")])
    m.initial_values = ([1.0], 0.0)
    with pytest.raises(ModelError):
        simulate_param(m, [1.0], {}, seed=0)


@pytest.mark.parametrize("method", ["exact", "tau_leap"])
def test_jump_runs_conserve_and_stay_non_negative(method):
    m = small_sir(n=500, i0=5)
    t = np.linspace(0, 40, 41)
    values, jumps = simulate_jump(m, t, iterations=30, method=method, seed=3)
    for v in values:
        assert np.all(v.sum(axis=1) == 500)
        assert np.all(v >= 0)
        assert np.all(v == np.round(v))
    assert all(np.all(np.diff(j) >= 0) for j in jumps)


def test_no_infection_no_events():
    m = small_sir(i0=0)
    values, jumps = simulate_jump(m, [1.0, 5.0], iterations=5, method="exact", seed=0)
    assert all(len(j) == 0 for j in jumps)
    assert all(np.all(v == [100, 0, 0]) for v in values)


def test_exact_method_matches_independent_ssa():
    t = np.array([1.0, 2.0, 5.0, 10.0, 30.0])
    runs = 2000
    ours = np.array(simulate_jump(small_sir(), t, iterations=runs, method="exact", seed=21,
                                  full_output=False))
    rng = np.random.default_rng(99)
    ref = np.array([oracles.ssa_sir(3.6, 0.2, 100, [99, 1, 0], t, rng) for _ in range(runs)])
    se = np.sqrt((ours.var(axis=0) + ref.var(axis=0)) / runs)
    diff = np.abs(ours.mean(axis=0) - ref.mean(axis=0))
    assert np.all(diff <= 4 * se + 1e-12)
    sd_ratio = ours.std(axis=0)[1:] / ref.std(axis=0)[1:]
    assert np.all(np.abs(sd_ratio - 1) < 0.1)


def test_small_populations_show_early_extinction():
    values = simulate_jump(small_sir(n=100, i0=1, beta=0.5, gamma=0.25), [200.0], iterations=200,
                           method="exact", seed=5, full_output=False)
    final_r = np.array([v[-1, 2] for v in values])
    assert np.any(final_r <= 5) and np.any(final_r >= 30)


def test_tau_leap_mean_tracks_deterministic_solution():
    m = sir_population({"beta": 0.8, "gamma": 0.2, "N": 1e5})
    m.initial_values = ([99000, 1000, 0], 0.0)
    t = np.linspace(0, 30, 31)
    det = integrate(m, t).values
    k = int(np.argmax(det[:, 1]))
    values = simulate_jump(m, t, iterations=100, seed=8, full_output=False)
    mean = np.mean(values, axis=0)
    assert abs(mean[k, 1] - det[k, 1]) / det[k, 1] < 0.05


@pytest.mark.parametrize("method", ["exact", "tau_leap"])
def test_same_seed_same_result_for_any_worker_count(method):
    m = small_sir(n=200, i0=3)
    t = np.linspace(0, 20, 11)
    a = simulate_jump(m, t, iterations=6, method=method, seed=17, workers=1)
    b = simulate_jump(m, t, iterations=6, method=method, seed=17, workers=3)
    for x, y in zip(a[0], b[0]):
        assert x.tobytes() == y.tobytes()
    for x, y in zip(a[1], b[1]):
        assert x.tobytes() == y.tobytes()


def test_param_mode_worker_independent():
    m = tutorial_sir()
    dist = {"beta": Distribution("gamma", {"shape": 100.0, "rate": 200.0})}
    t = np.linspace(0, 50, 6)
    a = simulate_param(m, t, dist, iterations=4, seed=2, workers=1)[0]
    b = simulate_param(m, t, dist, iterations=4, seed=2, workers=2)[0]
    assert a.values.tobytes() == b.values.tobytes()


def test_jump_errors():
    m = small_sir()
    m.initial_values = ([99.5, 0.5, 0], 0.0)
    with pytest.raises(SimulationError):
        simulate_jump(m, [1.0], seed=0)
    timed = OdeModel(["x", "y"], ["a"], ode=[Transition("x", "-a*x*t"), Transition("y", "a*x*t")])
    timed.initial_values = ([10, 0], 0.0)
    timed.parameters = {"a": 1.0}
    with pytest.raises(ModelError):
        simulate_jump(timed, [1.0], seed=0)
    with pytest.raises(ValueError):
        simulate_jump(small_sir(), [1.0], method="midpoint", seed=0)
    with pytest.raises(ValueError):
        simulate_jump(small_sir(), [2.0, 1.0], seed=0)
