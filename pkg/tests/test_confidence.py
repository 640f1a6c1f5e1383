import math

import numpy as np
import pytest

from odekit.confidence import (IntervalResult, chi2_1_quantile, ci_asymptotic, ci_bootstrap,
                               ci_profile, z_quantile)
from odekit.errors import SingularMatrixError
from odekit.loss import NormalLoss, SquareLoss, fit
from odekit.model import OdeModel, Transition

from conftest import BOUNDS, fitting_problem

SIGMA = 0.3
T = np.linspace(0.5, 5.0, 10)


def linear_problem(seed=0, noise=True, loss_cls=NormalLoss, extra_param=False):
    """x' = k, x(0) = 0, so x(t) = k t: every interval has a closed form."""
    params = ["k", "b"] if extra_param else ["k"]
    m = OdeModel(["x"], params, ode=[Transition("x", "k")])
    y = 1.5 * T
    if noise:
        y = y + SIGMA * np.random.default_rng(seed).standard_normal(T.size)
    theta = [1.0, 1.0] if extra_param else [1.0]
    weight = [1 / SIGMA] if loss_cls is NormalLoss else None
    return loss_cls(theta, m, [0.0], 0.0, T, y, "x", state_weight=weight)


def closed_form(loss):
    y = loss.y[:, 0]
    k_hat = float(T @ y / (T @ T))
    return k_hat, SIGMA / math.sqrt(T @ T)


def test_quantiles():
    assert abs(z_quantile(0.05) - 1.959963984540054) < 1e-12
    assert abs(chi2_1_quantile(0.05) - 3.841458820694124) < 1e-9
    with pytest.raises(ValueError):
        z_quantile(1.5)


def test_asymptotic_matches_closed_form():
    loss = linear_problem(1)
    k_hat, se = closed_form(loss)
    res = fit(loss)
    assert abs(res.theta[0] - k_hat) < 1e-6
    ci = ci_asymptotic(loss, res.theta, 0.05)
    z = z_quantile(0.05)
    assert abs(ci.lower[0] - (res.theta[0] - z * se)) < 1e-6
    assert abs(ci.upper[0] - (res.theta[0] + z * se)) < 1e-6
    assert not ci.flags["gauss_newton"]


def test_profile_equals_asymptotic_for_linear_gaussian():
    loss = linear_problem(2)
    theta = fit(loss).theta
    a = ci_asymptotic(loss, theta)
    p = ci_profile(loss, theta)
    assert np.allclose(p.lower, a.lower, atol=1e-4)
    assert np.allclose(p.upper, a.upper, atol=1e-4)
    assert not p.flags["no_crossing_lower"].any() and not p.flags["no_crossing_upper"].any()


def test_flat_direction():
    loss = linear_problem(3, extra_param=True)
    theta = fit(loss, [(0.0, 5.0), (0.0, 2.0)]).theta
    with pytest.raises(SingularMatrixError):
        ci_asymptotic(loss, theta)
    p = ci_profile(loss, theta, bounds=[(0.0, 5.0), (0.0, 2.0)])
    assert p.flags["no_crossing_lower"].tolist() == [False, True]
    assert p.flags["no_crossing_upper"].tolist() == [False, True]
    assert p.lower[1] == 0.0 and p.upper[1] == 2.0


def test_unbounded_flat_direction_reports_infinity():
    loss = linear_problem(3, extra_param=True)
    theta = fit(loss).theta
    p = ci_profile(loss, theta)
    assert p.lower[1] == -math.inf and p.upper[1] == math.inf


def test_bootstrap_degenerates_without_noise():
    loss = linear_problem(noise=False)
    theta = fit(loss).theta
    b = ci_bootstrap(loss, theta, iterations=20, seed=0)
    assert b.width[0] < 1e-6


def test_bootstrap_matches_brute_force_resampling():
    # refitting x = k t to yhat + e* gives k* = k_hat + t.e*/t.t exactly
    loss = linear_problem(4, loss_cls=SquareLoss)
    theta = fit(loss, gtol=1e-10).theta
    resid = (loss.y - loss.fitted(theta))[:, 0]
    rng = np.random.default_rng(123)
    draws = rng.choice(resid, size=(100_000, resid.size), replace=True)
    brute = theta[0] + draws @ T / (T @ T)
    want = np.quantile(brute, [0.025, 0.975])
    b = ci_bootstrap(loss, theta, iterations=400, seed=9, full_output=True)
    sd = brute.std()
    assert abs(b.lower[0] - want[0]) < 0.5 * sd
    assert abs(b.upper[0] - want[1]) < 0.5 * sd
    assert b.replicates.shape == (400, 1)


def test_alpha_nesting_for_every_method():
    loss = linear_problem(5)
    theta = fit(loss).theta
    for method in (ci_asymptotic, ci_profile):
        wide, narrow = method(loss, theta, 0.05), method(loss, theta, 0.2)
        assert wide.lower[0] <= narrow.lower[0] <= theta[0] <= narrow.upper[0] <= wide.upper[0]
    wide = ci_bootstrap(loss, theta, 0.05, iterations=60, seed=3)
    narrow = ci_bootstrap(loss, theta, 0.2, iterations=60, seed=3)
    assert wide.lower[0] <= narrow.lower[0] and narrow.upper[0] <= wide.upper[0]


def test_bootstrap_is_reproducible_and_worker_independent():
    loss = linear_problem(6)
    theta = fit(loss).theta
    a = ci_bootstrap(loss, theta, iterations=30, seed=77, full_output=True, workers=1)
    b = ci_bootstrap(loss, theta, iterations=30, seed=77, full_output=True, workers=3)
    assert a.replicates.tobytes() == b.replicates.tobytes()
    assert a.seed == 77
    c = ci_bootstrap(loss, theta, iterations=30, seed=78, full_output=True)
    assert c.replicates.tobytes() != a.replicates.tobytes()


def test_interval_result_helpers():
    loss = linear_problem(7)
    theta = fit(loss).theta
    ci = ci_asymptotic(loss, theta)
    lo, hi = ci
    assert np.array_equal(lo, ci.lower) and np.array_equal(hi, ci.upper)
    d = ci.as_dict()
    assert d["method"] == "asymptotic" and set(d["parameters"]) == {"k"}
    assert isinstance(ci, IntervalResult)


def test_paper_scenario_brackets_estimate_and_bootstrap_is_narrower():
    loss = fitting_problem(1)
    res = fit(loss, BOUNDS)
    a = ci_asymptotic(loss, res.theta)
    assert np.all(a.lower < res.theta) and np.all(res.theta < a.upper)
    b = ci_bootstrap(loss, res.theta, iterations=30, bounds=BOUNDS, seed=1)
    assert np.all(b.width < a.width)
    assert np.all(b.lower <= res.theta) and np.all(res.theta <= b.upper)


def test_paper_scenario_asymptotic_widths_match_published_run():
    # published run: lower ~ [0.219, 0.071], upper ~ [0.749, 0.565]
    loss = fitting_problem(1)
    res = fit(loss, BOUNDS)
    a = ci_asymptotic(loss, res.theta)
    target = np.array([0.749 - 0.219, 0.565 - 0.071])
    assert np.all(np.abs(a.width - target) <= 0.5 * target)


@pytest.mark.slow
def test_paper_scenario_profile_width_comparable_to_asymptotic():
    loss = fitting_problem(1)
    res = fit(loss, BOUNDS)
    a = ci_asymptotic(loss, res.theta)
    p = ci_profile(loss, res.theta, bounds=BOUNDS)
    ratio = p.width / a.width
    assert np.all((0.5 <= ratio) & (ratio <= 2.0))
    assert np.all(p.lower < res.theta) and np.all(res.theta < p.upper)
