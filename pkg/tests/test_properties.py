"""Randomised property checks."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hdp_mean import bounds
from hdp_mean.privacy import dp_certificate
from hdp_mean.weights import TwoGroupProfile, project_capped_simplex, solve_general, solve_two_group

levels = st.floats(min_value=1e-3, max_value=50.0, allow_nan=False)
profiles = st.builds(
    TwoGroupProfile,
    eps1=levels,
    eps2=st.one_of(levels, st.just(math.inf)),
    n=st.integers(min_value=1, max_value=100_000),
    f=st.floats(min_value=0.0, max_value=1.0),
)


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_two_group_solution_valid(p):
    sol = solve_two_group(p)
    if sol.degenerate:
        return
    assert abs(sol.weight_sum - 1) < 1e-9
    assert dp_certificate(sol.weights, sol.eta, [p.eps1, p.eps2]).ok
    if sol.weights[0] > 0:
        assert sol.weights[1] / sol.weights[0] <= min(p.r, p.R) * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_bounds_ordered(p):
    lo, up = bounds.lower_bound(p), bounds.upper_bound(p)
    assert 0 <= lo <= up <= 0.25


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=40))
def test_general_solution_valid(eps):
    eps = np.array(eps)
    sol = solve_general(eps)
    assert abs(sol.weight_sum - 1) < 1e-9
    assert dp_certificate(sol.weights, sol.eta, eps).ok
    # never worse than proportional weights
    prop = float(np.sum(eps ** 2)) / (4 * eps.sum() ** 2) + 2 / eps.sum() ** 2
    assert sol.objective <= prop * (1 + 1e-9)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(min_value=1e-2, max_value=1e2), min_size=2, max_size=30), st.floats(1.0, 5.0))
def test_projection_kkt(eps, stretch):
    eps = np.array(eps)
    eta = stretch / eps.sum()
    w = project_capped_simplex(eps, eta)
    caps = eps * eta
    assert abs(w.sum() - 1) < 1e-9
    assert (w <= caps * (1 + 1e-12)).all()
    # uncapped entries share one common level, capped ones sit at their cap below it
    free = w < caps * (1 - 1e-9)
    if free.any():
        lam = w[free].max()
        np.testing.assert_allclose(w[free], lam, rtol=1e-9)
        assert (caps[~free] <= lam * (1 + 1e-9)).all()
