import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from coordkit import (FamilySpec, StrictInstance, StrictOptions, UtilityOptions, UtilitySpec,
                      Verdict, boundary_bisection_family, certified_mixture, channel_capacity,
                      distortion_cost_region, gamma_star, max_utility_generic, maximize_strict,
                      membership)
from coordkit.binary import bernoulli_source, bsc, game_utility
from coordkit.errors import ConfigurationError, InstanceFormatError
from coordkit.prob import Kernel

FAST = StrictOptions(restarts=4)


def test_capacity_bsc():
    cap = channel_capacity(bsc(0.25))
    assert cap["capacity"] == pytest.approx(1 - oracles.hb(0.25), abs=1e-10)
    assert np.allclose(cap["argmax_input"].table, [0.5, 0.5], atol=1e-6)
    assert channel_capacity(bsc(0.5))["capacity"] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 3))
def test_capacity_matches_grid_oracle(seed, ny):
    T = np.random.default_rng(seed).dirichlet(np.ones(ny), size=2)
    cap = channel_capacity(Kernel(("X",), ("Y",), T))["capacity"]
    ref = oracles.capacity_grid(T, 4001)
    assert ref - 1e-9 <= cap <= ref + 1e-5


def test_membership_zero_capacity():
    t_ind = np.full((2, 2, 2), 0.25)
    inst = StrictInstance.from_arrays([0.3, 0.7], np.full((2, 2), 0.5), t_ind)
    assert membership(inst, FAST)["verdict"] is Verdict.ACHIEVABLE
    t_dep = np.zeros((2, 2, 2))
    t_dep[0, :, 0] = t_dep[1, :, 1] = 0.5
    inst = StrictInstance.from_arrays([0.3, 0.7], np.full((2, 2), 0.5), t_dep)
    res = membership(inst, FAST)
    assert res["verdict"] is Verdict.NOT_ACHIEVABLE
    assert res["upper_bound"] < 0


def test_membership_positive_capacity(example_instance):
    res = membership(example_instance, FAST)
    assert res["verdict"] is Verdict.ACHIEVABLE and res["capacity"] == pytest.approx(1.0)


def test_utility_perfect_channel():
    res = max_utility_generic(bernoulli_source(0.5), bsc(0.0), UtilitySpec(game_utility()))
    assert res["report"].value >= 0
    assert res["utility"] >= gamma_star(0.0) - 1e-3
    t = res["target_star"].table
    # the reported utility is P(x = v = u) of the returned target
    assert res["utility"] == pytest.approx(0.5 * (t[0, 0, 0] + t[1, 1, 1]), abs=1e-9)


def test_utility_useless_channel():
    # zero capacity forces V independent of U, so P(x = v = u) is at most 1/2
    res = max_utility_generic(bernoulli_source(0.5), bsc(0.5), UtilitySpec(game_utility()))
    assert res["utility"] == pytest.approx(0.5, abs=1e-6)
    assert res["report"].value >= 0


def test_utility_shape_mismatch():
    with pytest.raises(InstanceFormatError):
        max_utility_generic(bernoulli_source(0.5), bsc(0.1), UtilitySpec(np.zeros((3, 2, 2, 2))))


def test_distortion_cost_utility():
    d = 1.0 - np.eye(2)
    c = np.array([0.0, 1.0])
    util = UtilitySpec.from_distortion_cost(d, c, ny=2)
    assert util.phi.shape == (2, 2, 2, 2)
    assert util.phi[0, 1, 0, 1] == -2.0


@pytest.mark.parametrize("eps", [0.0, 0.25, 0.5])
def test_family_bisection_matches_closed_form(eps):
    fam = FamilySpec.coordination()
    for sel in ("lower", "upper"):
        res = boundary_bisection_family(fam, bernoulli_source(0.5), bsc(eps), sel, tol=1e-7)
        assert res["param_star"] == pytest.approx(gamma_star(eps, sel, tol=1e-9), abs=1e-5)


def test_family_certified_between_bounds():
    fam = FamilySpec.coordination()
    res = boundary_bisection_family(fam, bernoulli_source(0.5), bsc(0.25), "certified", FAST,
                                    tol=1e-3)
    assert gamma_star(0.25, "lower") - 2e-3 <= res["param_star"] <= gamma_star(0.25, "upper") + 2e-3


def test_family_validation():
    with pytest.raises(ConfigurationError):
        FamilySpec("nope")
    with pytest.raises(ConfigurationError):
        FamilySpec("distortion_cost_alpha_beta")


def test_certified_mixture_lower_bound():
    rng = np.random.default_rng(4)
    src, ch = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2), size=2)
    a = StrictInstance.from_arrays(src, ch, rng.dirichlet(np.ones(4), size=2).reshape(2, 2, 2))
    b = StrictInstance.from_arrays(src, ch, rng.dirichlet(np.ones(4), size=2).reshape(2, 2, 2))
    ra, rb = maximize_strict(a, FAST), maximize_strict(b, FAST)
    rep = certified_mixture(a, ra, b, rb, 0.4, FAST)
    assert rep.value >= 0.4 * ra.value + 0.6 * rb.value - 1e-9


def test_region_grid_structure():
    grid = distortion_cost_region(0.5, 0.25, 0.01)
    assert grid.constraint.shape == (101, 101)
    j = int(np.argmin(np.abs(grid.betas - 0.5)))
    assert grid.achievable[:, j].all()
    assert grid.interval_rows()
    rows = list(grid.rows())
    assert len(rows) == 101 * 101 and set(rows[0]) == {"D", "C", "constraint", "achievable"}


def test_region_zero_capacity_column():
    grid = distortion_cost_region(0.5, 0.5, 0.05)
    for j, b in enumerate(grid.betas):
        assert grid.achievable[:, j].all() == (abs(b - 0.5) < 1e-9)


def test_region_validation():
    with pytest.raises(ConfigurationError):
        distortion_cost_region(0.5, 0.25, 0.3)
    with pytest.raises(ConfigurationError):
        distortion_cost_region(1.5, 0.25)
