import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from coordkit import (GameParams, StrictInstance, analytic_bounds, coordination_bounds,
                      dc_constraint, gamma_star, game_target, hb)
from coordkit.binary import bernoulli_source, bsc, dc_target, game_family, game_utility
from coordkit.errors import DomainError
from coordkit.region import expected_utility

LOG3 = math.log2(3)


def game_instance(gamma, eps):
    return StrictInstance(bernoulli_source(0.5), bsc(eps), game_target(gamma))


def test_hb_values():
    assert hb(0.5) == 1.0
    assert hb(0.0) == hb(1.0) == 0.0
    assert hb(0.11) == pytest.approx(oracles.hb(0.11), abs=1e-15)
    with pytest.raises(DomainError):
        hb(1.5)


@pytest.mark.parametrize("gamma", np.round(np.arange(0, 1.0001, 0.05), 10))
def test_perfect_channel_bounds_pinch(gamma):
    b = coordination_bounds(GameParams(0.5, 0.0, gamma))
    expect = oracles.hb(gamma) + (1 - gamma) * LOG3 - 1
    assert b["lower"] == pytest.approx(expect, abs=1e-9)
    assert b["upper"] == pytest.approx(expect, abs=1e-9)
    assert b["perfect"] == pytest.approx(expect, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 0.5))
def test_closed_forms_match_numeric_bounds(gamma, eps):
    # the closed forms are the numeric sandwich bounds of the game instance
    b = coordination_bounds(GameParams(0.5, eps, gamma))
    num = analytic_bounds(game_instance(gamma, eps))
    assert b["lower"] == pytest.approx(num["lower"], abs=1e-9)
    assert b["upper"] == pytest.approx(num["upper"], abs=1e-9)


def test_bounds_need_uniform_source():
    with pytest.raises(DomainError):
        coordination_bounds(GameParams(0.3, 0.1, 0.5))
    with pytest.raises(DomainError):
        GameParams(0.5, 1.2, 0.5)


def test_gamma_star_values():
    assert gamma_star(0.0) == pytest.approx(0.81, abs=0.005)
    assert gamma_star(0.5) == pytest.approx(0.25, abs=1e-3)
    lo, hi = gamma_star(0.25, "lower"), gamma_star(0.25, "upper")
    assert 0.535 <= lo <= hi <= 0.58
    assert lo <= 0.54 + 0.005 and hi >= 0.575 - 0.005


def test_gamma_star_root():
    g = gamma_star(0.1, "lower", tol=1e-9)
    assert abs(coordination_bounds(GameParams(0.5, 0.1, g))["lower"]) < 1e-6
    with pytest.raises(DomainError):
        gamma_star(0.6)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.25, 0.4, 0.5])
def test_midpoint_concavity_on_grid(eps):
    grid = np.round(np.arange(0, 1.0001, 0.01), 10)
    for key in ("lower", "upper"):
        vals = [coordination_bounds(GameParams(0.5, eps, g))[key] for g in grid]
        for i in range(1, len(grid) - 1):
            assert vals[i] >= 0.5 * (vals[i - 1] + vals[i + 1]) - 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.5))
def test_dc_constraint_numeric(alpha, beta, p, eps):
    inst = StrictInstance(bernoulli_source(p), bsc(eps), dc_target(alpha, beta))
    J = inst.joint().table
    expect = oracles.cmi(J, (1,), (2,)) - oracles.cmi(J, (0,), (3,))
    assert dc_constraint(alpha, beta, p, eps) == pytest.approx(expect, abs=1e-9)


@pytest.mark.parametrize("eps", [0.05, 0.25])
def test_dc_symmetric_point_uniform_source(eps):
    assert abs(dc_constraint(0.5, eps, 0.5, eps)) <= 1e-12


def test_dc_symmetric_point_skewed_source():
    # with p != 1/2 the point beta = eps, alpha = 1/2 is strictly inside the region
    val = dc_constraint(0.5, 0.25, 0.25, 0.25)
    assert val == pytest.approx(1 - oracles.hb(0.25 * 0.25 + 0.75 * 0.75), abs=1e-12)
    assert val > 0.04


def test_game_target_and_utility():
    t = game_target(0.7).table
    assert np.allclose(t.sum(axis=(1, 2)), 1.0)
    assert t[0, 0, 0] == pytest.approx(0.7)
    fam = game_family(0.7)
    u = expected_utility(fam["target"], bernoulli_source(0.5), bsc(0.1), fam["utility"])
    assert u == pytest.approx(0.7, abs=1e-12)
    assert game_utility().sum() == 4
