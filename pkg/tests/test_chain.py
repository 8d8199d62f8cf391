import math

import numpy as np
import pytest

from gibbspower import chain, channel
from gibbspower.chain import (
    STATE_CAP_MATRIX,
    ChainModel,
    StateSpace,
    StateSpaceCapError,
    analysis_table,
    beta_for_mean,
    beta_for_variance,
    brute_force_optimum,
    build_chain,
    build_transition_matrix,
    empirical_occupancy,
    fit_decay_rate,
    mean_utility,
    mixing_analysis,
    optimal_mass,
    optimal_mass_for_variance,
    published_zero_beta_threshold,
    second_eigenvalue_magnitude,
    state_sinrs,
    state_utilities,
    stationary_distribution,
    tv_distance,
    variance_bound,
    variance_utility,
)
from gibbspower.channel import GainMatrix
from gibbspower.sampler import PowerGrid
from gibbspower.utility import ProportionalFairness, TotalThroughput


def two_link(noise=1e-7):
    return GainMatrix(gains=np.array([[0.5, 0.01], [0.02, 0.4]]),
                      noise=np.full(2, noise), max_power=np.full(2, 1e-3))


def grid_for(gm, counts):
    return PowerGrid.from_counts(gm.max_power, counts)


def transition_oracle(gm, grid, u, beta):
    """Plain enumeration of the update kernel, one state at a time: no
    fiber grouping, no shared code with the production builder."""
    space = StateSpace(grid)
    m = gm.n_links
    s = space.size
    pi = np.zeros((s, s))
    for a in range(s):
        pa = space.powers[a]
        for i in range(m):
            cand_states = []
            weights = []
            for level in grid.levels[i]:
                q = pa.copy()
                q[i] = level
                cand_states.append(space.index_of(q))
                uval = u.value(channel.sinr(gm, q))
                # beta 0 means uniform regardless of the utility; at positive
                # beta a zero-utility candidate gets zero weight
                if beta == 0.0:
                    weights.append(1.0)
                else:
                    weights.append(math.exp(-beta / uval) if uval > 0 else 0.0)
            w = np.array(weights)
            probs = w / w.sum() if w.sum() > 0 else np.full(len(w), 1 / len(w))
            for b, pr in zip(cand_states, probs):
                pi[a, b] += pr / m
    return pi


# --- the lattice -------------------------------------------------------------

def test_state_space_enumeration_order():
    gm = two_link()
    space = StateSpace(grid_for(gm, [2, 3]))
    assert space.size == 6
    assert space.n_links == 2
    lv0, lv1 = space.grid.levels
    expect = [(a, b) for a in lv0 for b in lv1]
    np.testing.assert_allclose(space.powers, expect)


def test_state_space_index_round_trip():
    gm = two_link()
    space = StateSpace(grid_for(gm, [3, 3]))
    for k in range(space.size):
        assert space.index_of(space.powers[k]) == k
    np.testing.assert_array_equal(space.indices_of(space.powers),
                                  np.arange(space.size))


def test_state_space_rejects_off_grid():
    gm = two_link()
    space = StateSpace(grid_for(gm, [3, 3]))
    with pytest.raises(ValueError):
        space.index_of(np.array([1e-4, 0.0]))


def test_state_sinrs_match_channel():
    gm = two_link()
    space = StateSpace(grid_for(gm, [3, 4]))
    got = state_sinrs(gm, space)
    for k in range(space.size):
        np.testing.assert_allclose(got[k], channel.sinr(gm, space.powers[k]),
                                   rtol=1e-12)


def test_state_utilities():
    gm = two_link()
    space = StateSpace(grid_for(gm, [3, 3]))
    u = TotalThroughput()
    got = state_utilities(gm, space, u)
    expect = [u.value(channel.sinr(gm, p)) for p in space.powers]
    np.testing.assert_allclose(got, expect, rtol=1e-12)


# --- transition matrix and stationarity ---------------------------------------

def test_transition_matrix_against_oracle():
    gm = two_link()
    grid = grid_for(gm, [2, 2])
    for u in (TotalThroughput(), ProportionalFairness()):
        for beta in (0.0, 1.0, 5.0):
            pi = build_transition_matrix(gm, grid, u, beta)
            np.testing.assert_allclose(pi, transition_oracle(gm, grid, u, beta),
                                       atol=1e-14)


def test_transition_matrix_is_stochastic():
    gm = two_link()
    grid = grid_for(gm, [3, 4])
    pi = build_transition_matrix(gm, grid, TotalThroughput(), 2.0)
    assert np.all(pi >= 0)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)


def test_stationary_fixed_point_and_detailed_balance():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    beta = 2.0
    omega = stationary_distribution(gm, grid, u, beta)
    pi = build_transition_matrix(gm, grid, u, beta)
    assert np.max(np.abs(omega @ pi - omega)) < 1e-12
    # single-site resampling is reversible for its stationary law
    flux = omega[:, None] * pi
    np.testing.assert_allclose(flux, flux.T, atol=1e-15)


def test_stationary_distribution_closed_form():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    utilities = state_utilities(gm, StateSpace(grid), u)
    with np.errstate(divide="ignore"):
        w = np.exp(-1.5 / utilities)   # zero utility gets zero weight
    np.testing.assert_allclose(stationary_distribution(gm, grid, u, 1.5),
                               w / w.sum(), rtol=1e-12)


def test_build_chain_model():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    model = build_chain(gm, grid, TotalThroughput(), 1.0)
    assert isinstance(model, ChainModel)
    assert model.size == 9
    assert 0.0 < model.lambda2 < 1.0
    ustar, opt = brute_force_optimum(gm, grid, TotalThroughput())
    assert model.optimal_value == ustar
    np.testing.assert_array_equal(model.optimal_set, opt)
    np.testing.assert_allclose(model.omega.sum(), 1.0, atol=1e-12)


def test_second_eigenvalue_two_state_chain():
    pi = np.array([[0.9, 0.1], [0.3, 0.7]])
    assert second_eigenvalue_magnitude(pi) == pytest.approx(0.6, abs=1e-12)


def test_second_eigenvalue_rejects_non_stochastic():
    with pytest.raises(ArithmeticError):
        second_eigenvalue_magnitude(np.array([[0.5, 0.1], [0.2, 0.3]]))


# --- moments and bounds --------------------------------------------------------

def test_mean_and_variance_against_manual():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    utilities = state_utilities(gm, StateSpace(grid), u)
    for beta in (0.0, 0.7, 4.0):
        with np.errstate(divide="ignore"):
            w = np.ones_like(utilities) if beta == 0 else np.exp(-beta / utilities)
        probs = w / w.sum()
        mean = float(probs @ utilities)
        var = float(probs @ (utilities - mean) ** 2)
        assert mean_utility(gm, grid, u, beta) == pytest.approx(mean, rel=1e-12)
        assert variance_utility(gm, grid, u, beta) == pytest.approx(var, rel=1e-12)


def test_optimal_mass_limits():
    utilities = np.array([1.0, 2.0, 5.0, 5.0])
    assert optimal_mass(utilities, 0.0) == pytest.approx(0.5)
    assert optimal_mass(utilities, math.inf) == pytest.approx(1.0)


def test_variance_bound_formula_and_monotonicity():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    utilities = state_utilities(gm, StateSpace(grid), u)
    ustar, umin = utilities.max(), utilities.min()
    betas = [0.0, 0.5, 1.0, 3.0, 10.0, 50.0, 300.0]
    bounds = [variance_bound(gm, grid, u, b) for b in betas]
    for b, got in zip(betas, bounds):
        x = 1.0 - optimal_mass(utilities, b)
        assert got == pytest.approx(ustar ** 2 * x ** 2 + (ustar - umin) ** 2 * x,
                                    rel=1e-12)
    assert all(b1 >= b2 - 1e-12 for b1, b2 in zip(bounds, bounds[1:]))
    for b, got in zip(betas, bounds):
        assert variance_utility(gm, grid, u, b) <= got + 1e-12


def test_variance_bound_vanishes_at_zero_temperature_limit():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    assert variance_bound(gm, grid, TotalThroughput(), math.inf) == \
        pytest.approx(0.0, abs=1e-15)


# --- threshold solvers ----------------------------------------------------------

def test_beta_for_mean_round_trip():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    for beta0 in (0.5, 2.0, 20.0):
        target = mean_utility(gm, grid, u, beta0)
        back = beta_for_mean(target, gm, grid, u)
        assert back == pytest.approx(beta0, rel=1e-6)


def test_beta_for_mean_domain():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    utilities = state_utilities(gm, StateSpace(grid), u)
    with pytest.raises(ValueError):
        beta_for_mean(float(utilities.mean()) * 0.5, gm, grid, u)
    with pytest.raises(ValueError):
        beta_for_mean(float(utilities.max()) * 1.01, gm, grid, u)


def test_beta_for_variance_edges_and_bracketing():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    bound0 = variance_bound(gm, grid, u, 0.0)
    assert beta_for_variance(bound0, gm, grid, u) == 0.0
    assert beta_for_variance(bound0 * 2.0, gm, grid, u) == 0.0
    assert beta_for_variance(0.0, gm, grid, u) == math.inf
    delta = bound0 / 7.0
    beta = beta_for_variance(delta, gm, grid, u)
    assert 0.0 < beta < math.inf
    assert variance_bound(gm, grid, u, beta) <= delta + 1e-12
    # anything noticeably cooler than the solution misses the target
    assert variance_bound(gm, grid, u, 0.9 * beta) > delta
    with pytest.raises(ValueError):
        beta_for_variance(-1.0, gm, grid, u)


def test_optimal_mass_inversion_consistent():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    utilities = state_utilities(gm, StateSpace(grid), u)
    ustar, umin = utilities.max(), utilities.min()
    delta = variance_bound(gm, grid, u, 0.0) / 5.0
    mass = optimal_mass_for_variance(delta, gm, grid, u)
    x = 1.0 - mass
    assert ustar ** 2 * x ** 2 + (ustar - umin) ** 2 * x == \
        pytest.approx(delta, rel=1e-10)


def test_published_zero_beta_threshold_reports_both():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = TotalThroughput()
    out = published_zero_beta_threshold(gm, grid, u)
    assert set(out) == {"as_published", "attainable"}
    assert out["attainable"] == pytest.approx(variance_bound(gm, grid, u, 0.0))
    # the published closed form sits strictly above every attainable bound
    assert out["as_published"] > out["attainable"]


# --- mixing ---------------------------------------------------------------------

def test_tv_distance():
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.5], [1.0])


def test_mixing_analysis_is_nonincreasing():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    model = build_chain(gm, grid, TotalThroughput(), 1.0)
    initial = np.zeros(model.size)
    initial[0] = 1.0
    tvs = mixing_analysis(model, initial, 80)
    assert tvs[0] == pytest.approx(tv_distance(initial, model.omega))
    assert np.all(np.diff(tvs) <= 1e-12)
    assert tvs[-1] < 1e-3


def test_mixing_analysis_validates_initial():
    gm = two_link()
    model = build_chain(gm, grid_for(gm, [2, 2]), TotalThroughput(), 1.0)
    with pytest.raises(ValueError):
        mixing_analysis(model, np.full(model.size, 0.3), 10)


def test_fit_decay_rate_exact_geometric():
    r = 0.75
    tvs = 0.4 * r ** np.arange(80)
    assert fit_decay_rate(tvs) == pytest.approx(math.log(r), rel=1e-10)


def test_fit_decay_rate_ignores_floored_tail():
    r = 0.5
    tvs = np.concatenate([0.4 * r ** np.arange(60), np.full(20, 1e-16)])
    assert fit_decay_rate(tvs, floor=1e-12) == pytest.approx(math.log(r),
                                                             rel=1e-9)
    with pytest.raises(ValueError):
        fit_decay_rate(np.full(10, 1e-16), floor=1e-12)


# --- occupancy and caps ----------------------------------------------------------

def test_empirical_occupancy():
    gm = two_link()
    space = StateSpace(grid_for(gm, [2, 2]))
    lv0, lv1 = space.grid.levels
    rows = np.array([[lv0[0], lv1[0]],
                     [lv0[1], lv1[1]],
                     [lv0[1], lv1[1]],
                     [lv0[0], lv1[1]]])
    occ = empirical_occupancy(rows, space)
    np.testing.assert_allclose(occ, [0.25, 0.25, 0.0, 0.5])


def test_state_space_caps():
    m = 7
    rng = np.random.default_rng(2)
    gains = rng.uniform(0.001, 0.01, size=(m, m))
    gains[np.diag_indices(m)] = 0.5
    gm = GainMatrix(gains=gains, noise=np.full(m, 1e-7),
                    max_power=np.full(m, 1e-3))
    grid = grid_for(gm, 4)         # 4^7 = 16384 states
    with pytest.raises(StateSpaceCapError) as err:
        build_transition_matrix(gm, grid, TotalThroughput(), 1.0)
    assert str(STATE_CAP_MATRIX) in str(err.value)
    # distribution-only analytics still fit under the larger cap
    omega = stationary_distribution(gm, grid, TotalThroughput(), 1.0)
    assert omega.size == 4 ** 7
    assert omega.sum() == pytest.approx(1.0)


def test_brute_force_optimum():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    u = ProportionalFairness()
    utilities = state_utilities(gm, StateSpace(grid), u)
    ustar, opt = brute_force_optimum(gm, grid, u)
    assert ustar == utilities.max()
    np.testing.assert_array_equal(opt, np.nonzero(utilities == ustar)[0])


def test_analysis_table():
    gm = two_link()
    grid = grid_for(gm, [3, 3])
    rows = analysis_table(gm, grid, TotalThroughput(), [0.0, 1.0, math.inf])
    assert [r["beta"] for r in rows] == [0.0, 1.0, math.inf]
    for r in rows:
        assert set(r) == {"beta", "mean_utility", "variance", "variance_bound",
                          "prob_optimal", "lambda2"}
        assert r["lambda2"] <= 1.0 + 1e-12 or math.isnan(r["lambda2"])
    assert rows[-1]["prob_optimal"] == pytest.approx(1.0)


def test_analysis_table_skips_spectrum_beyond_cap():
    m = 7
    rng = np.random.default_rng(3)
    gains = rng.uniform(0.001, 0.01, size=(m, m))
    gains[np.diag_indices(m)] = 0.5
    gm = GainMatrix(gains=gains, noise=np.full(m, 1e-7),
                    max_power=np.full(m, 1e-3))
    rows = analysis_table(gm, grid_for(gm, 4), TotalThroughput(), [1.0])
    assert math.isnan(rows[0]["lambda2"])
    assert math.isfinite(rows[0]["mean_utility"])
