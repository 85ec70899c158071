"""Relative-chain Markov model: kernels, truncation, steady state, capacity.

The heavyweight oracle is `slot_distribution`: an exact one-slot
distribution over relative states computed by enumerating every link
success pattern and every mining pattern. It shares no code with the
chain builder.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import chaincap.relchain as rc
from chaincap.netmodel import NetworkScenario, complete_graph, ideal_capacity
from chaincap.simulator import SimConfig, run
from chaincap.twominer import TwoMinerParams, solve


def scenario(c, a, zeta=1):
    return NetworkScenario(np.asarray(c, dtype=float), np.asarray(a, dtype=float), zeta)


def slot_distribution(b, scen):
    """Exact one-slot relative-state distribution by pattern enumeration."""
    n = scen.n
    a = scen.a
    c = scen.c
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    dist = {}
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        p_link = math.prod(a[i, j] if s else 1.0 - a[i, j]
                           for (i, j), s in zip(pairs, bits))
        if p_link == 0.0:
            continue
        post = []
        for recv in range(n):
            best = b[recv]
            for (snd, r), s in zip(pairs, bits):
                if r == recv and s and b[snd] > best:
                    best = b[snd]
            post.append(best)
        for mask in itertools.product((0, 1), repeat=n):
            p_mine = math.prod(c[i] if m else 1.0 - c[i] for i, m in enumerate(mask))
            if p_mine == 0.0:
                continue
            nb = [x + m for x, m in zip(post, mask)]
            low = min(nb)
            rel = tuple(x - low for x in nb)
            dist[rel] = dist.get(rel, 0.0) + p_link * p_mine
    return dist


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def test_sync_kernel_no_longer_chain_is_a_point_mass():
    scen = scenario([0.1, 0.1], [[0, 0.7], [0.3, 0]])
    assert rc.sync_kernel((2, 2), scen) == {(2, 2): 1.0}


def test_sync_kernel_single_lagging_miner():
    alpha = 0.6
    scen = scenario([0.1, 0.1], [[0, alpha], [0.9, 0]])
    dist = rc.sync_kernel((1, 0), scen)
    assert dist[(1, 1)] == pytest.approx(alpha)
    assert dist[(1, 0)] == pytest.approx(1 - alpha)


def test_sync_kernel_three_miner_marginal():
    # oracle: enumerate the 2x2 success patterns of senders 1, 2 -> 3
    alpha = 0.5
    expected = {2: 0.0, 1: 0.0, 0: 0.0}
    for s13, s23 in itertools.product((0, 1), repeat=2):
        p = (alpha if s13 else 1 - alpha) * (alpha if s23 else 1 - alpha)
        level = 2 if s13 else (1 if s23 else 0)
        expected[level] += p
    assert expected == {2: 0.5, 1: 0.25, 0: 0.25}

    scen = scenario([0.1] * 3, complete_graph(3, alpha))
    dist = rc.sync_kernel((2, 1, 0), scen)
    marginal = {}
    for state, p in dist.items():
        marginal[state[2]] = marginal.get(state[2], 0.0) + p
    for level, p in expected.items():
        assert marginal[level] == pytest.approx(p)


@settings(max_examples=40)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=4),
       st.data())
def test_sync_kernel_rows_are_distributions(b, data):
    n = len(b)
    a = np.array(data.draw(st.lists(
        st.lists(st.floats(0, 1), min_size=n, max_size=n),
        min_size=n, max_size=n)))
    np.fill_diagonal(a, 0.0)
    scen = scenario([0.2] * n, a)
    dist = rc.sync_kernel(tuple(b), scen)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(p >= 0 for p in dist.values())
    # sync never shrinks a chain and never overshoots the current maximum
    for state in dist:
        assert all(x >= y for x, y in zip(state, b))
        assert max(state) == max(b)


def test_mine_kernel_degenerate_rates():
    scen0 = scenario([0.0, 0.0], complete_graph(2, 0.5))
    assert rc.mine_kernel((3, 1), scen0) == {(3, 1): 1.0}
    scen1 = scenario([1.0, 1.0], complete_graph(2, 0.5))
    assert rc.mine_kernel((3, 1), scen1) == {(4, 2): 1.0}


def test_mine_kernel_fair_coins():
    scen = scenario([0.5, 0.5], complete_graph(2, 0.5))
    dist = rc.mine_kernel((0, 0), scen)
    assert dist == {(0, 0): pytest.approx(0.25), (1, 0): pytest.approx(0.25),
                    (0, 1): pytest.approx(0.25), (1, 1): pytest.approx(0.25)}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=3),
       st.integers(1, 5), st.data())
def test_translation_invariance_of_one_slot_dynamics(b, shift, data):
    n = len(b)
    c = data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    a = np.full((n, n), 0.4)
    np.fill_diagonal(a, 0.0)
    scen = scenario(c, a)
    base = slot_distribution(tuple(b), scen)
    moved = slot_distribution(tuple(x + shift for x in b), scen)
    assert set(base) == set(moved)
    for state, p in base.items():
        assert moved[state] == pytest.approx(p, abs=1e-12)


def test_relative_state():
    assert rc.relative_state([2, 3, 1]) == (1, 2, 0)
    assert rc.relative_state([5, 5]) == (0, 0)


def test_enumerate_states_lexicographic_with_zero_minimum():
    states = rc.enumerate_states(2, 3)
    assert states == [(0, 0), (0, 1), (0, 2), (1, 0), (2, 0)]
    assert rc.state_count(2, 3) == len(states)
    assert rc.state_count(5, 10) == 10**5 - 9**5


# ---------------------------------------------------------------------------
# build_chain
# ---------------------------------------------------------------------------

def test_smallest_truncation_reduces_to_the_ideal_rate():
    scen = scenario([0.3, 0.2], [[0, 0.4], [0.6, 0]])
    chain = rc.build_chain(scen, 1)
    assert chain.states == ((0, 0),)
    assert chain.P.toarray().ravel() == pytest.approx([1.0])
    assert chain.omega[0] == pytest.approx(0.3 + 0.2 - 0.06)
    assert rc.capacity(chain, rc.steady_state(chain)).growth_rate == pytest.approx(
        ideal_capacity([0.3, 0.2]))


@pytest.mark.parametrize("k", [1, 2, 5])
def test_error_free_two_miners_hit_ideal_capacity_at_any_k(k):
    scen = scenario([0.5, 0.5], complete_graph(2, 1.0))
    result = rc.evaluate(scen, k)
    assert result.growth_rate == pytest.approx(0.75, abs=1e-12)


def test_single_miner_chain():
    scen = scenario([0.37], np.zeros((1, 1)))
    chain = rc.build_chain(scen, 3)
    assert chain.states == ((0,),)
    assert rc.capacity(chain, rc.steady_state(chain)).growth_rate == pytest.approx(0.37)


def _row_distribution(chain, state):
    row = chain.P.getrow(chain.state_index(state)).toarray().ravel()
    return {chain.states[i]: row[i] for i in np.nonzero(row)[0]}


@pytest.mark.parametrize("c,a", [
    ([0.3, 0.6], [[0, 0.5], [0.25, 0]]),
    ([0.1, 0.2, 0.7], None),
])
def test_chain_rows_match_pattern_enumeration(c, a):
    n = len(c)
    if a is None:
        a = complete_graph(n, 0.35)
    scen = scenario(c, a)
    k = 3
    chain = rc.build_chain(scen, k)
    for state in chain.states:
        brute = {}
        for rel, p in slot_distribution(state, scen).items():
            if max(rel) == k:  # truncation redirect
                rel = tuple(x - 1 if x > 0 else 0 for x in rel)
            brute[rel] = brute.get(rel, 0.0) + p
        row = _row_distribution(chain, state)
        assert set(row) == set(brute)
        for target, p in brute.items():
            assert row[target] == pytest.approx(p, abs=1e-12)


def test_omega_matches_pattern_enumeration():
    # omega only involves the sync phase: some holder of the maximum mines
    scen = scenario([0.3, 0.6], [[0, 0.5], [0.25, 0]])
    chain = rc.build_chain(scen, 3)
    c = scen.c
    for state in chain.states:
        expected = 0.0
        for post, p in rc.sync_kernel(state, scen).items():
            top = max(post)
            fail = math.prod(1.0 - c[i] for i in range(2) if post[i] == top)
            expected += p * (1.0 - fail)
        assert chain.omega[chain.state_index(state)] == pytest.approx(expected, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 3), st.integers(1, 3), st.data())
def test_rows_are_stochastic(n, k, data):
    c = data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    alpha = data.draw(st.floats(0, 1))
    scen = scenario(c, complete_graph(n, alpha))
    chain = rc.build_chain(scen, k)
    sums = np.asarray(chain.P.sum(axis=1)).ravel()
    assert np.all(np.abs(sums - 1.0) <= 1e-12)


def test_capacity_invariant_under_miner_relabeling():
    base = scenario([0.05, 0.1, 0.2], complete_graph(3, 0.4))
    permuted = scenario([0.2, 0.05, 0.1], complete_graph(3, 0.4))
    r1 = rc.evaluate(base, 4).growth_rate
    r2 = rc.evaluate(permuted, 4).growth_rate
    assert r1 == pytest.approx(r2, abs=1e-12)


def test_state_cap_errors_report_the_count():
    scen = scenario([0.1] * 5, complete_graph(5, 0.5))
    with pytest.raises(ValueError, match=str(rc.state_count(5, 6))):
        rc.build_chain(scen, 6, state_cap=1000)


# ---------------------------------------------------------------------------
# steady_state / capacity
# ---------------------------------------------------------------------------

def test_stationary_of_trivial_chains():
    assert rc.stationary(np.array([[1.0]])) == pytest.approx([1.0])
    two = rc.stationary(np.array([[0.5, 0.5], [0.5, 0.5]]))
    assert two == pytest.approx([0.5, 0.5])


def test_power_iteration_agrees_with_dense_solve():
    rng = np.random.default_rng(5)
    P = rng.random((40, 40))
    P /= P.sum(axis=1, keepdims=True)
    dense = rc.stationary(P)
    iterated = rc.stationary(P, dense_cutoff=0)
    assert iterated == pytest.approx(dense, abs=1e-9)


def test_power_iteration_signals_non_convergence():
    # bipartite classes of unequal mass: iterates oscillate forever
    P = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0]])
    with pytest.raises(RuntimeError, match="residual"):
        rc.stationary(P, dense_cutoff=0, max_iter=500)


def test_steady_state_clamps_only_negligible_negativity():
    good = rc.SteadyState(np.array([1.0 + 1e-13, -1e-13]))
    assert good.pi[1] == 0.0
    with pytest.raises(ValueError):
        rc.SteadyState(np.array([1.01, -0.01]))
    with pytest.raises(ValueError):
        rc.SteadyState(np.array([0.5, 0.4]))


def test_two_miner_chain_recovers_closed_form_terms():
    scen = scenario([0.2, 0.4], [[0, 0.2], [0.8, 0]])
    chain = rc.build_chain(scen, 40)
    steady = rc.steady_state(chain)
    sol = solve(TwoMinerParams(0.2, 0.4, 0.2, 0.8))
    assert steady.pi[chain.state_index((0, 0))] == pytest.approx(sol.pi00, abs=1e-6)
    assert rc.capacity(chain, steady).growth_rate == pytest.approx(sol.R2, abs=1e-6)


def test_capacity_validates_vector_length():
    scen = scenario([0.2, 0.4], complete_graph(2, 0.5))
    chain = rc.build_chain(scen, 2)
    with pytest.raises(ValueError):
        rc.capacity(chain, rc.SteadyState(np.array([1.0])))


def test_capacity_between_slowest_miner_and_ideal():
    scen = scenario([0.15, 0.05, 0.3], complete_graph(3, 0.3))
    result = rc.evaluate(scen, 5)
    assert min(scen.c) - 1e-12 <= result.growth_rate
    assert result.growth_rate <= ideal_capacity(scen.c) + 1e-12


# ---------------------------------------------------------------------------
# converge_k
# ---------------------------------------------------------------------------

def test_converge_k_is_immediate_for_ideal_links():
    scen = scenario([0.5, 0.5], complete_graph(2, 1.0))
    k, result = rc.converge_k(scen, 1e-9)
    assert k <= 2
    assert result.growth_rate == pytest.approx(0.75, abs=1e-12)


def test_converge_k_matches_closed_form():
    scen = scenario([0.1, 0.1], complete_graph(2, 0.5))
    k, result = rc.converge_k(scen, 1e-6)
    expected = solve(TwoMinerParams(0.1, 0.1, 0.5, 0.5)).R2
    assert result.growth_rate == pytest.approx(expected, abs=1e-4)


def test_converge_k_signals_state_cap():
    scen = scenario([0.15] * 5, complete_graph(5, 0.1))
    with pytest.raises(ValueError, match="state cap"):
        rc.converge_k(scen, 1e-12, state_cap=40)


def test_converge_k_rejects_bad_tolerance():
    scen = scenario([0.1, 0.1], complete_graph(2, 0.5))
    with pytest.raises(ValueError):
        rc.converge_k(scen, 0.0)


# ---------------------------------------------------------------------------
# Debug dump
# ---------------------------------------------------------------------------

def test_debug_dump_layout(tmp_path):
    scen = scenario([0.2, 0.4], [[0, 0.2], [0.8, 0]])
    chain = rc.build_chain(scen, 3)
    steady = rc.steady_state(chain)
    states_csv = tmp_path / "states.csv"
    matrix_csv = tmp_path / "matrix.csv"
    rc.dump_debug_csv(chain, steady, states_csv, matrix_csv)
    lines = states_csv.read_text().splitlines()
    assert lines[0] == "state_id,r_vector,pi,omega"
    assert len(lines) == chain.n_states + 1
    assert lines[1].startswith("0,0|0,")
    matrix = [row.split(",") for row in matrix_csv.read_text().splitlines()]
    assert len(matrix) == chain.n_states
    assert all(len(row) == chain.n_states for row in matrix)
    total = sum(float(x) for x in matrix[0])
    assert total == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Cross-validation against the simulator (slow path of the example set)
# ---------------------------------------------------------------------------

def test_five_miner_chain_tracks_simulation():
    scen = scenario([0.05] * 5, complete_graph(5, 0.5))
    report = run(SimConfig(scenario=scen, slots=10**6, seed=314))
    result = rc.evaluate(scen, 10)
    assert abs(result.growth_rate - report.capacity_estimate) < 0.01


def test_incomplete_topology_chain_tracks_simulation():
    # multi-hop propagation (path graph) exercises the sync kernel's
    # level structure; the truncated chain must still match the simulator
    from chaincap.netmodel import line_graph

    scen = scenario([0.08] * 4, line_graph(4, 0.4))
    report = run(SimConfig(scenario=scen, slots=10**6, seed=217))
    k, result = rc.converge_k(scen, 1e-6)
    gap = abs(result.growth_rate - report.capacity_estimate)
    assert gap <= 3 * report.capacity_stderr, (k, gap, report.capacity_stderr)
