import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resdiff.diffusion import DiffusionNetwork
from resdiff.model import DataStream, NetworkTopology, Observation, random_geometric, substream
from resdiff.resilient import (EPS_GAMMA, EmptyWindow, ResilienceConfig, cost_contribution,
                               estimate_cost, resilient_filter, select_removed, window_costs,
                               window_stats)


def obs(d, u):
    return Observation(float(d), np.asarray(u, dtype=float))


# --------------------------------------------------------------- cost

def test_cost_examples():
    assert estimate_cost([0.2, 0.3], [obs(0.2 * 1 + 0.3 * 2, [1, 2])]) == 0.0
    assert estimate_cost([0, 0], [obs(1, [1, 0]), obs(0, [0, 1])]) == 0.5
    # array form gives the same number
    assert estimate_cost([0, 0], (np.array([1.0, 0.0]), np.eye(2))) == 0.5


def test_cost_needs_data():
    with pytest.raises(EmptyWindow):
        estimate_cost([0, 0], [])
    with pytest.raises(EmptyWindow):
        estimate_cost([0, 0], (np.zeros(0), np.zeros((0, 2))))


def test_contribution_examples():
    assert cost_contribution(0.0, 3.0) == 0.0
    assert cost_contribution(0.5, 0.1) == pytest.approx(50.0, rel=1e-12)
    big = cost_contribution(0.5, 0.0)
    assert np.isfinite(big) and big == 0.5 / EPS_GAMMA**2


# ------------------------------------------------------------- filter

def test_filter_removes_the_largest():
    rep = resilient_filter({"a": 50.0, "b": 1.0, "c": 2.0}, 1, "k")
    assert rep.removed == ["a"] and not rep.degenerate


def test_filter_with_F_zero_removes_nothing():
    assert resilient_filter({1: 5.0, 2: 9.0}, 0, 0).removed == []


def test_filter_degenerates_when_F_covers_the_neighborhood():
    rep = resilient_filter({1: 1.0, 2: 2.0}, 3, 0)  # |N_k| = 3 including self
    assert rep.degenerate and rep.removed == [1, 2]
    assert not resilient_filter({1: 1.0, 2: 2.0}, 2, 0).degenerate


def test_filter_ties_remove_smaller_id_first():
    assert resilient_filter({3: 1.0, 1: 1.0, 2: 1.0}, 2, 0).removed == [1, 2]


@given(st.dictionaries(st.integers(0, 20), st.floats(0, 1e9), max_size=10), st.integers(0, 12),
       st.integers(0, 20))
def test_filter_never_removes_self(contrib, F, k):
    contrib = dict(contrib)
    contrib[k] = 1e300
    rep = resilient_filter(contrib, F, k)
    assert k not in rep.removed
    others = len(contrib) - 1
    assert len(rep.removed) == (others if rep.degenerate else min(F, others))


def test_config_validation():
    with pytest.raises(ValueError):
        ResilienceConfig(-1)
    with pytest.raises(ValueError):
        ResilienceConfig(1, window_n=0)
    assert ResilienceConfig((1, 2, 0)).per_agent(3).tolist() == [1, 2, 0]
    with pytest.raises(ValueError):
        ResilienceConfig((1, 2)).per_agent(3)


# ----------------------------------------- vectorised matches scalar

def test_window_costs_match_scalar_cost():
    rng = np.random.default_rng(0)
    n, w, m = 4, 7, 2
    D, U = rng.normal(size=(n, w)), rng.normal(size=(n, w, m))
    src = np.array([0, 1, 2, 3, 1, 0])
    dst = np.array([1, 0, 3, 2, 2, 0])
    msg = rng.normal(size=(src.size, m))
    got = window_costs(window_stats(D, U), np.full(n, w), msg, dst)
    for e in range(src.size):
        want = estimate_cost(msg[e], (D[dst[e]], U[dst[e]]))
        assert got[e] == pytest.approx(want, rel=1e-10, abs=1e-13)


@given(st.integers(0, 10**6))
def test_select_removed_matches_scalar_filter(seed):
    rng = np.random.default_rng(seed)
    n = 6
    upper = np.triu(rng.uniform(size=(n, n)) < 0.6, 1)
    adj = upper | upper.T
    src, dst = np.nonzero(adj)
    contrib = rng.integers(0, 4, size=src.size).astype(float)  # plenty of ties
    F = rng.integers(0, 3, size=n)
    mask = select_removed(contrib, src, dst, np.ones(src.size, bool), F)
    for k in range(n):
        sel = dst == k
        c = {int(l): float(v) for l, v in zip(src[sel], contrib[sel])}
        if F[k] >= len(c) + 1:
            continue
        assert sorted(src[sel & mask].tolist()) == sorted(resilient_filter(c, int(F[k]), k).removed)


# ------------------------------------------------------ network level

def _pair(F, n=10, rounds=600):
    topo = random_geometric(n, 0.5, substream(3, 0))
    res = ResilienceConfig(F(topo) if callable(F) else F)
    a = DiffusionNetwork(topo, 2, 0.01, 0.01, resilience=res)
    b = DiffusionNetwork(topo, 2, 0.01, 0.01, cooperate=False)
    stream = DataStream(3, np.ones(n), np.full(n, 0.15), 2)
    targets = np.full((n, 2), 0.3)
    for i in range(rounds):
        u, d = stream.draw(targets)
        a.round(i, u, d)
        b.round(i, u, d)
        np.testing.assert_array_equal(a.w, b.w, err_msg=f"round {i}")


def test_F_at_least_max_degree_is_noncooperative_bit_for_bit():
    _pair(lambda t: int(t.degree().max()))
    _pair(lambda t: int(t.degree().max()) + 1)


def test_F_zero_is_plain_adaptive_diffusion():
    n = 8
    topo = random_geometric(n, 0.5, substream(4, 0))
    a = DiffusionNetwork(topo, 2, 0.01, 0.01, resilience=ResilienceConfig(0))
    b = DiffusionNetwork(topo, 2, 0.01, 0.01)
    stream = DataStream(4, np.ones(n), np.full(n, 0.15), 2)
    for i in range(500):
        u, d = stream.draw(np.full((n, 2), 0.3))
        a.round(i, u, d)
        b.round(i, u, d)
    np.testing.assert_array_equal(a.w, b.w)


def test_removed_neighbors_keep_their_tracker_updated():
    topo = NetworkTopology.from_edges(3, [(0, 1), (0, 2)])
    net = DiffusionNetwork(topo, 1, 0.01, 0.5, resilience=ResilienceConfig(1, 5),
                           prune_threshold=None)
    u = np.ones((3, 1))
    for i in range(3):
        net.w = np.array([[0.0], [0.0], [float(i + 1)]])
        rep = net.round(i, u, net.w[:, 0].copy())  # psi = w
        g = net.agent_state(0).gamma_sq
        assert g[2] > 0 and g[1] == 0
