import json
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mediate.consensus import ConsensusTrace, consensus_round, make_shares
from mediate.core import RunStreams, run_epoch
from mediate.derivation import (
    INITIAL_TOKEN,
    MediateProtocol,
    TokenState,
    mean_accumulated_value,
    token_gradient,
    track_r_min,
    update_token,
)
from mediate.envs import make_env
from mediate.errors import ConfigurationError
from mediate.learner import ActorCritic, LearnerConfig


def full(n):
    return [tuple(j for j in range(n) if j != i) for i in range(n)]


def random_connected_graph(n, rng, extra=0.3):
    adj = [set() for _ in range(n)]
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        adj[a].add(b)
        adj[b].add(a)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                adj[i].add(j)
                adj[j].add(i)
    return [tuple(sorted(s)) for s in adj]


def diameter(topology):
    best = 0
    for s in range(len(topology)):
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in topology[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        best = max(best, max(dist.values()))
    return best


def run_consensus(tokens, topology, iterations, seed=0):
    rng = np.random.default_rng(seed)
    bundles = [make_shares(t, len(topology[i]), rng, origin_id=i) for i, t in enumerate(tokens)]
    return consensus_round(bundles, topology, iterations)


# --- mean accumulated value, r_min, gradient -----------------------------

def test_mean_accumulated_value_examples():
    assert mean_accumulated_value([2, 4]) == 3.0
    assert mean_accumulated_value([5]) == 5.0
    assert mean_accumulated_value([1.5] * 7) == pytest.approx(1.5)


def test_mean_accumulated_value_empty():
    with pytest.raises(ValueError):
        mean_accumulated_value([])


def test_track_r_min():
    s = TokenState()
    assert track_r_min(s, [1, -2, 0]).r_min == -2
    assert track_r_min(s, [0, 1]).r_min == -2
    assert track_r_min(TokenState(), [3, 0.5]).r_min == 0.5


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=1, max_size=5), min_size=1, max_size=10))
def test_r_min_non_increasing(episodes):
    s = TokenState()
    prev = math.inf
    for rewards in episodes:
        track_r_min(s, rewards)
        assert s.r_min <= prev
        prev = s.r_min


def test_gradient_examples():
    assert token_gradient(10, 11, -2, 0.1) == pytest.approx(0.02)
    assert token_gradient(-10, -12, -1, 0.1) == pytest.approx(0.02)
    assert token_gradient(3.0, 3.0, -1, 0.1) == 0.0


def test_gradient_guards():
    assert token_gradient(0.0, 5.0, -1.0) == 0.0
    assert token_gradient(1e-9, 5.0, -1.0) == 0.0
    assert token_gradient(1.0, 2.0, math.inf) == 0.0
    with pytest.raises(ValueError):
        token_gradient(1.0, 2.0, -1.0, alpha=0.0)


def test_fresh_state():
    s = TokenState()
    assert s.token == INITIAL_TOKEN == 0.1
    assert s.r_min == math.inf
    assert s.prev_median == 0.0


# --- token update --------------------------------------------------------

def test_isolated_clamps():
    s = update_token(TokenState(token=0.5), -0.7, "isolated")
    assert s.token == 0.0


def test_synchronized_uses_consensus():
    s = update_token(TokenState(token=9.0), 0.05, "synchronized", 1.2)
    assert s.token == pytest.approx(1.25)


def test_synchronized_requires_consensus():
    with pytest.raises(ValueError):
        update_token(TokenState(), 0.0, "synchronized")


def test_update_rolls_median_and_clears():
    s = TokenState(epoch_means=[1.0, 5.0, 2.0])
    update_token(s, 0.0)
    assert s.prev_median == 2.0
    assert s.epoch_means == []


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(-20, 20), st.sampled_from(["isolated", "synchronized"]), st.floats(0, 10))
def test_tokens_never_negative(token, grad, variant, consensus):
    s = update_token(TokenState(token=token), grad, variant, consensus)
    assert s.token >= 0


# --- shares ---------------------------------------------------------------

def test_no_neighbors_single_reserved_share():
    b = make_shares(0.7, 0, np.random.default_rng(0))
    assert b.shares.tolist() == [0.7]
    assert b.reserved == 0.7
    assert b.distributed.size == 0


def test_share_sum():
    b = make_shares(1.5, 2, np.random.default_rng(0))
    assert b.shares.size == 3
    assert abs(b.shares.sum() - 1.5) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.integers(0, 8), st.integers(0, 2**31))
def test_distributed_shares_independent_of_secret(t1, t2, n, seed):
    a = make_shares(t1, n, np.random.default_rng(seed))
    b = make_shares(t2, n, np.random.default_rng(seed))
    np.testing.assert_array_equal(a.distributed, b.distributed)
    assert abs(a.shares.sum() - t1) < 1e-12
    assert abs(b.shares.sum() - t2) < 1e-12


def test_negative_share_count():
    with pytest.raises(ValueError):
        make_shares(1.0, -1, np.random.default_rng(0))


# --- consensus --------------------------------------------------------------

def test_fully_connected_average():
    results = run_consensus([1.0, 2.0, 3.0], full(3), 1)
    for r in results:
        assert r.token == pytest.approx(2.0, abs=1e-12)
        assert r.contributing_ids == {0, 1, 2}


def test_equal_tokens():
    for r in run_consensus([0.1] * 4, full(4), 1):
        assert r.token == pytest.approx(0.1, abs=1e-12)


def test_line_topology_needs_two_hops():
    line = [(1,), (0, 2), (1,)]
    short = run_consensus([1.0, 2.0, 6.0], line, 1)
    assert short[0].contributing_ids == {0, 1}
    results = run_consensus([1.0, 2.0, 6.0], line, 2)
    assert all(r.contributing_ids == {0, 1, 2} for r in results)
    assert results[0].token == results[1].token == results[2].token
    assert results[0].token == pytest.approx(3.0, abs=1e-12)


def test_isolated_agent_sees_only_itself():
    topo = [(1,), (0,), ()]
    results = run_consensus([1.0, 1.0, 3.0], topo, 3)
    assert results[2].contributing_ids == {2}
    assert results[2].token == pytest.approx(1.0)


def test_bundle_topology_mismatch():
    rng = np.random.default_rng(0)
    bundles = [make_shares(1.0, 2, rng, i) for i in range(2)]
    with pytest.raises(ValueError):
        consensus_round(bundles, full(2), 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31))
def test_consensus_exact_on_connected_graphs(n, seed):
    rng = np.random.default_rng(seed)
    topo = random_connected_graph(n, rng)
    tokens = rng.uniform(0, 10, size=n)
    for r in run_consensus(tokens, topo, max(diameter(topo), 1), seed):
        assert abs(r.token - tokens.mean()) < 1e-9
        assert r.contributing_ids == set(range(n))


def test_trace_records_messages(tmp_path):
    path = tmp_path / "trace.jsonl"
    trace = ConsensusTrace(path)
    trace.context = {"epoch": 4}
    rng = np.random.default_rng(0)
    bundles = [make_shares(1.0, 2, rng, i) for i in range(3)]
    consensus_round(bundles, full(3), 1, trace)
    trace.close()
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    kinds = {r["type"] for r in recs}
    assert kinds == {"share", "partial"}
    assert all(r["epoch"] == 4 for r in recs)
    assert sum(r["type"] == "share" for r in recs) == 6


# --- protocol ----------------------------------------------------------------

class FakeRollout:
    def __init__(self, values, rewards, nbrs):
        self.values = np.asarray(values, dtype=float)
        self.env_rewards = np.asarray(rewards, dtype=float)
        self.final_neighborhoods = nbrs

    @property
    def length(self):
        return self.env_rewards.shape[1]


class StubEnv:
    def __init__(self, n):
        self.n_agents = n
        self.gamma = 0.95


def feed(proto, mean_values, n, episodes=3):
    rollouts = []
    for _ in range(episodes):
        values = np.repeat(np.asarray(mean_values, dtype=float)[:, None], 5, axis=1)
        roll = FakeRollout(values, -np.ones((n, 4)), full(n))
        proto.end_episode(roll)
        rollouts.append(roll)
    proto.end_epoch(rollouts, np.random.default_rng(0))


def test_unknown_variant():
    with pytest.raises(ConfigurationError):
        MediateProtocol("sometimes")


def test_first_epoch_gradient_is_zero():
    proto = MediateProtocol("isolated")
    proto.bind(StubEnv(3))
    feed(proto, [1.0, 2.0, 3.0], 3)
    np.testing.assert_array_equal(proto.last_gradients, 0.0)
    np.testing.assert_allclose(proto.local_tokens, 0.1)
    np.testing.assert_allclose(proto.tokens, 0.1)


def test_automate_follows_value_growth():
    proto = MediateProtocol("automate")
    proto.bind(StubEnv(2))
    feed(proto, [10.0, 10.0], 2)
    feed(proto, [11.0, 9.0], 2)
    # 0.1 * (+-1/10) * |-1|
    np.testing.assert_allclose(proto.last_gradients, [0.01, -0.01])
    np.testing.assert_allclose(proto.tokens, [0.11, 0.09])


def test_isolated_exchanges_consensus_token():
    proto = MediateProtocol("isolated")
    proto.bind(StubEnv(2))
    proto.states[0].token = 1.0
    proto.states[1].token = 3.0
    feed(proto, [1.0, 1.0], 2)
    np.testing.assert_allclose(proto.tokens, 2.0)
    np.testing.assert_allclose(proto.local_tokens, [1.0, 3.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_synchronized_pairwise_bound(n, seed):
    rng = np.random.default_rng(seed)
    proto = MediateProtocol("synchronized")
    proto.bind(StubEnv(n))
    for s in proto.states:
        s.token = float(rng.uniform(0, 5))
    feed(proto, rng.uniform(1, 5, size=n), n)
    for _ in range(2):
        feed(proto, rng.uniform(1, 5, size=n), n)
        t, g = proto.local_tokens, np.abs(proto.last_gradients)
        for i in range(n):
            for j in range(n):
                assert abs(t[i] - t[j]) <= g[i] + g[j] + 1e-12


def test_zero_gradient_fixed_point():
    proto = MediateProtocol("synchronized")
    proto.bind(StubEnv(3))
    for s, t in zip(proto.states, [0.5, 1.0, 3.0]):
        s.token = t
    feed(proto, [2.0, 2.0, 2.0], 3)
    np.testing.assert_allclose(proto.local_tokens, 1.5, atol=1e-12)
    for _ in range(3):
        feed(proto, [2.0, 2.0, 2.0], 3)
        np.testing.assert_array_equal(proto.last_gradients, 0.0)
        np.testing.assert_allclose(proto.local_tokens, 1.5, atol=1e-12)


def test_epoch_loop_on_coin_game():
    n = 2
    streams = RunStreams.from_seed(0, n)
    env = make_env("coin", n, rng=streams.env, time_limit=20)
    proto = MediateProtocol("synchronized")
    proto.bind(env)
    cfg = LearnerConfig(gamma=env.gamma)
    agents = [ActorCritic(env.obs_dim, env.n_actions, cfg, rng=streams.init[i]) for i in range(n)]
    for _ in range(3):
        run_epoch(env, agents, proto, 2, streams)
        assert (proto.local_tokens >= 0).all()
        m = proto.metrics()
        assert set(m) == {"token", "exchange_token", "consensus_coverage"}
        np.testing.assert_array_equal(m["consensus_coverage"], [2.0, 2.0])
