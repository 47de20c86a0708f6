import math

import numpy as np
import pytest

from sdmdp.allocation import ValueBounds
from sdmdp.core import State
from sdmdp.environments.base import Environment, exact_dp_value
from sdmdp.mcts import (BudgetViolation, Edge, InconsistentCounts, InvertedBounds, MctsConfig, Node, NoActions,
                        budget_cap, check_counts, child_weights, clipped_leaf_value, enforce_budget, ments_lambda,
                        ments_policy, rollout, search, select_uct, soft_q_update, softmax_value, update_uct)
from sdmdp.oracles import toy_env
from sdmdp.stochastic import rng_for


class Bandit(Environment):
    """One decision, deterministic rewards per arm."""

    def __init__(self, rewards, steps=1):
        super().__init__()
        self.rewards = list(rewards)
        self.steps = steps

    dimension = 1

    @property
    def horizon(self):
        return self.steps

    def initial_state(self, rng=None):
        return State(1, [0.0], [1.0])

    def is_terminal(self, s):
        return s.t > self.steps

    def actions(self, s):
        return list(range(len(self.rewards)))

    def reward(self, s, a):
        return float(self.rewards[a])

    def transitions(self, s, a):
        return [(1.0, State(s.t + 1, [0.0], [1.0]))]

    def compute_bounds(self, s, n, discount, seed):
        h = self.steps - s.t + 1
        return ValueBounds(min(self.rewards) * h, max(self.rewards) * h, n)


def _node(qs, ns):
    node = Node(None, False, list(range(len(qs))))
    for i, (q, n) in enumerate(zip(qs, ns)):
        if n is None:
            continue
        e = Edge(i, 0.0)
        e.qbar, e.n = q, n
        node.edges[i] = e
    node.n = sum(n for n in ns if n)
    return node


def test_budget_cap_examples():
    assert enforce_budget(2, 10, 10**6).effective == 104857
    d = enforce_budget(1, 3, 100)
    assert d.effective == 0 and d.refused and d.truncated
    d = enforce_budget(2, 10, 10)
    assert d.effective == 10 and not d.truncated
    assert budget_cap(1, 8) == 25


def test_select_uct_untried_first():
    assert select_uct(_node([5.0, 0.0], [3, None]), 1.0) == 1


def test_select_uct_pure_exploitation():
    assert select_uct(_node([1.0, 2.0], [1, 1]), 0.0) == 1


def test_select_uct_bonus():
    node = _node([1.0, 1.0], [4, 1])
    node.n = 8
    s0 = 1.0 + math.sqrt(math.log(8) / 4)
    s1 = 1.0 + math.sqrt(math.log(8) / 1)
    assert s1 > s0 and select_uct(node, 1.0) == 1


def test_select_uct_no_actions():
    with pytest.raises(NoActions):
        select_uct(Node(None, False, []), 1.0)


def test_update_uct_means():
    e = Edge(0, 0.0)
    update_uct(e, None, 5.0)
    assert e.qbar == 5.0
    update_uct(e, None, 3.0)
    assert e.qbar == 4.0
    e = Edge(0, 0.0)
    for _ in range(100):
        update_uct(e, None, 7.0)
    assert abs(e.qbar - 7.0) <= 1e-9


def test_update_uct_exact_incremental_mean():
    rs = rng_for(0).normal(size=500)
    e = Edge(0, 0.0)
    for r in rs:
        update_uct(e, None, float(r))
    assert abs(e.qbar - rs.mean()) <= 1e-9


def test_softmax_value():
    assert softmax_value([2.5], 0.7) == 2.5
    assert softmax_value([1.0, 1.0], 0.5) == pytest.approx(1.0 + 0.5 * math.log(2))
    assert abs(softmax_value([1.0, 3.0], 1e-4) - 3.0) < 1e-3


def test_ments_policy():
    assert np.allclose(ments_policy([1.0, 5.0, 2.0], 0.7, 1.0), 1 / 3)
    assert np.allclose(ments_policy([2.0, 2.0], 0.7, 0.0), [0.5, 0.5])
    assert np.allclose(ments_policy([0.0, math.log(3)], 1.0, 0.0), [0.25, 0.75])


def test_ments_lambda_bounded():
    assert ments_lambda(0, 2, 0.2) <= 1.0
    assert ments_lambda(10**6, 2, 0.2) < ments_lambda(10, 2, 0.2)


def _edge_with_children(mu, values, counts=None, probs=None):
    e = Edge(0, mu)
    for v in values:
        ch = Node(None, False, [0])
        ch.leaf_value = v
        e.children.append(ch)
    if probs is not None:
        e.probs = np.asarray(probs)
        e.plist = list(probs)
    else:
        e.counts = ({}, list(counts))
        e.n = sum(counts)
    return e


def test_soft_q_single_child():
    e = _edge_with_children(2.0, [3.0], probs=[1.0])
    node = Node(None, False, [0])
    node.edges[0] = e
    soft_q_update(e, node, 0.7)
    assert e.qsft == 5.0 and node.vsft == 5.0


def test_soft_q_terminal_child():
    e = Edge(0, 1.5)
    ch = Node(None, True, [])
    e.children.append(ch)
    e.probs, e.plist = np.ones(1), [1.0]
    node = Node(None, False, [0])
    node.edges[0] = e
    soft_q_update(e, node, 0.7)
    assert e.qsft == 1.5


def test_soft_q_visit_weighted():
    e = _edge_with_children(1.0, [4.0, 8.0], counts=[3, 1])
    node = Node(None, False, [0])
    node.edges[0] = e
    soft_q_update(e, node, 0.7)
    assert e.qsft == pytest.approx(1.0 + 5.0)
    assert np.allclose(child_weights(e), [0.75, 0.25])


def test_soft_q_inconsistent_counts():
    e = _edge_with_children(1.0, [4.0, 8.0], counts=[3, 1])
    e.n = 5
    node = Node(None, False, [0])
    node.edges[0] = e
    with pytest.raises(InconsistentCounts):
        soft_q_update(e, node, 0.7)


def test_clipped_leaf_value():
    b = ValueBounds(0.0, 5.0, 10)
    rng = rng_for(0)
    assert clipped_leaf_value(10.0, b, 1.0, rng) == 5.0
    assert clipped_leaf_value(3.0, b, 1.0, rng) == 3.0
    assert all(clipped_leaf_value(10.0, b, 0.0, rng) == 10.0 for _ in range(20))
    with pytest.raises(InvertedBounds):
        clipped_leaf_value(1.0, ValueBounds(5.0, 0.0, 10), 1.0, rng)


def test_rollout_terminal_and_depth():
    env = Bandit([1.0, 3.0], steps=3)
    s = env.initial_state()
    assert rollout(env, State(4, [0.0], [1.0]), 10, 1.0, rng_for(0)) == 0.0
    assert rollout(env, s, 1, 1.0, rng_for(0)) in (1.0, 3.0)


def test_rollout_equal_rewards():
    env = Bandit([2.0, 2.0], steps=4)
    for seed in range(5):
        assert rollout(env, env.initial_state(), 10, 1.0, rng_for(seed)) == 8.0


def test_search_budget_one():
    env = Bandit([1.0, 2.0])
    r = search(env, env.initial_state(), MctsConfig(iteration_budget=1, enforce_budget=False))
    assert r.best_index == 0 and len(r.root_value_trace) == 1


def test_search_two_armed_bandit():
    env = Bandit([1.0, 2.0])
    for variant in ("uct", "ments"):
        r = search(env, env.initial_state(), MctsConfig(variant, iteration_budget=100, enforce_budget=False))
        assert r.best_action == 1


def test_search_counts_consistent():
    env = toy_env(3)
    for algo in ("uct", "uct-vc", "ments", "ments-vc"):
        r = search(env, env.initial_state(), MctsConfig.for_algorithm(algo, iteration_budget=500,
                                                                      enforce_budget=False))
        check_counts(r.tree)
        assert r.tree.root.n == 500


def test_search_refuses_over_budget():
    env = toy_env(3)
    with pytest.raises(BudgetViolation):
        search(env, env.initial_state(), MctsConfig(iteration_budget=10))


def test_search_deterministic():
    env = toy_env(3)
    cfg = MctsConfig.for_algorithm("ments-vc", iteration_budget=300, enforce_budget=False, seed=4)
    a = search(env, env.initial_state(), cfg).root_value_trace
    env.clear_cache()
    b = search(env, env.initial_state(), cfg).root_value_trace
    assert a == b


def test_search_uct_converges_on_toy():
    env = toy_env(3)
    s = env.initial_state()
    v = exact_dp_value(env, s)[0]
    r = search(env, s, MctsConfig(iteration_budget=20_000, enforce_budget=False), trace_at=set())
    assert r.root_value_trace[-1][1] == pytest.approx(v, rel=0.01)


def test_clipped_trace_inside_bounds():
    env = toy_env(4)
    r = search(env, env.initial_state(), MctsConfig.for_algorithm("uct-vc", iteration_budget=200,
                                                                  enforce_budget=False))
    b = r.root_bounds
    assert all(b.v_lower <= v <= b.v_upper for _, v in r.root_value_trace)


def test_config_validation():
    with pytest.raises(ValueError):
        MctsConfig("alphazero")
    with pytest.raises(ValueError):
        MctsConfig(iteration_budget=0)
    with pytest.raises(ValueError):
        MctsConfig.for_algorithm("uct-xx")
    assert MctsConfig.for_algorithm("ments-vc").algorithm == "ments-vc"
