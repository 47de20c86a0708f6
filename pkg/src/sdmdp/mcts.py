"""Monte Carlo tree search over SD-MDP environments: UCT, MENTS, value clipping.

The tree alternates decision nodes (a state with its extreme actions) and
chance edges (an action with its successor states).  Finite successor sets
are expanded all at once and weighted by probability; continuous ones get one
child per distinct sample and are weighted by visit counts.  Value-clipped
variants clip each new leaf's rollout value into the leaf's
[anticipative, hindsight] bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import ValueBounds
from .stochastic import rng_for


class BudgetViolation(ValueError):
    pass


class NoActions(ValueError):
    pass


class InconsistentCounts(RuntimeError):
    pass


class InvertedBounds(ValueError):
    pass


def budget_cap(D: int, T: int, K_c: float = 0.1) -> int:
    """floor(K_c (2D)^T), computed in exact integer arithmetic when K_c = 0.1."""
    if K_c == 0.1:
        return (2 * D) ** T // 10
    return int(math.floor(K_c * float(2 * D) ** T))


@dataclass(frozen=True)
class BudgetDecision:
    effective: int
    cap: int
    truncated: bool

    @property
    def refused(self) -> bool:
        return self.effective < 1


def enforce_budget(D: int, T: int, requested: int, K_c: float = 0.1) -> BudgetDecision:
    """Clamp a requested iteration count to the simulation budget rule."""
    if D < 1 or T < 1:
        raise ValueError("D and T must be >= 1")
    cap = budget_cap(D, T, K_c)
    eff = min(int(requested), cap)
    return BudgetDecision(eff, cap, eff < requested)


@dataclass
class MctsConfig:
    variant: str = "uct"
    value_clipped: bool = False
    exploration: float = 1.0
    temperature: float = 0.7
    ments_epsilon: float = 0.2
    ments_decay: float | None = None
    clip_probability: float = 1.0
    clip_backups: bool = False
    rollout_depth: int = 10
    bound_samples: int = 64
    iteration_budget: int = 1000
    discount: float = 1.0
    seed: int = 0
    enforce_budget: bool = True
    budget_constant: float = 0.1

    def __post_init__(self):
        if self.variant not in ("uct", "ments"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.iteration_budget < 1:
            raise ValueError("iteration_budget must be >= 1")
        if self.exploration < 0:
            raise ValueError("exploration must be >= 0")
        if self.variant == "ments" and self.temperature <= 0:
            raise ValueError("temperature must be > 0 for ments")
        if not 0.0 <= self.clip_probability <= 1.0:
            raise ValueError("clip_probability must lie in [0, 1]")

    @classmethod
    def for_algorithm(cls, name: str, **kw) -> "MctsConfig":
        """Build from names like ``uct``, ``uct-vc``, ``ments``, ``ments-vc``."""
        base, _, suffix = name.partition("-")
        if suffix not in ("", "vc"):
            raise ValueError(f"unknown algorithm {name!r}")
        return cls(variant=base, value_clipped=suffix == "vc", **kw)

    @property
    def algorithm(self) -> str:
        return self.variant + ("-vc" if self.value_clipped else "")


class Edge:
    """An action taken at a decision node, with its successors."""

    __slots__ = ("action", "mu", "n", "qbar", "qsft", "children", "probs", "plist", "counts")

    def __init__(self, action, mu):
        self.action = action
        self.mu = mu
        self.n = 0
        self.qbar = 0.0
        self.qsft = 0.0
        self.children = []
        self.probs = None  # finite successor probabilities
        self.plist = None
        self.counts = None  # sampled successors: key -> index, plus visit counts


class Node:
    __slots__ = ("state", "terminal", "actions", "edges", "n", "vsft", "leaf_value")

    def __init__(self, state, terminal, actions):
        self.state = state
        self.terminal = terminal
        self.actions = actions
        self.edges = [None] * len(actions)
        self.n = 0
        self.vsft = 0.0
        self.leaf_value = 0.0

    @property
    def tried(self):
        return [i for i, e in enumerate(self.edges) if e is not None]

    def value(self) -> float:
        """Soft value once expanded, else the stored leaf estimate."""
        if self.terminal:
            return 0.0
        return self.vsft if self.n > 0 else self.leaf_value


@dataclass
class SearchTree:
    root: Node
    nodes: list = field(default_factory=list)

    def add(self, node: Node) -> Node:
        self.nodes.append(node)
        return node


@dataclass
class SearchResult:
    best_action: object
    best_index: int
    root_value_trace: list
    action_visit_profile: list
    root_bounds: ValueBounds | None
    tree: SearchTree
    q_values: list


# --------------------------------------------------------------------------
# node-level rules


def select_uct(node: Node, c: float) -> int:
    """Untried actions first (in order), then argmax Q̄ + c sqrt(log N / n)."""
    if not node.actions:
        raise NoActions("node has no actions")
    best, best_i = -np.inf, 0
    logn = math.log(node.n) if node.n > 0 else 0.0
    for i, e in enumerate(node.edges):
        if e is None or e.n == 0:
            return i
        score = e.qbar + c * math.sqrt(logn / e.n)
        if score > best:
            best, best_i = score, i
    return best_i


def update_uct(edge: Edge, node: Node | None, ret: float):
    edge.qbar += (ret - edge.qbar) / (edge.n + 1)
    edge.n += 1
    if node is not None:
        node.n += 1


def softmax_value(q, alpha: float) -> float:
    """alpha * log Σ exp(q / alpha) with a max shift."""
    m = max(q)
    return m + alpha * math.log(sum(math.exp((x - m) / alpha) for x in q))


def ments_policy(q, alpha: float, lambda_s: float) -> np.ndarray:
    """(1 - λ) exp((Q - V)/α) + λ/|A|, with V the soft value of ``q``."""
    q = np.asarray(q, dtype=float)
    v = softmax_value(q, alpha)
    boltz = np.exp((q - v) / alpha)
    boltz /= boltz.sum()
    return (1.0 - lambda_s) * boltz + lambda_s / len(q)


def _draw(weights, u: float) -> int:
    """Index drawn from unnormalized ``weights`` with uniform ``u``."""
    target = u * sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if target < acc:
            return i
    return len(weights) - 1


def ments_lambda(n_visits: int, n_actions: int, eps: float, decay: float | None = None) -> float:
    lam = min(1.0, eps * n_actions / math.log(n_visits + 2))
    if decay:
        lam *= math.exp(-n_visits / decay)
    return lam


def child_weights(edge: Edge) -> np.ndarray:
    if edge.probs is not None:
        return edge.probs
    c = edge.counts[1]
    total = sum(c)
    if total != edge.n:
        raise InconsistentCounts(f"child visits {total} != edge visits {edge.n}")
    return np.asarray(c, dtype=float) / edge.n


def soft_q_update(edge: Edge, node: Node, alpha: float, discount: float = 1.0):
    """Q_sft ← μ + γ Σ w(x') V(x'), then refresh V_sft of ``node``."""
    if edge.probs is not None:
        w = edge.plist if edge.plist is not None else edge.probs
        cont = sum(wi * ch.value() for wi, ch in zip(w, edge.children))
    else:
        c = edge.counts[1]
        if sum(c) != edge.n:
            raise InconsistentCounts(f"child visits {sum(c)} != edge visits {edge.n}")
        cont = sum(ci * ch.value() for ci, ch in zip(c, edge.children)) / edge.n
    edge.qsft = edge.mu + discount * cont
    node.vsft = softmax_value([node.edges[i].qsft for i in node.tried], alpha)


def clipped_leaf_value(v: float, bounds: ValueBounds, alpha_c: float, rng) -> float:
    """Clip ``v`` into the bounds with probability ``alpha_c``."""
    if bounds.v_lower > bounds.v_upper:
        raise InvertedBounds(f"{bounds.v_lower} > {bounds.v_upper}")
    if alpha_c > rng.random():
        return bounds.clip(v)
    return v


def rollout(env, state, depth_limit: int, discount: float, rng) -> float:
    """Uniform play over the extreme action set; discounted return.

    Environments may provide ``fast_rollout`` with identical semantics and
    random draws.
    """
    fast = getattr(env, "fast_rollout", None)
    if fast is not None:
        return fast(state, depth_limit, discount, rng)
    total, g, s = 0.0, 1.0, state
    for _ in range(depth_limit):
        if env.is_terminal(s):
            break
        acts = env.actions(s)
        a = acts[int(rng.integers(len(acts)))] if len(acts) > 1 else acts[0]
        total += g * env.reward(s, a)
        s = env.sample_next(s, a, rng)
        g *= discount
    return total


# --------------------------------------------------------------------------
# search


class _Search:
    def __init__(self, env, cfg: MctsConfig):
        self.env, self.cfg = env, cfg
        self.rng = rng_for(cfg.seed, "mcts")
        self.gamma = cfg.discount

    def node(self, s):
        term = self.env.is_terminal(s)
        return self.tree.add(Node(s, term, [] if term else self.env.actions(s)))

    def leaf_values(self, states, clip):
        out = []
        cfg = self.cfg
        for s in states:
            if self.env.is_terminal(s):
                out.append(0.0)
                continue
            v = rollout(self.env, s, cfg.rollout_depth, self.gamma, self.rng)
            if clip:
                v = self.env.bounds(s, cfg.bound_samples, self.gamma).clip(v)
            out.append(v)
        return out

    def expand(self, node, i):
        """Create the edge for action i and evaluate its successor leaves."""
        env, s = self.env, node.state
        a = node.actions[i]
        edge = Edge(a, env.reward(s, a))
        node.edges[i] = edge
        clip = self.cfg.value_clipped and self.cfg.clip_probability > self.rng.random()
        tr = env.transitions(s, a)
        if tr is None:
            nxt = env.sample_next(s, a, self.rng)
            edge.counts = ({env.state_key(nxt): 0}, [1])
            states = [nxt]
            probs = np.ones(1)
        else:
            probs = np.array([p for p, _ in tr])
            states = [x for _, x in tr]
            edge.probs = probs
            edge.plist = probs.tolist()
        vals = self.leaf_values(states, clip)
        for x, v in zip(states, vals):
            ch = self.node(x)
            ch.leaf_value = v
            edge.children.append(ch)
        return edge, float(probs @ np.asarray(vals))

    def select(self, node) -> int:
        cfg = self.cfg
        for i, e in enumerate(node.edges):
            if e is None:
                return i
        if cfg.variant == "uct":
            return select_uct(node, cfg.exploration)
        q = [e.qsft for e in node.edges]
        lam = ments_lambda(node.n, len(q), cfg.ments_epsilon, cfg.ments_decay)
        alpha = cfg.temperature
        v = softmax_value(q, alpha)
        boltz = [math.exp((x - v) / alpha) for x in q]
        z = sum(boltz)
        pi = [(1.0 - lam) * b / z + lam / len(q) for b in boltz]
        return _draw(pi, self.rng.random())

    def iterate(self):
        env, cfg = self.env, self.cfg
        path = []
        node = self.tree.root
        G = 0.0
        while True:
            if node.terminal:
                G = 0.0
                break
            i = self.select(node)
            edge = node.edges[i]
            if edge is None:
                edge, G = self.expand(node, i)
                path.append((node, edge))
                break
            path.append((node, edge))
            if edge.probs is not None:
                j = _draw(edge.plist, self.rng.random())
                node = edge.children[j]
                continue
            nxt = env.sample_next(node.state, edge.action, self.rng)
            k = env.state_key(nxt)
            index, counts = edge.counts
            j = index.get(k)
            if j is not None:
                counts[j] += 1
                node = edge.children[j]
                continue
            clip = cfg.value_clipped and cfg.clip_probability > self.rng.random()
            (v,) = self.leaf_values([nxt], clip)
            ch = self.node(nxt)
            ch.leaf_value = v
            index[k] = len(edge.children)
            edge.children.append(ch)
            counts.append(1)
            G = v
            break
        self.backup(path, G)

    def backup(self, path, G):
        cfg = self.cfg
        for node, edge in reversed(path):
            ret = edge.mu + self.gamma * G
            if cfg.clip_backups and cfg.value_clipped:
                ret = self.env.bounds(node.state, cfg.bound_samples, self.gamma).clip(ret)
            update_uct(edge, node, ret)
            if cfg.variant == "ments":
                soft_q_update(edge, node, cfg.temperature, self.gamma)
            G = ret

    def root_estimate(self):
        root = self.tree.root
        tried = root.tried
        if self.cfg.variant == "uct":
            v = max(root.edges[i].qbar for i in tried)
        else:
            v = max(root.edges[i].qsft for i in tried)
        if self.root_bounds is not None:
            v = self.root_bounds.clip(v)
        return v

    def run(self, root_state, trace_at=None) -> SearchResult:
        env, cfg = self.env, self.cfg
        if cfg.enforce_budget:
            cap = budget_cap(env.dimension, env.horizon, cfg.budget_constant)
            if cfg.iteration_budget > cap:
                raise BudgetViolation(
                    f"budget {cfg.iteration_budget} exceeds cap {cap} for D={env.dimension}, T={env.horizon}")
        if env.is_terminal(root_state):
            raise NoActions("root state is terminal")
        self.tree = SearchTree(root=None)
        self.tree.root = self.node(root_state)
        self.root_bounds = (env.bounds(root_state, cfg.bound_samples, self.gamma)
                            if cfg.value_clipped else None)
        trace = []
        for it in range(1, cfg.iteration_budget + 1):
            self.iterate()
            if trace_at is None or it in trace_at or it == cfg.iteration_budget:
                trace.append((it, self.root_estimate()))
        root = self.tree.root
        tried = root.tried
        key = (lambda i: root.edges[i].qbar) if cfg.variant == "uct" else (lambda i: root.edges[i].qsft)
        best = max(tried, key=lambda i: (key(i), -i))
        visits = [0 if e is None else e.n for e in root.edges]
        qs = [None if e is None else key(i) for i, e in enumerate(root.edges)]
        return SearchResult(root.actions[best], best, trace, visits, self.root_bounds, self.tree, qs)


def search(env, root_state, config: MctsConfig, trace_at=None) -> SearchResult:
    """Run ``config.iteration_budget`` iterations from ``root_state``.

    ``trace_at`` optionally restricts the root value trace to a set of
    iteration numbers (the last iteration is always recorded).
    """
    return _Search(env, config).run(root_state, trace_at)


def check_counts(tree: SearchTree) -> None:
    """Raise if any expanded node violates N(x) = Σ_a N(x, a) or child counts."""
    for node in tree.nodes:
        tried = [e for e in node.edges if e is not None]
        if tried and node.n != sum(e.n for e in tried):
            raise InconsistentCounts(f"N(x)={node.n} != {sum(e.n for e in tried)}")
        for e in tried:
            if e.counts is not None and sum(e.counts[1]) != e.n:
                raise InconsistentCounts("sampled child counts do not sum to edge visits")
