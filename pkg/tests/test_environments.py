import dataclasses

import numpy as np
import pytest

from sdmdp.configs import basket_instance, hybrid_instance, make_env, maritime_instance, option_instance
from sdmdp.core import CapacityUnderflow, State
from sdmdp.environments.base import exact_dp_value
from sdmdp.environments.hybrid import HybridEnv
from sdmdp.environments.maritime import InfeasibleLeg, MaritimeEnv, MaritimeInstance
from sdmdp.environments.options import ExerciseOfDeadLeg, OptionInstance, OptionLeg, OptionsEnv
from sdmdp.stochastic import GbmParams, rng_for


# maritime ------------------------------------------------------------------

def test_distance_entry():
    assert maritime_instance("A").distance[0, 1] == 12


def test_maritime_config_a_prices():
    p = maritime_instance("A").price
    assert (p.s0, p.sigma, p.mu) == (1000, 0.9, 1.0)


def _flat(c=7.0):
    inst = maritime_instance("A")
    return dataclasses.replace(inst, price=GbmParams(c, 0.0, 0.0, 1.0, inst.price.steps))


def test_maritime_constant_price_cost_is_price_times_distance():
    inst = _flat()
    env = MaritimeEnv(inst)
    s = env.initial_state()
    lp = -env.solver.values(s, np.full((1, env.horizon, 1), 7.0))[0]
    assert lp == pytest.approx(7.0 * inst.total_distance)
    rng = rng_for(0)
    total = 0.0
    while not env.is_terminal(s):
        acts = env.actions(s)
        a = acts[int(rng.integers(len(acts)))]
        total += env.reward(s, a)
        s = env.sample_next(s, a, rng)
    assert -total == pytest.approx(7.0 * inst.total_distance)
    assert s.x_d[0] == pytest.approx(0.0)


def test_maritime_leg_too_long_for_tank():
    d = np.array([[0.0, 60.0], [60.0, 0.0]])
    with pytest.raises(InfeasibleLeg):
        MaritimeInstance(d, GbmParams(1.0, 0.0, 0.0), capacity=50.0)


def test_maritime_window_covers_next_leg():
    env = MaritimeEnv(maritime_instance("B"))
    s = env.initial_state()
    w = env.window(s)
    assert w.lower_frak_A == env.legs[0] and w.upper_frak_A == 50.0


def test_maritime_bounds_are_costs():
    env = make_env("maritime", "C")
    b = env.bounds(env.initial_state(), 256)
    assert b.v_upper <= 0 and b.v_upper >= b.v_lower - b.tolerance


# hybrid --------------------------------------------------------------------

def test_hybrid_gas_quantum_reward():
    env = make_env("hybrid", "A")
    s = env.initial_state(mode=0)
    gas = env.actions(s)[0]
    assert gas == (4.0, 0.0) and env.reward(s, gas) == 40.0


def test_hybrid_braking_regenerates():
    env = make_env("hybrid", "A")
    s = State(3, env.inst.mileage[2], [5.0, 1.0], 8.0, 2)
    (a,) = env.actions(s)
    assert a == (0.0, 0.0) and env.reward(s, a) == 0.0
    n = env.sample_next(s, a, rng_for(0))
    assert n.x_d[1] == 3.0 and n.x_d[0] == 5.0


def test_hybrid_consumption_is_the_quantum():
    env = make_env("hybrid", "A")
    s = env.initial_state(mode=1)
    for a in env.actions(s):
        assert sum(a) == 4.0


def test_hybrid_expanded_braking_never_repeats():
    inst = hybrid_instance("A", expanded=True)
    assert inst.transition[inst.braking_mode, inst.braking_mode] == 0.0
    assert inst.n_modes == 7


def test_hybrid_mixing_rule():
    with pytest.raises(ValueError):
        hybrid_instance("A", capacity=(100.0, 100.0))


def test_hybrid_underflow():
    env = make_env("hybrid", "A")
    s = State(2, env.inst.mileage[0], [1.0, 1.0], 4.0, 0)
    with pytest.raises(CapacityUnderflow):
        env.actions(s)


def test_hybrid_fast_rollout_matches_generic():
    from sdmdp.environments.base import Environment
    from sdmdp.mcts import rollout
    env = make_env("hybrid", "C")
    s = env.initial_state(mode=1)

    class Plain(Environment):
        def __getattr__(self, k):
            return getattr(env, k)

    plain = Plain()
    for seed in range(5):
        a = env.fast_rollout(s, 10, 0.9, rng_for(seed))
        b = rollout(plain, s, 10, 0.9, rng_for(seed))
        assert a == pytest.approx(b)


def test_hybrid_exact_dp_within_bounds():
    env = make_env("hybrid", "B")
    s = env.initial_state(mode=0)
    v = exact_dp_value(env, s)[0]
    b = env.bounds(s, 512)
    assert b.v_lower - b.tolerance <= v <= b.v_upper + b.tolerance


# options -------------------------------------------------------------------

def test_option_config_a_immediate_exercise():
    env = make_env("options", "A")
    s = env.initial_state()
    assert (1,) in env.actions(s)
    assert env.reward(s, (1,)) == pytest.approx(4.0)


def test_put_out_of_the_money_at_maturity():
    leg = OptionLeg(50.0, 40.0, 0.2, 0.0, "put")
    assert leg.intrinsic(55.0) == 0.0
    inst = OptionInstance((leg,), 1.0, 0.05, 0.5, "gbm")
    env = OptionsEnv(inst)
    s = State(3, [55.0], [1.0])
    (a,) = env.actions(s)
    assert env.reward(s, a) == 0.0


def test_basket_config_a():
    inst = basket_instance("A")
    assert inst.n_legs == 3 and all(l.kind == "call" for l in inst.legs)
    assert inst.max_exercise == 3 and inst.dt == 0.02


def test_options_dead_leg():
    env = make_env("options", "C")
    s = State(2, [30.0], [0.0])
    with pytest.raises(ExerciseOfDeadLeg):
        env.reward(s, (1,))


def test_options_hindsight_is_best_discounted_payoff():
    inst = option_instance("C", model="gbm")
    env = OptionsEnv(inst, discount=1.0)
    s = env.initial_state()
    ctx = env._process.sample_contexts(s, 1, rng_for(2))
    times = np.arange(ctx.shape[1]) * inst.dt
    scan = max(np.exp(-inst.rate * t) * inst.legs[0].intrinsic(x) for t, x in zip(times, ctx[0, :, 0]))
    assert env.solver.values(s, ctx)[0] == pytest.approx(scan)


def test_options_lattice_dp_equals_crr():
    from sdmdp.stochastic import binomial_american
    env = make_env("options", "D")
    v = exact_dp_value(env, env.initial_state(), discount=1.0)[0]
    inst = env.inst
    assert v == pytest.approx(binomial_american(inst.binomial_params(0), inst.legs[0].kind), rel=1e-12)


def test_basket_action_cap():
    env = make_env("options-basket", "C")
    s = State(1, [40.0, 5.0, 60.0], [1.0, 1.0, 1.0])
    assert max(sum(a) for a in env.actions(s)) == 2


def test_hybrid_env_direct_construction():
    inst = hybrid_instance("E")
    env = HybridEnv(inst, 0.9)
    assert env.horizon == 12 and env.dimension == 2
