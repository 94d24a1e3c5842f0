import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwsched.env import MmWaveEnv
from mmwsched.config import ScenarioConfig
from mmwsched.pomdp import (
    Action, ConstraintViolation, ObservableState, RewardScaler, action_space_size, action_table,
    block_likelihood, check_feasible, decode_action, encode_action, feasibility_mask, reward,
    scale_observation,
)

U, K = 5, 6


def state(b_d2d=(), b_track=(), q=(0, 0, 0, 0, 0)):
    d = np.zeros(U, dtype=bool)
    t = np.zeros(U, dtype=bool)
    d[[u - 1 for u in b_d2d]] = True
    t[[u - 1 for u in b_track]] = True
    return ObservableState(np.array(q), d, t, np.zeros(U, dtype=np.int64))


def test_action_space_size():
    assert action_space_size(U, K) == U * U * K + U * K == 180


def test_codec_bijection_and_first_index():
    seen = set()
    for i in range(180):
        a = decode_action(i, U, K)
        assert encode_action(a, U, K) == i
        seen.add(a)
    assert len(seen) == 180
    assert decode_action(0, U, K) == Action(1, 1, 1, 0)
    with pytest.raises(ConstraintViolation):
        encode_action(Action(1, 2, 1, 1), U, K)
    with pytest.raises(ConstraintViolation):
        decode_action(180, U, K)


def test_unconstrained_mask_is_full():
    assert feasibility_mask(state(), K).sum() == 180


def test_mask_with_two_d2d_ues():
    m = feasibility_mask(state(b_d2d=(2, 4)), K)
    acts, _, _, _, track = action_table(U, K)
    assert m[track == 0].sum() == 54
    assert m[track == 1].sum() == 18


def test_mask_after_tracking():
    m = feasibility_mask(state(b_track=(3,)), K)
    for i in np.flatnonzero(m):
        a = decode_action(i, U, K)
        assert a.dest == a.rx == 3
    assert m.sum() == 2 * K


@settings(max_examples=200)
@given(st.lists(st.integers(1, U), max_size=2, unique=True), st.integers(0, U), st.data())
def test_masked_actions_pass_feasibility(d2d, tracked, data):
    if len(d2d) == 1:
        d2d = []
    if tracked in d2d:
        tracked = 0
    s = state(b_d2d=d2d, b_track=(tracked,) if tracked else ())
    m = feasibility_mask(s, K)
    i = data.draw(st.sampled_from(list(np.flatnonzero(m))))
    check_feasible(decode_action(int(i), U, K), s)


def test_reward_scaling():
    sc = RewardScaler(2.0, 0.01, 18496)
    assert sc.n_packets == pytest.approx(1081.31, abs=0.01)
    assert reward([0, 0, 0], sc) == 0.0
    assert reward([540, 0, 0, 0, 0], sc) == pytest.approx(0.4994, abs=1e-4)


@given(st.lists(st.integers(0, 1000), min_size=5, max_size=5), st.randoms())
def test_reward_depends_only_on_sum(d, r):
    sc = RewardScaler(2.0, 0.01, 18496)
    p = list(d)
    r.shuffle(p)
    assert reward(d, sc) == reward(p, sc)


def test_scale_observation():
    s = ObservableState(np.array([10, 5, 0, 0, 0]), np.zeros(U), np.zeros(U), np.array([3, 25, 0, 10, 11]))
    o = scale_observation(s, 10)
    assert np.array_equal(o.q_scaled, [1, 0.5, 0, 0, 0])
    assert o.p_block[0] == pytest.approx(7 / 11)
    assert o.p_block[1] == 0.0
    assert o.p_block[2] == pytest.approx(10 / 11)
    assert o.as_vector().shape == (20,)
    assert np.array_equal(block_likelihood([10, 11], 10), [0, 0])


@given(st.lists(st.integers(0, 10**6), min_size=5, max_size=5), st.integers(1, 1000))
def test_queue_scaling_is_scale_invariant(q, c):
    s1 = ObservableState(np.array(q), np.zeros(U), np.zeros(U), np.zeros(U))
    s2 = ObservableState(np.array(q) * c, np.zeros(U), np.zeros(U), np.zeros(U))
    a, b = scale_observation(s1, 10), scale_observation(s2, 10)
    assert np.allclose(a.q_scaled, b.q_scaled)
    assert a.q_scaled.max() in (0.0, 1.0)


def test_env_mask_matches_state():
    env = MmWaveEnv(ScenarioConfig(), seed=0)
    env.execute_slot(Action(2, 4, 1, 0))
    assert np.array_equal(env.mask(), feasibility_mask(env.observe(), K))
    assert env.mask().sum() == 54 + 18
