import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qma.qcore import (
    Action,
    FixedArith,
    LearningParams,
    QTable,
    argmax_action,
    bellman_update,
    maybe_update_policy,
    penalized_update,
)

UNIT = LearningParams(alpha=1.0, gamma=1.0, xi=2.0)


def test_bellman_examples():
    assert bellman_update(-10, 2, -6, UNIT) == -4
    assert bellman_update(7, 123, 55, LearningParams(alpha=0.0)) == 7
    assert bellman_update(0, 4, 0, LearningParams(alpha=0.5, gamma=0.9)) == 2


def test_penalty_floors_a_drop():
    assert penalized_update(-10, -3, -10, UNIT) == -12
    p0 = LearningParams(alpha=1.0, gamma=1.0, xi=0.0)
    assert penalized_update(-10, 3, -10, p0) == -7


def test_penalty_alternating_pattern():
    p = LearningParams(alpha=1.0, gamma=0.0, xi=2.0)
    q = penalized_update(10, 10, 0, p)
    assert q == 10
    # a single low sample costs xi, the next high sample restores the value
    q = penalized_update(q, 0, 0, p)
    assert q == 8
    assert penalized_update(q, 10, 0, p) == 10


def test_params_validation():
    with pytest.raises(ValueError):
        LearningParams(alpha=1.5)
    with pytest.raises(ValueError):
        LearningParams(xi=-1)
    with pytest.raises(ValueError):
        LearningParams(gamma=-0.1)
    assert LearningParams().q_ceiling == pytest.approx(40.0)


def test_argmax_ties_prefer_safe_action():
    t = QTable(1, fixed_point=False)
    assert argmax_action(t, 0) is Action.BACKOFF
    t.values[0] = [2.0, 3.0, -12.0]
    assert argmax_action(t, 0) is Action.CCA
    t.values[0] = [4.0, 4.0, 1.0]
    assert argmax_action(t, 0) is Action.BACKOFF


def test_policy_kept_on_duplicate_optimum():
    t = QTable(1, fixed_point=False)
    t.values[0] = [1.0, 1.0, -10.0]
    t.policy[0] = Action.CCA
    maybe_update_policy(t, 0, 1.0, 1.0)
    assert t.policy[0] is Action.CCA
    # strict improvement of BACKOFF to a tie still keeps the current choice
    t.values[0] = [1.0, 1.0, -10.0]
    maybe_update_policy(t, 0, 1.0, 0.0)
    assert t.policy[0] is Action.CCA


def test_policy_follows_strict_improvement():
    t = QTable(2, UNIT, fixed_point=False)
    changed = t.update(0, Action.SEND, 4, 1)
    assert changed
    assert t.policy[0] is Action.SEND
    assert t.q(0, Action.SEND) == -6


def test_non_improving_update_keeps_initial_policy():
    t = QTable(3, UNIT)
    for m in range(3):
        assert not t.update(m, Action.SEND, -3, (m + 1) % 3)
    assert t.policy == [Action.BACKOFF] * 3
    assert t.q(0, Action.SEND) == -12


def test_fixed_point_shift_for_half_alpha():
    fx = FixedArith(LearningParams(alpha=0.5, gamma=0.9))
    assert fx.alpha_fx == 128
    assert fx.gamma_fx == 230
    q = fx.encode(-10)
    # (1-0.5)*-10 + 0.5*(4 + 0.8984375*-10) = -7.4921875
    assert fx.decode(fx.bellman(q, 4, fx.encode(-10))) == -7.4921875


def test_fixed_point_rounds_down():
    fx = FixedArith(LearningParams(alpha=0.5, gamma=0.9))
    q = fx.encode(0.0)
    raw = fx.bellman(q, 1, fx.encode(0.0))
    assert fx.decode(raw) == 0.5
    raw = fx.bellman(fx.encode(-1 / 256), 0, 0)
    assert raw == -1


def test_cumulative_q():
    t = QTable(54)
    assert t.cumulative() == -540
    t = QTable(4, fixed_point=False)
    t.values[0][Action.SEND] = 4.0
    t.policy[0] = Action.SEND
    assert t.cumulative() == -26


q_values = st.integers(-40, 40).map(float)
rewards = st.sampled_from([-3, -2, 0, 1, 2, 3, 4])
params = st.builds(
    LearningParams,
    alpha=st.sampled_from([0.0, 0.25, 0.5, 1.0]),
    gamma=st.sampled_from([0.0, 0.5, 0.9]),
    xi=st.sampled_from([0.0, 1.0, 2.0]),
)


@given(q=q_values, r=rewards, nxt=q_values, p=params)
def test_penalized_is_upper_envelope(q, r, nxt, p):
    v = penalized_update(q, r, nxt, p)
    assert v >= bellman_update(q, r, nxt, p)
    assert v >= q - p.xi


@given(q=q_values, r=rewards, nxt=q_values, p=params, dr=st.integers(0, 5), dn=st.integers(0, 5))
def test_penalized_monotone(q, r, nxt, p, dr, dn):
    assert penalized_update(q, r + dr, nxt, p) >= penalized_update(q, r, nxt, p)
    assert penalized_update(q, r, nxt + dn, p) >= penalized_update(q, r, nxt, p)


@given(q=q_values, r=rewards, nxt=q_values)
def test_zero_penalty_is_max_rule(q, r, nxt):
    p = LearningParams(alpha=1.0, gamma=0.9, xi=0.0)
    b = bellman_update(q, r, nxt, p)
    assert penalized_update(q, r, nxt, p) == max(q, b)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(list(Action)),
                          st.sampled_from([-3, -2, 0])), max_size=40))
def test_non_improving_sequences_leave_policy_untouched(steps):
    # with xi=0 stored values never fall, so non-positive rewards never beat them
    t = QTable(4, LearningParams(alpha=1.0, gamma=0.0, xi=0.0, q_init=0.0), fixed_point=False)
    t.policy = [Action.CCA, Action.SEND, Action.BACKOFF, Action.CCA]
    before = list(t.policy)
    for m, a, r in steps:
        t.update(m, a, r, (m + 1) % 4)
    assert t.policy == before


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(list(Action)), rewards), max_size=60))
def test_values_stay_below_ceiling(steps):
    p = LearningParams()
    for fixed in (True, False):
        t = QTable(4, p, fixed_point=fixed)
        for m, a, r in steps:
            t.update(m, a, r, (m + 1) % 4)
        assert max(max(row) for row in t.as_floats()) <= p.q_ceiling


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(list(Action)), rewards), max_size=60))
def test_fixed_and_float_track_each_other(steps):
    # gamma quantizes to 230/256 and shifts floor, so values differ by a few LSB
    p = LearningParams()
    fx, fl = QTable(4, p, fixed_point=True), QTable(4, p, fixed_point=False)
    for m, a, r in steps:
        fx.update(m, a, r, (m + 1) % 4)
        fl.update(m, a, r, (m + 1) % 4)
    for a_row, b_row in zip(fx.as_floats(), fl.as_floats()):
        for a, b in zip(a_row, b_row):
            assert math.isclose(a, b, abs_tol=0.1)
