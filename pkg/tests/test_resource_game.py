import pytest

from qma.qcore import LearningParams
from qma.resource_game import ACQUIRE, WAIT, convergence_rate, lock_in_rate, play, solo_table


def test_solo_table_starts_in_acquire():
    t = solo_table(3, LearningParams(alpha=1.0, gamma=0.0))
    assert all(a == ACQUIRE for a in t.policy)


def test_collision_without_penalty_never_unlearns():
    p = LearningParams(alpha=1.0, gamma=0.0, xi=0.0)
    t = solo_table(1, p)
    for _ in range(20):
        t.update(0, ACQUIRE, -1, 0)
    assert t.q(0, ACQUIRE) == 1.0
    # waiting while the other agent owns the resource only ties the stored optimum
    t.update(0, WAIT, 1, 0)
    assert t.policy[0] == ACQUIRE


def test_penalty_unlearns_after_idle_slot():
    p = LearningParams(alpha=1.0, gamma=0.0, xi=2.0)
    t = solo_table(1, p)
    t.update(0, ACQUIRE, -1, 0)
    t.update(0, ACQUIRE, -1, 0)
    assert t.q(0, ACQUIRE) == -1.0
    t.update(0, WAIT, 1, 0)
    assert t.policy[0] == WAIT


def test_deterministic_per_seed():
    assert play(2.0, 7).policies == play(2.0, 7).policies


def test_fresh_start_supported():
    r = play(2.0, 1, start="fresh")
    assert r.converged
    with pytest.raises(ValueError):
        play(2.0, 1, start="bogus")


def test_penalty_resolves_lock_in():
    seeds = range(100)
    assert convergence_rate(2.0, seeds) >= 0.95
    assert lock_in_rate(0.0, seeds) >= 0.05
