import pytest

from qma.qcore import Action
from qma.replay import CHECKPOINTS, FINAL_POLICY, format_tables, replay

# full Q tables after each frame: node -> subslot -> (QBackoff, QCCA, QSend)
FROZEN = [
    [[[-10, -10, -6], [-10, -10, -10], [-10, -10, -12], [-4, -10, -10]],
     [[-10, -9, -10], [-10, -10, -10], [-10, -10, -12], [-10, -10, -5]],
     [[-8, -12, -12], [-10, -10, -10], [-10, -12, -12], [-6, -10, -11]]],
    [[[-10, -10, -6], [-8, -10, -10], [-4, -10, -12], [-4, -10, -10]],
     [[-10, -9, -10], [-8, -10, -10], [-5, -10, -12], [-10, -10, -5]],
     [[-8, -12, -12], [-10, -7, -10], [-6, -12, -12], [-6, -10, -11]]],
    [[[-10, -10, -4], [-2, -10, -10], [-4, -10, -12], [-2, -10, -10]],
     [[-10, -7, -10], [-3, -10, -10], [-5, -10, -12], [-10, -10, -3]],
     [[-5, -12, -12], [-10, -3, -10], [-6, -12, -12], [-3, -10, -11]]],
]
POLICIES = [("SBBB", "CBBS", "BBBB"), ("SBBB", "CBBS", "BCBB"), ("SBBB", "CBBS", "BCBB")]


@pytest.fixture(scope="module", params=[True, False], ids=["fixed", "float"])
def result(request):
    return replay(request.param)


def test_full_tables(result):
    assert result.snapshots == FROZEN


def test_policies(result):
    got = [tuple("".join(Action(a).short for a in node) for node in frame)
           for frame in result.policies]
    assert got == POLICIES
    assert tuple(tuple(p) for p in result.policies[-1]) == FINAL_POLICY


def test_checkpoints(result):
    assert result.mismatches() == []
    assert len(CHECKPOINTS) == 23


def test_rewards_are_from_the_table(result):
    assert {r for *_, r in result.rewards} <= {2, 0, 3, -2, 1, 4, -3}
    # frame 1: n1 and n2 both send in subslot 3 and collide
    assert (0, 0, 2, Action.SEND, -3) in result.rewards
    assert (0, 1, 2, Action.SEND, -3) in result.rewards
    # n3's forced CCA in frame 2 subslot 2 succeeds
    assert (1, 2, 1, Action.CCA, 3) in result.rewards


def test_format_mentions_every_frame(result):
    text = format_tables(result)
    assert text.count("after frame") == 3
    assert "n3: s1 -5/-12/-12 [B]" in text
