import pytest
from hypothesis import given, settings, strategies as st

from txcommit import ConfigError, RegistrationClosed, Registrar, explore, random_walk
from txcommit.explorer import replays
from txcommit.paxos import COMMIT_MSG, PcConfig, PcValue, phase1b_msg, phase2a_msg, phase2b_msg
from txcommit.registrar import (
    BOTTOM, Outcome, joined_set, reg_close, reg_init, reg_join, reg_leader_recover,
    reg_outcome, reg_values,
)

CFG = PcConfig((0, 1), 3)
P, A = PcValue.PREPARED, PcValue.ABORTED


def test_join_and_close():
    s = reg_join(reg_init(CFG), 1)
    assert s.joined == {1}
    assert reg_join(s, 1) == s
    c = reg_close(reg_join(s, 0))
    assert c.closed and phase2a_msg(2, 0, joined_set({0, 1})) in c.msgs
    with pytest.raises(RegistrationClosed):
        reg_join(c, 0)
    assert reg_close(c) == c


def test_close_with_nobody_joined():
    c = reg_close(reg_init(CFG))
    assert phase2a_msg(2, 0, joined_set(())) in c.msgs


def _with(s, msgs):
    return s._replace(msgs=s.msgs | set(msgs))


def test_recovery_free_case_proposes_bottom():
    s = reg_init(CFG)
    s = _with(s, [phase1b_msg(2, 1, -1, PcValue.NONE, a) for a in range(3)])
    vals = {m.val for t in reg_leader_recover(s, 1, CFG) for m in t.msgs - s.msgs
            if m.kind.name == "PHASE2A"}
    assert vals == {BOTTOM}


def test_recovery_forced_case_keeps_the_set():
    s = reg_init(CFG)
    S = joined_set({0})
    s = _with(s, [phase1b_msg(2, 1, 0, S, 0), phase1b_msg(2, 1, 0, S, 1),
                  phase1b_msg(2, 1, -1, PcValue.NONE, 2)])
    vals = {m.val for t in reg_leader_recover(s, 1, CFG) for m in t.msgs - s.msgs
            if m.kind.name == "PHASE2A"}
    assert S in vals


def test_recovery_second_2a_disabled():
    s = reg_init(CFG)
    s = _with(s, [phase1b_msg(2, 1, -1, PcValue.NONE, a) for a in range(3)]
              + [phase2a_msg(2, 1, BOTTOM)])
    assert not any(m.kind.name == "PHASE2A" for t in reg_leader_recover(s, 1, CFG)
                   for m in t.msgs - s.msgs)
    with pytest.raises(ValueError):
        reg_leader_recover(s, 0, CFG)


def test_outcomes():
    s = reg_init(CFG)
    maj = CFG.majorities
    S = joined_set({0, 1})
    votes = [phase2b_msg(a, 2, 0, S) for a in (0, 1)]
    both = votes + [phase2b_msg(a, i, 0, P) for a in (0, 1) for i in (0, 1)]
    assert reg_outcome(_with(s, both), maj) is Outcome.COMMITTED
    bottom = [phase2b_msg(a, 2, 1, BOTTOM) for a in (1, 2)]
    assert reg_outcome(_with(s, bottom), maj) is Outcome.ABORTED
    vacuous = [phase2b_msg(a, 2, 0, joined_set(())) for a in (0, 1)]
    assert reg_outcome(_with(s, vacuous), maj) is Outcome.COMMITTED
    assert reg_outcome(_with(s, votes), maj) is Outcome.UNDECIDED
    one_aborts = votes + [phase2b_msg(a, 1, 0, A) for a in (0, 1)]
    assert reg_outcome(_with(s, one_aborts), maj) is Outcome.ABORTED


def test_values():
    assert reg_values(2) == [joined_set(()), joined_set({0}), joined_set({1}),
                             joined_set({0, 1}), BOTTOM]


def test_vacuous_commit_is_reported():
    assert any("vacuously" in n for n in Registrar(1, 1).notes)


def test_refinement_not_offered():
    with pytest.raises(ConfigError):
        explore(Registrar(1, 1), refinement=True)


@pytest.mark.parametrize("n,acc", [(1, 1), (2, 1)])
def test_small_configs_are_safe(n, acc):
    r = explore(Registrar(n, acc))
    assert r.ok and r.complete


def test_small_config_count_baseline():
    # regression baselines from exact runs
    assert explore(Registrar(1, 1)).reachable_count == 665
    assert explore(Registrar(2, 1)).reachable_count == 22675


def test_mutation_caught_with_replayable_trace():
    ts = Registrar(2, 1, mutations=["registrar-free-joined"])
    r = explore(ts)
    (v,) = r.violations
    assert replays(ts, v.trace)


def test_random_walks_on_target_config():
    r = random_walk(Registrar(2, 3), seed=11, steps=80, walks=200)
    assert r.ok


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_outcome_monotone_on_random_paths(seed):
    import random
    ts = Registrar(2, 3)
    rng = random.Random(seed)
    (s,) = ts.initial()
    seen = Outcome.UNDECIDED
    for _ in range(60):
        o = ts.outcome(s)
        assert seen is Outcome.UNDECIDED or o is seen
        seen = o
        if COMMIT_MSG in s.msgs:
            assert o is Outcome.COMMITTED
            (v,) = ts.chosen(s)[2]
            assert all(phase2a_msg(rm, 0, P) in s.msgs for rm in v.rms)
        succ = sorted(ts.successors(s), key=ts.key)
        if not succ:
            break
        s = rng.choice(succ)
