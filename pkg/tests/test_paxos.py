import pytest
from hypothesis import given, settings, strategies as st

from txcommit import ConfigError, PaxosCommit, PcConfig, explore, random_walk
from txcommit.explorer import replays
from txcommit.paxos import (
    ABORT_MSG, COMMIT_MSG, NO_BALLOT, PcKind, PcMessage, PcValue, Slot,
    check_majorities, maximum, message_type_ok, pc_decide, pc_decided, pc_init, pc_steps,
    phase1a, phase1a_msg, phase1b, phase1b_msg, phase2a, phase2a_msg, phase2b, phase2b_msg,
    rm_choose_abort, rm_prepare, rm_rcv_abort, rm_rcv_commit, slot_ok,
)
from txcommit.tcommit import ABORTED, COMMITTED, PREPARED, WORKING

from oracle import naive_bfs, pc_oracle

P, A = PcValue.PREPARED, PcValue.ABORTED
MAJ3 = PcConfig((0,), 3).majorities


def test_maximum():
    assert maximum([]) == -1
    assert maximum({0, 2, 1}) == 2
    assert maximum({-1, 0}) == 0


def test_init():
    s = pc_init(PcConfig((0,), 1))
    assert s.a_state == ((Slot(0, NO_BALLOT, PcValue.NONE),),)
    s = pc_init(PcConfig((0, 1), 3))
    assert len(s.a_state) == 2 and all(len(r) == 3 for r in s.a_state)
    assert s.msgs == frozenset() and s.rm_state == (WORKING, WORKING)


def test_disjoint_majorities_rejected():
    with pytest.raises(ConfigError):
        PcConfig((0,), 2, majorities=[{0}, {1}])
    with pytest.raises(ConfigError):
        check_majorities([frozenset({0, 5})], 3)


def test_ballots_must_contain_zero():
    with pytest.raises(ConfigError):
        PcConfig((0,), 1, ballots=(1, 2))


def test_rm_actions():
    s = pc_init(PcConfig((0,), 1))
    t = rm_prepare(s, 0)
    assert t.rm_state == (PREPARED,) and phase2a_msg(0, 0, P) in t.msgs
    assert rm_prepare(t, 0) is None
    u = rm_choose_abort(s, 0)
    assert u.rm_state == (ABORTED,) and phase2a_msg(0, 0, A) in u.msgs
    assert rm_choose_abort(s._replace(rm_state=(COMMITTED,)), 0) is None


def test_receive_actions():
    s = pc_init(PcConfig((0,), 1))._replace(rm_state=(PREPARED,), msgs=frozenset({COMMIT_MSG}))
    assert rm_rcv_commit(s, 0).rm_state == (COMMITTED,)
    w = pc_init(PcConfig((0,), 1))._replace(msgs=frozenset({ABORT_MSG}))
    assert rm_rcv_abort(w, 0).rm_state == (ABORTED,)
    done = s._replace(rm_state=(COMMITTED,))
    assert rm_rcv_commit(done, 0) == done


def test_phase1a():
    s = pc_init(PcConfig((0,), 1))
    t = phase1a(s, 1, 0)
    assert phase1a_msg(0, 1) in t.msgs
    assert phase1a(t, 1, 0) == t
    with pytest.raises(ValueError):
        phase1a(s, 0, 0)


def test_phase1b():
    s = phase1a(pc_init(PcConfig((0,), 1)), 1, 0)
    (t,) = phase1b(s, 0)
    assert phase1b_msg(0, 1, NO_BALLOT, PcValue.NONE, 0) in t.msgs
    assert t.a_state[0][0] == Slot(1, NO_BALLOT, PcValue.NONE)
    high = s._replace(a_state=((Slot(2),),))
    assert phase1b(high, 0) == []
    voted = s._replace(a_state=((Slot(0, 0, P),),))
    (u,) = phase1b(voted, 0)
    assert phase1b_msg(0, 1, 0, P, 0) in u.msgs


def _reports(vals):
    msgs = {phase1b_msg(0, 1, b, v, acc) for acc, (b, v) in enumerate(vals)}
    return pc_init(PcConfig((0,), 3))._replace(msgs=frozenset(msgs))


def test_phase2a_free_sends_aborted():
    s = _reports([(NO_BALLOT, PcValue.NONE)] * 3)
    out = phase2a(s, 1, 0, MAJ3, A)
    assert {m.val for t in out for m in t.msgs - s.msgs} == {A}


def test_phase2a_forced_sends_prepared():
    s = _reports([(0, P), (NO_BALLOT, PcValue.NONE), (NO_BALLOT, PcValue.NONE)])
    vals = {m.val for t in phase2a(s, 1, 0, MAJ3, A) for m in t.msgs - s.msgs}
    # majorities containing acceptor 0 are forced; {1, 2} is free
    assert vals == {P, A}
    s2 = _reports([(0, P), (0, P), (NO_BALLOT, PcValue.NONE)])
    assert {m.val for t in phase2a(s2, 1, 0, MAJ3, A) for m in t.msgs - s2.msgs} == {P}


def test_phase2a_disabled_after_first():
    s = _reports([(NO_BALLOT, PcValue.NONE)] * 3)
    s = s._replace(msgs=s.msgs | {phase2a_msg(0, 1, A)})
    assert phase2a(s, 1, 0, MAJ3, A) == []


def test_phase2b():
    s = rm_prepare(pc_init(PcConfig((0,), 1)), 0)
    (t,) = phase2b(s, 0)
    assert t.a_state[0][0] == Slot(0, 0, P) and phase2b_msg(0, 0, 0, P) in t.msgs
    blocked = s._replace(a_state=((Slot(1),),))
    assert phase2b(blocked, 0) == []
    # a later ballot overrides an earlier vote
    later = t._replace(msgs=t.msgs | {phase2a_msg(0, 1, A)})
    outs = phase2b(later, 0)
    assert any(u.a_state[0][0] == Slot(1, 1, A) for u in outs)


def test_decided():
    s = pc_init(PcConfig((0,), 3))
    two = s._replace(msgs=frozenset({phase2b_msg(a, 0, 0, P) for a in (0, 1)}))
    assert pc_decided(two, 0, P, MAJ3)
    one = s._replace(msgs=frozenset({phase2b_msg(0, 0, 0, P)}))
    assert not pc_decided(one, 0, P, MAJ3)
    late = s._replace(msgs=frozenset({phase2b_msg(a, 0, 1, A) for a in (1, 2)}))
    assert pc_decided(late, 0, A, MAJ3)


def test_decide():
    cfg = PcConfig((0, 1), 1)
    s = pc_init(cfg)
    both = s._replace(msgs=frozenset({phase2b_msg(0, 0, 0, P), phase2b_msg(0, 1, 0, P)}))
    assert [COMMIT_MSG in t.msgs for t in pc_decide(both, cfg.majorities)] == [True]
    mixed = s._replace(msgs=frozenset({phase2b_msg(0, 0, 0, P), phase2b_msg(0, 1, 0, A)}))
    assert [ABORT_MSG in t.msgs for t in pc_decide(mixed, cfg.majorities)] == [True]
    assert pc_decide(s, cfg.majorities) == []


def test_initial_successors():
    cfg = PcConfig((0,), 1, (0, 1, 2))
    labels = sorted(label for label, _ in pc_steps(pc_init(cfg), cfg))
    assert labels == ["Phase1a(1,0)", "Phase1a(2,0)", "RMChooseToAbort(0)", "RMPrepare(0)"]


@pytest.mark.parametrize("n,acc,ballots", [
    (1, 1, (0, 1)), (1, 3, (0, 1)), (2, 1, (0, 1)), (1, 1, (0, 1, 2)), (1, 3, (0,)),
])
def test_counts_match_literal_oracle(n, acc, ballots):
    init, succ = pc_oracle(n, acc, ballots)
    seen, depth = naive_bfs(init, succ)
    r = explore(PaxosCommit(n, acc, ballots), refinement=True)
    assert r.ok and r.complete
    assert (r.reachable_count, r.diameter) == (len(seen), depth)


def test_codec_is_injective_on_reachable_states():
    ts = PaxosCommit(2, 1)
    init, succ = [pc_init(ts.cfg)], lambda s: {t for _, t in pc_steps(s, ts.cfg)}
    seen, _ = naive_bfs(init, succ)
    assert len({ts.key(s) for s in seen}) == len(seen)


def test_typed_messages_match_the_type_predicate():
    ts = PaxosCommit(2, 3)
    values = (P, A, PcValue.NONE)
    fields = [(k, i, b, mb, v, a) for k in PcKind for i in range(-1, 3)
              for b in (-1, 0, 1, 2) for mb in (-1, 0, 1, 2) for v in values for a in range(-1, 4)]
    typed = {m for m in map(PcMessage._make, fields)
             if message_type_ok(m, 2, 3, (0, 1), values)}
    assert typed == ts.messages
    # the state codec covers every message a reachable state can hold
    assert set(ts.codec.bit) <= ts.messages


@pytest.mark.parametrize("mutation", PaxosCommit.MUTATIONS)
def test_mutations_are_caught(mutation):
    ts = PaxosCommit(1, 3, (0, 1), mutations=[mutation])
    r = explore(ts, refinement=True)
    assert r.violations, mutation
    assert replays(ts, r.violations[0].trace)


def test_random_walk_finds_mutation():
    ts = PaxosCommit(1, 3, (0, 1, 2), mutations=["drop-majority-intersection"])
    r = random_walk(ts, seed=7, steps=60, walks=3000)
    assert r.violations


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 2), st.sampled_from([1, 3]))
def test_slot_and_message_properties_on_random_paths(seed, n, acc):
    import random
    ts = PaxosCommit(n, acc)
    rng = random.Random(seed)
    (s,) = ts.initial()
    for _ in range(40):
        assert all(name and pred(s) for name, pred in ts.invariants)
        assert all(slot_ok(x, ts.cfg.ballots) for row in s.a_state for x in row)
        succ = sorted(ts.successors(s), key=ts.key)
        if not succ:
            break
        t = rng.choice(succ)
        assert s.msgs <= t.msgs
        assert all(pred(s, t) for _, pred in ts.edge_invariants)
        s = t
