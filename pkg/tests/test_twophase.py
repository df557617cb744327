import pytest
from hypothesis import given, settings, strategies as st

from txcommit import TwoPhase, explore, random_walk
from txcommit.explorer import replays
from txcommit.tcommit import COMMITTED, PREPARED, WORKING, TcState, tc_consistent, tc_successors
from txcommit.twophase import (
    ABORT_MSG, COMMIT_MSG, TmState, TpState, commit_implies_all_prepared, prepared_msg,
    tp_abstract, tp_init, tp_steps, tp_successors, tp_type_ok,
)

from oracle import naive_bfs, tp_oracle


def test_init_examples():
    assert tp_init([0]) == TpState((WORKING,), TmState.INIT, frozenset(), frozenset())
    assert tp_init(6).rm_state == (WORKING,) * 6


def test_tm_commit_enabled_when_all_prepared():
    s = TpState((PREPARED,), TmState.INIT, frozenset({0}), frozenset({prepared_msg(0)}))
    labels = {label: t for label, t in tp_steps(s)}
    assert COMMIT_MSG in labels["TMCommit"].msgs
    assert labels["TMCommit"].tm_state == TmState.COMMITTED


def test_no_abort_after_commit():
    s = TpState((PREPARED,), TmState.COMMITTED, frozenset({0}),
                frozenset({prepared_msg(0), COMMIT_MSG}))
    assert not any(label == "TMAbort" for label, _ in tp_steps(s))


def test_abstract_projects_rm_state():
    assert tp_abstract(tp_init(2)) == TcState((WORKING, WORKING))
    s = tp_init(2)._replace(rm_state=(COMMITTED, PREPARED))
    assert tp_abstract(s).rm_state[0] == COMMITTED


def test_receive_is_not_guarded_by_rm_state():
    # the model lets an RM act on a Commit message whatever its state
    s = tp_init(1)._replace(msgs=frozenset({ABORT_MSG}))
    assert any(label == "RMRcvAbortMsg(0)" for label, _ in tp_steps(s))


@pytest.mark.parametrize("n", range(1, 5))
def test_counts_match_literal_oracle(n):
    init, succ = tp_oracle(n)
    seen, depth = naive_bfs(init, succ)
    r = explore(TwoPhase(n))
    assert (r.reachable_count, r.diameter) == (len(seen), depth)


@pytest.mark.parametrize("n", range(1, 6))
def test_safety_and_refinement(n):
    r = explore(TwoPhase(n), refinement=True)
    assert r.ok and r.complete


def test_mutation_breaks_consistency_with_short_trace():
    ts = TwoPhase(3, mutations=["drop-tmcommit-guard"])
    ts.invariants = [("TCConsistent", lambda s: tc_consistent(tp_abstract(s)))]
    ts.edge_invariants = []
    r = explore(ts)
    (v,) = r.violations
    assert v.name == "TCConsistent"
    assert replays(ts, v.trace)
    # TMCommit, an RM aborts on its own, another RM commits
    assert len(v.trace) == 4


@st.composite
def walks(draw):
    n = draw(st.integers(1, 4))
    picks = draw(st.lists(st.integers(0, 1000), max_size=30))
    s = tp_init(n)
    path = [s]
    for p in picks:
        succ = sorted(tp_successors(s))
        if not succ:
            break
        s = succ[p % len(succ)]
        path.append(s)
    return path


@settings(max_examples=200)
@given(walks())
def test_invariants_along_random_paths(path):
    for s, t in zip(path, path[1:]):
        assert s.msgs <= t.msgs and s.tm_prepared <= t.tm_prepared
        a, b = tp_abstract(s), tp_abstract(t)
        assert a == b or b in tc_successors(a)
    for s in path:
        assert tp_type_ok(s) and commit_implies_all_prepared(s)
        assert tc_consistent(tp_abstract(s))


def test_random_walk_clean():
    r = random_walk(TwoPhase(4), seed=3, steps=40, walks=50, refinement=True)
    assert r.ok and r.mode == "random-walk"
