import pytest
from hypothesis import given, strategies as st

from txcommit import ConfigError, TCommit, explore
from txcommit.tcommit import (
    ABORTED, COMMITTED, PREPARED, WORKING, RmState, TcState, can_commit, commit_guarded,
    not_committed, rm_ids, stable, tc_consistent, tc_init, tc_successors,
)

states = st.lists(st.sampled_from(list(RmState)), min_size=1, max_size=5).map(
    lambda xs: TcState(tuple(xs)))


def S(*xs):
    return TcState(tuple(xs))


def test_init_examples():
    assert tc_init([0]) == S(WORKING)
    assert tc_init([0, 1]) == S(WORKING, WORKING)
    assert tc_init(6) == TcState((WORKING,) * 6)


@pytest.mark.parametrize("bad", [[], [1], [0, 2], 0])
def test_init_rejects_bad_rm_sets(bad):
    with pytest.raises(ConfigError):
        tc_init(bad)


def test_rm_ids_sorts():
    assert rm_ids({2, 0, 1}) == (0, 1, 2)


def test_can_commit():
    assert can_commit(S(PREPARED, PREPARED))
    assert not can_commit(S(WORKING, PREPARED, PREPARED))
    assert can_commit(S(PREPARED, COMMITTED))


def test_not_committed():
    assert not_committed(S(WORKING, WORKING))
    assert not not_committed(S(COMMITTED, PREPARED))
    assert not_committed(S(ABORTED, ABORTED))


def test_successor_examples():
    assert tc_successors(S(PREPARED)) == {S(COMMITTED), S(ABORTED)}
    assert tc_successors(S(COMMITTED, PREPARED)) == {S(COMMITTED, COMMITTED)}
    assert len(tc_successors(S(WORKING, WORKING))) == 4


def test_consistency_examples():
    assert not tc_consistent(S(COMMITTED, ABORTED))
    assert tc_consistent(S(COMMITTED, COMMITTED))
    assert tc_consistent(S(WORKING, WORKING))


@pytest.mark.parametrize("n,count", [(1, 4), (2, 12)])
def test_reachable_counts(n, count):
    r = explore(TCommit(n), refinement=True)
    assert r.ok and r.complete and r.reachable_count == count


def test_two_rm_lattice_by_hand():
    # all 16 pairs except a commit next to a working or aborted RM
    from itertools import product
    bad = {(COMMITTED, WORKING), (WORKING, COMMITTED), (COMMITTED, ABORTED), (ABORTED, COMMITTED)}
    expected = {S(*p) for p in product(RmState, repeat=2) if p not in bad}
    from oracle import naive_bfs
    seen, _ = naive_bfs([tc_init(2)], tc_successors)
    assert seen == expected


@given(states)
def test_successors_are_stable_and_guarded(s):
    for t in tc_successors(s):
        assert stable(s, t)
        assert commit_guarded(s, t)
        assert sum(a != b for a, b in zip(s.rm_state, t.rm_state)) == 1


@given(states)
def test_consistency_is_preserved(s):
    if tc_consistent(s):
        assert all(tc_consistent(t) for t in tc_successors(s))


@pytest.mark.parametrize("n", range(1, 7))
def test_invariants_hold_up_to_six(n):
    assert explore(TCommit(n)).ok
