"""Two-Phase Commit as a transition system.

RMs prepare spontaneously and the TM's Prepare messages are not modelled;
an RM that aborts on its own sends nothing.  ``msgs`` is the set of every
message ever sent, so receiving a message never consumes it.
"""
from __future__ import annotations

import enum
from typing import Iterable, NamedTuple

from .errors import ConfigError
from .system import TransitionSystem
from .tcommit import (
    ABORTED, COMMITTED, PREPARED, WORKING, RmState, TCommit, TcState, rm_ids,
    stable, tc_consistent, tc_type_ok,
)


class TmState(enum.IntEnum):
    INIT = 0
    COMMITTED = 1
    ABORTED = 2


class TpKind(enum.IntEnum):
    PREPARED = 0
    COMMIT = 1
    ABORT = 2


class TpMessage(NamedTuple):
    kind: TpKind
    rm: int = -1  # only meaningful for PREPARED


def prepared_msg(rm: int) -> TpMessage:
    return TpMessage(TpKind.PREPARED, rm)


COMMIT_MSG = TpMessage(TpKind.COMMIT)
ABORT_MSG = TpMessage(TpKind.ABORT)


class TpState(NamedTuple):
    rm_state: tuple[RmState, ...]
    tm_state: TmState
    tm_prepared: frozenset[int]
    msgs: frozenset[TpMessage]


MUTATIONS = ("drop-tmcommit-guard",)


def tp_init(rms: int | Iterable[int]) -> TpState:
    n = len(rm_ids(rms))
    return TpState((WORKING,) * n, TmState.INIT, frozenset(), frozenset())


def _with_rm(s: TpState, rm: int, value: RmState) -> tuple:
    return s.rm_state[:rm] + (value,) + s.rm_state[rm + 1:]


def tm_rcv_prepared(s: TpState, rm: int) -> TpState | None:
    if s.tm_state != TmState.INIT or prepared_msg(rm) not in s.msgs:
        return None
    return s._replace(tm_prepared=s.tm_prepared | {rm})


def tm_commit(s: TpState, guarded: bool = True) -> TpState | None:
    if s.tm_state != TmState.INIT:
        return None
    if guarded and len(s.tm_prepared) != len(s.rm_state):
        return None
    return s._replace(tm_state=TmState.COMMITTED, msgs=s.msgs | {COMMIT_MSG})


def tm_abort(s: TpState) -> TpState | None:
    if s.tm_state != TmState.INIT:
        return None
    return s._replace(tm_state=TmState.ABORTED, msgs=s.msgs | {ABORT_MSG})


def rm_prepare(s: TpState, rm: int) -> TpState | None:
    if s.rm_state[rm] != WORKING:
        return None
    return s._replace(rm_state=_with_rm(s, rm, PREPARED), msgs=s.msgs | {prepared_msg(rm)})


def rm_choose_to_abort(s: TpState, rm: int) -> TpState | None:
    if s.rm_state[rm] != WORKING:
        return None
    return s._replace(rm_state=_with_rm(s, rm, ABORTED))


def rm_rcv_commit(s: TpState, rm: int) -> TpState | None:
    if COMMIT_MSG not in s.msgs:
        return None
    return s._replace(rm_state=_with_rm(s, rm, COMMITTED))


def rm_rcv_abort(s: TpState, rm: int) -> TpState | None:
    if ABORT_MSG not in s.msgs:
        return None
    return s._replace(rm_state=_with_rm(s, rm, ABORTED))


_RM_ACTIONS = (
    ("TMRcvPrepared", tm_rcv_prepared),
    ("RMPrepare", rm_prepare),
    ("RMChooseToAbort", rm_choose_to_abort),
    ("RMRcvCommitMsg", rm_rcv_commit),
    ("RMRcvAbortMsg", rm_rcv_abort),
)


def tp_steps(s: TpState, guarded: bool = True):
    t = tm_commit(s, guarded)
    if t is not None:
        yield "TMCommit", t
    t = tm_abort(s)
    if t is not None:
        yield "TMAbort", t
    for rm in range(len(s.rm_state)):
        for label, action in _RM_ACTIONS:
            t = action(s, rm)
            if t is not None:
                yield f"{label}({rm})", t


def tp_successors(s: TpState) -> frozenset[TpState]:
    return frozenset(t for _, t in tp_steps(s))


def tp_abstract(s: TpState) -> TcState:
    return TcState(s.rm_state)


def tp_type_ok(s: TpState) -> bool:
    n = len(s.rm_state)
    return (
        tc_type_ok(TcState(s.rm_state))
        and isinstance(s.tm_state, TmState)
        and all(0 <= rm < n for rm in s.tm_prepared)
        and all(
            isinstance(m.kind, TpKind) and ((m.kind == TpKind.PREPARED) == (0 <= m.rm < n))
            for m in s.msgs
        )
    )


def commit_implies_all_prepared(s: TpState) -> bool:
    if COMMIT_MSG not in s.msgs:
        return True
    return all(prepared_msg(rm) in s.msgs for rm in range(len(s.rm_state)))


def monotone(s: TpState, t: TpState) -> bool:
    return s.msgs <= t.msgs and s.tm_prepared <= t.tm_prepared


class TwoPhase(TransitionSystem):
    name = "twophase"
    invariants = (
        ("TPTypeOK", tp_type_ok),
        ("TCConsistent", lambda s: tc_consistent(tp_abstract(s))),
        ("CommitImpliesAllPrepared", commit_implies_all_prepared),
    )
    edge_invariants = (
        ("Stability", lambda s, t: stable(tp_abstract(s), tp_abstract(t))),
        ("MonotoneMsgs", monotone),
    )

    def __init__(self, rms: int | Iterable[int], mutations: Iterable[str] = ()):
        self.rms = rm_ids(rms)
        self.mutations = frozenset(mutations)
        unknown = self.mutations - set(MUTATIONS)
        if unknown:
            raise ConfigError(f"unknown two-phase mutation(s): {sorted(unknown)}")
        self._guarded = "drop-tmcommit-guard" not in self.mutations
        self.abstract_system = TCommit(self.rms)

    def initial(self):
        return [tp_init(self.rms)]

    def steps(self, state):
        return tp_steps(state, self._guarded)

    def abstract(self, state):
        return tp_abstract(state)

    def config(self):
        return {"model": self.name, "rms": len(self.rms), "mutations": sorted(self.mutations)}
