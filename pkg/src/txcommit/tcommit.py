"""The abstract transaction-commit specification.

Each resource manager (RM) moves from ``working`` to ``prepared`` and then
to ``committed`` or ``aborted``; a ``working`` RM may also abort directly.
This module is the oracle both protocols are refinement-checked against.
"""
from __future__ import annotations

import enum
from typing import Iterable, Iterator, NamedTuple

from .errors import ConfigError
from .system import TransitionSystem


class RmState(enum.IntEnum):
    WORKING = 0
    PREPARED = 1
    COMMITTED = 2
    ABORTED = 3


WORKING, PREPARED, COMMITTED, ABORTED = RmState


class TcState(NamedTuple):
    """``rm_state[rm]`` is the state of RM ``rm``; RMs are ``0..N-1``."""

    rm_state: tuple[RmState, ...]


def rm_ids(rms: int | Iterable[int]) -> tuple[int, ...]:
    """Normalise an RM count or id collection to the canonical ``0..N-1``."""
    if isinstance(rms, int):
        ids = tuple(range(rms))
    else:
        ids = tuple(sorted(rms))
        if ids != tuple(range(len(ids))):
            raise ConfigError(f"RM ids must be distinct integers 0..N-1, got {ids}")
    if not ids:
        raise ConfigError("the RM set must be nonempty")
    return ids


def tc_init(rms: int | Iterable[int]) -> TcState:
    return TcState((WORKING,) * len(rm_ids(rms)))


def can_commit(s: TcState) -> bool:
    """True iff every RM is prepared or committed."""
    return all(r in (PREPARED, COMMITTED) for r in s.rm_state)


def not_committed(s: TcState) -> bool:
    return COMMITTED not in s.rm_state


def tc_type_ok(s: TcState) -> bool:
    return isinstance(s.rm_state, tuple) and all(isinstance(r, RmState) for r in s.rm_state)


def tc_consistent(s: TcState) -> bool:
    """No RM has aborted while another has committed."""
    return not (ABORTED in s.rm_state and COMMITTED in s.rm_state)


def _set(rm_state: tuple, rm: int, value: RmState) -> tuple:
    return rm_state[:rm] + (value,) + rm_state[rm + 1:]


def prepare(s: TcState, rm: int) -> TcState | None:
    if s.rm_state[rm] != WORKING:
        return None
    return TcState(_set(s.rm_state, rm, PREPARED))


def decide_commit(s: TcState, rm: int) -> TcState | None:
    if s.rm_state[rm] != PREPARED or not can_commit(s):
        return None
    return TcState(_set(s.rm_state, rm, COMMITTED))


def decide_abort(s: TcState, rm: int) -> TcState | None:
    if s.rm_state[rm] not in (WORKING, PREPARED) or not not_committed(s):
        return None
    return TcState(_set(s.rm_state, rm, ABORTED))


def tc_steps(s: TcState) -> Iterator[tuple[str, TcState]]:
    for rm in range(len(s.rm_state)):
        for label, action in (("Prepare", prepare), ("DecideCommit", decide_commit),
                              ("DecideAbort", decide_abort)):
            t = action(s, rm)
            if t is not None:
                yield f"{label}({rm})", t


def tc_successors(s: TcState) -> frozenset[TcState]:
    return frozenset(t for _, t in tc_steps(s))


def stable(s: TcState, t: TcState) -> bool:
    """Committed and aborted RMs keep their state across the step ``s -> t``."""
    if s.rm_state is t.rm_state:
        return True
    return all(a == b for a, b in zip(s.rm_state, t.rm_state) if a in (COMMITTED, ABORTED))


def commit_guarded(s: TcState, t: TcState) -> bool:
    """An RM only becomes committed when every RM was prepared or committed."""
    newly = any(a != COMMITTED and b == COMMITTED for a, b in zip(s.rm_state, t.rm_state))
    return not newly or can_commit(s)


class TCommit(TransitionSystem):
    """Transaction commit over ``n`` RMs.

    ``abstract`` is the identity, so refinement of this system into itself
    is trivially satisfied.
    """

    name = "tcommit"
    invariants = (("TCTypeOK", tc_type_ok), ("TCConsistent", tc_consistent))
    edge_invariants = (("Stability", stable), ("CommitAfterAllPrepared", commit_guarded))

    def __init__(self, rms: int | Iterable[int]):
        self.rms = rm_ids(rms)
        self.abstract_system = self

    def initial(self):
        return [tc_init(self.rms)]

    def steps(self, state):
        return tc_steps(state)

    def abstract(self, state):
        return state

    def config(self):
        return {"model": self.name, "rms": len(self.rms)}
