"""Dynamic membership: Paxos Commit with a registrar instance.

RMs join a transaction through the registrar before they may prepare.
When the registrar closes registration it proposes the joined set ``S``
as the ballot-0 value of an extra Paxos instance, numbered ``n`` (after
the RM instances).  A leader that finds that instance free proposes the
failure value :data:`BOTTOM` instead.  The transaction commits iff the
registrar instance chose some ``S`` and every RM in ``S`` chose prepared.
"""
from __future__ import annotations

import enum
import itertools
from typing import Iterable, NamedTuple

from .errors import ConfigError, RegistrationClosed
from .paxos import (
    ABORT_MSG, COMMIT_MSG, MessageCodec, PcConfig, PcState, PcValue, Slot, _index,
    _label, _with_rm, chosen_from_votes, instance_steps, phase2a_msg, slot_ok,
    slots_monotone, typed_messages, unique_phase2a,
)
from .system import TransitionSystem
from .tcommit import (
    ABORTED, COMMITTED, PREPARED, WORKING, RmState, TcState, rm_ids, stable,
    tc_consistent, tc_type_ok,
)


class RegValue(NamedTuple):
    """A registrar decision: a joined set, or the failure value."""

    bottom: bool
    rms: frozenset[int] = frozenset()


def joined_set(rms: Iterable[int]) -> RegValue:
    return RegValue(False, frozenset(rms))


BOTTOM = RegValue(True)


class Outcome(enum.Enum):
    COMMITTED = "committed"
    ABORTED = "aborted"
    UNDECIDED = "undecided"


class RegState(NamedTuple):
    rm_state: tuple[RmState, ...]
    a_state: tuple[tuple[Slot, ...], ...]  # rows 0..n-1 for RMs, row n for the registrar
    msgs: frozenset
    joined: frozenset[int]
    closed: bool


def reg_init(cfg: PcConfig) -> RegState:
    row = (Slot(),) * cfg.acceptors
    return RegState((WORKING,) * cfg.n, (row,) * (cfg.n + 1), frozenset(), frozenset(), False)


def reg_join(s: RegState, rm: int) -> RegState:
    """Add ``rm`` to the joined set; fails once registration has closed."""
    if s.closed:
        raise RegistrationClosed(f"RM {rm} cannot join: registration is closed")
    if rm in s.joined:
        return s
    return s._replace(joined=s.joined | {rm})


def reg_close(s: RegState) -> RegState:
    """Close registration and propose the joined set at ballot 0."""
    if s.closed:
        return s
    n = len(s.rm_state)
    return s._replace(closed=True, msgs=s.msgs | {phase2a_msg(n, 0, joined_set(s.joined))})


def _free_value(n: int):
    def free(ins: int):
        return BOTTOM if ins == n else PcValue.ABORTED
    return free


def reg_leader_recover(s: RegState, bal: int, cfg: PcConfig) -> list[RegState]:
    """Leader and acceptor steps of ballot ``bal`` on the registrar instance.

    Phase 1a/2a are those of :func:`~txcommit.paxos.instance_steps` with
    Bottom as the free value; acceptor steps are kept when they move the
    registrar slot to ballot ``bal``.
    """
    if bal < 1:
        raise ValueError("recovery ballots start at 1")
    n = cfg.n
    out = []
    for label, t in instance_steps(s, [n], [bal], cfg.acceptors, cfg.majorities,
                                   _free_value(n)):
        if t is s:
            continue
        if label.startswith(("Phase1a", "Phase2a")):
            out.append(t)
        elif t.a_state[n] != s.a_state[n] and any(x.mbal == bal for x in t.a_state[n]):
            out.append(t)
    return out


def registrar_choice(msgs, n: int, majorities) -> set:
    """Values chosen so far by the registrar instance."""
    return chosen_from_votes(_index(msgs)[3], n, majorities)


def _outcome(chosen: list[set], n: int) -> Outcome:
    reg = chosen[n]
    if len(reg) != 1:
        return Outcome.UNDECIDED
    (v,) = reg
    if v.bottom:
        return Outcome.ABORTED
    if any(PcValue.ABORTED in chosen[rm] for rm in v.rms):
        return Outcome.ABORTED
    if all(PcValue.PREPARED in chosen[rm] for rm in v.rms):
        return Outcome.COMMITTED
    return Outcome.UNDECIDED


def _chosen_all(msgs, n: int, majorities) -> list[set]:
    voted = _index(msgs)[3]
    return [chosen_from_votes(voted, ins, majorities) for ins in range(n + 1)]


def reg_outcome(s: RegState, majorities) -> Outcome:
    """Committed, aborted or still undecided, judged from the chosen values."""
    n = len(s.rm_state)
    return _outcome(_chosen_all(s.msgs, n, majorities), n)


def reg_steps(s: RegState, cfg: PcConfig, mutations: frozenset = frozenset()):
    n = cfg.n
    rm_state, a_state, msgs, joined, closed = s
    has_commit, has_abort = COMMIT_MSG in msgs, ABORT_MSG in msgs
    for rm in range(n):
        if not closed and rm not in joined:
            yield _label("Join", rm), RegState(rm_state, a_state, msgs, joined | {rm}, closed)
        if rm not in joined:
            continue
        r = rm_state[rm]
        if r == WORKING:
            yield _label("RMPrepare", rm), RegState(
                _with_rm(rm_state, rm, PREPARED), a_state,
                msgs | {phase2a_msg(rm, 0, PcValue.PREPARED)}, joined, closed)
            yield _label("RMChooseToAbort", rm), RegState(
                _with_rm(rm_state, rm, ABORTED), a_state,
                msgs | {phase2a_msg(rm, 0, PcValue.ABORTED)}, joined, closed)
        if has_commit:
            yield _label("RMRcvCommitMsg", rm), s if r == COMMITTED else RegState(
                _with_rm(rm_state, rm, COMMITTED), a_state, msgs, joined, closed)
        if has_abort:
            yield _label("RMRcvAbortMsg", rm), s if r == ABORTED else RegState(
                _with_rm(rm_state, rm, ABORTED), a_state, msgs, joined, closed)
    if not closed:
        yield "Close", reg_close(s)
    index = _index(msgs)
    if index[3]:
        chosen = [chosen_from_votes(index[3], ins, cfg.majorities) for ins in range(n + 1)]
        outcome = _outcome(chosen, n)
        if outcome is Outcome.COMMITTED:
            yield "Decide", s if has_commit else RegState(
                rm_state, a_state, msgs | {COMMIT_MSG}, joined, closed)
        elif outcome is Outcome.ABORTED:
            yield "Decide", s if has_abort else RegState(
                rm_state, a_state, msgs | {ABORT_MSG}, joined, closed)
    yield from instance_steps(s, range(n + 1), cfg.ballots, cfg.acceptors, cfg.majorities,
                              _free_value(n), mutations, index,
                              lambda a, m: RegState(rm_state, a, m, joined, closed))


def reg_values(n: int) -> list[RegValue]:
    """Every registrar value: each subset of the RMs, then Bottom."""
    subsets = [joined_set(c) for k in range(n + 1) for c in itertools.combinations(range(n), k)]
    return subsets + [BOTTOM]


class Registrar(TransitionSystem):
    """Paxos Commit over a dynamic RM set chosen by a registrar instance.

    Only RMs that have joined may prepare, abort or learn the outcome.  An
    RM that never joins stays ``working``, so this model is not checked for
    refinement into the fixed-membership TCommit model.
    """

    name = "registrar"
    notes = (
        "RMChooseToAbort always sends the ballot-0 'aborted' phase 2a message",
        "warning: Close may fire with no RM joined; the registrar then proposes the"
        " empty set and the transaction commits vacuously",
    )
    MUTATIONS = ("registrar-free-joined",)

    def __init__(self, rms: int | Iterable[int], acceptors: int = 3,
                 ballots: Iterable[int] = (0, 1), majorities=None,
                 mutations: Iterable[str] = ()):
        self.mutations = frozenset(mutations)
        unknown = self.mutations - set(self.MUTATIONS)
        if unknown:
            raise ConfigError(f"unknown registrar mutation(s): {sorted(unknown)}")
        self.cfg = PcConfig(rm_ids(rms), acceptors, tuple(ballots), majorities)
        n = self.cfg.n
        values = [(PcValue.PREPARED, PcValue.ABORTED)] * n + [reg_values(n)]
        self.codec = MessageCodec(n, values, acceptors, self.cfg.ballots,
                                  extra_radix=2 ** (n + 1))
        self.messages = typed_messages(values, acceptors, self.cfg.ballots)
        self.invariants = (
            ("RegTypeOK", self.type_ok),
            ("TCConsistent", lambda s: tc_consistent(TcState(s.rm_state))),
            ("UniquePhase2a", unique_phase2a),
            ("ConsensusSafety", self.consensus_safe),
            ("OnlyJoinedRMsAct", self.only_joined_act),
            ("CommitImpliesJoinedChosePrepared", self.commit_justified),
        )
        self.edge_invariants = (
            ("Stability", lambda s, t: stable(TcState(s.rm_state), TcState(t.rm_state))),
            ("SlotMonotone", slots_monotone),
            ("JoinedFrozenAfterClose", self.joined_monotone),
            ("OutcomeMonotone", self.outcome_monotone),
        )

    def initial(self):
        return [reg_init(self.cfg)]

    def steps(self, state):
        if "registrar-free-joined" in self.mutations:
            return self._mutant_steps(state)
        return reg_steps(state, self.cfg)

    def _mutant_steps(self, s):
        # a leader that finds the registrar instance free proposes the current
        # joined set instead of Bottom, so joins after a stalled close leak in
        n = self.cfg.n
        for label, t in reg_steps(s, self.cfg):
            if label.startswith("Phase2a") and label.endswith(f",{n})"):
                extra = t.msgs - s.msgs
                (m,) = extra
                if m.val == BOTTOM:
                    t = t._replace(msgs=s.msgs | {phase2a_msg(n, m.bal, joined_set(s.joined))})
            yield label, t

    def key(self, s):
        extra = sum(1 << rm for rm in s.joined) * 2 + s.closed
        return self.codec.key(s.rm_state, s.a_state, s.msgs, extra)

    def chosen(self, s: RegState) -> list[set]:
        return _chosen_all(s.msgs, self.cfg.n, self.cfg.majorities)

    def outcome(self, s: RegState) -> Outcome:
        return _outcome(self.chosen(s), self.cfg.n)

    def type_ok(self, s: RegState) -> bool:
        cfg = self.cfg
        return (
            tc_type_ok(TcState(s.rm_state))
            and len(s.a_state) == cfg.n + 1
            and all(len(row) == cfg.acceptors and all(slot_ok(x, cfg.ballots) for x in row)
                    for row in s.a_state)
            and s.msgs <= self.messages
            and s.joined <= set(cfg.rms)
            and isinstance(s.closed, bool)
        )

    def consensus_safe(self, s: RegState) -> bool:
        return all(len(c) <= 1 for c in self.chosen(s))

    def only_joined_act(self, s: RegState) -> bool:
        return all(r == WORKING or rm in s.joined for rm, r in enumerate(s.rm_state))

    def commit_justified(self, s: RegState) -> bool:
        if COMMIT_MSG not in s.msgs:
            return True
        reg = self.chosen(s)[self.cfg.n]
        if len(reg) != 1:
            return False
        (v,) = reg
        return not v.bottom and all(
            phase2a_msg(rm, 0, PcValue.PREPARED) in s.msgs for rm in v.rms)

    def joined_monotone(self, s: RegState, t: RegState) -> bool:
        if not s.joined <= t.joined or (s.closed and not t.closed):
            return False
        return not s.closed or s.joined == t.joined

    def outcome_monotone(self, s: RegState, t: RegState) -> bool:
        if s.msgs is t.msgs:
            return True
        a, b = self.outcome(s), self.outcome(t)
        return a is Outcome.UNDECIDED or a is b

    def config(self):
        return {"model": self.name, "rms": self.cfg.n, "acceptors": self.cfg.acceptors,
                "ballots": list(self.cfg.ballots), "mutations": sorted(self.mutations)}
