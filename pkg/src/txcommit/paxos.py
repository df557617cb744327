"""Paxos Commit as a transition system.

One Paxos consensus instance per RM decides between ``prepared`` and
``aborted``; all instances share the same acceptors.  Each RM proposes its
own decision with a ballot-0 phase 2a message.  Leaders are not modelled
as processes: any phase 1a/2a action for any ballot above 0 may fire, and
the rule that at most one phase 2a is sent per (instance, ballot) stands
in for ballot ownership.

The acceptor and leader functions are written against an instance index
and a per-instance *free value*, so :mod:`txcommit.registrar` can reuse
them for the registrar's instance.
"""
from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, NamedTuple, Sequence

from .errors import ConfigError
from .system import TransitionSystem, canonical
from .tcommit import (
    ABORTED, COMMITTED, PREPARED, WORKING, RmState, TCommit, TcState, rm_ids,
    stable, tc_consistent, tc_type_ok,
)

NO_BALLOT = -1


class PcValue(enum.IntEnum):
    PREPARED = 0
    ABORTED = 1
    NONE = 2


class PcKind(enum.IntEnum):
    PHASE1A = 0
    PHASE1B = 1
    PHASE2A = 2
    PHASE2B = 3
    COMMIT = 4
    ABORT = 5


class PcMessage(NamedTuple):
    """Tagged union of Paxos Commit messages; unused fields keep their defaults."""

    kind: PcKind
    ins: int = -1
    bal: int = NO_BALLOT
    mbal: int = NO_BALLOT
    val: Hashable = PcValue.NONE
    acc: int = -1


@functools.lru_cache(maxsize=None)
def phase1a_msg(ins: int, bal: int) -> PcMessage:
    return PcMessage(PcKind.PHASE1A, ins=ins, bal=bal)


@functools.lru_cache(maxsize=None)
def phase1b_msg(ins: int, mbal: int, bal: int, val, acc: int) -> PcMessage:
    return PcMessage(PcKind.PHASE1B, ins=ins, bal=bal, mbal=mbal, val=val, acc=acc)


@functools.lru_cache(maxsize=None)
def phase2a_msg(ins: int, bal: int, val) -> PcMessage:
    return PcMessage(PcKind.PHASE2A, ins=ins, bal=bal, val=val)


@functools.lru_cache(maxsize=None)
def phase2b_msg(acc: int, ins: int, bal: int, val) -> PcMessage:
    return PcMessage(PcKind.PHASE2B, ins=ins, bal=bal, val=val, acc=acc)


COMMIT_MSG = PcMessage(PcKind.COMMIT)
ABORT_MSG = PcMessage(PcKind.ABORT)


class Slot(NamedTuple):
    """What one acceptor remembers about one instance."""

    mbal: int = 0
    bal: int = NO_BALLOT
    val: Hashable = PcValue.NONE


class PcState(NamedTuple):
    rm_state: tuple[RmState, ...]
    a_state: tuple[tuple[Slot, ...], ...]  # a_state[ins][acc]
    msgs: frozenset[PcMessage]


def maximum(values: Iterable[int]) -> int:
    """Largest element of ``values``, or -1 when it is empty."""
    return max(values, default=-1)


def default_majorities(acceptors: int) -> tuple[frozenset[int], ...]:
    size = acceptors // 2 + 1
    return tuple(frozenset(c) for c in itertools.combinations(range(acceptors), size))


def check_majorities(majorities: Sequence[frozenset[int]], acceptors: int) -> None:
    if not majorities:
        raise ConfigError("at least one majority is required")
    for ms in majorities:
        if not ms or not ms <= set(range(acceptors)):
            raise ConfigError(f"majority {sorted(ms)} is not a nonempty set of acceptors")
    for a, b in itertools.combinations(majorities, 2):
        if not a & b:
            raise ConfigError(f"majorities {sorted(a)} and {sorted(b)} do not intersect")


@dataclass(frozen=True)
class PcConfig:
    rms: tuple[int, ...]
    acceptors: int = 3
    ballots: tuple[int, ...] = (0, 1)
    majorities: tuple[frozenset[int], ...] | None = None
    check_quorums: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rms", rm_ids(self.rms))
        if self.acceptors < 1:
            raise ConfigError("at least one acceptor is required")
        ballots = tuple(sorted(set(self.ballots)))
        if 0 not in ballots or any(b < 0 for b in ballots):
            raise ConfigError("ballots must be natural numbers including 0")
        object.__setattr__(self, "ballots", ballots)
        majorities = self.majorities
        if majorities is None:
            majorities = default_majorities(self.acceptors)
        majorities = tuple(sorted({frozenset(m) for m in majorities}, key=canonical))
        object.__setattr__(self, "majorities", majorities)
        if self.check_quorums:
            check_majorities(majorities, self.acceptors)

    @property
    def n(self) -> int:
        return len(self.rms)


def pc_init(cfg: PcConfig) -> PcState:
    row = (Slot(),) * cfg.acceptors
    return PcState((WORKING,) * cfg.n, (row,) * cfg.n, frozenset())


# -- generic single-instance machinery -------------------------------------

def _set_slot(a_state: tuple, ins: int, acc: int, slot: Slot) -> tuple:
    row = a_state[ins]
    row = row[:acc] + (slot,) + row[acc + 1:]
    return a_state[:ins] + (row,) + a_state[ins + 1:]


def _with_rm(rm_state: tuple, rm: int, value: RmState) -> tuple:
    return rm_state[:rm] + (value,) + rm_state[rm + 1:]


def phase1a(s, bal: int, ins: int):
    """Leader starts ballot ``bal`` for instance ``ins``."""
    if bal < 1:
        raise ValueError("phase 1a ballots start at 1")
    return s._replace(msgs=s.msgs | {phase1a_msg(ins, bal)})


def phase1b(s, acc: int) -> list:
    out = []
    for m in s.msgs:
        if m.kind != PcKind.PHASE1A:
            continue
        slot = s.a_state[m.ins][acc]
        if slot.mbal < m.bal:
            reply = phase1b_msg(m.ins, m.bal, slot.bal, slot.val, acc)
            out.append(s._replace(
                a_state=_set_slot(s.a_state, m.ins, acc, slot._replace(mbal=m.bal)),
                msgs=s.msgs | {reply}))
    return out


def phase2a(s, bal: int, ins: int, majorities: Sequence[frozenset[int]], free_value,
            respect_forced: bool = True) -> list:
    """Leader proposes a value for (``ins``, ``bal``) after hearing from a majority.

    The value is forced to the one reported with the highest ballot, or is
    ``free_value`` when no acceptor of the majority has voted.
    """
    if bal < 1:
        raise ValueError("phase 2a ballots above 0 come from leaders; ballot 0 from RMs")
    reports: dict[int, list[PcMessage]] = {}
    for m in s.msgs:
        if m.kind == PcKind.PHASE2A and m.ins == ins and m.bal == bal:
            return []
        if m.kind == PcKind.PHASE1B and m.ins == ins and m.mbal == bal:
            reports.setdefault(m.acc, []).append(m)
    proposals = set()
    for ms in majorities:
        if not all(ac in reports for ac in ms):
            continue
        mset = [m for ac in ms for m in reports[ac]]
        maxbal = maximum(m.bal for m in mset)
        if maxbal == NO_BALLOT or not respect_forced:
            val = free_value
        else:
            val = min((m for m in mset if m.bal == maxbal), key=canonical).val
        proposals.add(val)
    return [s._replace(msgs=s.msgs | {phase2a_msg(ins, bal, v)})
            for v in sorted(proposals, key=canonical)]


def phase2b(s, acc: int, check_mbal: bool = True) -> list:
    out = []
    for m in s.msgs:
        if m.kind != PcKind.PHASE2A:
            continue
        slot = s.a_state[m.ins][acc]
        if slot.mbal <= m.bal or not check_mbal:
            out.append(s._replace(
                a_state=_set_slot(s.a_state, m.ins, acc, Slot(m.bal, m.bal, m.val)),
                msgs=s.msgs | {phase2b_msg(acc, m.ins, m.bal, m.val)}))
    return out


def votes(msgs: Iterable[PcMessage]) -> dict[tuple[int, int, Any], set[int]]:
    """Map (instance, ballot, value) to the acceptors that sent a phase 2b for it."""
    out: dict = {}
    for m in msgs:
        if m.kind == PcKind.PHASE2B:
            out.setdefault((m.ins, m.bal, m.val), set()).add(m.acc)
    return out


def chosen_values(msgs, ins: int, majorities) -> set:
    """Values chosen in instance ``ins``: some majority voted for it in one ballot."""
    out = set()
    for (i, _, v), accs in votes(msgs).items():
        if i == ins and any(ms <= accs for ms in majorities):
            out.add(v)
    return out


def pc_decided(s, rm: int, v, majorities) -> bool:
    return v in chosen_values(s.msgs, rm, majorities)


# -- Paxos Commit actions ---------------------------------------------------

def rm_prepare(s: PcState, rm: int) -> PcState | None:
    if s.rm_state[rm] != WORKING:
        return None
    return PcState(_with_rm(s.rm_state, rm, PREPARED), s.a_state,
                   s.msgs | {phase2a_msg(rm, 0, PcValue.PREPARED)})


def rm_choose_abort(s: PcState, rm: int) -> PcState | None:
    # The optional ballot-0 "aborted" phase 2a is always sent.
    if s.rm_state[rm] != WORKING:
        return None
    return PcState(_with_rm(s.rm_state, rm, ABORTED), s.a_state,
                   s.msgs | {phase2a_msg(rm, 0, PcValue.ABORTED)})


def rm_rcv_commit(s: PcState, rm: int) -> PcState | None:
    if COMMIT_MSG not in s.msgs:
        return None
    return PcState(_with_rm(s.rm_state, rm, COMMITTED), s.a_state, s.msgs)


def rm_rcv_abort(s: PcState, rm: int) -> PcState | None:
    if ABORT_MSG not in s.msgs:
        return None
    return PcState(_with_rm(s.rm_state, rm, ABORTED), s.a_state, s.msgs)


def pc_decide(s: PcState, majorities) -> list[PcState]:
    n = len(s.rm_state)
    chosen = [chosen_values(s.msgs, rm, majorities) for rm in range(n)]
    out = []
    if all(PcValue.PREPARED in c for c in chosen):
        out.append(s._replace(msgs=s.msgs | {COMMIT_MSG}))
    if any(PcValue.ABORTED in c for c in chosen):
        out.append(s._replace(msgs=s.msgs | {ABORT_MSG}))
    return out


def _index(msgs):
    """Split ``msgs`` by kind in one pass."""
    ones, twos, reports, voted = [], [], {}, {}
    for m in msgs:
        k, ins, bal, mbal, val, acc = m
        if k == PcKind.PHASE1A:
            ones.append(m)
        elif k == PcKind.PHASE2A:
            twos.append(m)
        elif k == PcKind.PHASE1B:
            reports.setdefault((ins, mbal), {}).setdefault(acc, []).append(m)
        elif k == PcKind.PHASE2B:
            voted.setdefault((ins, bal, val), set()).add(acc)
    return ones, twos, reports, voted


@functools.lru_cache(maxsize=None)
def _label(action: str, *args) -> str:
    return f"{action}({','.join(map(str, args))})"


_slot = functools.lru_cache(maxsize=None)(Slot)


def instance_steps(s, ins_range, cfg_ballots, acceptors, majorities, free_value,
                   mutations=frozenset(), index=None, make=None):
    """Leader and acceptor actions for the instances in ``ins_range``.

    ``free_value(ins)`` gives the value a leader proposes when it is free.
    Equivalent to calling :func:`phase1a`, :func:`phase2a`, :func:`phase1b`
    and :func:`phase2b` for every parameter, but scans ``msgs`` only once.
    ``make(a_state, msgs)`` builds a successor (default: ``s._replace``).
    Stuttering steps yield ``s`` itself.
    """
    ones, twos, reports, _ = index if index is not None else _index(s.msgs)
    msgs, a_state = s.msgs, s.a_state
    if make is None:
        def make(a, m):
            return s._replace(a_state=a, msgs=m)
    respect_forced = "phase2a-ignore-forced" not in mutations
    check_mbal = "phase2b-skip-mbal-check" not in mutations
    sent2a = {(m[1], m[2]) for m in twos}
    for bal in cfg_ballots:
        if bal == 0:
            continue
        for ins in ins_range:
            m1a = phase1a_msg(ins, bal)
            yield _label("Phase1a", bal, ins), s if m1a in msgs else make(a_state, msgs | {m1a})
            if (ins, bal) in sent2a:
                continue
            rep = reports.get((ins, bal))
            if not rep:
                continue
            proposals = set()
            for ms in majorities:
                if not all(ac in rep for ac in ms):
                    continue
                mset = [m for ac in ms for m in rep[ac]]
                maxbal = maximum(m.bal for m in mset)
                if maxbal == NO_BALLOT or not respect_forced:
                    proposals.add(free_value(ins))
                else:
                    proposals.add(min((m for m in mset if m.bal == maxbal), key=canonical).val)
            for v in sorted(proposals, key=canonical):
                yield _label("Phase2a", bal, ins), make(a_state, msgs | {phase2a_msg(ins, bal, v)})
    for acc in range(acceptors):
        if ones:
            label = _label("Phase1b", acc)
            for _, ins, bal, _, _, _ in ones:
                slot = a_state[ins][acc]
                if slot[0] < bal:
                    _, sbal, sval = slot
                    yield label, make(
                        _set_slot(a_state, ins, acc, _slot(bal, sbal, sval)),
                        msgs | {phase1b_msg(ins, bal, sbal, sval, acc)})
        if twos:
            label = _label("Phase2b", acc)
            for _, ins, bal, _, val, _ in twos:
                slot = a_state[ins][acc]
                if slot[0] <= bal or not check_mbal:
                    vote = phase2b_msg(acc, ins, bal, val)
                    new = _slot(bal, bal, val)
                    if slot == new and vote in msgs:
                        yield label, s
                    else:
                        yield label, make(_set_slot(a_state, ins, acc, new), msgs | {vote})


def chosen_from_votes(voted, ins: int, majorities) -> set:
    return {v for (i, _, v), accs in voted.items()
            if i == ins and any(ms <= accs for ms in majorities)}


def pc_steps(s: PcState, cfg: PcConfig, mutations: frozenset = frozenset()):
    n = cfg.n
    msgs = s.msgs
    has_commit, has_abort = COMMIT_MSG in msgs, ABORT_MSG in msgs
    for rm in range(n):
        r = s.rm_state[rm]
        if r == WORKING:
            yield _label("RMPrepare", rm), rm_prepare(s, rm)
            yield _label("RMChooseToAbort", rm), rm_choose_abort(s, rm)
        if has_commit:
            yield _label("RMRcvCommitMsg", rm), s if r == COMMITTED else rm_rcv_commit(s, rm)
        if has_abort:
            yield _label("RMRcvAbortMsg", rm), s if r == ABORTED else rm_rcv_abort(s, rm)
    index = _index(msgs)
    voted = index[3]
    rm_state = s.rm_state
    if voted:
        chosen = [chosen_from_votes(voted, rm, cfg.majorities) for rm in range(n)]
        if all(PcValue.PREPARED in c for c in chosen):
            yield "Decide", PcState(rm_state, s.a_state, msgs | {COMMIT_MSG})
        if any(PcValue.ABORTED in c for c in chosen):
            yield "Decide", PcState(rm_state, s.a_state, msgs | {ABORT_MSG})
    yield from instance_steps(s, range(n), cfg.ballots, cfg.acceptors, cfg.majorities,
                              _abort_if_free, mutations, index,
                              lambda a, m: PcState(rm_state, a, m))


def _abort_if_free(ins: int) -> PcValue:
    return PcValue.ABORTED


class MessageCodec:
    """Packs a Paxos state into one integer over a fixed, sorted universe.

    ``values[ins]`` lists the decision values instance ``ins`` may carry.
    ``extra_radix`` reserves room for model-specific fields folded in by the
    caller.  The universe is enumerated up front and sorted canonically, so
    keys do not depend on exploration order.
    """

    def __init__(self, n_rms: int, values: Sequence[Sequence], acceptors: int,
                 ballots: Sequence[int], extra_radix: int = 1, none=PcValue.NONE):
        universe = [COMMIT_MSG, ABORT_MSG]
        slots = set()
        bal_or_none = [NO_BALLOT, *ballots]
        for ins, vals in enumerate(values):
            for b in ballots:
                if b:
                    universe.append(phase1a_msg(ins, b))
                for v in vals:
                    universe.append(phase2a_msg(ins, b, v))
                    for acc in range(acceptors):
                        universe.append(phase2b_msg(acc, ins, b, v))
                for bb in bal_or_none:
                    for v in ([none] if bb == NO_BALLOT else vals):
                        slots.add(Slot(b, bb, v))
                        for acc in range(acceptors):
                            universe.append(phase1b_msg(ins, b, bb, v, acc))
        universe.sort(key=canonical)
        self.bit = {m: 1 << i for i, m in enumerate(universe)}
        self.slot_index = {x: i for i, x in enumerate(sorted(slots, key=canonical))}
        self.radix = extra_radix * 4 ** n_rms * len(self.slot_index) ** (len(values) * acceptors)

    def key(self, rm_state, a_state, msgs, extra: int = 0) -> int:
        code = extra
        for r in rm_state:
            code = code * 4 + r
        width = len(self.slot_index)
        idx = self.slot_index
        for row in a_state:
            for x in row:
                code = code * width + idx[x]
        return sum(map(self.bit.__getitem__, msgs)) * self.radix + code


def pc_successors(s: PcState, cfg: PcConfig) -> frozenset[PcState]:
    return frozenset(t for _, t in pc_steps(s, cfg))


def pc_abstract(s: PcState) -> TcState:
    return TcState(s.rm_state)


# -- properties -------------------------------------------------------------

def message_type_ok(m: PcMessage, n_ins: int, acceptors: int, ballots, values) -> bool:
    """Membership in the typed ``Message`` set; fields a kind does not use keep their defaults."""
    decisions = set(values) - {PcValue.NONE}
    if m.kind in (PcKind.COMMIT, PcKind.ABORT):
        return m == PcMessage(m.kind)
    if not 0 <= m.ins < n_ins:
        return False
    if m.kind == PcKind.PHASE1A:
        return m.bal in ballots and m.bal != 0 and m == phase1a_msg(m.ins, m.bal)
    if m.kind == PcKind.PHASE1B:
        return (m.mbal in ballots and (m.bal in ballots or m.bal == NO_BALLOT)
                and m.val in values and 0 <= m.acc < acceptors)
    if m.kind == PcKind.PHASE2A:
        return m.bal in ballots and m.val in decisions and m == phase2a_msg(m.ins, m.bal, m.val)
    if m.kind == PcKind.PHASE2B:
        return (m.bal in ballots and m.val in decisions and 0 <= m.acc < acceptors
                and m.mbal == NO_BALLOT)
    return False


def typed_messages(values: Sequence[Sequence], acceptors: int, ballots) -> frozenset:
    """Every message of the typed ``Message`` set; ``values[ins]`` are the decisions of ``ins``."""
    out = {COMMIT_MSG, ABORT_MSG}
    for ins, vals in enumerate(values):
        for b in ballots:
            if b:
                out.add(phase1a_msg(ins, b))
            for v in vals:
                out.add(phase2a_msg(ins, b, v))
                out.update(phase2b_msg(a, ins, b, v) for a in range(acceptors))
            for bb in (NO_BALLOT, *ballots):
                for v in (*vals, PcValue.NONE):
                    out.update(phase1b_msg(ins, b, bb, v, a) for a in range(acceptors))
    return frozenset(out)


def slot_ok(slot: Slot, ballots) -> bool:
    return (slot.mbal in ballots and (slot.bal in ballots or slot.bal == NO_BALLOT)
            and slot.bal <= slot.mbal
            and (slot.bal == NO_BALLOT) == (slot.val == PcValue.NONE))


def unique_phase2a(s) -> bool:
    seen = {}
    for m in s.msgs:
        if m.kind == PcKind.PHASE2A:
            if seen.setdefault((m.ins, m.bal), m.val) != m.val:
                return False
    return True


def slots_monotone(s, t) -> bool:
    if s.a_state is t.a_state:
        return True
    for row_s, row_t in zip(s.a_state, t.a_state):
        if row_s is row_t:
            continue
        for a, b in zip(row_s, row_t):
            if a is not b and (b[0] < a[0] or b[1] < a[1]):
                return False
    return True


class PaxosCommit(TransitionSystem):
    name = "paxos"
    notes = ("RMChooseToAbort always sends the ballot-0 'aborted' phase 2a message",)

    MUTATIONS = ("drop-majority-intersection", "phase2b-skip-mbal-check",
                 "phase2a-ignore-forced")

    def __init__(self, rms: int | Iterable[int], acceptors: int = 3,
                 ballots: Iterable[int] = (0, 1), majorities=None,
                 mutations: Iterable[str] = ()):
        self.mutations = frozenset(mutations)
        unknown = self.mutations - set(self.MUTATIONS)
        if unknown:
            raise ConfigError(f"unknown paxos mutation(s): {sorted(unknown)}")
        if "drop-majority-intersection" in self.mutations:
            # quorums one acceptor short of a majority
            size = max(1, acceptors // 2)
            majorities = [frozenset(c) for c in itertools.combinations(range(acceptors), size)]
        self.cfg = PcConfig(rm_ids(rms), acceptors, tuple(ballots), majorities,
                            check_quorums="drop-majority-intersection" not in self.mutations)
        self.abstract_system = TCommit(self.cfg.rms)
        self.codec = MessageCodec(self.cfg.n, [(PcValue.PREPARED, PcValue.ABORTED)] * self.cfg.n,
                                  acceptors, self.cfg.ballots)
        self.messages = typed_messages([(PcValue.PREPARED, PcValue.ABORTED)] * self.cfg.n,
                                       acceptors, self.cfg.ballots)
        self._chosen = functools.lru_cache(maxsize=1024)(self._chosen_uncached)
        self.invariants = (
            ("PCTypeOK", self.type_ok),
            ("TCConsistent", lambda s: tc_consistent(pc_abstract(s))),
            ("UniquePhase2a", unique_phase2a),
            ("ConsensusSafety", self.consensus_safe),
            ("CommitImpliesAllChosePrepared", self.commit_justified),
            ("PreparedChosenOnlyIfRMPrepared", self.prepared_needs_ballot0),
        )
        self.edge_invariants = (
            ("Stability", lambda s, t: stable(pc_abstract(s), pc_abstract(t))),
            ("SlotMonotone", slots_monotone),
        )

    def initial(self):
        return [pc_init(self.cfg)]

    def steps(self, state):
        return pc_steps(state, self.cfg, self.mutations)

    def abstract(self, state):
        return pc_abstract(state)

    def key(self, state):
        return self.codec.key(state.rm_state, state.a_state, state.msgs)

    def _chosen_uncached(self, msgs) -> tuple[frozenset, ...]:
        voted = _index(msgs)[3]
        return tuple(frozenset(chosen_from_votes(voted, rm, self.cfg.majorities))
                     for rm in range(self.cfg.n))

    def decided(self, s: PcState, rm: int, v: PcValue) -> bool:
        return v in self._chosen(s.msgs)[rm]

    def type_ok(self, s: PcState) -> bool:
        cfg = self.cfg
        return (
            tc_type_ok(TcState(s.rm_state))
            and len(s.a_state) == cfg.n
            and all(len(row) == cfg.acceptors and all(slot_ok(x, cfg.ballots) for x in row)
                    for row in s.a_state)
            and s.msgs <= self.messages
        )

    def consensus_safe(self, s: PcState) -> bool:
        return all(len(c) <= 1 for c in self._chosen(s.msgs))

    def commit_justified(self, s: PcState) -> bool:
        if COMMIT_MSG not in s.msgs:
            return True
        return all(self.decided(s, rm, PcValue.PREPARED) for rm in range(self.cfg.n))

    def prepared_needs_ballot0(self, s: PcState) -> bool:
        return all(phase2a_msg(rm, 0, PcValue.PREPARED) in s.msgs
                   for rm in range(self.cfg.n) if self.decided(s, rm, PcValue.PREPARED))

    def config(self):
        return {"model": self.name, "rms": self.cfg.n, "acceptors": self.cfg.acceptors,
                "ballots": list(self.cfg.ballots), "mutations": sorted(self.mutations)}
