"""Normal-case cost simulation for Two-Phase Commit and Paxos Commit.

A scenario is replayed as a deterministic discrete-event run over placed
processes.  Every message hop takes one delay unit, whether or not it
crosses nodes; only inter-node messages are counted.  Stable-storage
writes are counted, and ``stable_write_delays`` is the largest number of
writes on any causal chain that ends with an RM learning the outcome.

Process ids are ``rm<i>``, ``tm``, ``acc<k>`` and ``leader``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, asdict
from typing import Any, Callable, Iterable

from .errors import ConfigError, UnsupportedScenario

PROTOCOLS = ("twophase", "paxos", "faster")


@dataclass(frozen=True)
class Scenario:
    protocol: str
    n: int
    f: int = 0
    coloc: bool = False
    spontaneous_prepare: bool = False
    send_to_f_plus_1: bool = True
    bundle_2b: bool = True
    leader_on_acceptor: bool = True
    abort: bool = False  # the last RM aborts instead of preparing

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise UnsupportedScenario(f"unknown protocol {self.protocol!r}")
        if self.n < 1:
            raise ConfigError("a scenario needs at least one RM")
        if self.f < 0:
            raise ConfigError("F must be non-negative")
        if self.coloc and not self.leader_on_acceptor:
            raise UnsupportedScenario("with co-location the leader always shares a node "
                                      "with an acceptor")


@dataclass(frozen=True)
class Event:
    seq: int
    time: int
    kind: str  # "send", "deliver" or "write"
    msg: str
    frm: str
    to: str
    inter_node: bool
    parts: tuple = ()  # (kind, destination, *fields) for each bundled message

    def to_json(self) -> dict:
        return {"seq": self.seq, "time": self.time, "kind": self.kind, "msg": self.msg,
                "from": self.frm, "to": self.to, "interNode": self.inter_node}


@dataclass
class CostReport:
    scenario: Scenario
    placement: dict[str, str]
    inter_node_messages: int
    message_delays: int
    stable_writes: int
    stable_write_delays: int
    outcome: str
    trace: list[Event] = field(default_factory=list)
    learned: dict[str, int] = field(default_factory=dict)  # rm -> seq of the learning event

    def summary(self) -> dict:
        return {
            "config": asdict(self.scenario),
            "interNodeMessages": self.inter_node_messages,
            "messageDelays": self.message_delays,
            "stableWrites": self.stable_writes,
            "stableWriteDelays": self.stable_write_delays,
            "outcome": self.outcome,
        }


def rm(i: int) -> str:
    return f"rm{i}"


def acc(k: int) -> str:
    return f"acc{k}"


def processes(sc: Scenario) -> list[str]:
    rms = [rm(i) for i in range(sc.n)]
    if sc.protocol == "twophase":
        return rms + ["tm"]
    return rms + [acc(k) for k in range(2 * sc.f + 1)] + ["leader"]


def default_placement(sc: Scenario) -> dict[str, str]:
    """The placements behind the comparison table's rows."""
    place = {p: p for p in processes(sc)}
    if sc.protocol == "twophase":
        if sc.coloc:
            place["tm"] = place[rm(0)]
        return place
    if sc.coloc:
        place[acc(0)] = place["leader"] = place[rm(0)]
        for k in range(1, 2 * sc.f + 1):
            host = rm(0) if sc.n == 1 else rm(1 + (k - 1) % (sc.n - 1))
            place[acc(k)] = place[host]
    elif sc.leader_on_acceptor:
        place["leader"] = place[acc(0)]
    return place


class _Run:
    def __init__(self, placement: dict[str, str]):
        self.node = placement
        self.events: list[Event] = []
        self.queue: list = []
        self.depth: dict[str, int] = {p: 0 for p in placement}  # write depth seen
        self.writes = 0
        self.learned: dict[str, tuple[int, int, int]] = {}  # rm -> (time, seq, write depth)
        self.outcome = "undecided"

    def _emit(self, time, kind, msg, frm, to, parts=()):
        ev = Event(len(self.events), time, kind, msg, frm, to,
                   self.node[frm] != self.node[to], parts)
        self.events.append(ev)
        return ev

    def send(self, time, frm, to, msg, parts=()):
        ev = self._emit(time, "send", msg, frm, to, parts)
        heapq.heappush(self.queue, (time + 1, ev.seq, ev, self.depth[frm]))

    def write(self, time, proc, what):
        self.writes += 1
        self.depth[proc] += 1
        self._emit(time, "write", what, proc, proc)

    def learn(self, time, proc, outcome):
        if proc not in self.learned:
            self.learned[proc] = (time, self.events[-1].seq, self.depth[proc])
            self.outcome = outcome

    def run(self, handler: Callable[[int, Event], None]):
        while self.queue:
            time, _, sent, depth = heapq.heappop(self.queue)
            ev = self._emit(time, "deliver", sent.msg, sent.frm, sent.to, sent.parts)
            for part in sent.parts or ((sent.msg, sent.to),):
                dest = part[1]
                self.depth[dest] = max(self.depth[dest], depth)
            handler(time, ev)


def _twophase(sc: Scenario, r: _Run):
    n = sc.n
    aborter = rm(n - 1) if sc.abort else None
    prepared: set[str] = set()
    decided = []

    def rm_vote(t, p):
        if p == aborter:
            r.send(t, p, "tm", "Aborted")
        else:
            r.write(t, p, "prepare")
            r.send(t, p, "tm", "Prepared")

    def handle(t, ev):
        p, m = ev.to, ev.msg
        if p == "tm":
            if decided:
                return
            if m == "Aborted":
                decided.append("aborted")
                for i in range(n):
                    r.send(t, "tm", rm(i), "Abort")
                return
            prepared.add(ev.frm)
            if not sc.spontaneous_prepare and len(prepared) == 1 and ev.frm == rm(0):
                for i in range(1, n):
                    r.send(t, "tm", rm(i), "Prepare")
            if len(prepared) == n:
                decided.append("committed")
                r.write(t, "tm", "commit")
                for i in range(n):
                    r.send(t, "tm", rm(i), "Commit")
        elif m == "Prepare":
            rm_vote(t, p)
        elif m == "Commit":
            r.learn(t, p, "committed")
        elif m == "Abort":
            r.learn(t, p, "aborted")

    if sc.spontaneous_prepare:
        for i in range(n):
            rm_vote(0, rm(i))
    else:
        rm_vote(0, rm(0))
    r.run(handle)


def _paxos(sc: Scenario, r: _Run):
    n, f = sc.n, sc.f
    faster = sc.protocol == "faster"
    quorum = [acc(k) for k in range(f + 1 if sc.send_to_f_plus_1 else 2 * f + 1)]
    majority = f + 1
    aborter = rm(n - 1) if sc.abort else None
    got_2a: dict[str, dict[int, str]] = {a: {} for a in quorum}
    votes: dict[str, dict[int, dict[str, str]]] = {}  # learner -> ins -> acc -> value
    decided = []

    def value_of(p):
        return "aborted" if p == aborter else "prepared"

    def send_2a(t, p, bundle_begin=False):
        i = int(p[2:])
        v = value_of(p)
        if v == "prepared":
            r.write(t, p, "prepare")
        label = f"2a({p},{v})"
        for a in quorum:
            part = ("2a", a, i, v)
            if bundle_begin and r.node[a] == r.node["leader"]:
                r.send(t, p, "leader", f"BeginCommit+{label}",
                       (("BeginCommit", "leader"), part))
                bundle_begin = False
            else:
                r.send(t, p, a, label, (part,))
        if bundle_begin:
            r.send(t, p, "leader", "BeginCommit", (("BeginCommit", "leader"),))

    def send_2b(t, a, items):
        learners = [rm(i) for i in range(n)] if faster else ["leader"]
        r.write(t, a, "accept")
        for dest in learners:
            parts = tuple(("2b", dest, a, i, v) for i, v in items)
            label = f"2b({a})" if sc.bundle_2b else f"2b({a},{rm(items[0][0])},{items[0][1]})"
            r.send(t, a, dest, label, parts)

    def tally(t, learner, parts):
        got = votes.setdefault(learner, {})
        for _, _, a, i, v in parts:
            got.setdefault(i, {})[a] = v
        chosen = {}
        for i, by_acc in got.items():
            for v in ("prepared", "aborted"):
                if sum(1 for x in by_acc.values() if x == v) >= majority:
                    chosen[i] = v
        if "aborted" in chosen.values():
            return "aborted"
        if len(chosen) == n:
            return "committed"
        return None

    def handle(t, ev):
        for part in ev.parts or ((ev.msg, ev.to),):
            kind, p = part[0], part[1]
            if kind == "BeginCommit":
                for i in range(1, n):
                    r.send(t, "leader", rm(i), "Prepare")
            elif kind == "2a":
                _, _, i, v = part
                got_2a[p][i] = v
                if not sc.bundle_2b:
                    send_2b(t, p, [(i, v)])
                elif len(got_2a[p]) == n:
                    send_2b(t, p, sorted(got_2a[p].items()))
            elif kind == "2b":
                outcome = tally(t, p, [part])
                if outcome is None:
                    continue
                if faster:
                    r.learn(t, p, outcome)
                elif not decided:
                    decided.append(outcome)
                    msg = "Commit" if outcome == "committed" else "Abort"
                    for i in range(n):
                        r.send(t, "leader", rm(i), msg, ((msg, rm(i)),))
            elif kind == "Prepare":
                send_2a(t, p)
            elif kind == "Commit":
                r.learn(t, p, "committed")
            elif kind == "Abort":
                r.learn(t, p, "aborted")

    if sc.spontaneous_prepare:
        for i in range(n):
            send_2a(0, rm(i))
    else:
        send_2a(0, rm(0), bundle_begin=True)
    r.run(handle)


def run_normal_commit(sc: Scenario, placement: dict[str, str] | None = None) -> CostReport:
    """Replay the failure-free flow of ``sc`` and account for its costs."""
    procs = processes(sc)
    placement = dict(default_placement(sc) if placement is None else placement)
    missing = [p for p in procs if p not in placement]
    if missing:
        raise ConfigError(f"placement does not cover {missing}")
    r = _Run(placement)
    (_twophase if sc.protocol == "twophase" else _paxos)(sc, r)
    rms = [rm(i) for i in range(sc.n)]
    if any(p not in r.learned for p in rms):
        raise UnsupportedScenario("the scenario did not reach an outcome at every RM")
    return CostReport(
        scenario=sc,
        placement=placement,
        inter_node_messages=sum(1 for e in r.events if e.kind == "send" and e.inter_node),
        message_delays=max(r.learned[p][0] for p in rms),
        stable_writes=r.writes,
        stable_write_delays=max(r.learned[p][2] for p in rms),
        outcome=r.outcome,
        trace=r.events,
        learned={p: r.learned[p][1] for p in rms},
    )


def message_formula(sc: Scenario) -> int:
    """Closed-form inter-node message count for the default placement.

    The Paxos co-location forms assume ``N >= 2``: with one RM every
    acceptor shares its node and no message crosses nodes.
    """
    n, f = sc.n, sc.f
    if sc.abort or not sc.send_to_f_plus_1 or not sc.bundle_2b:
        raise UnsupportedScenario("closed forms cover the default normal-case commit only")
    if sc.protocol == "twophase":
        if sc.spontaneous_prepare:
            return 2 * n - 2 if sc.coloc else 2 * n
        return 3 * n - 3 if sc.coloc else 3 * n - 1
    separate = 0 if sc.leader_on_acceptor else 1
    if sc.protocol == "paxos":
        if sc.spontaneous_prepare:
            return n * f + 2 * n - 2 if sc.coloc else n * f + 2 * n + f + separate
        if sc.coloc:
            return n * (f + 3) - 3
        return (n + 1) * (f + 3) - 4 + 2 * separate
    if sc.spontaneous_prepare:
        return 2 * (n - 1) * (f + 1) if sc.coloc else 2 * n * (f + 1)
    if sc.coloc:
        return (n - 1) * (2 * f + 3)
    return n * (2 * f + 3) - 1 + separate


def delay_formula(sc: Scenario) -> int:
    if sc.spontaneous_prepare:
        return {"twophase": 2, "paxos": 3, "faster": 2}[sc.protocol]
    return {"twophase": 4, "paxos": 5, "faster": 4}[sc.protocol]


def write_formula(sc: Scenario) -> int:
    return sc.n + 1 if sc.protocol == "twophase" else sc.n + sc.f + 1


FIGURE4_COLUMNS = ("twophase", "paxos", "faster")
FIGURE4_HEADERS = {"twophase": "Two-Phase Commit", "paxos": "Paxos Commit",
                   "faster": "Faster Paxos Commit"}


def figure4_table(n: int, f: int) -> list[dict[str, Any]]:
    """The comparison table's rows for (``n``, ``f``), each cell simulated and checked.

    A cell is ``{"simulated": x, "formula": y, "match": x == y}``.
    """
    if n < 1 or f < 0:
        raise ConfigError("need N >= 1 and F >= 0")

    def cell(sim, form):
        return {"simulated": sim, "formula": form, "match": sim == form}

    rows = {"delays": {}, "messages (no co-location)": {},
            "messages (co-location)": {}, "stable writes": {}}
    for proto in FIGURE4_COLUMNS:
        plain = Scenario(proto, n, f)
        together = Scenario(proto, n, f, coloc=True)
        a, b = run_normal_commit(plain), run_normal_commit(together)
        rows["delays"][proto] = cell(a.message_delays, delay_formula(plain))
        rows["messages (no co-location)"][proto] = cell(a.inter_node_messages,
                                                        message_formula(plain))
        rows["messages (co-location)"][proto] = cell(b.inter_node_messages,
                                                     message_formula(together))
        rows["stable writes"][proto] = cell(a.stable_writes, write_formula(plain))
    return [{"row": name, "n": n, "f": f, **cells} for name, cells in rows.items()]


def format_table(rows: list[dict[str, Any]]) -> str:
    """Aligned text rendering of :func:`figure4_table`; mismatches show both values."""
    def show(c):
        return str(c["simulated"]) if c["match"] else f"{c['simulated']} (formula {c['formula']})"

    header = ["", *(FIGURE4_HEADERS[p] for p in FIGURE4_COLUMNS)]
    body = [[r["row"], *(show(r[p]) for p in FIGURE4_COLUMNS)] for r in rows]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(x.ljust(w) for x, w in zip(line, widths)).rstrip()
             for line in [header, *body]]
    return "\n".join(lines)


# -- the F = 0 correspondence ---------------------------------------------

_ISO_LABELS = {
    "Prepare": "Prepare", "Commit": "Commit", "Abort": "Abort",
    "Prepared": "Prepared", "Aborted": "Aborted",
}


@dataclass
class IsoResult:
    ok: bool
    n: int
    pairs: list[tuple[dict, dict]]
    mismatch: str | None = None
    counts: dict[str, int] = field(default_factory=dict)


def _project_paxos(ev: Event) -> tuple | None:
    """A Paxos (F=0) send seen through the correspondence, or None if internal."""
    def proc(p):
        return "tm" if p in ("leader", "acc0") else p

    frm, to = proc(ev.frm), proc(ev.to)
    if frm == to:
        return None
    kinds = [p for p in ev.parts if p[0] != "BeginCommit"] or list(ev.parts)
    if len(kinds) != 1:
        return (frm, to, ev.msg, ev.inter_node)
    part = kinds[0]
    if part[0] == "2a":
        label = "Prepared" if part[3] == "prepared" else "Aborted"
    else:
        label = _ISO_LABELS.get(part[0], ev.msg)
    return (frm, to, label, ev.inter_node)


def _project_twophase(ev: Event) -> tuple:
    return (ev.frm, ev.to, _ISO_LABELS.get(ev.msg, ev.msg), ev.inter_node)


def _sends(trace: Iterable[Event]) -> list[Event]:
    return sorted((e for e in trace if e.kind == "send"), key=lambda e: (e.time, e.seq))


def iso_check(n: int) -> IsoResult:
    """Check 2PC against Paxos Commit with one acceptor, commit and abort flows.

    Both run with co-location; the acceptor and leader share the first RM's
    node.  Paxos sends are renamed by the correspondence (acceptor/leader to
    TM, phase 2a Prepared/Aborted to Prepared/Aborted) and sends internal to
    the acceptor/leader are dropped.  The two ordered send sequences must
    then be equal, endpoint, label and inter-node flag included.
    """
    if n < 1:
        raise ConfigError("iso_check needs at least one RM")
    pairs = []
    counts = {}
    for abort in (False, True):
        flow = "abort" if abort else "commit"
        two = run_normal_commit(Scenario("twophase", n, coloc=True, abort=abort))
        pax = run_normal_commit(Scenario("paxos", n, 0, coloc=True, abort=abort))
        counts[f"twophase-{flow}"] = two.inter_node_messages
        counts[f"paxos-{flow}"] = pax.inter_node_messages
        left = [(_project_twophase(e), e) for e in _sends(two.trace)]
        right = [(p, e) for e in _sends(pax.trace) if (p := _project_paxos(e)) is not None]
        for i in range(max(len(left), len(right))):
            if i >= len(left) or i >= len(right) or left[i][0] != right[i][0]:
                a = left[i][0] if i < len(left) else None
                b = right[i][0] if i < len(right) else None
                return IsoResult(False, n, pairs, f"{flow} flow, message {i}: {a} vs {b}", counts)
            pairs.append((left[i][1].to_json(), right[i][1].to_json()))
        if two.outcome != pax.outcome:
            return IsoResult(False, n, pairs, f"{flow} flow outcomes differ", counts)
    return IsoResult(True, n, pairs, None, counts)


# -- replay through the transition systems --------------------------------

def replay(report: CostReport):
    """Feed a commit trace through the matching model; returns the labelled path.

    Raises ``ValueError`` if some mapped step is not enabled.
    """
    from .paxos import COMMIT_MSG, PaxosCommit, PcValue, phase2b_msg
    from .twophase import TwoPhase

    sc = report.scenario
    if sc.protocol == "twophase":
        ts = TwoPhase(sc.n)
    else:
        ts = PaxosCommit(sc.n, acceptors=2 * sc.f + 1, ballots=(0,))
    (state,) = ts.initial()
    path = [("Init", state)]

    def step(label, want=None):
        nonlocal state
        for lab, t in ts.steps(state):
            if lab == label and t != state and (want is None or want(t)):
                state = t
                path.append((lab, t))
                return
        raise ValueError(f"{label} is not enabled after {len(path) - 1} steps")

    learned_at = {seq: p for p, seq in report.learned.items()}
    for ev in report.trace:
        if ev.kind == "write" and ev.msg == "prepare":
            step(f"RMPrepare({ev.frm[2:]})")
        elif sc.protocol == "twophase":
            if ev.kind == "deliver" and ev.to == "tm" and ev.msg == "Prepared":
                step(f"TMRcvPrepared({ev.frm[2:]})")
            elif ev.kind == "write" and ev.frm == "tm" and ev.msg == "commit":
                step("TMCommit")
        elif ev.kind == "deliver":
            for part in ev.parts:
                if part[0] == "2a":
                    _, a, i, _ = part
                    k = int(a[3:])
                    vote = phase2b_msg(k, i, 0, PcValue.PREPARED)
                    step(f"Phase2b({k})", lambda t: vote in t.msgs)
        elif ev.kind == "send" and ev.msg == "Commit" and COMMIT_MSG not in state.msgs:
            step("Decide", lambda t: COMMIT_MSG in t.msgs)
        if ev.seq in learned_at:
            who = learned_at[ev.seq]
            if sc.protocol != "twophase" and COMMIT_MSG not in state.msgs:
                step("Decide", lambda t: COMMIT_MSG in t.msgs)
            step(f"RMRcvCommitMsg({who[2:]})")
    return ts, path
