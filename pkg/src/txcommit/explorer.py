"""Explicit-state breadth-first safety checking.

:func:`explore` enumerates every reachable state of a
:class:`~txcommit.system.TransitionSystem`, checks state invariants on each
state and edge invariants (and optionally refinement) on each transition,
and returns an :class:`ExploreReport`.  The state store is exact: it is
keyed by :meth:`~txcommit.system.TransitionSystem.key`, an injective
encoding, so a hash collision can never hide a state.

Exploration is level-synchronous.  Successors of a level are computed
(possibly by several worker threads), then merged in the order of the
frontier, with the new successors of each state sorted by key.  Every reported number is therefore independent of the worker
count, and the first violation found is one with a shortest trace.
"""
from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import ConfigError
from .system import TransitionSystem, to_jsonable

REFINEMENT = "Refinement"
BATCH = 2048  # states expanded per worker per round


@dataclass
class Violation:
    name: str
    trace: list[tuple[str, Any]]  # (action label, state); first label is "Init"
    kind: str = "state"  # "state", "edge" or "refinement"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "length": len(self.trace),
            "trace": [{"action": a, "state": to_jsonable(s)} for a, s in self.trace],
        }


@dataclass
class ExploreReport:
    reachable_count: int
    diameter: int
    violations: list[Violation] = field(default_factory=list)
    complete: bool = True
    config: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    mode: str = "exhaustive"

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "config": self.config,
            "notes": list(self.notes),
            "reachableCount": self.reachable_count,
            "diameter": self.diameter,
            "complete": self.complete,
            "violations": [v.to_json() for v in self.violations],
        }


def _check_state(ts: TransitionSystem, state) -> str | None:
    for name, pred in ts.invariants:
        if not pred(state):
            return name
    return None


def _check_edge(ts: TransitionSystem, s, t, refinement: bool) -> tuple[str, str] | None:
    for name, pred in ts.edge_invariants:
        if not pred(s, t):
            return name, "edge"
    if refinement:
        a, b = ts.abstract(s), ts.abstract(t)
        if a != b and b not in ts.abstract_system.successors(a):
            return REFINEMENT, "refinement"
    return None


def _expand(ts: TransitionSystem, state, refinement: bool):
    """Keyed non-stuttering successor steps of ``state`` and the first failing edge."""
    steps = []
    bad = None
    for label, t in ts.steps(state):
        if t is state or t == state:
            continue
        steps.append((label, t, ts.key(t)))
        if bad is None:
            found = _check_edge(ts, state, t, refinement)
            if found is not None:
                bad = (label, t, found)
    return steps, bad


def _chunks(items: Sequence, n: int) -> list[Sequence]:
    size = max(1, -(-len(items) // n))
    return [items[i:i + size] for i in range(0, len(items), size)]


def _trace(ts: TransitionSystem, parents: dict, key) -> list[tuple[str, Any]]:
    """Rebuild the path to ``key`` by replaying the recorded action labels."""
    path = []
    while key is not None:
        parent, label = parents[key]
        path.append((label, key))
        key = parent
    path.reverse()
    state = next(s for s in ts.initial() if ts.key(s) == path[0][1])
    out = [("Init", state)]
    for label, k in path[1:]:
        state = next(t for lab, t in ts.steps(state)
                     if lab == label and t != state and ts.key(t) == k)
        out.append((label, state))
    return out


def explore(
    ts: TransitionSystem,
    limit: int = 10_000_000,
    workers: int = 1,
    refinement: bool = False,
) -> ExploreReport:
    """Breadth-first exploration of ``ts`` up to ``limit`` distinct states.

    Stops at the first violation.  If more than ``limit`` states are
    reachable the report is returned with ``complete=False``.
    """
    if limit <= 0:
        raise ConfigError("limit must be positive")
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    if refinement and ts.abstract_system is None:
        raise ConfigError(f"{ts.name} has no abstraction to check refinement against")

    report = ExploreReport(0, 0, config={**ts.config(), "refinement": refinement},
                           notes=list(ts.notes))
    # parents[key] = (parent key, action label); the store is exact on keys
    parents: dict = {}
    level = []
    for k, s in sorted({ts.key(s): s for s in ts.initial()}.items()):
        parents[k] = (None, "Init")
        level.append((k, s))
    report.reachable_count = len(parents)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def run(fn, items):
        if pool is None:
            return [fn(x) for x in items]
        parts = list(pool.map(lambda chunk: [fn(x) for x in chunk], _chunks(items, workers)))
        return [r for part in parts for r in part]

    try:
        depth = 0
        while level:
            for (k, _), name in zip(level, run(lambda ks: _check_state(ts, ks[1]), level)):
                if name is not None:
                    report.violations.append(Violation(name, _trace(ts, parents, k)))
                    return report
            report.diameter = depth

            next_level = []
            # expand in frontier-ordered batches to bound the successors held at once
            for start in range(0, len(level), BATCH * workers):
                batch = level[start:start + BATCH * workers]
                expanded = run(lambda ks: _expand(ts, ks[1], refinement), batch)
                for (k, s), (steps, bad) in zip(batch, expanded):
                    if bad is not None:
                        label, t, (name, kind) = bad
                        report.violations.append(
                            Violation(name, _trace(ts, parents, k) + [(label, t)], kind))
                        return report
                    fresh = {}
                    for label, t, tk in steps:
                        if tk not in parents and tk not in fresh:
                            fresh[tk] = (label, t)
                    for tk in sorted(fresh):
                        label, t = fresh[tk]
                        parents[tk] = (k, label)
                        next_level.append((tk, t))
                    if len(parents) > limit:
                        report.reachable_count = len(parents)
                        report.complete = False
                        return report
                del expanded
            report.reachable_count = len(parents)
            level = next_level
            depth += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def check_refinement(ts: TransitionSystem, limit: int = 10_000_000,
                     workers: int = 1) -> ExploreReport:
    """Explore ``ts`` checking that every step maps to an abstract step or a stutter."""
    if ts.abstract_system is None:
        raise ConfigError(f"{ts.name} has no abstraction to check refinement against")
    return explore(ts, limit=limit, workers=workers, refinement=True)


def random_walk(ts: TransitionSystem, seed: int, steps: int, walks: int,
                refinement: bool = False) -> ExploreReport:
    """Seeded random walks checking invariants along each path.

    Each walk starts from an initial state and picks uniformly among the
    successors (in canonical order) until it reaches a deadlock or
    ``steps`` transitions.  ``reachable_count`` counts the distinct states
    visited and ``diameter`` the longest walk.
    """
    if steps <= 0 or walks <= 0:
        raise ConfigError("steps and walks must be positive")
    rng = random.Random(seed)
    report = ExploreReport(0, 0, config={**ts.config(), "refinement": refinement,
                                         "seed": seed, "steps": steps, "walks": walks},
                           notes=list(ts.notes), mode="random-walk")
    inits = [s for _, s in sorted({ts.key(s): s for s in ts.initial()}.items())]
    seen = set()  # keys of visited states
    for _ in range(walks):
        s = rng.choice(inits)
        path = [("Init", s)]
        seen.add(ts.key(s))
        for _ in range(steps):
            name = _check_state(ts, s)
            if name is not None:
                report.violations.append(Violation(name, path))
                break
            options = sorted(ts.steps(s), key=lambda st: (ts.key(st[1]), st[0]))
            if not options:
                break
            label, t = rng.choice(options)
            if t != s:
                found = _check_edge(ts, s, t, refinement)
                if found is not None:
                    report.violations.append(Violation(found[0], path + [(label, t)], found[1]))
                    break
            path.append((label, t))
            seen.add(ts.key(t))
            s = t
        else:
            name = _check_state(ts, s)
            if name is not None:
                report.violations.append(Violation(name, path))
        report.diameter = max(report.diameter, len(path) - 1)
        if report.violations:
            break
    report.reachable_count = len(seen)
    report.complete = False
    return report


def replays(ts: TransitionSystem, trace: list[tuple[str, Any]]) -> bool:
    """True iff ``trace`` starts in an initial state and each step is a labelled successor."""
    if not trace or trace[0][1] not in set(ts.initial()):
        return False
    for (_, s), (label, t) in zip(trace, trace[1:]):
        if (label, t) not in set(ts.steps(s)):
            return False
    return True
