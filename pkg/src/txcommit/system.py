"""Transition-system interface and canonical state encoding.

Every protocol model exposes its behaviour as a :class:`TransitionSystem`:
a set of initial states, a labelled successor relation, and the safety
properties to check.  States are immutable, hashable values built from
``NamedTuple``, ``IntEnum``, ``int``, ``bool``, ``None`` and ``frozenset``.
"""
from __future__ import annotations

import enum
import hashlib
from typing import Any, Callable, Hashable, Iterable, Iterator, Sequence

State = Hashable
Invariant = tuple[str, Callable[[Any], bool]]
EdgeInvariant = tuple[str, Callable[[Any, Any], bool]]


def canonical(value: Any) -> str:
    """Encode ``value`` as a string that is equal for equal states.

    Set elements are sorted by their own encoding so that the result does
    not depend on hash order or on the interpreter's hash seed.
    """
    if isinstance(value, bool):
        return "T" if value else "F"
    if isinstance(value, int):
        return str(int(value))
    if value is None:
        return "~"
    if isinstance(value, (frozenset, set)):
        return "{" + ",".join(sorted(canonical(v) for v in value)) + "}"
    if isinstance(value, tuple):
        return "(" + ",".join(canonical(v) for v in value) + ")"
    if isinstance(value, str):
        return repr(value)
    raise TypeError(f"cannot canonicalise {type(value).__name__}")


def fingerprint(state: Any) -> int:
    """64-bit digest of the canonical encoding of ``state``."""
    digest = hashlib.blake2b(canonical(state).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def to_jsonable(value: Any) -> Any:
    """Render a state (or part of one) with plain JSON types."""
    if isinstance(value, enum.Enum):
        return value.name.lower()
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    if isinstance(value, (frozenset, set)):
        return [to_jsonable(v) for v in sorted(value, key=canonical)]
    if isinstance(value, tuple) and hasattr(value, "_fields"):
        return {f: to_jsonable(getattr(value, f)) for f in value._fields}
    if isinstance(value, tuple):
        return [to_jsonable(v) for v in value]
    raise TypeError(f"cannot render {type(value).__name__}")


class TransitionSystem:
    """Base class for the models checked by :mod:`txcommit.explorer`.

    Subclasses implement :meth:`initial` and :meth:`steps`.  ``steps`` must
    be a deterministic function of the state alone.  A system that refines
    another one sets ``abstract_system`` and overrides :meth:`abstract`.
    """

    name = "system"
    invariants: Sequence[Invariant] = ()
    edge_invariants: Sequence[EdgeInvariant] = ()
    notes: Sequence[str] = ()
    abstract_system: TransitionSystem | None = None

    def initial(self) -> Iterable[State]:
        raise NotImplementedError

    def steps(self, state: State) -> Iterator[tuple[str, State]]:
        """Yield ``(action label, next state)`` for every enabled action."""
        raise NotImplementedError

    def successors(self, state: State) -> frozenset:
        return frozenset(t for _, t in self.steps(state))

    def key(self, state: State) -> Hashable:
        """Compact canonical encoding used as the explorer's store key.

        Equal states must give equal keys and distinct states distinct keys;
        keys are also the tie-breaking order among new states.
        """
        return canonical(state)

    def abstract(self, state: State) -> State:
        raise NotImplementedError(f"{self.name} has no refinement mapping")

    def config(self) -> dict:
        return {"model": self.name}
