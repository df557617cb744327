"""Name-based construction of the checkable models."""
from __future__ import annotations

from typing import Iterable

from .errors import ConfigError
from .paxos import PaxosCommit
from .registrar import Registrar
from .system import TransitionSystem
from .tcommit import TCommit
from .twophase import MUTATIONS as TWOPHASE_MUTATIONS, TwoPhase

MODELS = ("tcommit", "twophase", "paxos", "registrar")

# mutation name -> model it applies to
MUTATIONS = {
    **{m: "twophase" for m in TWOPHASE_MUTATIONS},
    **{m: "paxos" for m in PaxosCommit.MUTATIONS},
    **{m: "registrar" for m in Registrar.MUTATIONS},
}


def build(model: str, rms: int, acceptors: int = 3, ballots: Iterable[int] = (0, 1),
          mutations: Iterable[str] = ()) -> TransitionSystem:
    mutations = tuple(mutations)
    for m in mutations:
        if m not in MUTATIONS:
            raise ConfigError(f"unknown mutation {m!r}; known: {sorted(MUTATIONS)}")
        if MUTATIONS[m] != model:
            raise ConfigError(f"mutation {m!r} applies to model {MUTATIONS[m]!r}")
    if model == "tcommit":
        return TCommit(rms)
    if model == "twophase":
        return TwoPhase(rms, mutations)
    if model == "paxos":
        return PaxosCommit(rms, acceptors, tuple(ballots), mutations=mutations)
    if model == "registrar":
        return Registrar(rms, acceptors, tuple(ballots), mutations=mutations)
    raise ConfigError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")
