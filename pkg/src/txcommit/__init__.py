"""Executable models of Transaction Commit, Two-Phase Commit and Paxos Commit,
with an explicit-state safety checker and a normal-case cost simulator."""
from .costsim import (
    CostReport, Scenario, figure4_table, iso_check, message_formula, run_normal_commit,
)
from .errors import ConfigError, RegistrationClosed, UnsupportedScenario
from .explorer import ExploreReport, Violation, check_refinement, explore, random_walk
from .models import MODELS, MUTATIONS, build
from .paxos import PaxosCommit, PcConfig
from .registrar import Registrar
from .tcommit import TCommit
from .twophase import TwoPhase

__all__ = [
    "ConfigError", "CostReport", "ExploreReport", "MODELS", "MUTATIONS", "PaxosCommit",
    "PcConfig", "RegistrationClosed", "Registrar", "Scenario", "TCommit", "TwoPhase",
    "UnsupportedScenario", "Violation", "build", "check_refinement", "explore",
    "figure4_table", "iso_check", "message_formula", "random_walk", "run_normal_commit",
]
