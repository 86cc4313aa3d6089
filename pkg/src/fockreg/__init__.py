"""Occupation-number cutoffs for boson operators at finite truncation.

Ladder operators and spectral projections on a truncated Fock space with
tracked exactness, decay-weighted seminorms, cutoff Heisenberg dynamics for
free, displaced, two-mode and spin-boson models, and convergence diagnostics.
"""

from .convergence import ConvergenceReport, cauchy_gap, run_convergence_study
from .dynamics import closed_form_free, evolve_oracle, evolve_series, evolve_spin_boson_sectored
from .fock_core import (
    FockOperator,
    TruncationError,
    TruncationSpec,
    annihilation,
    commutator,
    compose,
    creation,
    number,
    projection_pi,
    projection_q,
    truncated_annihilation,
    verify_ladder_identities,
)
from .models import Displaced, Free, SpinBoson, SpinBosonMulti, TwoMode, regularize
from .seminorms import DecayFunction, combined_seminorm, lassner_opnorm, lassner_sum
from .spin_lattice import SpinSystem, mean_magnetization, pauli

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "cauchy_gap",
    "run_convergence_study",
    "closed_form_free",
    "evolve_oracle",
    "evolve_series",
    "evolve_spin_boson_sectored",
    "FockOperator",
    "TruncationError",
    "TruncationSpec",
    "annihilation",
    "commutator",
    "compose",
    "creation",
    "number",
    "projection_pi",
    "projection_q",
    "truncated_annihilation",
    "verify_ladder_identities",
    "Displaced",
    "Free",
    "SpinBoson",
    "SpinBosonMulti",
    "TwoMode",
    "regularize",
    "DecayFunction",
    "combined_seminorm",
    "lassner_opnorm",
    "lassner_sum",
    "SpinSystem",
    "mean_magnetization",
    "pauli",
]
