"""Numerical lab for plurisubharmonic functions on almost complex manifolds.

Modules
-------
structure       almost complex structures as ``Q`` fields, ``J`` matrices, Nijenhuis, normalization
disc            pseudoholomorphic discs with a prescribed center jet
candidates      candidate functions with exact Wirtinger jets
psh             Laplacians along discs and certification of plurisubharmonicity
counterexample  explicit-disc attacks, Lelong fits, decay hypotheses, smoothing
measure         grid measures, ``1/|z|`` potentials, fat sets, singular integrals
harness         reproducible experiments and the run log
"""
from .candidates import CandidateFunction, candidate_from_name
from .disc import DiscSolution, JetSpec, cauchy_green, e3_bound_check, solve_disc
from .errors import (AdmissibilityError, AlmostCxError, DomainError, LeftDomainError,
                     NijenhuisObstructionError, NormalizationError, RadiusTooLargeError,
                     SchemaError, SingularLocusError, SolverError)
from .structure import (StructureField, build_normalization, example_structure, j_to_q,
                        nijenhuis, pushforward_structure, q_to_j, standard_structure,
                        structure_from_config, toy_normalizable)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "AlmostCxError", "CandidateFunction", "DiscSolution", "DomainError",
    "JetSpec", "LeftDomainError", "NijenhuisObstructionError", "NormalizationError",
    "RadiusTooLargeError", "SchemaError", "SingularLocusError", "SolverError", "StructureField",
    "build_normalization", "candidate_from_name", "cauchy_green", "e3_bound_check",
    "example_structure", "j_to_q", "nijenhuis", "pushforward_structure", "q_to_j", "solve_disc",
    "standard_structure", "structure_from_config", "toy_normalizable",
]
