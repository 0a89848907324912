"""Morley-element biharmonic solvers with fast auxiliary space preconditioners."""
from .assembly import P1Matrices, assemble_morley, assemble_p1, load_vector
from .experiments import ExperimentConfig, ResultRow, emit_scatter, load_config, run_config
from .mesh import DOMAINS, Mesh, MeshError, build_domain, load_mesh, save_mesh
from .operators import (DiscreteLaplacian, HarmonicExtender, build_boundary_operators,
                        transfer_Ih, transfer_Pi)
from .solvers import (BiharmonicProblem, InterfaceProblem, MixedInverse, PcgOutcome,
                      coupled_mixed_solve, pcg)
from .spaces import build_boundary, build_morley, build_p1, local_basis
from .spectra import (SpectrumReport, dense_spectrum, effective_condition,
                      iteration_bound_check, lanczos_extremal)

__all__ = [
    "DOMAINS", "Mesh", "MeshError", "build_domain", "load_mesh", "save_mesh",
    "build_p1", "build_boundary", "build_morley", "local_basis",
    "P1Matrices", "assemble_p1", "assemble_morley", "load_vector",
    "DiscreteLaplacian", "HarmonicExtender", "build_boundary_operators",
    "transfer_Ih", "transfer_Pi",
    "BiharmonicProblem", "InterfaceProblem", "MixedInverse", "PcgOutcome",
    "coupled_mixed_solve", "pcg",
    "SpectrumReport", "dense_spectrum", "lanczos_extremal", "effective_condition",
    "iteration_bound_check",
    "ExperimentConfig", "ResultRow", "load_config", "run_config", "emit_scatter",
]
