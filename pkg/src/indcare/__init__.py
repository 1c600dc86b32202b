"""Solvers for continuous-time algebraic Riccati equations whose
quadratic term is indefinite, in dense and low-rank factored form."""

from .errors import (DimensionMismatch, IndcareError, InnerSolverFailure,
                     MaxOuterExceeded, MissingCoefficient, NoConvergence,
                     NoStabilizingSolution, NotFullRowRank, NotStabilizable,
                     ShiftFailure, SingularAugmented, SingularCore,
                     SingularMatrix, SingularSaddle, SingularSchur,
                     SingularShift, StagnationNoConvergence, TooManyUnstable,
                     UnprojectedRhs)
from .linalg import (compress_factor, cross_norm, lu_factor, psd_factor,
                     spectral_norm_est, spectral_norm_sym_lowrank, thin_qr)
from .mmio import read_matrix, write_matrix
from .problems import (CareProblem, Dae2Problem, LowRankFactor, SolverOptions,
                       gen_heat_fd, gen_random_care, gen_stokes_dae2,
                       load_problem, save_problem)
from .shifted import (ShiftedSolveReport, SparsePlusLowRank, augmented_solve,
                      shifted_solve, smw_solve)
from .dae2 import Dae2ShiftedOperator, LerayProjector, apply_pi, dae2_solve
from .inner import (InnerSolveResult, bernoulli_feedback, definite_residual,
                    solve_care_dense_sign, solve_care_radi)
from .iteration import (IterationTrace, RiResult, check_stabilizability,
                        outer_residual_metrics, solve_care, solve_lrri,
                        solve_ri_dense)

__version__ = "0.1.0"

__all__ = [
    "CareProblem", "Dae2Problem", "Dae2ShiftedOperator", "DimensionMismatch",
    "IndcareError", "InnerSolveResult", "InnerSolverFailure",
    "IterationTrace", "LerayProjector", "LowRankFactor", "MaxOuterExceeded",
    "MissingCoefficient", "NoConvergence", "NoStabilizingSolution",
    "NotFullRowRank", "NotStabilizable", "RiResult", "ShiftFailure",
    "ShiftedSolveReport", "SingularAugmented", "SingularCore",
    "SingularMatrix", "SingularSaddle", "SingularSchur", "SingularShift",
    "SolverOptions", "SparsePlusLowRank", "StagnationNoConvergence",
    "TooManyUnstable", "UnprojectedRhs", "apply_pi", "augmented_solve",
    "bernoulli_feedback", "check_stabilizability", "compress_factor",
    "cross_norm", "dae2_solve", "definite_residual", "gen_heat_fd",
    "gen_random_care", "gen_stokes_dae2", "load_problem", "lu_factor",
    "outer_residual_metrics", "psd_factor", "read_matrix", "save_problem",
    "shifted_solve", "smw_solve", "solve_care", "solve_care_dense_sign",
    "solve_care_radi", "solve_lrri", "solve_ri_dense",
    "spectral_norm_est", "spectral_norm_sym_lowrank", "thin_qr",
    "write_matrix",
]
