"""Tensor-train inversion of Kronecker-sum operators."""
from .algebra import add, hadamard, hadamard_round, kronecker, mode_k_product, real_part, round_tt, scale, ttmc
from .core import TTMatrix, TTTensor, element, from_dense, matricize, to_dense
from .estimator import KroneckerSumInverter, RankCertifier
from .hadamard import InversionConfig, InversionReport, default_initial_guess, gradient_descent, newton_solve
from .kron import (
    BlockCirculant,
    KroneckerSumOperator,
    SpectralFactorization,
    accuracy_bound,
    apply_operator,
    assemble_inverse,
    joint_diagonalize,
    lambda_tensor,
    solve,
)
from .rank_analysis import DiskCertificate, decay_factor, rank_bound, verify_condition

__version__ = "0.1.0"

__all__ = [
    "TTTensor", "TTMatrix", "element", "from_dense", "to_dense", "matricize",
    "add", "scale", "hadamard", "hadamard_round", "kronecker", "mode_k_product", "ttmc",
    "round_tt", "real_part",
    "InversionConfig", "InversionReport", "newton_solve", "gradient_descent", "default_initial_guess",
    "KroneckerSumOperator", "BlockCirculant", "SpectralFactorization", "joint_diagonalize",
    "lambda_tensor", "assemble_inverse", "solve", "apply_operator", "accuracy_bound",
    "DiskCertificate", "verify_condition", "decay_factor", "rank_bound",
    "KroneckerSumInverter", "RankCertifier",
]
