"""scikit-learn style wrappers.

``fit`` takes a :class:`~ttinv.kron.KroneckerSumOperator`; for the
inverter ``predict`` solves ``L u = f``. Hyper-parameters live in
``__init__`` so ``get_params``/``set_params``/``clone`` work as usual.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_tt, check_operator, check_positive_int, check_split
from .core import DEFAULT_DENSE_CAP, to_dense
from .hadamard import InversionConfig
from .kron import assemble_inverse, hadamard_inverse, joint_diagonalize, solve
from .rank_analysis import DEFAULT_BUDGET, magnitude_bounds, verify_condition

__all__ = ["KroneckerSumInverter", "RankCertifier"]


class KroneckerSumInverter(BaseEstimator):
    """TT-based inverse of a Kronecker-sum operator.

    After ``fit`` the estimator holds ``factorization_``, the diagonal TT
    ``lambda_tensor_``, its Hadamard inverse ``hadamard_inverse_`` and the
    Newton ``report_``.
    """

    def __init__(self, tol=1e-6, round_eps=1e-8, max_iter=100, max_rank=None,
                 warm_start_steps=0, initial_guess="auto", cond_max=1e8):
        self.tol = tol
        self.round_eps = round_eps
        self.max_iter = max_iter
        self.max_rank = max_rank
        self.warm_start_steps = warm_start_steps
        self.initial_guess = initial_guess
        self.cond_max = cond_max

    def _config(self):
        return InversionConfig(
            tol=self.tol, round_eps=self.round_eps, max_iter=self.max_iter,
            max_rank=check_positive_int(self.max_rank, "max_rank", allow_none=True),
            warm_start_steps=self.warm_start_steps,
        )

    def fit(self, X, y=None):
        op = check_operator(X)
        cfg = self._config()
        fact = joint_diagonalize(op, cond_max=self.cond_max)
        L, Xinv, report = hadamard_inverse(fact, cfg, self.initial_guess)
        self.operator_ = op
        self.factorization_ = fact
        self.lambda_tensor_ = L
        self.hadamard_inverse_ = Xinv
        self.report_ = report
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        return self

    def predict(self, X):
        """Solve ``L u = X``; dense input gives dense output of the same shape."""
        check_is_fitted(self, "hadamard_inverse_")
        f, dense = as_tt(X, self.factorization_.mode_sizes)
        u = solve(self.factorization_, self.hadamard_inverse_, f, self.round_eps, self.max_rank)
        if dense:
            return to_dense(u).reshape(np.shape(X))
        return u

    def inverse_matrix(self, cap=DEFAULT_DENSE_CAP):
        """The inverse as a TT matrix with the ranks of ``hadamard_inverse_``."""
        check_is_fitted(self, "hadamard_inverse_")
        return assemble_inverse(self.factorization_, self.hadamard_inverse_, cap)

    def condition_bound(self):
        """Certified upper bound on ``max |l| / min |l|`` over the diagonal."""
        check_is_fitted(self, "factorization_")
        lo, hi = magnitude_bounds(self.factorization_)
        return hi / lo if lo > 0 else float("inf")


class RankCertifier(BaseEstimator):
    """Disk-condition certificates for every requested split."""

    def __init__(self, splits=None, method="exact", budget=DEFAULT_BUDGET, eps=1e-6, seed=0):
        self.splits = splits
        self.method = method
        self.budget = budget
        self.eps = eps
        self.seed = seed

    def fit(self, X, y=None):
        op = check_operator(X)
        fact = joint_diagonalize(op)
        splits = range(1, op.d) if self.splits is None else self.splits
        ks = [check_split(k, op.d) for k in splits]
        self.factorization_ = fact
        self.certificates_ = [
            verify_condition(fact, k, self.method, self.budget, self.eps, self.seed) for k in ks
        ]
        return self

    def decay_factors(self):
        check_is_fitted(self, "certificates_")
        return [c.decay_q for c in self.certificates_]
