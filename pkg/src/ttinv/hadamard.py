"""Elementwise (Hadamard) inversion of TT tensors by Newton's iteration.

The iteration ``X <- X - X * (L * X - E)`` (``*`` elementwise, ``E`` the
all-ones tensor) is valid for complex tensors as is and converges
quadratically once ``|1 - l x|`` is below one everywhere. A gradient-descent
variant provides cheaper, lower-rank warm starts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .algebra import add, hadamard, hadamard_round, round_tt, scale
from .core import TTTensor, conjugate, frobenius_norm, left_orthogonalize
from .exceptions import DegenerateInputError, NumericFailureError, ShapeMismatchError

logger = logging.getLogger(__name__)

__all__ = [
    "InversionConfig",
    "InversionReport",
    "ones_tensor",
    "residual",
    "relative_residual",
    "magnitude_bound",
    "default_initial_guess",
    "newton_solve",
    "gradient_descent",
]


@dataclass(frozen=True)
class InversionConfig:
    """Settings for :func:`newton_solve`.

    ``tol`` is the target relative residual ``||L*X - E|| / ||E||`` and
    ``round_eps`` the relative TT-rounding accuracy applied after every
    update. The residual cannot drop much below ``round_eps``, so
    ``tol >= 10 * round_eps`` is required.
    """

    tol: float = 1e-6
    round_eps: float = 1e-8
    max_iter: int = 100
    max_rank: int | None = None
    warm_start_steps: int = 0
    warm_start_alpha: float | str = "auto"

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if not 0 < self.round_eps <= self.tol:
            raise ValueError(f"round_eps must lie in (0, tol], got {self.round_eps}")
        if self.tol < 10 * self.round_eps * (1 - 1e-12):
            raise ValueError(
                f"tol ({self.tol}) must be at least 10 * round_eps ({self.round_eps})"
            )
        if self.max_iter < 0 or self.warm_start_steps < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError("max_rank must be positive")
        if self.warm_start_alpha != "auto" and not float(self.warm_start_alpha) > 0:
            raise ValueError("warm_start_alpha must be 'auto' or positive")


@dataclass
class InversionReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    final_ranks: tuple = ()
    converged: bool = False
    cap_hit: bool = False
    warm_start_steps: int = 0

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else float("nan")

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "final_ranks": list(self.final_ranks),
            "converged": self.converged,
            "cap_hit": self.cap_hit,
            "warm_start_steps": self.warm_start_steps,
            "convergence_criterion": "relative residual ||L*X - E||_F / ||E||_F <= tol",
        }


def ones_tensor(mode_sizes):
    """Rank-one TT tensor whose entries are all 1."""
    return TTTensor.ones(mode_sizes)


def _check_pair(L, X):
    if L.mode_sizes != X.mode_sizes:
        raise ShapeMismatchError(f"mode sizes differ: {L.mode_sizes} vs {X.mode_sizes}")


def _exact_residual(L, X):
    return add(hadamard(L, X), scale(ones_tensor(L.mode_sizes), -1.0))


def relative_residual(L, X):
    """``||L*X - E||_F / ||E||_F`` computed exactly in TT arithmetic."""
    _check_pair(L, X)
    return frobenius_norm(_exact_residual(L, X)) / np.sqrt(L.size)


def residual(L, X, round_eps):
    """Rounded TT of ``L*X - E``.

    Rounding is relative to ``||E||_F`` rather than to the residual itself,
    so a nearly converged residual is compressed aggressively.
    """
    _check_pair(L, X)
    return round_tt(_exact_residual(L, X), round_eps, reference_norm=np.sqrt(L.size))


def magnitude_bound(L):
    """Upper bound on ``max |l|`` from per-core slice norms of a left-orthogonal form."""
    cores = left_orthogonalize(L.cores)
    bound = 1.0
    for c in cores:
        bound *= max(np.linalg.norm(c[:, i, :], 2) for i in range(c.shape[1]))
    return float(bound)


def default_initial_guess(L):
    """``conj(L) / M`` with ``M >= max |l|^2``, so ``0 <= 1 - l x_0 < 1`` elementwise."""
    M = magnitude_bound(L) ** 2
    if M == 0 or not np.isfinite(M):
        raise DegenerateInputError("cannot build an initial guess for a zero tensor")
    return scale(conjugate(L), 1.0 / M)


def gradient_descent(L, X0, alpha=None, steps=10, round_eps=1e-8, max_rank=None):
    """Steepest descent on ``0.5 ||L*X - E||^2``.

    The step is ``X <- X - alpha conj(L) * (L*X - E)``, which reduces to the
    textbook form for real ``L`` and is a descent direction for complex ones.
    The default step size is ``0.5 / M`` with ``M`` bounding ``max |l|^2``.
    """
    _check_pair(L, X0)
    if alpha is None:
        alpha = 0.5 / magnitude_bound(L) ** 2
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    Lc = conjugate(L)
    X = X0
    for _ in range(int(steps)):
        R = residual(L, X, round_eps)
        X = round_tt(add(X, scale(hadamard(Lc, R), -alpha)), round_eps, max_rank=max_rank)
    return X


def newton_solve(L, X0, cfg=None):
    """Hadamard inverse of ``L`` by Newton's iteration from ``X0``.

    Every step forms ``X * (E - R)`` with ``R`` the rounded residual and
    rounds the product to ``cfg.round_eps``. Returns ``(X, report)``; failing
    to reach ``cfg.tol`` within ``cfg.max_iter`` steps is reported, not
    raised.
    """
    cfg = InversionConfig() if cfg is None else cfg
    _check_pair(L, X0)
    E = ones_tensor(L.mode_sizes)
    norm_e = np.sqrt(L.size)
    report = InversionReport()
    X = X0
    if cfg.warm_start_steps:
        alpha = None if cfg.warm_start_alpha == "auto" else float(cfg.warm_start_alpha)
        X = gradient_descent(L, X, alpha, cfg.warm_start_steps, cfg.round_eps, cfg.max_rank)
        report.warm_start_steps = cfg.warm_start_steps
    for it in range(cfg.max_iter + 1):
        R = _exact_residual(L, X)
        res = frobenius_norm(R) / norm_e
        if not np.isfinite(res):
            raise NumericFailureError(f"non-finite residual at Newton iteration {it}")
        report.residual_history.append(res)
        logger.debug("newton iter %d residual %.3e ranks %s", it, res, X.ranks)
        if res <= cfg.tol:
            report.converged = True
            break
        if it == cfg.max_iter:
            break
        R = round_tt(R, cfg.round_eps, reference_norm=norm_e)
        X, hit = hadamard_round(X, add(E, scale(R, -1.0)), cfg.round_eps, cfg.max_rank, return_info=True)
        report.cap_hit |= hit
        report.iterations += 1
    report.final_ranks = X.ranks
    return X, report
