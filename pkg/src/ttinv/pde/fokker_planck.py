"""Fokker-Planck equation ``rho_t = div(x rho) + Laplace(rho) / 2`` on a truncated box.

The exact solution from a standard Gaussian start is
``rho = (pi s)^{-d/2} exp(-|x|^2 / s)`` with ``s(t) = 1 + exp(-2t)``.
Dirichlet zeros are imposed on the boundary of ``[-5, 5]^d``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..algebra import real_part, round_tt
from ..core import TTTensor
from ..exceptions import RegimeError, UnsupportedBoundaryError
from ..hadamard import InversionConfig
from ..kron import KroneckerSumOperator, apply_operator, solve
from .common import CNOperators, GridSpec, averaged_rank, prepare_cn, relative_error

__all__ = [
    "FP_TOLERANCES",
    "FPState",
    "sigma",
    "gradient_matrix",
    "second_difference",
    "fp_operator",
    "fp_tridiagonal_A",
    "fp_initial",
    "fp_exact",
    "fp_prepare",
    "fp_step",
    "fp_dense_operators",
    "fp_dense_step",
    "fp_simulate",
]

FP_TOLERANCES = InversionConfig(tol=1e-10, round_eps=1e-12)


def sigma(t):
    return 1.0 + np.exp(-2.0 * t)


@dataclass
class FPState:
    rho_tt: TTTensor
    t: float = 0.0

    @property
    def sigma_ref(self):
        return sigma(self.t)


def gradient_matrix(n, h, scheme="central"):
    """Dirichlet first difference ``tridiag(-1, 0, 1) / (2h)`` (``printed``: ``/ h``)."""
    if scheme not in ("central", "printed"):
        raise ValueError(f"unknown scheme {scheme!r}")
    w = 1 / (2 * h) if scheme == "central" else 1 / h
    return w * (np.eye(n, k=1) - np.eye(n, k=-1))


def second_difference(n, h):
    return (np.eye(n, k=1) - 2 * np.eye(n) + np.eye(n, k=-1)) / h**2


def _check(grid):
    if grid.boundary != "dirichlet":
        raise UnsupportedBoundaryError("the Fokker-Planck operator uses Dirichlet grids")


def fp_operator(grid, dt, side="left", scheme="central"):
    """Per-factor ``(1/d -+ dt/2) I -+ dt/2 X grad -+ dt/4 Laplace``.

    ``left`` (minus signs) is the implicit Crank-Nicolson side,
    ``right`` (plus signs) the explicit one.
    """
    _check(grid)
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    s = -1.0 if side == "left" else 1.0
    n, h = grid.n, grid.h
    core = np.eye(n) + np.diag(grid.nodes) @ gradient_matrix(n, h, scheme) + 0.5 * second_difference(n, h)
    S = np.eye(n) / grid.d + s * (dt / 2) * core
    return KroneckerSumOperator([(S, np.eye(n)) for _ in range(grid.d)])


def fp_tridiagonal_A(grid):
    """Tridiagonal ``A`` with ``X grad / 2 + Laplace / 4 = (A - 2/h I) / (4h)``.

    Off-diagonals are ``x_i + 1/h`` (above) and ``-x_i + 1/h`` (below). When
    every product of opposing off-diagonals is positive, ``A`` is similar to
    a symmetric matrix and has real, distinct eigenvalues.
    """
    _check(grid)
    x, h = grid.nodes, grid.h
    upper, lower = x[:-1] + 1 / h, -x[1:] + 1 / h
    prods = upper * lower
    bad = np.nonzero(prods <= 0)[0]
    if bad.size:
        i = int(bad[0]) + 2
        raise RegimeError(
            f"off-diagonal product at row {i} is {prods[bad[0]]:.3e} <= 0 (mesh too coarse, h = {h:.4g})",
            index=i,
        )
    return np.diag(upper, 1) + np.diag(lower, -1)


def fp_initial(grid):
    """Standard Gaussian ``(2 pi)^{-d/2} exp(-|x|^2 / 2)`` as a rank-one TT."""
    g = np.exp(-grid.nodes**2 / 2) / np.sqrt(2 * np.pi)
    return TTTensor.rank_one([g] * grid.d)


def fp_exact(grid, t):
    if t < 0:
        raise ValueError("t must be nonnegative")
    s = sigma(t)
    g = np.exp(-grid.nodes**2 / s) / np.sqrt(np.pi * s)
    return TTTensor.rank_one([g] * grid.d)


def fp_prepare(grid, dt, cfg=FP_TOLERANCES):
    return prepare_cn(fp_operator(grid, dt, "left"), fp_operator(grid, dt, "right"), cfg)


def fp_step(state, ops: CNOperators, dt):
    """``(I - dt/2 L) rho' = (I + dt/2 L) rho``; time advances by ``dt``."""
    eps, max_rank = ops.cfg.round_eps, ops.cfg.max_rank
    rhs = round_tt(apply_operator(ops.right, state.rho_tt), eps, max_rank)
    rho = solve(ops.fact, ops.Xinv, rhs, eps, max_rank)
    if not rhs.is_complex:
        rho = real_part(rho, eps, max_rank)
    return FPState(rho, state.t + dt)


def fp_dense_operators(grid, dt):
    left = fp_operator(grid, dt, "left").to_dense()
    right = fp_operator(grid, dt, "right").to_dense()
    return scipy.linalg.lu_factor(left), right


def fp_dense_step(rho, dense_ops):
    lu, right = dense_ops
    shape = np.shape(rho)
    return scipy.linalg.lu_solve(lu, right @ np.ravel(rho)).reshape(shape)


@dataclass
class FPRun:
    state: FPState
    times: list
    errors: list
    ranks: list
    averaged_rank: int
    ops: CNOperators
    seconds: float


def fp_simulate(n, d=3, dt=0.0025, t_end=1.0, cfg=FP_TOLERANCES, domain=(-5.0, 5.0), record_every=1):
    """March the Gaussian start to ``t_end``, recording the error against the exact solution."""
    t0 = time.perf_counter()
    grid = GridSpec(d, n, domain, "dirichlet")
    ops = fp_prepare(grid, dt, cfg)
    state = FPState(fp_initial(grid), 0.0)
    steps = int(round(t_end / dt))
    times, errors, ranks = [], [], []
    for s in range(1, steps + 1):
        state = fp_step(state, ops, dt)
        if s % record_every == 0 or s == steps:
            times.append(s * dt)
            errors.append(relative_error(state.rho_tt, fp_exact(grid, s * dt)))
            ranks.append(averaged_rank(state.rho_tt))
    state = FPState(state.rho_tt, steps * dt)
    return FPRun(state, times, errors, ranks, averaged_rank(ops.Xinv), ops, time.perf_counter() - t0)
