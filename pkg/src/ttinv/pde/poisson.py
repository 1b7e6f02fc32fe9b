"""Poisson equation ``-Laplace u = f`` with homogeneous Dirichlet data."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..core import TTTensor
from ..exceptions import UnsupportedBoundaryError
from ..hadamard import InversionConfig
from ..kron import KroneckerSumOperator, hadamard_inverse, joint_diagonalize, solve
from .common import GridSpec, averaged_rank, relative_error

__all__ = [
    "laplacian_1d",
    "poisson_operator",
    "poisson_rhs",
    "poisson_exact",
    "PoissonResult",
    "poisson_solve",
]


def laplacian_1d(n, h):
    """``tridiag(-1, 2, -1) / h^2``, the negative second difference."""
    return (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2


def poisson_operator(grid):
    if grid.boundary != "dirichlet":
        raise UnsupportedBoundaryError("the Poisson operator is defined for Dirichlet grids only")
    S = laplacian_1d(grid.n, grid.h)
    return KroneckerSumOperator([(S, np.eye(grid.n)) for _ in range(grid.d)])


def _sum_of_products(a, b, d):
    """TT of ``sum_k a x ... x b (slot k) x ... x a`` with ranks ``(1, 2, ..., 2, 1)``."""
    if d == 1:
        return TTTensor((b.reshape(1, -1, 1),))
    n = len(a)
    cores = []
    for k in range(d):
        if k == 0:
            c = np.stack([a, b], axis=-1).reshape(1, n, 2)
        elif k == d - 1:
            c = np.stack([b, a], axis=0).reshape(2, n, 1)
        else:
            c = np.zeros((2, n, 2))
            c[0, :, 0], c[0, :, 1], c[1, :, 1] = a, b, a
        cores.append(c)
    return TTTensor(tuple(cores))


def poisson_exact(grid):
    """``u = sum_k sin(2 pi x_k) prod_{i != k} sin(pi x_i)`` sampled on the grid."""
    x = grid.nodes
    return _sum_of_products(np.sin(np.pi * x), np.sin(2 * np.pi * x), grid.d)


def poisson_rhs(grid):
    """``-Laplace`` of :func:`poisson_exact`, i.e. ``(d + 3) pi^2`` times it."""
    u = poisson_exact(grid)
    cores = list(u.cores)
    cores[0] = cores[0] * ((grid.d + 3) * np.pi**2)
    return TTTensor(tuple(cores))


@dataclass
class PoissonResult:
    u: TTTensor
    Xinv: TTTensor
    relative_error: float
    averaged_rank: int
    report: object
    seconds: float


def poisson_solve(n, d=3, cfg=None, domain=(-1.0, 1.0), initial_guess="auto"):
    """Solve the model problem on an ``n^d`` grid and compare with the exact solution."""
    cfg = InversionConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    grid = GridSpec(d, n, domain, "dirichlet")
    fact = joint_diagonalize(poisson_operator(grid))
    _, X, report = hadamard_inverse(fact, cfg, initial_guess)
    u = solve(fact, X, poisson_rhs(grid), cfg.round_eps, cfg.max_rank)
    seconds = time.perf_counter() - t0
    err = relative_error(u, poisson_exact(grid))
    return PoissonResult(u, X, err, averaged_rank(X), report, seconds)
