"""Grids, Crank-Nicolson operator bundles and dense oracles shared by the model problems."""
from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np
import scipy.linalg

from ..algebra import add, scale
from ..core import DEFAULT_DENSE_CAP, TTTensor, frobenius_norm, from_dense
from ..exceptions import DomainError, ShapeMismatchError, SizeCapError
from ..hadamard import InversionConfig
from ..kron import hadamard_inverse, joint_diagonalize

__all__ = [
    "GridSpec",
    "CNOperators",
    "prepare_cn",
    "relative_error",
    "dense_reference_solve",
    "averaged_rank",
    "expand_spatial",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on ``[a, b]^d``.

    Dirichlet grids hold the ``n`` interior nodes ``a + i h`` (``i = 1..n``,
    ``h = (b - a) / (n + 1)``); periodic grids hold ``a + j h`` for
    ``j = 0..n-1`` with ``h = (b - a) / n``.
    """

    d: int
    n: int
    domain: tuple = (-1.0, 1.0)
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be positive")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        a, b = self.domain
        if not b > a:
            raise ValueError("domain must satisfy a < b")
        object.__setattr__(self, "domain", (float(a), float(b)))

    @property
    def h(self):
        a, b = self.domain
        return (b - a) / (self.n + 1) if self.boundary == "dirichlet" else (b - a) / self.n

    @property
    def nodes(self):
        a = self.domain[0]
        if self.boundary == "dirichlet":
            return a + self.h * np.arange(1, self.n + 1)
        return a + self.h * np.arange(self.n)

    @property
    def mode_sizes(self):
        return (self.n,) * self.d


@dataclass
class CNOperators:
    """Left/right operators of an implicit step together with the inverse data."""

    left: object
    right: object
    fact: object
    L: TTTensor
    Xinv: TTTensor
    report: object
    cfg: InversionConfig


def prepare_cn(left, right, cfg=None, initial_guess="auto"):
    """Diagonalize ``left`` and compute the Hadamard inverse once for all steps."""
    cfg = InversionConfig() if cfg is None else cfg
    fact = joint_diagonalize(left)
    L, X, report = hadamard_inverse(fact, cfg, initial_guess)
    return CNOperators(left, right, fact, L, X, report, cfg)


def relative_error(u, ref):
    """``||u - ref||_F / ||ref||_F`` in TT arithmetic."""
    if u.mode_sizes != ref.mode_sizes:
        raise ShapeMismatchError(f"mode sizes differ: {u.mode_sizes} vs {ref.mode_sizes}")
    nrm = frobenius_norm(ref)
    if nrm == 0:
        raise DomainError("reference has zero norm")
    return frobenius_norm(add(u, scale(ref, -1.0))) / nrm


def dense_reference_solve(op, f, cap=DEFAULT_DENSE_CAP):
    """Direct LU solve with the assembled dense operator (baseline oracle).

    ``cap`` limits the number of entries of the dense matrix, mirroring the
    memory wall of a method without low-rank structure.
    """
    N = prod(op.mode_sizes)
    if N * N > cap:
        raise SizeCapError(f"dense operator would hold {N * N} entries (cap {cap})")
    f = np.asarray(f)
    if f.size != N:
        raise ShapeMismatchError(f"right-hand side has {f.size} entries, operator needs {N}")
    u = scipy.linalg.solve(op.to_dense(cap), f.reshape(-1))
    return u.reshape(f.shape)


def averaged_rank(T):
    """Arithmetic mean of the internal TT ranks, rounded to the nearest integer."""
    inner = T.ranks[1:-1]
    if not inner:
        return 1
    return int(np.floor(np.mean(inner) + 0.5))


def expand_spatial(field, n_v, eps=1e-14):
    """TT over ``(v_k, x_k)`` modes of a spatial field that is constant in ``v``."""
    field = np.asarray(field)
    T = from_dense(field, eps) if field.ndim > 1 else TTTensor((field.reshape(1, -1, 1),))
    return TTTensor(tuple(np.tile(c, (1, n_v, 1)) for c in T.cores))
