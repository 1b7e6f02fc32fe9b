"""Tensor-train and dense tensor types, conversion, matricization and norms.

Dense tensors are plain :class:`numpy.ndarray` objects of shape
``(n_1, ..., n_d)`` stored in row-major order, so mode 1 varies slowest.
Public multi-indices are 1-based; storage is 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np
import scipy.linalg

from .exceptions import BoundsError, ShapeMismatchError, SizeCapError

DEFAULT_DENSE_CAP = 10**7

__all__ = [
    "DEFAULT_DENSE_CAP",
    "TTTensor",
    "TTMatrix",
    "element",
    "to_dense",
    "from_dense",
    "matricize",
    "frobenius_norm",
    "conjugate",
    "truncation_rank",
    "left_orthogonalize",
    "right_orthogonalize",
]


def _scalar_dtype(*arrays):
    dt = np.result_type(*arrays, np.float64)
    return np.complex128 if np.issubdtype(dt, np.complexfloating) else np.float64


def svd(mat):
    """Thin SVD with a fallback to the slower but more robust ``gesvd`` driver."""
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def truncation_rank(s, delta):
    """Smallest rank whose discarded tail satisfies ``sum(s[r:]**2) <= delta**2``.

    ``s`` must be sorted in descending order. The result is at least 1.
    """
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return 1
    if delta <= 0:
        nz = np.count_nonzero(s > 0)
        return max(1, int(nz))
    # tails[r] = sum_{j >= r} s_j^2, tails[len(s)] = 0
    tails = np.concatenate([np.cumsum((s**2)[::-1])[::-1], [0.0]])
    ok = np.nonzero(tails <= delta**2)[0]
    return max(1, int(ok[0]))


@dataclass(frozen=True, eq=False)
class TTTensor:
    """A d-th order tensor in tensor-train format.

    Core ``k`` has shape ``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_d = 1``. Cores
    are stored as float64 when every core is real and complex128 otherwise.
    Instances are treated as immutable; no operation modifies cores in place.
    """

    cores: tuple

    def __post_init__(self):
        cores = list(self.cores)
        if len(cores) == 0:
            raise ShapeMismatchError("a TT tensor needs at least one core")
        dtype = _scalar_dtype(*cores)
        cores = [np.asarray(c, dtype=dtype) for c in cores]
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ShapeMismatchError(f"core {k + 1} must be 3-way, got shape {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeMismatchError("boundary TT ranks must equal 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ShapeMismatchError(
                    f"rank mismatch between cores {k + 1} and {k + 2}: "
                    f"{cores[k].shape} vs {cores[k + 1].shape}"
                )
        object.__setattr__(self, "cores", tuple(cores))

    @property
    def d(self):
        return len(self.cores)

    @property
    def mode_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def dtype(self):
        return self.cores[0].dtype

    @property
    def is_complex(self):
        return np.issubdtype(self.dtype, np.complexfloating)

    @property
    def size(self):
        return prod(self.mode_sizes)

    def __repr__(self):
        return f"TTTensor(mode_sizes={self.mode_sizes}, ranks={self.ranks}, dtype={self.dtype})"

    # --- constructors -------------------------------------------------------
    @classmethod
    def rank_one(cls, vectors):
        """Outer product of per-mode vectors."""
        return cls(tuple(np.asarray(v).reshape(1, -1, 1) for v in vectors))

    @classmethod
    def ones(cls, mode_sizes):
        return cls.rank_one([np.ones(n) for n in mode_sizes])

    @classmethod
    def zeros(cls, mode_sizes):
        return cls.rank_one([np.zeros(n) for n in mode_sizes])

    @classmethod
    def random(cls, mode_sizes, ranks, rng=None, complex=False):
        """Random TT tensor with i.i.d. standard normal core entries.

        ``ranks`` may be an int (all internal ranks) or a full chain
        ``(1, r_1, ..., r_{d-1}, 1)``.
        """
        rng = np.random.default_rng(rng)
        d = len(mode_sizes)
        if np.isscalar(ranks):
            ranks = (1,) + (int(ranks),) * (d - 1) + (1,)
        ranks = tuple(ranks)
        if len(ranks) != d + 1:
            raise ShapeMismatchError("rank chain must have d + 1 entries")
        cores = []
        for k, n in enumerate(mode_sizes):
            shape = (ranks[k], n, ranks[k + 1])
            c = rng.standard_normal(shape)
            if complex:
                c = c + 1j * rng.standard_normal(shape)
            cores.append(c)
        return cls(tuple(cores))

    # --- arithmetic sugar (delegates to tt_algebra) -------------------------
    def __add__(self, other):
        from .algebra import add

        return add(self, other)

    def __sub__(self, other):
        from .algebra import add, scale

        return add(self, scale(other, -1.0))

    def __neg__(self):
        from .algebra import scale

        return scale(self, -1.0)

    def __mul__(self, s):
        from .algebra import hadamard, scale

        if isinstance(s, TTTensor):
            return hadamard(self, s)
        return scale(self, s)

    __rmul__ = __mul__

    def full(self, cap=DEFAULT_DENSE_CAP):
        return to_dense(self, cap)

    def norm(self):
        return frobenius_norm(self)

    def conj(self):
        return conjugate(self)


@dataclass(frozen=True, eq=False)
class TTMatrix:
    """A TT operator with core ``k`` of shape ``(r_{k-1}, m_k, n_k, r_k)``.

    As a dense matrix the row index is the row-major composite of
    ``(i_1, ..., i_d)`` and the column index that of ``(j_1, ..., j_d)``.
    """

    cores: tuple

    def __post_init__(self):
        cores = list(self.cores)
        if len(cores) == 0:
            raise ShapeMismatchError("a TT matrix needs at least one core")
        dtype = _scalar_dtype(*cores)
        cores = [np.asarray(c, dtype=dtype) for c in cores]
        for k, c in enumerate(cores):
            if c.ndim != 4:
                raise ShapeMismatchError(f"matrix core {k + 1} must be 4-way, got {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ShapeMismatchError("boundary TT ranks must equal 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[3] != cores[k + 1].shape[0]:
                raise ShapeMismatchError(f"rank mismatch between cores {k + 1} and {k + 2}")
        object.__setattr__(self, "cores", tuple(cores))

    @property
    def d(self):
        return len(self.cores)

    @property
    def row_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self):
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def dtype(self):
        return self.cores[0].dtype

    def __repr__(self):
        return (
            f"TTMatrix(row_sizes={self.row_sizes}, col_sizes={self.col_sizes}, "
            f"ranks={self.ranks}, dtype={self.dtype})"
        )

    @classmethod
    def identity(cls, sizes):
        return cls(tuple(np.eye(n).reshape(1, n, n, 1) for n in sizes))

    def as_tt_tensor(self):
        """Merge each (row, col) pair into one mode of size ``m_k * n_k``."""
        return TTTensor(
            tuple(c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in self.cores)
        )

    def to_dense(self, cap=DEFAULT_DENSE_CAP):
        rows, cols = prod(self.row_sizes), prod(self.col_sizes)
        if rows * cols > cap:
            raise SizeCapError(f"dense matrix would hold {rows * cols} entries (cap {cap})")
        res = np.ones((1, 1, 1), dtype=self.dtype)  # (rows, cols, rank)
        for c in self.cores:
            r0, m, n, r1 = c.shape
            res = np.einsum("pqa,amnb->pmqnb", res, c)
            res = res.reshape(res.shape[0] * m, res.shape[2] * n, r1)
        return res[:, :, 0]

    def matvec(self, x):
        """Apply the operator to a TT tensor; ranks multiply."""
        if not isinstance(x, TTTensor):
            raise TypeError("matvec expects a TTTensor")
        if self.col_sizes != x.mode_sizes:
            raise ShapeMismatchError(f"operator columns {self.col_sizes} vs vector modes {x.mode_sizes}")
        cores = []
        for a, b in zip(self.cores, x.cores):
            c = np.einsum("amnb,pnq->apmbq", a, b)
            cores.append(c.reshape(a.shape[0] * b.shape[0], a.shape[1], a.shape[3] * b.shape[2]))
        return TTTensor(tuple(cores))


def _check_index(T, idx):
    idx = tuple(int(i) for i in idx)
    if len(idx) != T.d:
        raise BoundsError(f"index has length {len(idx)}, tensor has order {T.d}")
    for k, (i, n) in enumerate(zip(idx, T.mode_sizes)):
        if not 1 <= i <= n:
            raise BoundsError(f"index {i} out of range 1..{n} in mode {k + 1}")
    return idx


def element(T, idx):
    """Entry of ``T`` at the 1-based multi-index ``idx`` (product of core slices)."""
    idx = _check_index(T, idx)
    v = T.cores[0][:, idx[0] - 1, :]
    for c, i in zip(T.cores[1:], idx[1:]):
        v = v @ c[:, i - 1, :]
    return v[0, 0]


def to_dense(T, cap=DEFAULT_DENSE_CAP):
    """Contract all cores into a dense array of shape ``T.mode_sizes``."""
    if T.size > cap:
        raise SizeCapError(f"dense tensor would hold {T.size} entries (cap {cap})")
    res = T.cores[0].reshape(T.cores[0].shape[1], -1)
    for c in T.cores[1:]:
        res = (res @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2])
    return res.reshape(T.mode_sizes)


def from_dense(D, eps=0.0, max_rank=None):
    """TT-SVD of a dense tensor with relative Frobenius accuracy ``eps``.

    Each of the ``d - 1`` sequential SVDs discards a tail of at most
    ``eps * ||D||_F / sqrt(d - 1)``.
    """
    D = np.asarray(D)
    if D.ndim == 0:
        D = D.reshape(1)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    dtype = _scalar_dtype(D)
    shape = D.shape
    d = len(shape)
    if d == 1:
        return TTTensor((D.astype(dtype).reshape(1, -1, 1),))
    nrm = np.linalg.norm(D)
    if nrm == 0:
        return TTTensor.zeros(shape)
    delta = eps * nrm / np.sqrt(d - 1)
    cores = []
    rest = D.astype(dtype).reshape(1, -1)
    r_prev = 1
    for k in range(d - 1):
        mat = rest.reshape(r_prev * shape[k], -1)
        u, s, vh = svd(mat)
        r = truncation_rank(s, delta)
        if max_rank is not None:
            r = min(r, int(max_rank))
        cores.append(u[:, :r].reshape(r_prev, shape[k], r))
        rest = s[:r, None] * vh[:r]
        r_prev = r
    cores.append(rest.reshape(r_prev, shape[-1], 1))
    return TTTensor(tuple(cores))


def matricize(D, k):
    """Unfolding with rows indexed by modes ``1..k`` and columns by ``k+1..d``."""
    D = np.asarray(D)
    if not 1 <= k <= D.ndim - 1:
        raise ValueError(f"split index must lie in 1..{D.ndim - 1}, got {k}")
    return D.reshape(prod(D.shape[:k]), -1)


def left_orthogonalize(cores, upto=None):
    """QR sweep left to right; cores ``1..upto-1`` become left-orthonormal.

    Returns a new list of cores representing the same tensor.
    """
    cores = list(cores)
    upto = len(cores) if upto is None else upto
    for k in range(upto - 1):
        r0, n, r1 = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(r0 * n, r1))
        cores[k] = q.reshape(r0, n, q.shape[1])
        cores[k + 1] = np.tensordot(r, cores[k + 1], axes=(1, 0))
    return cores


def right_orthogonalize(cores, downto=1):
    """QR sweep right to left; cores ``downto+1..d`` become right-orthonormal."""
    cores = list(cores)
    for k in range(len(cores) - 1, downto - 1, -1):
        r0, n, r1 = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        cores[k] = q.T.reshape(q.shape[1], n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], r.T, axes=(2, 0))
    return cores


def frobenius_norm(T):
    """Frobenius norm via right-to-left orthogonalization (no densification)."""
    cores = right_orthogonalize(T.cores)
    return float(np.linalg.norm(cores[0]))


def conjugate(T):
    """Elementwise complex conjugate; conjugates every core."""
    return TTTensor(tuple(np.conj(c) for c in T.cores))
