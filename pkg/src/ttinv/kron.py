"""Inversion of Kronecker-sum operators through diagonalization.

An operator ``L = sum_k M_1 x ... x S_k x ... x M_d`` is brought to diagonal
form by per-factor transforms ``U_k S_k V_k = diag(mu_k)`` and
``U_k M_k V_k = diag(lam_k)``. The diagonal is a rank-(1,2,...,2,1) TT
tensor; its elementwise inverse, computed by Newton's iteration, yields
``L^{-1} = (V_1 x ... x V_d) diag(X) (U_1 x ... x U_d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator

from .algebra import hadamard, hadamard_round, round_tt, ttmc
from .core import DEFAULT_DENSE_CAP, TTMatrix, TTTensor
from .exceptions import DiagonalizationError, InvertibilityError, ShapeMismatchError, SizeCapError
from .hadamard import InversionConfig, default_initial_guess, newton_solve

__all__ = [
    "BlockCirculant",
    "BlockFourier",
    "KroneckerSumOperator",
    "SpectralFactorization",
    "joint_diagonalize",
    "lambda_tensor",
    "expanding",
    "assemble_inverse",
    "solve",
    "apply_operator",
    "accuracy_bound",
    "disk_initial_guess",
    "hadamard_inverse",
]

DEFAULT_COND_MAX = 1e8


class BlockCirculant(LinearOperator):
    """Block-diagonal matrix whose diagonal blocks are circulant.

    ``first_rows[m]`` is the first row of block ``m``; block entries are
    ``C[i, j] = c[(j - i) mod b]``. Products cost ``O(N log b)``.
    """

    def __init__(self, first_rows):
        rows = np.atleast_2d(np.asarray(first_rows))
        dtype = np.complex128 if np.iscomplexobj(rows) else np.float64
        self.first_rows = rows.astype(dtype)
        self.n_blocks, self.block_size = rows.shape
        n = self.n_blocks * self.block_size
        super().__init__(dtype=dtype, shape=(n, n))

    @classmethod
    def identity(cls, n_blocks, block_size):
        rows = np.zeros((n_blocks, block_size))
        rows[:, 0] = 1.0
        return cls(rows)

    def eigenvalues(self):
        """Eigenvalues in block-major order, matching :class:`BlockFourier`."""
        return (self.block_size * np.fft.ifft(self.first_rows, axis=1)).ravel()

    def _matmat(self, X):
        X = np.asarray(X)
        k = X.shape[1]
        Xb = X.reshape(self.n_blocks, self.block_size, k)
        lam = self.eigenvalues().reshape(self.n_blocks, self.block_size, 1)
        Y = np.fft.ifft(lam * np.fft.fft(Xb, axis=1), axis=1).reshape(-1, k)
        if not np.iscomplexobj(X) and self.dtype == np.float64:
            return Y.real
        return Y

    def _matvec(self, x):
        return self._matmat(np.asarray(x).reshape(-1, 1)).ravel()

    def _adjoint(self):
        b = self.block_size
        idx = (-np.arange(b)) % b
        return BlockCirculant(np.conj(self.first_rows[:, idx]))

    def toarray(self):
        blocks = [scipy.linalg.circulant(np.roll(r[::-1], 1)) for r in self.first_rows]
        return scipy.linalg.block_diag(*blocks)


class BlockFourier(LinearOperator):
    """Unitary DFT applied independently within each block.

    With ``inverse=False`` this is ``W^H`` (analysis, ``fft / sqrt(b)``);
    with ``inverse=True`` it is ``W`` (synthesis, ``sqrt(b) ifft``), where
    ``W[l, j] = exp(2 pi i j l / b) / sqrt(b)``.
    """

    def __init__(self, n_blocks, block_size, inverse=False):
        self.n_blocks, self.block_size, self.inverse = n_blocks, block_size, inverse
        n = n_blocks * block_size
        super().__init__(dtype=np.complex128, shape=(n, n))

    def _matmat(self, X):
        X = np.asarray(X)
        Xb = X.reshape(self.n_blocks, self.block_size, X.shape[1])
        if self.inverse:
            Y = np.fft.ifft(Xb, axis=1, norm="ortho")
        else:
            Y = np.fft.fft(Xb, axis=1, norm="ortho")
        return Y.reshape(X.shape)

    def _matvec(self, x):
        return self._matmat(np.asarray(x).reshape(-1, 1)).ravel()

    def _adjoint(self):
        return BlockFourier(self.n_blocks, self.block_size, not self.inverse)

    def toarray(self):
        b = self.block_size
        j = np.arange(b)
        W = np.exp(2j * np.pi * np.outer(j, j) / b) / np.sqrt(b)
        blk = W if self.inverse else W.conj().T
        return np.kron(np.eye(self.n_blocks), blk)


def _as_dense(A, cap=DEFAULT_DENSE_CAP):
    if isinstance(A, np.ndarray):
        return A
    if A.shape[0] * A.shape[1] > cap:
        raise SizeCapError(f"dense factor would hold {A.shape[0] * A.shape[1]} entries (cap {cap})")
    return A.toarray()


def _encode_factor(A):
    from .io import encode_array

    if isinstance(A, BlockCirculant):
        return {
            "structure": "block_circulant",
            "shape": list(A.first_rows.shape),
            "data": encode_array(A.first_rows),
        }
    A = np.asarray(A)
    return {"structure": "dense", "shape": list(A.shape), "data": encode_array(A)}


def _decode_factor(doc):
    from .io import decode_array

    a = decode_array(doc["data"], doc["shape"])
    if not np.any(a.imag):
        a = a.real.copy()
    if doc.get("structure", "dense") == "block_circulant":
        return BlockCirculant(a)
    return a


@dataclass
class KroneckerSumOperator:
    """``L = sum_k M_1 x ... x M_{k-1} x S_k x M_{k+1} x ... x M_d``.

    ``factors`` holds ``(S_k, M_k)`` pairs of square matrices; each may be a
    dense array or a :class:`BlockCirculant`. Mode 1 is the slowest index of
    the dense matrix.
    """

    factors: list

    def __post_init__(self):
        if len(self.factors) == 0:
            raise ShapeMismatchError("operator needs at least one factor pair")
        fixed = []
        for k, (S, M) in enumerate(self.factors):
            S = S if isinstance(S, LinearOperator) else np.asarray(S)
            M = M if isinstance(M, LinearOperator) else np.asarray(M)
            if S.ndim != 2 if isinstance(S, np.ndarray) else False:
                raise ShapeMismatchError(f"factor {k + 1}: S must be a matrix")
            if S.shape[0] != S.shape[1] or M.shape != S.shape or S.shape[0] < 1:
                raise ShapeMismatchError(f"factor {k + 1}: S and M must be square of equal size")
            fixed.append((S, M))
        self.factors = fixed

    @property
    def d(self):
        return len(self.factors)

    @property
    def mode_sizes(self):
        return tuple(S.shape[0] for S, _ in self.factors)

    @property
    def is_real(self):
        return all(not np.iscomplexobj(_factor_values(A)) for pair in self.factors for A in pair)

    def to_dense(self, cap=DEFAULT_DENSE_CAP):
        N = prod(self.mode_sizes)
        if N * N > cap:
            raise SizeCapError(f"dense operator would hold {N * N} entries (cap {cap})")
        dense = [(_as_dense(S), _as_dense(M)) for S, M in self.factors]
        out = 0
        for k in range(self.d):
            term = np.ones((1, 1))
            for s, (S, M) in enumerate(dense):
                term = np.kron(term, S if s == k else M)
            out = out + term
        return out

    def to_dict(self):
        return {
            "kind": "kron_sum_operator",
            "order": self.d,
            "modes": list(self.mode_sizes),
            "dtype": "complex128",
            "factors": [{"S": _encode_factor(S), "M": _encode_factor(M)} for S, M in self.factors],
        }

    @classmethod
    def from_dict(cls, doc):
        return cls([(_decode_factor(f["S"]), _decode_factor(f["M"])) for f in doc["factors"]])


def _factor_values(A):
    return A.first_rows if isinstance(A, BlockCirculant) else A


@dataclass
class SpectralFactorization:
    """Per-factor transforms with ``U_k S_k V_k = diag(mu_k)``, ``U_k M_k V_k = diag(lam_k)``."""

    U: list
    V: list
    Uinv: list
    Vinv: list
    mu: list
    lam: list
    unitary_flags: list
    cond_U: list
    cond_V: list
    residuals: list = field(default_factory=list)
    methods: list = field(default_factory=list)

    @property
    def d(self):
        return len(self.mu)

    @property
    def mode_sizes(self):
        return tuple(len(m) for m in self.mu)

    def ratios(self, k):
        """``mu_k / lam_k`` for the 1-based factor ``k``."""
        lam = self.lam[k - 1]
        if np.any(lam == 0):
            raise InvertibilityError(f"factor {k} has a zero lambda entry")
        return self.mu[k - 1] / lam

    def summary(self):
        return {
            "modes": list(self.mode_sizes),
            "methods": list(self.methods),
            "unitary": [bool(u) for u in self.unitary_flags],
            "cond_U": [float(c) for c in self.cond_U],
            "cond_V": [float(c) for c in self.cond_V],
            "residuals": [[float(a), float(b)] for a, b in self.residuals],
        }


def _is_identity(M):
    if isinstance(M, BlockCirculant):
        rows = M.first_rows
        return np.all(rows[:, 0] == 1) and not np.any(rows[:, 1:])
    M = np.asarray(M)
    return np.array_equal(M, np.eye(M.shape[0]))


def _circulant_row(A, rtol=1e-14):
    """First row if ``A`` is a dense circulant matrix, else ``None``."""
    if isinstance(A, BlockCirculant):
        return None
    n = A.shape[0]
    r = A[0]
    C = np.stack([np.roll(r, i) for i in range(n)])
    scale_ = max(np.linalg.norm(A), 1e-300)
    return r if np.linalg.norm(A - C) <= rtol * scale_ else None


def _as_block_circulant(S, M):
    if isinstance(S, BlockCirculant) and isinstance(M, BlockCirculant):
        if S.first_rows.shape == M.first_rows.shape:
            return S, M
        return None
    if isinstance(S, BlockCirculant) or isinstance(M, BlockCirculant):
        return None
    rs, rm = _circulant_row(S), _circulant_row(M)
    if rs is not None and rm is not None:
        return BlockCirculant(rs), BlockCirculant(rm)
    return None


def _order(w):
    """Descending magnitude, then descending real and imaginary parts."""
    w = np.asarray(w)
    key = np.round(np.abs(w), 12), np.round(w.real, 12), np.round(w.imag, 12)
    return np.lexsort((-key[2], -key[1], -key[0]))


def _fix_phase(V):
    """Unit 2-norm columns whose first nonzero entry is real and positive."""
    V = V / np.linalg.norm(V, axis=0)
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if nz.size:
            z = col[nz[0]]
            V[:, j] = col * (np.conj(z) / abs(z))
    return V


def _phase_only(V):
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if nz.size:
            z = col[nz[0]]
            if np.iscomplexobj(V):
                V[:, j] = col * (np.conj(z) / abs(z))
            elif z < 0:
                V[:, j] = -col
    return V


def _diagonalize_pair(S, M, k, tol, cond_max):
    bc = _as_block_circulant(S, M)
    if bc is not None:
        Sb, Mb = bc
        nb, b = Sb.first_rows.shape
        U, V = BlockFourier(nb, b, inverse=False), BlockFourier(nb, b, inverse=True)
        mu, lam = Sb.eigenvalues(), Mb.eigenvalues()
        rng = np.random.default_rng(0)
        x = rng.standard_normal(Sb.shape[0])
        res_s = np.linalg.norm(U @ (Sb @ (V @ x)) - mu * x) / max(np.linalg.norm(x), 1e-300)
        res_m = np.linalg.norm(U @ (Mb @ (V @ x)) - lam * x) / max(np.linalg.norm(x), 1e-300)
        return dict(U=U, V=V, Uinv=V, Vinv=U, mu=mu, lam=lam, unitary=True,
                    cond_U=1.0, cond_V=1.0, residual=(res_s, res_m), method="block_circulant_fft")

    S, M = np.asarray(S), np.asarray(M)
    n = S.shape[0]
    s_norm = max(np.linalg.norm(S), 1e-300)
    s_herm = np.linalg.norm(S - S.conj().T) <= 1e-13 * s_norm
    m_herm = np.linalg.norm(M - M.conj().T) <= 1e-13 * max(np.linalg.norm(M), 1e-300)
    if _is_identity(M) and s_herm:
        w, Q = np.linalg.eigh(S)
        perm = _order(w)
        w, Q = w[perm], _phase_only(Q[:, perm])
        U, V, Uinv, Vinv = Q.conj().T, Q, Q, Q.conj().T
        lam, unitary, method = np.ones(n), True, "hermitian_eigh"
    else:
        spd = False
        if s_herm and m_herm:
            try:
                np.linalg.cholesky(M)
                spd = True
            except np.linalg.LinAlgError:
                spd = False
        if spd:
            w, Z = scipy.linalg.eigh(S, M)
            perm = _order(w)
            w, Z = w[perm], _phase_only(Z[:, perm])
            U, V, Uinv, Vinv = Z.conj().T, Z, M @ Z, Z.conj().T @ M
            lam, unitary, method = np.ones(n), False, "generalized_hermitian"
        else:
            if _is_identity(M):
                w, Vm = scipy.linalg.eig(S)
            else:
                w, Vm = scipy.linalg.eig(S, M)
            if not np.all(np.isfinite(w)):
                raise DiagonalizationError(f"factor {k}: pencil has infinite eigenvalues", factor=k)
            perm = _order(w)
            w, Vm = w[perm], _fix_phase(Vm[:, perm])
            if np.allclose(w.imag, 0, atol=1e-14 * max(np.abs(w).max(), 1e-300)) and not (
                np.iscomplexobj(S) or np.iscomplexobj(M)
            ):
                w, Vm = w.real, _fix_phase(Vm.real if np.allclose(Vm.imag, 0, atol=1e-13) else Vm)
            cond = np.linalg.cond(Vm)
            if not np.isfinite(cond) or cond > cond_max:
                raise DiagonalizationError(
                    f"factor {k}: eigenvector matrix condition {cond:.3e} exceeds {cond_max:.1e} "
                    "(pencil defective or nearly so)",
                    factor=k,
                )
            MV = M @ Vm
            U = np.linalg.inv(MV)
            V, Uinv, Vinv = Vm, MV, np.linalg.inv(Vm)
            lam, unitary, method = np.ones(n), False, "eigendecomposition"
        if np.iscomplexobj(w) and np.allclose(np.asarray(w).imag, 0) and not np.iscomplexobj(U):
            w = w.real
    mu = np.asarray(w)
    res_s = np.linalg.norm(U @ S @ V - np.diag(mu)) / s_norm
    res_m = np.linalg.norm(U @ M @ V - np.diag(lam)) / max(np.linalg.norm(M), 1e-300)
    if max(res_s, res_m) > tol:
        raise DiagonalizationError(
            f"factor {k}: diagonalization residual {max(res_s, res_m):.3e} exceeds {tol:.1e}", factor=k
        )
    cond_U = 1.0 if unitary else float(np.linalg.cond(U))
    cond_V = 1.0 if unitary else float(np.linalg.cond(V))
    return dict(U=U, V=V, Uinv=Uinv, Vinv=Vinv, mu=mu, lam=lam, unitary=unitary,
                cond_U=cond_U, cond_V=cond_V, residual=(res_s, res_m), method=method)


def joint_diagonalize(op, tol=1e-8, cond_max=DEFAULT_COND_MAX):
    """Diagonalize every factor pair of ``op``.

    Strategy per factor: block-circulant pairs use the DFT; ``M = I`` with
    Hermitian ``S`` uses a Hermitian eigensolver (``U = Q^H``, ``V = Q``);
    Hermitian ``S`` with Hermitian positive definite ``M`` uses the
    generalized Hermitian solver; anything else uses an eigendecomposition of
    the pencil with ``U = (M V)^{-1}`` so that ``lam = 1``. Eigenvalues are
    ordered by descending magnitude. Relative residuals above ``tol`` or an
    eigenvector condition number above ``cond_max`` raise
    :class:`DiagonalizationError`.
    """
    parts = [_diagonalize_pair(S, M, k + 1, tol, cond_max) for k, (S, M) in enumerate(op.factors)]
    return SpectralFactorization(
        U=[p["U"] for p in parts],
        V=[p["V"] for p in parts],
        Uinv=[p["Uinv"] for p in parts],
        Vinv=[p["Vinv"] for p in parts],
        mu=[p["mu"] for p in parts],
        lam=[p["lam"] for p in parts],
        unitary_flags=[p["unitary"] for p in parts],
        cond_U=[p["cond_U"] for p in parts],
        cond_V=[p["cond_V"] for p in parts],
        residuals=[p["residual"] for p in parts],
        methods=[p["method"] for p in parts],
    )


def lambda_tensor(fact):
    """Rank-(1,2,...,2,1) TT of the diagonal of the transformed operator.

    Entry ``(j_1, ..., j_d)`` equals
    ``sum_k lam_1[j_1] ... mu_k[j_k] ... lam_d[j_d]``.
    """
    mu, lam = fact.mu, fact.lam
    d = len(mu)
    if d == 1:
        return TTTensor((np.asarray(mu[0]).reshape(1, -1, 1),))
    dtype = np.result_type(*mu, *lam, np.float64)
    cores = []
    for k in range(d):
        n = len(mu[k])
        if k == 0:
            c = np.zeros((1, n, 2), dtype=dtype)
            c[0, :, 0], c[0, :, 1] = lam[k], mu[k]
        elif k == d - 1:
            c = np.zeros((2, n, 1), dtype=dtype)
            c[0, :, 0], c[1, :, 0] = mu[k], lam[k]
        else:
            c = np.zeros((2, n, 2), dtype=dtype)
            c[0, :, 0], c[0, :, 1], c[1, :, 1] = lam[k], mu[k], lam[k]
        cores.append(c)
    return TTTensor(tuple(cores))


def expanding(X):
    """Diagonal TT operator whose diagonal is ``vec(X)``; ranks are unchanged."""
    cores = []
    for c in X.cores:
        r0, n, r1 = c.shape
        e = np.zeros((r0, n, n, r1), dtype=c.dtype)
        idx = np.arange(n)
        e[:, idx, idx, :] = c
        cores.append(e)
    return TTMatrix(tuple(cores))


def assemble_inverse(fact, Xinv, cap=DEFAULT_DENSE_CAP):
    """TT matrix of ``(V_1 x ... x V_d) diag(Xinv) (U_1 x ... x U_d)``.

    Core ``k`` is ``V_k diag(X_k[a, :, b]) U_k``, i.e. the expanded core
    multiplied by ``V_k`` along its row mode and by ``U_k^T`` along its
    column mode. TT ranks equal those of ``Xinv``.
    """
    if Xinv.mode_sizes != fact.mode_sizes:
        raise ShapeMismatchError(f"Hadamard inverse modes {Xinv.mode_sizes} vs operator {fact.mode_sizes}")
    cores = []
    for k, c in enumerate(Xinv.cores):
        V = _as_dense(fact.V[k], cap)
        U = _as_dense(fact.U[k], cap)
        cores.append(np.einsum("im,amb,mj->aijb", V, c, U))
    return TTMatrix(tuple(cores))


def solve(fact, Xinv, f, eps=None, max_rank=None):
    """TT solution of ``L u = f`` without forming the inverse matrix.

    ``u = (x_k V_k)(Xinv * (x_k U_k) f)``. With ``eps`` the Hadamard
    product (and, for non-unitary transforms, the result) is rounded.
    """
    if f.mode_sizes != fact.mode_sizes:
        raise ShapeMismatchError(f"right-hand side modes {f.mode_sizes} vs operator {fact.mode_sizes}")
    fhat = ttmc(f, [(U, k + 1) for k, U in enumerate(fact.U)])
    if eps is None:
        g = hadamard(Xinv, fhat)
    else:
        g = hadamard_round(Xinv, fhat, eps, max_rank)
    u = ttmc(g, [(V, k + 1) for k, V in enumerate(fact.V)])
    if eps is not None and not all(fact.unitary_flags):
        u = round_tt(u, eps, max_rank)
    return u


def apply_operator(op, u, eps=None, max_rank=None):
    """TT of ``L u`` with internal ranks ``2 r`` before optional rounding.

    Core ``k`` carries the block pattern ``[[M_k u_k, S_k u_k], [0, M_k u_k]]``.
    """
    if u.mode_sizes != op.mode_sizes:
        raise ShapeMismatchError(f"vector modes {u.mode_sizes} vs operator {op.mode_sizes}")
    from .algebra import _apply_to_core

    d = op.d
    if d == 1:
        S, _ = op.factors[0]
        return TTTensor((_apply_to_core(S, u.cores[0]),))
    cores = []
    for k, ((S, M), c) in enumerate(zip(op.factors, u.cores)):
        sc, mc = _apply_to_core(S, c), _apply_to_core(M, c)
        r0, n, r1 = sc.shape
        dtype = np.result_type(sc, mc)
        if k == 0:
            out = np.concatenate([mc, sc], axis=2)
        elif k == d - 1:
            out = np.concatenate([sc, mc], axis=0)
        else:
            out = np.zeros((2 * r0, n, 2 * r1), dtype=dtype)
            out[:r0, :, :r1] = mc
            out[:r0, :, r1:] = sc
            out[r0:, :, r1:] = mc
        cores.append(out)
    res = TTTensor(tuple(cores))
    return res if eps is None else round_tt(res, eps, max_rank)


def accuracy_bound(fact, kappa_L, rel_residual):
    """``prod_k cond(U_k) cond(V_k) * kappa_L * rel_residual``.

    Bounds ``||X - L^{-1}||_F / ||L^{-1}||_F`` for the assembled inverse,
    where ``kappa_L = max|l| / min|l|`` over the diagonal tensor.
    """
    if kappa_L < 0 or rel_residual < 0:
        raise ValueError("inputs must be nonnegative")
    amp = float(np.prod([cu * cv for cu, cv in zip(fact.cond_U, fact.cond_V)]))
    return amp * kappa_L * rel_residual


def disk_initial_guess(fact):
    """Constant start ``E / c`` when the diagonal lies in a disk ``|z - c| <= D < |c|``.

    Applies when every ``lam_k`` is constant, so the diagonal is a scaled sum
    of per-mode terms whose bounding rectangle is exact. Then
    ``|1 - l / c| <= D / |c| < 1`` everywhere. Returns ``None`` otherwise.
    """
    from .rank_analysis import make_disk, sum_extremes

    lam_const = []
    for lam in fact.lam:
        lam = np.asarray(lam)
        if np.any(lam == 0) or not np.allclose(lam, lam[0], rtol=1e-14, atol=0):
            return None
        lam_const.append(lam[0])
    prefactor = np.prod(lam_const)
    c, D = make_disk(*sum_extremes(fact, range(1, fact.d + 1)))
    if abs(c) <= D * (1 + 1e-12):
        return None
    return TTTensor.rank_one(
        [np.full(n, 1.0 / (c * prefactor) if k == 0 else 1.0) for k, n in enumerate(fact.mode_sizes)]
    )


def hadamard_inverse(fact, cfg=None, initial_guess="auto"):
    """Build the diagonal TT and invert it; returns ``(L_tensor, X, report)``.

    ``initial_guess`` is ``"auto"`` (disk start when available, otherwise
    ``conj(L) / M``), ``"default"`` (always ``conj(L) / M``) or a TT tensor.
    """
    cfg = InversionConfig() if cfg is None else cfg
    L = lambda_tensor(fact)
    if isinstance(initial_guess, TTTensor):
        X0 = initial_guess
    elif initial_guess == "auto":
        X0 = disk_initial_guess(fact)
        if X0 is None:
            X0 = default_initial_guess(L)
    elif initial_guess == "default":
        X0 = default_initial_guess(L)
    else:
        raise ValueError(f"unknown initial guess {initial_guess!r}")
    X, report = newton_solve(L, X0, cfg)
    return L, X, report
