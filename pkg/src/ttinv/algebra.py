"""Linear algebra on TT tensors: sums, products, mode products and rounding."""
from __future__ import annotations

import numpy as np

from .core import TTTensor, right_orthogonalize, svd, truncation_rank
from .exceptions import ShapeMismatchError

__all__ = [
    "add",
    "scale",
    "hadamard",
    "kronecker",
    "mode_k_product",
    "ttmc",
    "round_tt",
    "hadamard_round",
    "real_part",
]

# Upper bound on intermediate array entries when forming product cores slice-wise.
_CHUNK_ENTRIES = 1 << 23


def _check_same_modes(A, B):
    if A.mode_sizes != B.mode_sizes:
        raise ShapeMismatchError(f"mode sizes differ: {A.mode_sizes} vs {B.mode_sizes}")


def add(A, B):
    """Elementwise sum; internal ranks add (cores concatenated block-diagonally)."""
    _check_same_modes(A, B)
    d = A.d
    dtype = np.result_type(A.dtype, B.dtype)
    if d == 1:
        return TTTensor((A.cores[0] + B.cores[0],))
    cores = []
    for k, (a, b) in enumerate(zip(A.cores, B.cores)):
        ra0, n, ra1 = a.shape
        rb0, _, rb1 = b.shape
        if k == 0:
            c = np.concatenate([a, b], axis=2)
        elif k == d - 1:
            c = np.concatenate([a, b], axis=0)
        else:
            c = np.zeros((ra0 + rb0, n, ra1 + rb1), dtype=dtype)
            c[:ra0, :, :ra1] = a
            c[ra0:, :, ra1:] = b
        cores.append(c)
    return TTTensor(tuple(cores))


def scale(A, s):
    """Multiply every entry by the scalar ``s`` (absorbed into the first core)."""
    cores = list(A.cores)
    cores[0] = cores[0] * s
    return TTTensor(tuple(cores))


def hadamard(A, B):
    """Elementwise product; internal ranks multiply."""
    _check_same_modes(A, B)
    cores = []
    for a, b in zip(A.cores, B.cores):
        c = np.einsum("aic,bie->abice", a, b)
        cores.append(c.reshape(a.shape[0] * b.shape[0], a.shape[1], a.shape[2] * b.shape[2]))
    return TTTensor(tuple(cores))


def kronecker(A, B):
    """Kronecker product of two order-d tensors.

    Mode ``k`` of the result has size ``n_k * m_k`` and the entry at
    ``s = i + (j - 1) n_k`` (1-based) is ``A(.., i, ..) * B(.., j, ..)``, so
    the index of ``A`` runs fastest.
    """
    if A.d != B.d:
        raise ShapeMismatchError(f"orders differ: {A.d} vs {B.d}")
    cores = []
    for a, b in zip(A.cores, B.cores):
        c = np.einsum("aic,bje->abjice", a, b)
        cores.append(
            c.reshape(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1], a.shape[2] * b.shape[2])
        )
    return TTTensor(tuple(cores))


def _apply_to_core(U, core):
    r0, n, r1 = core.shape
    mat = core.transpose(1, 0, 2).reshape(n, r0 * r1)
    res = np.asarray(U @ mat)
    return res.reshape(res.shape[0], r0, r1).transpose(1, 0, 2)


def mode_k_product(A, U, k):
    """Mode-``k`` product ``A x_k U`` (``k`` is 1-based).

    ``U`` may be a dense matrix or any linear operator supporting ``U @ X``
    for 2-D ``X`` (e.g. :class:`scipy.sparse.linalg.LinearOperator`).
    Only core ``k`` changes.
    """
    if not 1 <= k <= A.d:
        raise ShapeMismatchError(f"mode {k} out of range 1..{A.d}")
    if U.shape[1] != A.mode_sizes[k - 1]:
        raise ShapeMismatchError(
            f"matrix has {U.shape[1]} columns but mode {k} has size {A.mode_sizes[k - 1]}"
        )
    cores = list(A.cores)
    cores[k - 1] = _apply_to_core(U, cores[k - 1])
    return TTTensor(tuple(cores))


def ttmc(A, factors):
    """Tensor-times-matrix chain over distinct modes; ``factors`` holds ``(U, mode)`` pairs."""
    modes = [k for _, k in factors]
    if len(set(modes)) != len(modes):
        raise ShapeMismatchError(f"duplicate modes in TTMc: {modes}")
    for U, k in factors:
        if not 1 <= k <= A.d:
            raise ShapeMismatchError(f"mode {k} out of range 1..{A.d}")
        if U.shape[1] != A.mode_sizes[k - 1]:
            raise ShapeMismatchError(f"factor for mode {k} is not conformal")
    cores = list(A.cores)
    for U, k in factors:
        cores[k - 1] = _apply_to_core(U, cores[k - 1])
    return TTTensor(tuple(cores))


def _truncate_left_to_right(cores, delta, max_rank):
    # cores 2..d right-orthonormal on entry
    cap_hit = False
    for k in range(len(cores) - 1):
        r0, n, r1 = cores[k].shape
        u, s, vh = svd(cores[k].reshape(r0 * n, r1))
        r = truncation_rank(s, delta)
        if max_rank is not None and r > max_rank:
            r, cap_hit = int(max_rank), True
        cores[k] = u[:, :r].reshape(r0, n, r)
        cores[k + 1] = np.tensordot(s[:r, None] * vh[:r], cores[k + 1], axes=(1, 0))
    return cores, cap_hit


def _truncate_right_to_left(cores, delta, max_rank):
    # cores 1..d-1 left-orthonormal on entry
    cap_hit = False
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        u, s, vh = svd(cores[k].reshape(r0, n * r1))
        r = truncation_rank(s, delta)
        if max_rank is not None and r > max_rank:
            r, cap_hit = int(max_rank), True
        cores[k] = vh[:r].reshape(r, n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], u[:, :r] * s[:r], axes=(2, 0))
    return cores, cap_hit


def round_tt(A, eps, max_rank=None, reference_norm=None, return_info=False):
    """TT-rounding with relative Frobenius accuracy ``eps``.

    A right-to-left QR sweep is followed by a left-to-right truncated SVD
    sweep with per-step threshold ``eps * ||A||_F / sqrt(d - 1)``. Passing
    ``reference_norm`` replaces ``||A||_F`` in that threshold, which turns
    ``eps`` into an accuracy relative to another quantity. ``max_rank`` is a
    hard cap applied after the accuracy rule; with ``return_info=True`` the
    result is ``(tensor, cap_hit)``.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if A.d == 1:
        return (A, False) if return_info else A
    cores = right_orthogonalize(A.cores)
    nrm = np.linalg.norm(cores[0])
    if nrm == 0:
        Z = TTTensor.zeros(A.mode_sizes)
        return (Z, False) if return_info else Z
    ref = nrm if reference_norm is None else reference_norm
    delta = eps * ref / np.sqrt(A.d - 1)
    cores, cap_hit = _truncate_left_to_right(cores, delta, max_rank)
    out = TTTensor(tuple(cores))
    return (out, cap_hit) if return_info else out


def _product_core(carry, a, b):
    """``Y[p, i, c, e] = sum_{x, y} carry[p, x, y] a[x, i, c] b[y, i, e]``."""
    p = carry.shape[0]
    ra0, n, ra1 = a.shape
    rb0, _, rb1 = b.shape
    dtype = np.result_type(carry, a, b)
    out = np.empty((p, n, ra1, rb1), dtype=dtype)
    step = max(1, _CHUNK_ENTRIES // max(1, p * rb0 * ra1))
    for i0 in range(0, n, step):
        i1 = min(n, i0 + step)
        t = np.tensordot(carry, a[:, i0:i1, :], axes=(1, 0))  # p, y, i, c
        t = t.transpose(2, 0, 3, 1).reshape(i1 - i0, p * ra1, rb0)
        y = np.matmul(t, b[:, i0:i1, :].transpose(1, 0, 2))  # i, p*c, e
        out[:, i0:i1] = y.reshape(i1 - i0, p, ra1, rb1).transpose(1, 0, 2, 3)
    return out


def hadamard_round(A, B, eps, max_rank=None, return_info=False):
    """Rounded elementwise product without forming the full product cores.

    Product cores are built one at a time from the QR carry of the previous
    step, so the left factor rank never exceeds ``r_{k-1} n_k``. A
    right-to-left truncated SVD sweep then enforces the relative accuracy
    ``eps`` exactly as :func:`round_tt` does.
    """
    _check_same_modes(A, B)
    if A.d == 1:
        C = hadamard(A, B)
        return (C, False) if return_info else C
    d = A.d
    carry = np.ones((1, 1, 1), dtype=np.result_type(A.dtype, B.dtype))
    cores = []
    for k in range(d - 1):
        y = _product_core(carry, A.cores[k], B.cores[k])
        p, n, c, e = y.shape
        q, r = np.linalg.qr(y.reshape(p * n, c * e))
        cores.append(q.reshape(p, n, q.shape[1]))
        carry = r.reshape(r.shape[0], c, e)
    y = _product_core(carry, A.cores[-1], B.cores[-1])
    cores.append(y.reshape(y.shape[0], y.shape[1], 1))
    nrm = np.linalg.norm(cores[-1])
    if nrm == 0:
        Z = TTTensor.zeros(A.mode_sizes)
        return (Z, False) if return_info else Z
    delta = eps * nrm / np.sqrt(d - 1)
    cores, cap_hit = _truncate_right_to_left(cores, delta, max_rank)
    out = TTTensor(tuple(cores))
    return (out, cap_hit) if return_info else out


def real_part(A, eps=None, max_rank=None):
    """Real TT of ``Re(A)``.

    Each complex core ``c`` becomes the real block ``[[Re c, -Im c], [Im c, Re c]]``
    (first core: top block row, last core: left block column), which doubles
    the ranks exactly. With ``eps`` the result is rounded.
    """
    if not A.is_complex:
        return A if eps is None else round_tt(A, eps, max_rank)
    if A.d == 1:
        return TTTensor((A.cores[0].real.copy(),))
    cores = []
    for k, c in enumerate(A.cores):
        re, im = c.real, c.imag
        top = np.concatenate([re, -im], axis=2)
        if k == 0:
            cores.append(top)
        elif k == A.d - 1:
            cores.append(np.concatenate([re, im], axis=0))
        else:
            cores.append(np.concatenate([top, np.concatenate([im, re], axis=2)], axis=0))
    out = TTTensor(tuple(cores))
    return out if eps is None else round_tt(out, eps, max_rank)
