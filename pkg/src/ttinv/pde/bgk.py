"""Boltzmann-BGK equation ``f_t + v . grad_x f = (nu / Kn)(f_eq - f)`` on a periodic box.

The distribution lives on ``d`` modes; mode ``k`` joins ``(v_k, x_k)`` with
``v_k`` the slow index, so each mode has ``n_v * n_x`` entries. Transport is
discretized with Crank-Nicolson and central differences; collisions are
treated explicitly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..algebra import add, hadamard, real_part, round_tt, scale
from ..core import TTTensor, from_dense, to_dense
from ..exceptions import DegenerateInputError, DomainError, ShapeMismatchError
from ..hadamard import InversionConfig
from ..kron import BlockCirculant, KroneckerSumOperator, apply_operator, solve
from .common import CNOperators, GridSpec, averaged_rank, expand_spatial, prepare_cn

__all__ = [
    "BGKParams",
    "MacroFields",
    "BGK_TOLERANCES",
    "gradient_first_row",
    "bgk_gradient_matrix",
    "bgk_operator",
    "maxwellian",
    "maxwellian_dense",
    "moments",
    "moments_dense",
    "collision_frequency",
    "initial_fields",
    "bgk_prepare",
    "bgk_step",
    "bgk_dense_operators",
    "bgk_dense_step",
    "bgk_simulate",
    "restrict",
]

BGK_TOLERANCES = InversionConfig(tol=1e-10, round_eps=1e-12)


@dataclass(frozen=True)
class BGKParams:
    Kn: float = 1.0
    Bo: float = 3.65
    K: float = 1.0
    mu_exp: float = 0.5
    dt: float = 0.0025

    def __post_init__(self):
        for name in ("Kn", "Bo", "K", "mu_exp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt < 0:
            raise ValueError("dt must be nonnegative")


@dataclass
class MacroFields:
    rho: np.ndarray
    U: tuple
    T: np.ndarray


def gradient_first_row(n, h, scheme="central"):
    """First row of the periodic first-difference matrix.

    ``central`` is ``(f_{i+1} - f_{i-1}) / (2 h)``; ``printed`` uses ``1 / h``
    in place of ``1 / (2 h)``, which is twice the derivative.
    """
    if scheme not in ("central", "printed"):
        raise ValueError(f"unknown scheme {scheme!r}")
    w = 1 / (2 * h) if scheme == "central" else 1 / h
    row = np.zeros(n)
    if n > 1:
        row[1 % n] += w
        row[-1] -= w
    return row


def bgk_gradient_matrix(n, h, scheme="central"):
    """Dense antisymmetric circulant first-difference matrix."""
    return BlockCirculant(gradient_first_row(n, h, scheme)).toarray()


def _check_grids(grid_x, grid_v):
    if grid_x.boundary != "periodic" or grid_v.boundary != "periodic":
        raise ValueError("BGK needs periodic x and v grids")
    if grid_x.d != grid_v.d:
        raise ShapeMismatchError("x and v grids must have the same dimension")


def bgk_operator(grid_x, grid_v, params, side="left", scheme="central"):
    """Crank-Nicolson transport operator as a Kronecker sum of block circulants.

    Factor ``k`` is ``(1/d) I +- (dt/2) V x grad`` with ``V = diag(v)``:
    ``+`` for the implicit (left) side, ``-`` for the explicit (right) side.
    """
    _check_grids(grid_x, grid_v)
    sign = 1.0 if side == "left" else -1.0
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    d, nx = grid_x.d, grid_x.n
    g = gradient_first_row(nx, grid_x.h, scheme)
    rows = np.outer(grid_v.nodes, g) * (sign * params.dt / 2)
    rows[:, 0] += 1.0 / d
    S = BlockCirculant(rows)
    M = BlockCirculant.identity(grid_v.n, nx)
    return KroneckerSumOperator([(S, M) for _ in range(d)])


def _spatial_shape(grid_x):
    return (grid_x.n,) * grid_x.d


def _interleave(arr, d):
    """Axes ``(x_1..x_d, v_1..v_d)`` to ``(v_1, x_1, ..., v_d, x_d)``."""
    order = [ax for k in range(d) for ax in (d + k, k)]
    return arr.transpose(order)


def maxwellian_dense(fields, grid_x, grid_v, Bo):
    """Equilibrium ``rho / (2 pi T / Bo)^{d/2} exp(-Bo |v - U|^2 / (2 T))`` as a dense tensor.

    The result has shape ``(n_v * n_x,) * d``.
    """
    d = grid_x.d
    rho, T = np.asarray(fields.rho, float), np.asarray(fields.T, float)
    if np.any(T <= 0):
        raise DomainError("temperature must be positive")
    if np.any(rho <= 0):
        raise DomainError("density must be positive")
    rho = np.broadcast_to(rho, _spatial_shape(grid_x))
    T = np.broadcast_to(T, _spatial_shape(grid_x))
    v = grid_v.nodes
    xs = (slice(None),) * d
    expo = np.zeros(_spatial_shape(grid_x) + (grid_v.n,) * d)
    for k in range(d):
        U_k = np.broadcast_to(np.asarray(fields.U[k], float), _spatial_shape(grid_x))
        vk = v.reshape((1,) * d + tuple(-1 if s == k else 1 for s in range(d)))
        expo = expo + (vk - U_k[xs + (None,) * d]) ** 2
    T_ = T[xs + (None,) * d]
    f = rho[xs + (None,) * d] / (2 * np.pi * T_ / Bo) ** (d / 2) * np.exp(-Bo * expo / (2 * T_))
    return _interleave(f, d).reshape((grid_v.n * grid_x.n,) * d)


def maxwellian(fields, grid_x, grid_v, Bo, eps=1e-10):
    """TT form of :func:`maxwellian_dense`; exact rank one for constant fields."""
    const = all(np.ptp(np.asarray(a, float)) == 0 for a in (fields.rho, fields.T, *fields.U))
    d = grid_x.d
    if const:
        rho, T = float(np.ravel(fields.rho)[0]), float(np.ravel(fields.T)[0])
        if T <= 0:
            raise DomainError("temperature must be positive")
        if rho <= 0:
            raise DomainError("density must be positive")
        v = grid_v.nodes
        vecs = []
        for k in range(d):
            U_k = float(np.ravel(fields.U[k])[0])
            g = np.exp(-Bo * (v - U_k) ** 2 / (2 * T)) / np.sqrt(2 * np.pi * T / Bo)
            g = g * rho if k == 0 else g
            vecs.append(np.repeat(g, grid_x.n))
        return TTTensor.rank_one(vecs)
    dense = maxwellian_dense(fields, grid_x, grid_v, Bo)
    if d == 1:
        return TTTensor((dense.reshape(1, -1, 1),))
    return from_dense(dense, eps)


def _contract(f, weights, n_v, n_x):
    """Contract the ``v`` part of each mode with ``weights[k]``; returns a dense spatial array."""
    cores = []
    for c, w in zip(f.cores, weights):
        r0, _, r1 = c.shape
        cores.append(np.einsum("avxb,v->axb", c.reshape(r0, n_v, n_x, r1), w))
    return to_dense(TTTensor(tuple(cores)))


def _finish_moments(rho, m, e, d, Bo):
    if np.any(rho <= 0):
        raise DegenerateInputError("nonpositive density encountered in moments")
    U = tuple(mk / rho for mk in m)
    T = Bo / (d * rho) * (sum(e) - rho * sum(u * u for u in U))
    return MacroFields(rho, U, T)


def moments(f, grid_x, grid_v, Bo):
    """Density, mean velocity and temperature by the rectangle rule in ``v``."""
    d, n_v, n_x = grid_x.d, grid_v.n, grid_x.n
    if f.mode_sizes != (n_v * n_x,) * d:
        raise ShapeMismatchError("distribution does not match the grids")
    dv = grid_v.h
    v = grid_v.nodes
    base = np.full(n_v, dv)
    rho = _contract(f, [base] * d, n_v, n_x)
    m, e = [], []
    for k in range(d):
        w = [base] * d
        w[k] = dv * v
        m.append(_contract(f, w, n_v, n_x))
        w[k] = dv * v * v
        e.append(_contract(f, w, n_v, n_x))
    return _finish_moments(rho, m, e, d, Bo)


def moments_dense(F, grid_x, grid_v, Bo):
    """Dense counterpart of :func:`moments` for a tensor of shape ``(n_v n_x,) * d``."""
    d, n_v, n_x = grid_x.d, grid_v.n, grid_x.n
    A = np.asarray(F).reshape((n_v, n_x) * d)
    dv, v = grid_v.h, grid_v.nodes
    vaxes = tuple(2 * k for k in range(d))

    def weighted(k, power):
        shape = [1] * (2 * d)
        shape[2 * k] = n_v
        w = (v**power).reshape(shape)
        return (A * w).sum(axis=vaxes) * dv**d

    rho = A.sum(axis=vaxes) * dv**d
    m = [weighted(k, 1) for k in range(d)]
    e = [weighted(k, 2) for k in range(d)]
    return _finish_moments(rho, m, e, d, Bo)


def collision_frequency(fields, params):
    """``nu = rho K T^(1 - mu)``."""
    return np.asarray(fields.rho) * params.K * np.asarray(fields.T) ** (1 - params.mu_exp)


def initial_fields(grid_x):
    """``rho = 1 + 0.5 prod_k sin(x_k)``, ``U = 0``, ``T = 1``."""
    d = grid_x.d
    mesh = np.meshgrid(*([grid_x.nodes] * d), indexing="ij")
    rho = 1 + 0.5 * np.prod([np.sin(x) for x in mesh], axis=0)
    zeros = np.zeros(_spatial_shape(grid_x))
    return MacroFields(rho, tuple(zeros.copy() for _ in range(d)), np.ones(_spatial_shape(grid_x)))


def bgk_prepare(grid_x, grid_v, params, cfg=BGK_TOLERANCES):
    left = bgk_operator(grid_x, grid_v, params, "left")
    right = bgk_operator(grid_x, grid_v, params, "right")
    return prepare_cn(left, right, cfg)


def bgk_step(f, ops: CNOperators, grid_x, grid_v, params, fields=None):
    """One step of ``(I + dt/2 L_v) f' = (I - dt/2 L_v) f + dt (nu / Kn)(f_eq - f)``."""
    eps, max_rank = ops.cfg.round_eps, ops.cfg.max_rank
    if params.dt == 0:
        return f
    fields = moments(f, grid_x, grid_v, params.Bo) if fields is None else fields
    feq = maxwellian(fields, grid_x, grid_v, params.Bo, eps)
    nu = expand_spatial(collision_frequency(fields, params), grid_v.n, eps)
    relax = hadamard(nu, add(feq, scale(f, -1.0)))
    rhs = add(apply_operator(ops.right, f), scale(relax, params.dt / params.Kn))
    rhs = round_tt(rhs, eps, max_rank)
    out = solve(ops.fact, ops.Xinv, rhs, eps, max_rank)
    return real_part(out, eps, max_rank) if not rhs.is_complex else out


def bgk_dense_operators(grid_x, grid_v, params, scheme="central"):
    left = bgk_operator(grid_x, grid_v, params, "left", scheme).to_dense()
    right = bgk_operator(grid_x, grid_v, params, "right", scheme).to_dense()
    return scipy.linalg.lu_factor(left), right


def bgk_dense_step(F, dense_ops, grid_x, grid_v, params):
    """Dense oracle for :func:`bgk_step`."""
    lu, right = dense_ops
    shape = np.shape(F)
    fields = moments_dense(F, grid_x, grid_v, params.Bo)
    feq = maxwellian_dense(fields, grid_x, grid_v, params.Bo)
    nu = collision_frequency(fields, params)
    nu_full = _interleave(
        np.broadcast_to(nu[(slice(None),) * grid_x.d + (None,) * grid_x.d],
                        _spatial_shape(grid_x) + (grid_v.n,) * grid_x.d),
        grid_x.d,
    ).reshape(shape)
    rhs = right @ np.ravel(F) + params.dt / params.Kn * np.ravel(nu_full * (feq - F))
    return scipy.linalg.lu_solve(lu, rhs).reshape(shape)


@dataclass
class BGKRun:
    f: TTTensor
    fields: MacroFields
    steps: int
    averaged_rank: int
    ops: CNOperators
    seconds: float


def bgk_simulate(n, d=1, params=None, t_end=1.0, cfg=BGK_TOLERANCES, domain=(-np.pi, np.pi), callback=None):
    """March from the Maxwellian initial state to ``t_end`` on ``n`` points per x and v direction.

    ``callback(step, t, f)`` is called after every step (and once for step 0).
    """
    params = BGKParams() if params is None else params
    t0 = time.perf_counter()
    gx = GridSpec(d, n, domain, "periodic")
    gv = GridSpec(d, n, domain, "periodic")
    ops = bgk_prepare(gx, gv, params, cfg)
    f = maxwellian(initial_fields(gx), gx, gv, params.Bo, cfg.round_eps)
    steps = 0 if params.dt == 0 else int(round(t_end / params.dt))
    if callback is not None:
        callback(0, 0.0, f)
    for s in range(1, steps + 1):
        f = bgk_step(f, ops, gx, gv, params)
        if callback is not None:
            callback(s, s * params.dt, f)
    fields = moments(f, gx, gv, params.Bo)
    return BGKRun(f, fields, steps, averaged_rank(ops.Xinv), ops, time.perf_counter() - t0)


def restrict(dense_fine, n_fine, n_coarse, d):
    """Values of a fine-grid distribution at the coarse-grid nodes (nested periodic grids)."""
    if n_fine % n_coarse:
        raise ValueError("coarse grid must divide the fine grid")
    s = n_fine // n_coarse
    A = np.asarray(dense_fine).reshape((n_fine, n_fine) * d)
    return A[(slice(None, None, s),) * (2 * d)].reshape((n_coarse * n_coarse,) * d)
