import numpy as np
import pytest

from ttinv.algebra import scale
from ttinv.core import TTTensor, from_dense, to_dense
from ttinv.exceptions import DomainError, RegimeError, SizeCapError, UnsupportedBoundaryError
from ttinv.hadamard import InversionConfig
from ttinv.kron import KroneckerSumOperator, apply_operator, joint_diagonalize
from ttinv.pde import bgk, fokker_planck as fp
from ttinv.pde.common import GridSpec, averaged_rank, dense_reference_solve, relative_error
from ttinv.pde.poisson import poisson_exact, poisson_operator, poisson_rhs, poisson_solve

from .conftest import random_tt

PI = np.pi


def same_spectrum(a, b, atol=1e-10):
    key = lambda z: sorted(zip(np.round(np.real(z), 8), np.round(np.imag(z), 8)))
    return np.allclose(np.array(key(a)), np.array(key(b)), atol=atol)


# ---------------------------------------------------------------- grids and helpers

def test_grid_spacing():
    assert GridSpec(1, 3, (0.0, 4.0)).h == 1.0
    assert GridSpec(1, 4, (0.0, 4.0), "periodic").h == 1.0
    assert np.allclose(GridSpec(1, 4, (-PI, PI), "periodic").nodes, [-PI, -PI / 2, 0, PI / 2])
    with pytest.raises(ValueError):
        GridSpec(1, 3, (1.0, 0.0))


def test_relative_error_examples(rng):
    T = random_tt(rng, (3, 4, 2))
    assert relative_error(T, T) == pytest.approx(0, abs=1e-7)
    assert relative_error(scale(T, 2.0), T) == pytest.approx(1.0)
    U = random_tt(rng, (3, 4, 2))
    dense = np.linalg.norm(to_dense(U) - to_dense(T)) / np.linalg.norm(to_dense(T))
    assert relative_error(U, T) == pytest.approx(dense, rel=1e-12)
    with pytest.raises(DomainError):
        relative_error(T, TTTensor.zeros((3, 4, 2)))


def test_dense_reference_solve(rng):
    I = KroneckerSumOperator([(np.eye(3) / 2, np.eye(3))] * 2)
    f = rng.standard_normal((3, 3))
    assert np.allclose(dense_reference_solve(I, f), f)
    with pytest.raises(SizeCapError):
        dense_reference_solve(poisson_operator(GridSpec(3, 256)), np.zeros(1))


def test_averaged_rank():
    assert averaged_rank(TTTensor.random((2, 2, 2, 2), (1, 2, 3, 2, 1))) == 2
    assert averaged_rank(TTTensor.ones((5,))) == 1


# ---------------------------------------------------------------- Poisson

def test_poisson_operator_examples():
    op = poisson_operator(GridSpec(3, 3, (-2.0, 2.0)))  # h = 1
    S = op.factors[0][0]
    assert np.allclose(np.linalg.eigvalsh(S), [2 - np.sqrt(2), 2, 2 + np.sqrt(2)])
    np.linalg.cholesky(S)
    op2 = poisson_operator(GridSpec(2, 3, (-2.0, 2.0)))
    assert np.allclose(op2.to_dense(), np.kron(S, np.eye(3)) + np.kron(np.eye(3), S))
    with pytest.raises(UnsupportedBoundaryError):
        poisson_operator(GridSpec(2, 3, boundary="periodic"))


def test_poisson_rhs_and_exact():
    g = GridSpec(3, 9)  # x = 0 is a node
    f, u = poisson_rhs(g), poisson_exact(g)
    assert max(f.ranks) <= 3 and max(u.ranks) <= 3
    assert to_dense(f)[4, 4, 4] == pytest.approx(0, abs=1e-13)
    x = g.nodes
    rng = np.random.default_rng(0)
    F = to_dense(f)
    for idx in rng.integers(0, 9, size=(100, 3)):
        xs = x[idx]
        val = 6 * PI**2 * sum(np.sin(2 * PI * xs[k]) * np.prod(np.sin(PI * np.delete(xs, k))) for k in range(3))
        assert F[tuple(idx)] == pytest.approx(val, abs=1e-12)
    U = to_dense(u)
    assert np.allclose(U, U.transpose(1, 0, 2)) and np.allclose(U, U.transpose(2, 1, 0))


def test_poisson_discrete_consistency():
    errs = []
    for n in (15, 31):
        g = GridSpec(3, n)
        Au = to_dense(apply_operator(poisson_operator(g), poisson_exact(g)))
        ref = to_dense(poisson_rhs(g))
        errs.append(np.linalg.norm(Au - ref) / np.linalg.norm(ref))
    assert 3.4 < errs[0] / errs[1] < 4.6


def test_poisson_tt_vs_dense_solver():
    g = GridSpec(2, 8)
    r = poisson_solve(8, 2, InversionConfig(tol=1e-10, round_eps=1e-12))
    ref = dense_reference_solve(poisson_operator(g), to_dense(poisson_rhs(g)))
    assert np.linalg.norm(to_dense(r.u) - ref) / np.linalg.norm(ref) < 1e-8


def test_poisson_second_order():
    errs = [poisson_solve(n).relative_error for n in (16, 32, 64)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.4 <= r <= 4.6 for r in ratios)


# ---------------------------------------------------------------- BGK

def test_gradient_matrix_conventions():
    printed = bgk.bgk_gradient_matrix(4, 1.0, scheme="printed")
    assert same_spectrum(np.linalg.eigvals(printed), [0, 2j, 0, -2j])
    central = bgk.bgk_gradient_matrix(4, 1.0)
    assert same_spectrum(np.linalg.eigvals(central), [0, 1j, 0, -1j])
    for G in (printed, central):
        assert np.allclose(G.T, -G) and np.allclose(G.sum(axis=1), 0)


def _grids(d, n):
    g = GridSpec(d, n, (-PI, PI), "periodic")
    return g, g


def test_bgk_operator_properties():
    gx, gv = _grids(1, 8)
    p = bgk.BGKParams(dt=0.1)
    S = bgk.bgk_operator(gx, gv, p).factors[0][0].toarray()
    assert np.linalg.norm(S @ S.conj().T - S.conj().T @ S) <= 1e-12
    f = joint_diagonalize(bgk.bgk_operator(gx, gv, p))
    v, j = np.meshgrid(gv.nodes, np.arange(8), indexing="ij")
    expected = 1 + 0.05 * v * (1j / gx.h) * np.sin(2 * PI * j / 8)
    assert same_spectrum(f.mu[0], expected.ravel())
    assert same_spectrum(np.linalg.eigvals(S), expected.ravel())
    zero = bgk.bgk_operator(gx, gv, bgk.BGKParams(dt=0.0)).to_dense()
    assert np.allclose(zero, np.eye(64))


def test_maxwellian_examples():
    gx, gv = _grids(1, 8)
    const = bgk.MacroFields(np.ones(8), (np.zeros(8),), np.ones(8))
    M = bgk.maxwellian(const, gx, gv, 1.0)
    assert M.ranks == (1, 1)
    vals = to_dense(M).reshape(8, 8)
    assert np.allclose(vals[:, 0], np.exp(-gv.nodes**2 / 2) / np.sqrt(2 * PI))
    gx2, gv2 = _grids(2, 4)
    M2 = bgk.maxwellian(bgk.MacroFields(np.ones((4, 4)), (np.zeros((4, 4)),) * 2, np.ones((4, 4))), gx2, gv2, 3.65)
    assert M2.ranks == (1, 1, 1)
    with pytest.raises(DomainError):
        bgk.maxwellian(bgk.MacroFields(np.ones(8), (np.zeros(8),), -np.ones(8) + np.arange(8)), gx, gv, 1.0)


def test_moments_recover_fields():
    gx, gv = _grids(1, 64)
    x = gx.nodes
    fields = bgk.MacroFields(1 + 0.3 * np.sin(x), (0.2 * np.cos(x),), 1 + 0.1 * np.cos(x))
    M = bgk.maxwellian(fields, gx, gv, 3.65)
    m = bgk.moments(M, gx, gv, 3.65)
    assert np.allclose(m.rho, fields.rho, atol=1e-3)
    assert np.allclose(m.U[0], fields.U[0], atol=1e-3)
    assert np.allclose(m.T, fields.T, atol=1e-3)
    m2 = bgk.moments(scale(M, 2.0), gx, gv, 3.65)
    assert np.allclose(m2.rho, 2 * m.rho) and np.allclose(m2.T, m.T) and np.allclose(m2.U[0], m.U[0])
    dense = bgk.moments_dense(to_dense(M), gx, gv, 3.65)
    assert np.allclose(dense.rho, m.rho) and np.allclose(dense.T, m.T)


def test_moments_velocity_shift():
    gx, gv = _grids(1, 32)
    F = to_dense(bgk.maxwellian(bgk.MacroFields(np.ones(32), (np.zeros(32),), np.ones(32)), gx, gv, 3.65))
    shifted = np.roll(F.reshape(32, 32), 2, axis=0).ravel()  # v -> v + 2 dv
    m = bgk.moments(TTTensor((shifted.reshape(1, -1, 1),)), gx, gv, 3.65)
    assert np.allclose(m.U[0], 2 * gv.h, atol=1e-6)


def test_moments_2d_tt_matches_dense():
    gx, gv = _grids(2, 6)
    fields = bgk.initial_fields(gx)
    M = bgk.maxwellian(fields, gx, gv, 3.65, eps=1e-12)
    a = bgk.moments(M, gx, gv, 3.65)
    b = bgk.moments_dense(to_dense(M), gx, gv, 3.65)
    assert np.allclose(a.rho, b.rho) and np.allclose(a.T, b.T) and np.allclose(a.U[1], b.U[1], atol=1e-12)


def test_collision_frequency():
    p = bgk.BGKParams()
    f = bgk.MacroFields(np.array([1.0, 2.0]), (np.zeros(2),), np.array([1.0, 4.0]))
    assert np.allclose(bgk.collision_frequency(f, p), [1.0, 4.0])
    p1 = bgk.BGKParams(mu_exp=1.0)
    assert np.allclose(bgk.collision_frequency(f, p1), [1.0, 2.0])


def test_bgk_step_zero_dt_and_equilibrium():
    gx, gv = _grids(1, 16)
    p0 = bgk.BGKParams(dt=0.0)
    ops0 = bgk.bgk_prepare(gx, gv, p0)
    f = bgk.maxwellian(bgk.initial_fields(gx), gx, gv, p0.Bo)
    assert np.allclose(to_dense(bgk.bgk_step(f, ops0, gx, gv, p0)), to_dense(f))
    p = bgk.BGKParams(dt=1e-4)
    ops = bgk.bgk_prepare(gx, gv, p)
    eq = bgk.maxwellian(bgk.MacroFields(np.ones(16), (np.zeros(16),), np.ones(16)), gx, gv, p.Bo)
    nxt = bgk.bgk_step(eq, ops, gx, gv, p)
    assert relative_error(nxt, eq) <= 1e-6


@pytest.mark.parametrize("d,n", [(1, 16), (2, 4)])
def test_bgk_step_matches_dense(d, n):
    gx, gv = _grids(d, n)
    p = bgk.BGKParams(dt=0.01)
    ops = bgk.bgk_prepare(gx, gv, p)
    dense_ops = bgk.bgk_dense_operators(gx, gv, p)
    f = bgk.maxwellian(bgk.initial_fields(gx), gx, gv, p.Bo, 1e-13)
    F = to_dense(f)
    for _ in range(5):
        f = bgk.bgk_step(f, ops, gx, gv, p)
        F = bgk.bgk_dense_step(F, dense_ops, gx, gv, p)
        assert np.linalg.norm(to_dense(f) - F) / np.linalg.norm(F) < 1e-8


def test_restrict_nested_grids():
    fine = np.arange(64.0).reshape(8, 8)
    coarse = bgk.restrict(fine.ravel(), 8, 4, 1)
    assert np.array_equal(coarse.reshape(4, 4), fine[::2, ::2])


# ---------------------------------------------------------------- Fokker-Planck

def test_fp_operator_examples():
    g = GridSpec(1, 6, (-5.0, 5.0))
    assert np.allclose(fp.fp_operator(g, 0.0).to_dense(), np.eye(6))
    dt, h, x = 0.01, g.h, g.nodes
    grad = (np.eye(6, k=1) - np.eye(6, k=-1)) / (2 * h)
    lap = (np.eye(6, k=1) - 2 * np.eye(6) + np.eye(6, k=-1)) / h**2
    S = (1 - dt / 2) * np.eye(6) - dt / 2 * np.diag(x) @ grad - dt / 4 * lap
    assert np.allclose(fp.fp_operator(g, dt).factors[0][0], S)
    R = (1 + dt / 2) * np.eye(6) + dt / 2 * np.diag(x) @ grad + dt / 4 * lap
    assert np.allclose(fp.fp_operator(g, dt, side="right").factors[0][0], R)


def test_fp_tridiagonal_regime():
    A = fp.fp_tridiagonal_A(GridSpec(1, 64, (-5.0, 5.0)))  # h ~ 0.154
    w = np.linalg.eigvals(A)
    assert np.abs(w.imag).max() < 1e-10
    assert np.min(np.diff(np.sort(w.real))) > 1e-8
    g = GridSpec(1, 64, (-5.0, 5.0))
    core = np.diag(g.nodes) @ fp.gradient_matrix(64, g.h) / 2 + fp.second_difference(64, g.h) / 4
    assert np.allclose(core, (A - 2 / g.h * np.eye(64)) / (4 * g.h))
    with pytest.raises(RegimeError):
        fp.fp_tridiagonal_A(GridSpec(1, 32, (-5.0, 5.0)))
    with pytest.raises(RegimeError) as info:
        fp.fp_tridiagonal_A(GridSpec(1, 4, (-5.0, 5.0)))  # h = 2
    assert info.value.index >= 2


def test_fp_exact():
    g = GridSpec(3, 8, (-5.0, 5.0))
    assert fp.sigma(0.0) == 2.0 and fp.sigma(50.0) == pytest.approx(1.0)
    assert fp.fp_exact(g, 0.3).ranks == (1, 1, 1, 1)
    assert np.allclose(to_dense(fp.fp_exact(g, 0.0)), to_dense(fp.fp_initial(g)))
    assert fp.FPState(fp.fp_initial(g), 0.0).sigma_ref == 2.0


def test_fp_step_matches_dense_and_conserves_mass():
    g = GridSpec(1, 32, (-5.0, 5.0))
    dt = 0.0025
    ops = fp.fp_prepare(g, dt)
    dense_ops = fp.fp_dense_operators(g, dt)
    s = fp.FPState(fp.fp_initial(g))
    R = to_dense(s.rho_tt)
    mass0 = R.sum() * g.h
    for _ in range(20):
        s = fp.fp_step(s, ops, dt)
        R2 = fp.fp_dense_step(R, dense_ops)
        assert np.linalg.norm(to_dense(s.rho_tt) - R2) / np.linalg.norm(R2) < 1e-8
        assert abs(R2.sum() - R.sum()) * g.h <= 1e-3 * mass0
        R = R2
    assert s.t == pytest.approx(20 * dt)


def test_fp_spatial_convergence():
    errs = [fp.fp_simulate(n, 1, dt=0.01, t_end=0.2).errors[-1] for n in (31, 63)]
    assert 3.0 < errs[0] / errs[1] < 5.0
