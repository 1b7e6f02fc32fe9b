import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttinv.core import TTTensor, matricize, to_dense
from ttinv.exceptions import BoundsError, BudgetExceededError, CertificateStateError, SizeCapError
from ttinv.kron import KroneckerSumOperator, SpectralFactorization, joint_diagonalize, lambda_tensor
from ttinv.pde.bgk import BGKParams, bgk_operator
from ttinv.pde.common import GridSpec
from ttinv.pde.fokker_planck import fp_operator
from ttinv.pde.poisson import poisson_operator
from ttinv.rank_analysis import (
    DiskCertificate,
    decay_factor,
    empirical_sv_decay,
    eps_rank,
    magnitude_bounds,
    make_disk,
    rank_bound,
    ratio_extremes,
    theorem_decay_factor,
    verify_condition,
)


def spectra(*mus):
    mus = [np.asarray(m, dtype=complex) for m in mus]
    ones = [np.ones(len(m)) for m in mus]
    eye = [np.eye(len(m)) for m in mus]
    return SpectralFactorization(eye, eye, eye, eye, mus, ones, [True] * len(mus),
                                 [1.0] * len(mus), [1.0] * len(mus))


def poisson_fact(n, d=3, h=None):
    grid = GridSpec(d, n)
    op = poisson_operator(grid) if h is None else KroneckerSumOperator(
        [((2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2, np.eye(n))] * d)
    return joint_diagonalize(op)


def test_ratio_extremes_poisson_example():
    f = poisson_fact(3, h=1.0)
    a1, b1, a2, b2 = ratio_extremes(f, 1)
    assert a1 == pytest.approx(2 - math.sqrt(2)) and b1 == pytest.approx(2 + math.sqrt(2))
    assert a2 == b2 == 0


def test_ratio_extremes_single_mode_and_range():
    f = spectra([1 + 1j, 3 - 2j], [1.0, 2.0])
    assert ratio_extremes(f, 1) == (1.0, 3.0, -2.0, 1.0)
    with pytest.raises(BoundsError):
        ratio_extremes(f, 2)


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_separable_extremes_equal_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    mus = [rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in range(4)]
    f = spectra(*mus)
    sums = np.array([sum(t) for t in itertools.product(*mus[:k])])
    assert np.allclose(ratio_extremes(f, k), (sums.real.min(), sums.real.max(), sums.imag.min(), sums.imag.max()))


def test_make_disk_examples():
    assert make_disk(1, 3, 0, 0) == (2, 1)
    c, D = make_disk(0, 2, 0, 2)
    assert c == 1 + 1j and D == pytest.approx(math.sqrt(2))
    assert make_disk(1, 1, 2, 2)[1] == 0
    with pytest.raises(ValueError):
        make_disk(2, 1, 0, 0)


@given(st.integers(0, 10_000))
def test_exact_min_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    mus = [rng.uniform(0.5, 3, 3) + 1j * rng.uniform(-0.2, 0.2, 3) for _ in range(3)]
    f = spectra(*mus)
    cert = verify_condition(f, 1)
    if cert.condition_variant == "cond-1":
        c = cert.center
        brute = min(abs(sum(t) + c) ** 2 for t in itertools.product(*mus[1:]))
        assert cert.min_C == pytest.approx(brute, rel=1e-12)


def test_poisson_certified_with_closed_form():
    f = poisson_fact(3, h=1.0)
    cert = verify_condition(f, 1)
    assert cert.sound and cert.certified and cert.condition_variant == "cond-1"
    assert decay_factor(cert) == pytest.approx((2 + 3 * math.sqrt(2)) / 14, abs=1e-12)
    assert cert.tau <= cert.decay_q


def test_cancelling_spectra_uncertified():
    f = spectra([-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0])
    cert = verify_condition(f, 1)
    assert not cert.certified and cert.min_C <= cert.radius**2
    with pytest.raises(CertificateStateError):
        decay_factor(cert)
    with pytest.raises(CertificateStateError):
        rank_bound(cert, 1e-6)


def test_heuristic_never_claims_decay():
    cert = verify_condition(poisson_fact(4), 1, method="heuristic")
    assert cert.method == "alternating-heuristic" and not cert.sound and cert.decay_q is None


def test_bound_method_is_sound_and_conservative():
    f = poisson_fact(4)
    exact, bound = verify_condition(f, 1), verify_condition(f, 1, method="bound")
    assert bound.sound and bound.min_C <= exact.min_C + 1e-9
    assert bound.decay_q >= exact.decay_q - 1e-12


def test_budget_enforced():
    with pytest.raises(BudgetExceededError):
        verify_condition(poisson_fact(4), 1, budget=10)


def test_cond2_used_when_cond1_fails():
    # the right block sits inside the left disk; a tight right disk avoids the left sums
    f = spectra([-1.0, 1.0], [0.5, 0.5 + 1e-3])
    cert = verify_condition(f, 1)
    assert cert.condition_variant == "cond-2" and cert.certified


def test_decay_factor_edge_cases():
    f = spectra([2.0, 2.0], [2.0, 2.0])
    assert decay_factor(verify_condition(f, 1)) == 0.0
    qs = []
    for gap in (10.0, 1.0, 0.1, 1e-3):
        D = 1.0
        qs.append(D / (D + gap))
    assert all(a < b < 1 for a, b in zip(qs, qs[1:]))


def _cert(tau, d=3, dims=(10**6, 10**6)):
    return DiskCertificate(1, 0j, tau, 1.0, tau, tau, None, "cond-1", 4.0, "exact-enumeration",
                           True, d, dims)


def test_rank_bound_example_high_precision():
    tau = (2 + 3 * math.sqrt(2)) / 14
    assert rank_bound(_cert(tau), 1e-6) == 18
    mpmath.mp.dps = 50
    t2 = mpmath.mpf(tau) ** 2
    val = mpmath.log((1 - t2) * mpmath.mpf("1e-12") / 2 + t2 ** (10**6)) / mpmath.log(t2)
    assert int(mpmath.ceil(val)) == 18


def test_rank_bound_monotone_and_trivial():
    c = _cert(0.446)
    bounds = [rank_bound(c, e) for e in (1e-10, 1e-6, 1e-3, 0.5, 0.99)]
    assert all(a >= b for a, b in zip(bounds, bounds[1:]))
    assert rank_bound(_cert(0.0), 1e-6) == 1


def test_empirical_sv_decay_rank_one_and_cap():
    T = TTTensor.rank_one([np.array([1.0, 2.0]), np.array([3.0, 4.0, 5.0])])
    sv = empirical_sv_decay(T, 1)
    assert sv[0] > 0 and np.all(sv[1:] < 1e-12 * sv[0])
    assert np.all(np.diff(sv) <= 0)
    with pytest.raises(SizeCapError):
        empirical_sv_decay(TTTensor.ones((10, 10, 10)), 1, cap=10)


def test_eps_rank():
    s = np.array([1.0, 0.1, 0.01, 0.001])
    assert eps_rank(s, 1e-6, 2) == 4
    assert eps_rank(s, 0.05, 2) == 2
    assert eps_rank(s, 0.999, 2) == 1


def test_theorem_factor_examples():
    q = theorem_decay_factor("poisson", {"kappa": 3 + 2 * math.sqrt(2), "k": 1, "d": 3})
    assert q.q == pytest.approx((2 + 3 * math.sqrt(2)) / 14) and q.certified
    assert theorem_decay_factor("poisson", {"kappa": 1.0, "k": 1, "d": 3}).q == 0
    small = theorem_decay_factor("bgk", dict(k=1, dt_over_h=1e-9, re_min=0, re_max=0, im_min=-3, im_max=3))
    assert small.q < 1e-8
    big = theorem_decay_factor("bgk", dict(k=1, dt_over_h=10, re_min=0, re_max=0, im_min=-3, im_max=3))
    assert not big.certified
    with pytest.raises(ValueError):
        theorem_decay_factor("heat", {})


def test_magnitude_bounds_enclose():
    f = poisson_fact(4)
    lo, hi = magnitude_bounds(f)
    L = np.abs(to_dense(lambda_tensor(f)))
    assert lo <= L.min() * (1 + 1e-12) and L.max() <= hi * (1 + 1e-12)


def _operators():
    yield "poisson8", poisson_operator(GridSpec(3, 8))
    yield "poisson16", poisson_operator(GridSpec(3, 16))
    g = GridSpec(3, 4, (-np.pi, np.pi), "periodic")
    yield "bgk", bgk_operator(g, g, BGKParams(dt=0.01 * g.h))
    yield "fp", fp_operator(GridSpec(3, 8, (-5.0, 5.0)), 0.0025)


@pytest.mark.parametrize("name,op", list(_operators()))
def test_certificate_soundness_and_rank_bound(name, op):
    f = joint_diagonalize(op)
    L = lambda_tensor(f)
    checked = 0
    for k in range(1, op.d):
        cert = verify_condition(f, k, eps=1e-6)
        if not (cert.certified and cert.sound):
            continue
        checked += 1
        sv = empirical_sv_decay(L, k)
        j = np.arange(len(sv))
        assert np.all(sv / sv[0] <= cert.decay_q**j + 1e-12), name
        for eps in (1e-4, 1e-6):
            assert eps_rank(sv, eps, op.d) <= rank_bound(cert, eps)
    assert checked > 0


def test_poisson_certificates_match_theorem():
    f = poisson_fact(16)
    mu = np.asarray(f.mu[0]).real
    for k in (1, 2):
        cert = verify_condition(f, k)
        expected = theorem_decay_factor("poisson", {"kappa": mu.max() / mu.min(), "k": k, "d": 3}).q
        assert cert.decay_q == pytest.approx(expected, abs=1e-10)


def test_bgk_certification_regimes():
    g = GridSpec(2, 4, (-np.pi, np.pi), "periodic")
    big = joint_diagonalize(bgk_operator(g, g, BGKParams(dt=10 * g.h)))
    small = joint_diagonalize(bgk_operator(g, g, BGKParams(dt=0.01 * g.h)))
    assert not verify_condition(big, 1).certified
    assert verify_condition(small, 1).certified


def test_matricization_oracle_consistent():
    f = poisson_fact(4)
    L = to_dense(lambda_tensor(f))
    sv = np.linalg.svd(matricize(1 / L, 2), compute_uv=False)
    assert np.allclose(sv, empirical_sv_decay(lambda_tensor(f), 2))
