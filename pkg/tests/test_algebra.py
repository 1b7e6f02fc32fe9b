import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttinv.algebra import (
    add,
    hadamard,
    hadamard_round,
    kronecker,
    mode_k_product,
    real_part,
    round_tt,
    scale,
    ttmc,
)
from ttinv.core import TTTensor, to_dense
from ttinv.exceptions import ShapeMismatchError

from .conftest import random_tt


def test_add_and_hadamard_match_dense(rng):
    A, B = random_tt(rng, (3, 4, 2)), random_tt(rng, (3, 4, 2), complex=True)
    assert np.allclose(to_dense(add(A, B)), to_dense(A) + to_dense(B))
    assert np.allclose(to_dense(hadamard(A, B)), to_dense(A) * to_dense(B))
    assert np.allclose(to_dense(scale(A, 2 - 1j)), (2 - 1j) * to_dense(A))


def test_mismatched_modes_rejected(rng):
    with pytest.raises(ShapeMismatchError):
        add(random_tt(rng, (2, 3)), random_tt(rng, (3, 2)))


def test_kronecker_index_convention(rng):
    A, B = random_tt(rng, (2, 3)), random_tt(rng, (4, 2))
    K = to_dense(kronecker(A, B))
    DA, DB = to_dense(A), to_dense(B)
    # entry s = i + j * n (0-based): the index of A runs fastest
    for i1 in range(2):
        for j1 in range(4):
            for i2 in range(3):
                for j2 in range(2):
                    assert K[i1 + j1 * 2, i2 + j2 * 3] == pytest.approx(DA[i1, i2] * DB[j1, j2])


def test_mode_product_and_ttmc(rng):
    A = random_tt(rng, (3, 4, 2))
    U = rng.standard_normal((5, 4))
    ref = np.einsum("ij,ajb->aib", U, to_dense(A))
    assert np.allclose(to_dense(mode_k_product(A, U, 2)), ref)
    V = rng.standard_normal((2, 3))
    both = to_dense(ttmc(A, [(U, 2), (V, 1)]))
    assert np.allclose(both, np.einsum("ia,ajb->ijb", V, ref))
    with pytest.raises(ShapeMismatchError):
        ttmc(A, [(U, 2), (U, 2)])
    with pytest.raises(ShapeMismatchError):
        mode_k_product(A, U, 1)
    with pytest.raises(ShapeMismatchError):
        mode_k_product(A, U, 4)


@given(st.integers(0, 10_000), st.sampled_from([1e-1, 1e-4, 1e-8]), st.booleans())
def test_round_contract(seed, eps, cplx):
    rng = np.random.default_rng(seed)
    A = random_tt(rng, (3, 4, 3, 2), max_rank=4, complex=cplx)
    B = add(A, random_tt(rng, (3, 4, 3, 2), max_rank=3, complex=cplx))
    R = round_tt(B, eps)
    err = np.linalg.norm(to_dense(R) - to_dense(B)) / np.linalg.norm(to_dense(B))
    assert err <= eps * (1 + 1e-10)
    assert all(r <= s for r, s in zip(R.ranks, B.ranks))


def test_round_recovers_low_rank_sum(rng):
    A = random_tt(rng, (4, 4, 4), max_rank=2)
    R = round_tt(add(A, A), 1e-12)
    assert all(r <= s for r, s in zip(R.ranks, A.ranks))
    assert np.allclose(to_dense(R), 2 * to_dense(A))


def test_round_zero_and_cap(rng):
    A = random_tt(rng, (3, 3, 3))
    Z = round_tt(scale(A, 0.0), 1e-8)
    assert Z.ranks == (1, 1, 1, 1) and np.allclose(to_dense(Z), 0)
    B = random_tt(rng, (4, 4, 4), max_rank=4)
    C, hit = round_tt(B, 1e-14, max_rank=1, return_info=True)
    assert max(C.ranks) == 1 and hit == (max(B.ranks) > 1)


@given(st.integers(0, 10_000), st.booleans())
def test_hadamard_round_matches(seed, cplx):
    rng = np.random.default_rng(seed)
    A = random_tt(rng, (3, 5, 4, 2), max_rank=3, complex=cplx)
    B = random_tt(rng, (3, 5, 4, 2), max_rank=3)
    ref = to_dense(A) * to_dense(B)
    C = hadamard_round(A, B, 1e-10)
    assert np.linalg.norm(to_dense(C) - ref) <= 1e-10 * np.linalg.norm(ref) * (1 + 1e-8)
    assert all(r <= s for r, s in zip(C.ranks, hadamard(A, B).ranks))


def test_real_part_exact(rng):
    A = random_tt(rng, (3, 4, 2, 2), complex=True)
    R = real_part(A)
    assert not R.is_complex
    assert np.allclose(to_dense(R), to_dense(A).real)
    assert R.ranks == (1,) + tuple(2 * r for r in A.ranks[1:-1]) + (1,)


def test_d1_tensors(rng):
    A = TTTensor((rng.standard_normal((1, 5, 1)),))
    assert np.allclose(to_dense(round_tt(A, 0.5)), to_dense(A))
    assert np.allclose(to_dense(hadamard_round(A, A, 1e-3)), to_dense(A) ** 2)
