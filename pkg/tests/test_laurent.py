import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcmlab.errors import ZeroLambda
from dcmlab.laurent import (
    LaurentMatrix2,
    LaurentPoly,
    cluster_roots,
    lm_det,
    lm_eval,
    lm_eval_inf,
    lm_mul,
    lm_trace,
    poly_from_roots,
    poly_roots,
)

from conftest import complex_normal


def test_poly_evaluation_uses_inverse_lambda():
    p = LaurentPoly([1, 2, 3])  # 1 + 2/lam + 3/lam^2
    assert p(2) == pytest.approx(1 + 1 + 0.75)
    assert p("inf") == 1
    assert p.degree == 2
    with pytest.raises(ZeroLambda):
        p(0)


def test_trailing_noise_is_pruned():
    assert LaurentPoly([1, 2, 1e-14]).degree == 1
    assert LaurentPoly([0, 0]).degree == 0


def test_poly_arithmetic():
    p, q = LaurentPoly([1, 1]), LaurentPoly([1, -1])
    assert (p * q).allclose(LaurentPoly([1, 0, -1]))
    assert (p + q).allclose(LaurentPoly([2]))
    assert (p - q).allclose(LaurentPoly([0, 2]))


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_roots_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    r = complex_normal(rng, n)
    p = poly_from_roots(r)
    found = poly_roots(p)
    assert len(found) == n
    for z in r:
        assert np.min(np.abs(found - z)) <= 1e-7 * max(1, abs(z))


def test_cluster_roots_merges_multiplicities():
    out = cluster_roots(np.array([1.0, 1.0 + 1e-9, 2.0]))
    assert sorted((round(z.real, 6), m) for z, m in out) == [(1.0, 2), (2.0, 1)]


def test_matrix_product_matches_pointwise(rng):
    A = LaurentMatrix2(complex_normal(rng, (3, 2, 2)))
    B = LaurentMatrix2(complex_normal(rng, (2, 2, 2)))
    lam = 0.7 - 1.3j
    assert np.allclose(lm_eval(lm_mul(A, B), lam), lm_eval(A, lam) @ lm_eval(B, lam))
    assert np.allclose((A @ B)(lam), A(lam) @ B(lam))
    assert np.allclose(lm_eval_inf(A), A.coeffs[0])


def test_matrix_det_and_trace(rng):
    A = LaurentMatrix2(complex_normal(rng, (3, 2, 2)))
    lam = 2.1 + 0.4j
    assert lm_det(A)(lam) == pytest.approx(np.linalg.det(A(lam)))
    assert lm_trace(A)(lam) == pytest.approx(np.trace(A(lam)))
    assert lm_det(A).degree == 4


def test_linear_and_identity():
    L = LaurentMatrix2.linear(np.eye(2), np.array([[0, 1], [0, 0]]))
    assert L.degree == 1
    assert np.allclose((L @ LaurentMatrix2.identity())(3), L(3))
