import cmath

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from dcmlab.errors import BadCrossRatio, DegenerateEdge, DegenerateInput, ZeroImage, ZeroLambda
from dcmlab.mobius import (
    ProjectivePoint,
    affine_from_lifts,
    cross_ratio,
    edge_transfer,
    is_indeterminate,
    is_lower_unipotent,
    is_projection,
    lifts_from_affine,
    mobius_apply,
    mobius_from_triples,
    normalize_lifts,
    projection_matrix,
    solve_fourth_point,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


def far_apart(*zs, gap=1e-2):
    return all(abs(a - b) > gap for i, a in enumerate(zs) for b in zs[i + 1:])


def test_point_normalisation_and_infinity():
    p = ProjectivePoint(4 + 0j, 2 + 0j)
    assert p.v0 == 1 and p.v1 == 0.5
    assert p.affine() == 2
    assert ProjectivePoint(3, 0).is_infinity
    assert ProjectivePoint.from_affine(complex("inf")).is_infinity
    with pytest.raises(DegenerateInput):
        ProjectivePoint(0, 0)
    with pytest.raises(ValueError):
        ProjectivePoint(float("nan"), 1)


def test_projective_equality_ignores_scale():
    assert ProjectivePoint(2, 4) == ProjectivePoint(1j, 2j)
    assert ProjectivePoint(1, 1) != ProjectivePoint(1, 1.01)


@given(cplx)
def test_normalisation_is_idempotent(z):
    p = ProjectivePoint.from_affine(z)
    q = ProjectivePoint(p.v0, p.v1)
    assert (q.v0, q.v1) == (p.v0, p.v1)


def test_lift_arrays_round_trip():
    z = np.array([0, 0.5, 3 - 4j, complex("inf"), complex("nan")])
    back = affine_from_lifts(lifts_from_affine(z))
    assert np.allclose(back[:3], z[:3]) and np.isinf(back[3]) and np.isnan(back[4])
    v = normalize_lifts(np.array([[0, 0], [2, 1]]))
    assert np.isnan(v[0]).all() and np.allclose(v[1], [1, 0.5])


def test_cross_ratio_examples():
    assert cross_ratio(0, 1, complex("inf"), -1) == pytest.approx(-1)
    # square with vertices 1, i, -1, -i
    assert cross_ratio(1, 1j, -1, -1j) == pytest.approx(-1)
    assert cross_ratio(0, 0, 1, 2) == 0
    assert cmath.isinf(cross_ratio(0, 1, 1, 2))
    assert is_indeterminate(cross_ratio(0, 0, 0, 2))


@given(cplx, cplx, cplx, cplx, cplx, cplx, cplx)
def test_cross_ratio_is_mobius_invariant(a, b, c, d, p, r, s):
    assume(far_apart(a, b, c, d, gap=0.1))
    M = np.array([[p, r], [s, 1.0]])
    assume(abs(np.linalg.det(M)) > 0.1)
    imgs = [mobius_apply(M, z) for z in (a, b, c, d)]
    assert cross_ratio(*imgs) == pytest.approx(cross_ratio(a, b, c, d), rel=1e-7, abs=1e-9)


@given(cplx, cplx, cplx, cplx)
def test_solve_fourth_point_inverts_cross_ratio(a, b, c, q):
    assume(far_apart(a, b, c, gap=0.1) and abs(q) > 0.1 and abs(q - 1) > 0.1)
    d = solve_fourth_point(a, b, c, q)
    assert cross_ratio(a, b, c, d) == pytest.approx(q, rel=1e-8, abs=1e-9)


def test_solve_fourth_point_rejects_excluded_q():
    for q in (0, 1, "inf"):
        with pytest.raises(BadCrossRatio):
            solve_fourth_point(0, 1, 2, q)
    with pytest.raises(DegenerateInput):
        solve_fourth_point(0, 0, 2, 3)


def test_projection_matrix_has_given_kernel_and_image():
    A = projection_matrix(2 + 1j, -1)
    assert is_projection(A)
    assert np.allclose(A @ np.array([2 + 1j, 1]), 0)
    w = A @ np.array([0.3, 1.0])
    assert abs(w[0] / w[1] - (-1)) < 1e-12
    with pytest.raises(DegenerateEdge):
        projection_matrix(1, 1)


@given(cplx, cplx, cplx, cplx)
def test_edge_transfer_has_constant_cross_ratio(z, zk, zk1, lam):
    assume(far_apart(z, zk, zk1, gap=0.1) and abs(lam) > 0.1 and abs(lam - 1) > 0.1)
    T = edge_transfer(zk, zk1, lam)
    assert cross_ratio(z, zk, zk1, mobius_apply(T, z)) == pytest.approx(lam, rel=1e-7, abs=1e-9)


def test_edge_transfer_at_infinity_and_zero():
    assert np.allclose(edge_transfer(0, 1, "inf"), np.eye(2))
    with pytest.raises(ZeroLambda):
        edge_transfer(0, 1, 0)


def test_mobius_from_triples_and_zero_image():
    M = mobius_from_triples([0, 1, complex("inf")], [1j, 2, -1])
    for s, d in zip([0, 1, complex("inf")], [1j, 2, -1]):
        assert mobius_apply(M, s) == ProjectivePoint.from_affine(d)
    with pytest.raises(ZeroImage):
        mobius_apply(np.array([[1, 0], [0, 0]]), 0)
    assert is_lower_unipotent(np.array([[1, 0], [5, 1]]))
