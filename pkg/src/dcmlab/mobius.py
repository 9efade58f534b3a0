"""Projective-line arithmetic in homogeneous coordinates.

A point of the projective line is a nonzero pair ``(v0, v1)``; the affine
point ``z`` lifts to ``(z, 1)`` and infinity is ``(1, 0)``.  2x2 matrices are
plain complex ``numpy`` arrays.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadCrossRatio,
    DegenerateEdge,
    DegenerateInput,
    ZeroImage,
    ZeroLambda,
)

DEFAULT_TOL = 1e-9
# a 2x2 determinant of normalized lifts below this is treated as exactly zero
ZERO_DET_TOL = 1e-14

INF = math.inf


def scalar(x) -> complex:
    """Coerce ``x`` to a finite complex number."""
    c = complex(x)
    if not (math.isfinite(c.real) and math.isfinite(c.imag)):
        raise ValueError(f"non-finite scalar {x!r}")
    return c


def is_infinite(x) -> bool:
    if x is None:
        return False
    if isinstance(x, str):
        return x.strip().lower() in ("inf", "infinity", "oo")
    c = complex(x)
    return cmath.isinf(c)


def _clip_unit(r: complex) -> complex:
    # rounding in the division can push the ratio just past modulus 1
    a = abs(r)
    return r / a if a > 1 else r


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """A point of P^1, stored so that its larger component has modulus 1."""

    v0: complex
    v1: complex

    def __post_init__(self):
        v0, v1 = scalar(self.v0), scalar(self.v1)
        if v0 == 0 and v1 == 0:
            raise DegenerateInput("(0, 0) is not a point of the projective line")
        # the dominant component becomes exactly 1; already-normalised pairs are kept
        if (v0 == 1 and abs(v1) <= 1) or (v1 == 1 and abs(v0) <= 1):
            pass
        elif abs(v0) >= abs(v1):
            v0, v1 = 1 + 0j, _clip_unit(v1 / v0)
        else:
            v0, v1 = _clip_unit(v0 / v1), 1 + 0j
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "v1", v1)

    @classmethod
    def from_affine(cls, z) -> ProjectivePoint:
        if is_infinite(z):
            return cls(1.0, 0.0)
        return cls(scalar(z), 1.0)

    @classmethod
    def from_vector(cls, v) -> ProjectivePoint:
        return cls(v[0], v[1])

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.v0, self.v1], dtype=complex)

    @property
    def is_infinity(self) -> bool:
        return self.v1 == 0

    def affine(self) -> complex:
        """Affine coordinate ``v0/v1``; ``complex(inf)`` for the point at infinity."""
        if self.v1 == 0:
            return complex(INF, 0.0)
        return self.v0 / self.v1

    def equals(self, other, tol: float = DEFAULT_TOL) -> bool:
        other = as_point(other)
        return abs(self.v0 * other.v1 - self.v1 * other.v0) <= tol

    def __eq__(self, other):
        if not isinstance(other, ProjectivePoint):
            return NotImplemented
        return self.equals(other)

    def __hash__(self):
        return hash((round(self.v0.real, 12), round(self.v0.imag, 12),
                     round(self.v1.real, 12), round(self.v1.imag, 12)))

    def __repr__(self):
        if self.v1 == 0:
            return "ProjectivePoint(inf)"
        return f"ProjectivePoint({self.affine():.6g})"


def as_point(x) -> ProjectivePoint:
    if isinstance(x, ProjectivePoint):
        return x
    if isinstance(x, np.ndarray) and x.shape == (2,):
        return ProjectivePoint(x[0], x[1])
    return ProjectivePoint.from_affine(x)


def normalize_lifts(v: np.ndarray) -> np.ndarray:
    """Vectorised normalisation of lifts (trailing axis 2): dominant component becomes 1.

    Rows that are ``(0, 0)`` or non-finite come back as NaN.
    """
    v = np.asarray(v, dtype=complex)
    a0, a1 = np.abs(v[..., 0]), np.abs(v[..., 1])
    first = a0 >= a1
    lead = np.where(first, v[..., 0], v[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(first, v[..., 1], v[..., 0]) / lead
        r = np.where(np.abs(r) > 1, r / np.abs(r), r)
    out = np.empty_like(v)
    out[..., 0] = np.where(first, 1, r)
    out[..., 1] = np.where(first, r, 1)
    keep = ((v[..., 0] == 1) & (a1 <= 1)) | ((v[..., 1] == 1) & (a0 <= 1))
    out[keep] = v[keep]
    bad = ~np.isfinite(v).all(axis=-1) | ~np.isfinite(out).all(axis=-1) | (np.maximum(a0, a1) == 0)
    out[bad] = np.nan
    return out


def lifts_from_affine(z) -> np.ndarray:
    """Normalised lifts of an array of affine values; ``inf`` entries map to ``(1, 0)``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (2,), dtype=complex)
    inf = np.isinf(z)
    small = (np.abs(z) <= 1) & ~inf
    big = ~small & ~inf
    out[small, 0], out[small, 1] = z[small], 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[big, 0], out[big, 1] = 1.0, 1.0 / z[big]
    out[inf, 0], out[inf, 1] = 1.0, 0.0
    out[np.isnan(z)] = np.nan
    return out


def affine_from_lifts(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = v[..., 0] / v[..., 1]
    out = np.where(v[..., 1] == 0, complex(INF, 0.0), out)
    out = np.where(np.isnan(v).any(axis=-1), complex(math.nan, math.nan), out)
    return out


def chordal_gap(a, b) -> np.ndarray:
    """``|det(a, b)|`` of normalised lifts: zero iff the points coincide."""
    return np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])


def det2(a, b) -> complex:
    """``det`` of the 2x2 matrix with columns ``a`` and ``b`` (lifts)."""
    return a[0] * b[1] - a[1] * b[0]


def _lift(x) -> np.ndarray:
    return as_point(x).vector


INDETERMINATE = complex(math.nan, math.nan)


def is_indeterminate(x) -> bool:
    return cmath.isnan(complex(x))


def cross_ratio(a, b, c, d, zero_tol: float = ZERO_DET_TOL) -> complex:
    """Cross-ratio ``(a-b)(c-d) / ((b-c)(d-a))`` computed from lifts.

    Returns ``complex(inf)`` when only the denominator vanishes and
    :data:`INDETERMINATE` (a NaN) when numerator and denominator both vanish.
    """
    a, b, c, d = (_lift(p) for p in (a, b, c, d))
    ab, cd, bc, da = det2(a, b), det2(c, d), det2(b, c), det2(d, a)
    num_zero = abs(ab) <= zero_tol or abs(cd) <= zero_tol
    den_zero = abs(bc) <= zero_tol or abs(da) <= zero_tol
    if den_zero:
        return INDETERMINATE if num_zero else complex(INF, 0.0)
    return (ab * cd) / (bc * da)


def cross_ratio_array(a, b, c, d):
    """Vectorised cross-ratio over arrays of lifts with trailing axis of size 2.

    Degenerate quads come back as NaN; no thresholding is applied here.
    """
    ab = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    cd = c[..., 0] * d[..., 1] - c[..., 1] * d[..., 0]
    bc = b[..., 0] * c[..., 1] - b[..., 1] * c[..., 0]
    da = d[..., 0] * a[..., 1] - d[..., 1] * a[..., 0]
    num = ab * cd
    den = bc * da
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return out, num, den


def mobius_apply(M, z) -> ProjectivePoint:
    v = np.asarray(M, dtype=complex) @ _lift(z)
    if max(abs(v[0]), abs(v[1])) == 0.0:
        raise ZeroImage("matrix maps the chosen lift to the zero vector")
    return ProjectivePoint(v[0], v[1])


def projection_matrix(kernel, image, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Rank-one projection with the given kernel and image, normalized by trace 1."""
    k, i = _lift(kernel), _lift(image)
    w = np.array([k[1], -k[0]])  # annihilates k
    s = w @ i
    if abs(s) <= tol:
        raise DegenerateEdge("kernel and image coincide")
    return np.outer(i, w) / s


def _inverse_lambda(lam) -> complex:
    if is_infinite(lam):
        return 0.0
    lam = scalar(lam)
    if lam == 0:
        raise ZeroLambda("lambda = 0 is excluded")
    return 1.0 / lam


def edge_transfer(zk, zk1, lam, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Möbius map ``T`` with ``[z : zk : zk1 : T(z)] = lam`` for all ``z``."""
    return np.eye(2, dtype=complex) - _inverse_lambda(lam) * projection_matrix(zk, zk1, tol)


def solve_fourth_point(a, b, c, q, tol: float = DEFAULT_TOL) -> ProjectivePoint:
    """The unique ``d`` with ``cross_ratio(a, b, c, d) == q``."""
    if is_infinite(q):
        raise BadCrossRatio("q = inf is excluded")
    q = scalar(q)
    if abs(q) <= tol or abs(q - 1) <= tol:
        raise BadCrossRatio(f"q = {q} is excluded")
    a, b, c = _lift(a), _lift(b), _lift(c)
    if min(abs(det2(a, b)), abs(det2(b, c)), abs(det2(a, c))) <= tol:
        raise DegenerateInput("a, b, c must be pairwise distinct")
    # det(a,b) det(c,d) = q det(b,c) det(d,a) is linear in d
    ab, bc = det2(a, b), det2(b, c)
    coef0 = -c[1] * ab - q * bc * a[1]
    coef1 = c[0] * ab + q * bc * a[0]
    return ProjectivePoint(coef1, -coef0)


def is_projection(A, tol: float = 1e-12) -> bool:
    A = np.asarray(A, dtype=complex)
    return (np.allclose(A @ A, A, atol=tol)
            and abs(np.linalg.det(A)) <= tol and np.abs(A).max() > tol)


def is_invertible(A, tol: float = DEFAULT_TOL) -> bool:
    return abs(np.linalg.det(np.asarray(A, dtype=complex))) > tol


def is_lower_unipotent(A, tol: float = 1e-12) -> bool:
    A = np.asarray(A, dtype=complex)
    return abs(A[0, 0] - 1) <= tol and abs(A[1, 1] - 1) <= tol and abs(A[0, 1]) <= tol


def _frame(p, q, r) -> np.ndarray:
    # matrix sending inf -> p, 0 -> q, 1 -> r
    p, q, r = _lift(p), _lift(q), _lift(r)
    c = np.linalg.solve(np.column_stack([p, q]), r)
    return np.column_stack([c[0] * p, c[1] * q])


def mobius_from_triples(src, dst) -> np.ndarray:
    """Matrix of the Möbius map sending the three points ``src`` to ``dst``."""
    if len(src) != 3 or len(dst) != 3:
        raise DegenerateInput("need exactly three source and three target points")
    try:
        return _frame(*dst) @ np.linalg.inv(_frame(*src))
    except np.linalg.LinAlgError as exc:
        raise DegenerateInput("triples must consist of distinct points") from exc
