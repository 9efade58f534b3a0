"""Polynomials and 2x2 matrix polynomials in the variable ``x = 1/lambda``.

Coefficient ``j`` always multiplies ``lambda**-j``.  Trailing coefficients
below ``rtol * max|c|`` are pruned, since holonomy products accumulate scale
and exact zeros come back as rounding noise.
"""
from __future__ import annotations

import numpy as np

from .errors import NoConvergence, ZeroLambda
from .mobius import is_infinite, scalar

DEGREE_RTOL = 1e-11


def _prune_length(mags: np.ndarray, rtol: float) -> int:
    top = mags.max() if mags.size else 0.0
    if top == 0.0:
        return 1
    keep = np.nonzero(mags > rtol * top)[0]
    return int(keep[-1]) + 1


def _x_of(lam) -> complex:
    if is_infinite(lam):
        return 0.0
    lam = scalar(lam)
    if lam == 0:
        raise ZeroLambda("cannot evaluate at lambda = 0")
    return 1.0 / lam


class LaurentPoly:
    """``c[0] + c[1]/lambda + ... + c[d]/lambda**d``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, rtol: float = DEGREE_RTOL):
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex)).copy()
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        n = _prune_length(np.abs(c), rtol) if rtol is not None else c.size
        self.coeffs = c[:n]

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __len__(self):
        return self.coeffs.size

    def __getitem__(self, j):
        if 0 <= j < self.coeffs.size:
            return self.coeffs[j]
        return 0j

    def at_x(self, x):
        """Evaluate at ``x = 1/lambda`` (accepts arrays)."""
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def __call__(self, lam):
        return self.at_x(_x_of(lam))

    def _binary(self, other, op):
        other = other if isinstance(other, LaurentPoly) else LaurentPoly([other])
        n = max(len(self), len(other))
        a = np.zeros(n, complex)
        b = np.zeros(n, complex)
        a[: len(self)] = self.coeffs
        b[: len(other)] = other.coeffs
        return LaurentPoly(op(a, b))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return LaurentPoly(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, LaurentPoly):
            return LaurentPoly(np.convolve(self.coeffs, other.coeffs))
        return LaurentPoly(self.coeffs * complex(other))

    __rmul__ = __mul__

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = other if isinstance(other, LaurentPoly) else LaurentPoly([other])
        n = max(len(self), len(other))
        return all(abs(self[j] - other[j]) <= atol for j in range(n))

    def roots(self, **kw):
        return poly_roots(self, **kw)

    def __repr__(self):
        return f"LaurentPoly({np.array2string(self.coeffs, precision=4)})"


class LaurentMatrix2:
    """2x2 matrix polynomial in ``1/lambda``; ``coeffs`` has shape ``(d+1, 2, 2)``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, rtol: float = DEGREE_RTOL):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.shape[1:] != (2, 2):
            raise ValueError(f"expected (d+1, 2, 2) coefficients, got {c.shape}")
        if c.shape[0] == 0:
            c = np.zeros((1, 2, 2), complex)
        n = _prune_length(np.abs(c).max(axis=(1, 2)), rtol) if rtol is not None else c.shape[0]
        self.coeffs = c[:n].copy()

    @classmethod
    def identity(cls) -> LaurentMatrix2:
        return cls(np.eye(2, dtype=complex))

    @classmethod
    def linear(cls, c0, c1) -> LaurentMatrix2:
        """``c0 + c1/lambda``."""
        return cls(np.stack([np.asarray(c0, complex), np.asarray(c1, complex)]), rtol=None)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def entry(self, i: int, j: int) -> LaurentPoly:
        return LaurentPoly(self.coeffs[:, i, j])

    def at_x(self, x) -> np.ndarray:
        out = np.zeros((2, 2), complex)
        for c in self.coeffs[::-1]:
            out = out * x + c
        return out

    def __call__(self, lam) -> np.ndarray:
        return self.at_x(_x_of(lam))

    def __matmul__(self, other):
        return lm_mul(self, other)

    def __add__(self, other):
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        out = np.zeros((n, 2, 2), complex)
        out[: self.coeffs.shape[0]] += self.coeffs
        out[: other.coeffs.shape[0]] += other.coeffs
        return LaurentMatrix2(out)

    def __sub__(self, other):
        return self + other.scaled(-1)

    def scaled(self, s) -> LaurentMatrix2:
        return LaurentMatrix2(self.coeffs * s, rtol=None)

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max())

    def __repr__(self):
        return f"LaurentMatrix2(degree={self.degree})"


def lm_mul(A: LaurentMatrix2, B: LaurentMatrix2, rtol: float = DEGREE_RTOL) -> LaurentMatrix2:
    da, db = A.coeffs.shape[0], B.coeffs.shape[0]
    out = np.zeros((da + db - 1, 2, 2), complex)
    for i in range(da):
        out[i: i + db] += np.einsum("ij,kjl->kil", A.coeffs[i], B.coeffs)
    return LaurentMatrix2(out, rtol=rtol)


def lm_det(A: LaurentMatrix2) -> LaurentPoly:
    c = A.coeffs
    return LaurentPoly(np.convolve(c[:, 0, 0], c[:, 1, 1]) - np.convolve(c[:, 0, 1], c[:, 1, 0]))


def lm_trace(A: LaurentMatrix2) -> LaurentPoly:
    return LaurentPoly(A.coeffs[:, 0, 0] + A.coeffs[:, 1, 1])


def lm_eval(A: LaurentMatrix2, lam) -> np.ndarray:
    return A(lam)


def lm_eval_inf(A: LaurentMatrix2) -> np.ndarray:
    return A.coeffs[0].copy()


def lm_commutator_residual(A: LaurentMatrix2, B: LaurentMatrix2,
                           C: LaurentMatrix2, D: LaurentMatrix2) -> float:
    """Max coefficient modulus of ``A@B - C@D``, relative to the larger side."""
    left, right = lm_mul(A, B, rtol=None), lm_mul(C, D, rtol=None)
    n = max(left.coeffs.shape[0], right.coeffs.shape[0])
    lc = np.zeros((n, 2, 2), complex)
    rc = np.zeros((n, 2, 2), complex)
    lc[: left.coeffs.shape[0]] = left.coeffs
    rc[: right.coeffs.shape[0]] = right.coeffs
    scale = max(1.0, np.abs(lc).max(), np.abs(rc).max())
    return float(np.abs(lc - rc).max() / scale)


def poly_roots(p: LaurentPoly, polish: int = 2) -> np.ndarray:
    """Roots of ``p`` in the variable ``x = 1/lambda``.

    Companion-matrix eigenvalues followed by a couple of Newton steps.
    Use ``1/x`` for the lambda values; a zero root means ``lambda = inf``.
    """
    if p.degree < 1:
        raise ValueError("poly_roots needs degree >= 1")
    c = p.coeffs
    try:
        r = np.roots(c[::-1])
    except np.linalg.LinAlgError as exc:
        raise NoConvergence("companion eigenvalue iteration failed") from exc
    dp = np.polynomial.polynomial.polyder(c)
    for _ in range(polish):
        f = np.polynomial.polynomial.polyval(r, c)
        fp = np.polynomial.polynomial.polyval(r, dp)
        step = np.where(fp != 0, f / np.where(fp != 0, fp, 1), 0)
        # only accept steps that reduce the residual
        trial = r - step
        better = np.abs(np.polynomial.polynomial.polyval(trial, c)) < np.abs(f)
        r = np.where(better, trial, r)
    if not np.all(np.isfinite(r)):
        raise NoConvergence("non-finite roots")
    return r


def cluster_roots(roots, radius: float = 1e-6):
    """Group roots closer than ``radius``; returns ``[(mean, multiplicity), ...]``."""
    roots = list(np.asarray(roots, complex))
    clusters: list[list[complex]] = []
    for r in roots:
        for cl in clusters:
            if min(abs(r - s) for s in cl) <= radius:
                cl.append(r)
                break
        else:
            clusters.append([r])
    # merge chains joined transitively
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if min(abs(a - b) for a in clusters[i] for b in clusters[j]) <= radius:
                    clusters[i] += clusters.pop(j)
                    merged = True
                    break
            if merged:
                break
    return [(complex(np.mean(cl)), len(cl)) for cl in clusters]


def poly_from_roots(roots, lead=1.0) -> LaurentPoly:
    """Polynomial in ``x`` with the given roots and leading coefficient."""
    c = np.polynomial.polynomial.polyfromroots(roots) * lead
    return LaurentPoly(c, rtol=None)
