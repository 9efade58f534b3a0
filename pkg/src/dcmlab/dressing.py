"""Lax pair, extended frames, Birkhoff factorisation and the dressing action.

Loops are 2x2 Laurent polynomials in ``lambda`` restricted to a circle
(radius 1 unless stated).  ``N`` is the group of loops extending into
``|1/lambda| < 1`` with lower unipotent value at infinity; ``B`` extends into
``|lambda| < 1`` with upper triangular value at 0.

For a Laurent polynomial ``h`` supported in ``[-D, e]`` the factors of
``h = h_N h_B`` are again polynomials, supported in ``[-D, 0]`` and
``[0, e]``: ``h_N = h h_B^{-1}`` has no powers below ``-D`` and
``h_B = h_N^{-1} h`` none above ``e``.  This is what keeps every
factorisation here a finite linear-algebra problem.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadParams,
    BigCellFailure,
    ExcludedLambda,
    InfiniteSite,
    InputError,
    NotInBigCell,
    PathInconsistency,
    ZeroEdge,
)
from .lattice import DcmLattice, SiteStatus, as_window, detect_collapse
from .mobius import is_infinite, normalize_lifts, scalar

FACTOR_TOL = 1e-9
SINGULAR_RTOL = 1e-12
LAX_TOL = 1e-9
MAX_TRUNCATION = 1024


# ---- loops -------------------------------------------------------------------

class Loop:
    """``sum_j c[j - lo] lambda^j`` for ``j`` in ``[lo, hi]``; coefficients are 2x2."""

    __slots__ = ("lo", "coeffs")

    def __init__(self, lo: int, coeffs, trim: bool = False):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1:] != (2, 2) or c.shape[0] == 0:
            raise BadParams(f"loop coefficients must have shape (n, 2, 2), got {c.shape}")
        self.lo = int(lo)
        self.coeffs = c
        if trim:
            self._trim()

    def _trim(self, rtol: float = 1e-15):
        mags = np.abs(self.coeffs).max(axis=(1, 2))
        top = mags.max()
        if top == 0:
            self.lo, self.coeffs = 0, np.zeros((1, 2, 2), complex)
            return
        keep = np.nonzero(mags > rtol * top)[0]
        self.coeffs = self.coeffs[keep[0]: keep[-1] + 1]
        self.lo += int(keep[0])

    @classmethod
    def constant(cls, A) -> Loop:
        return cls(0, np.asarray(A, complex)[None])

    @classmethod
    def identity(cls) -> Loop:
        return cls.constant(np.eye(2))

    @classmethod
    def from_powers(cls, powers: dict) -> Loop:
        """Build from ``{power: 2x2 matrix}``."""
        lo, hi = min(powers), max(powers)
        c = np.zeros((hi - lo + 1, 2, 2), complex)
        for j, A in powers.items():
            c[j - lo] += np.asarray(A, complex)
        return cls(lo, c)

    @property
    def hi(self) -> int:
        return self.lo + self.coeffs.shape[0] - 1

    @property
    def support(self):
        return (self.lo, self.hi)

    def coef(self, j: int) -> np.ndarray:
        if self.lo <= j <= self.hi:
            return self.coeffs[j - self.lo]
        return np.zeros((2, 2), complex)

    def padded(self, lo: int, hi: int) -> np.ndarray:
        out = np.zeros((hi - lo + 1, 2, 2), complex)
        for j in range(max(lo, self.lo), min(hi, self.hi) + 1):
            out[j - lo] = self.coeffs[j - self.lo]
        return out

    def __call__(self, lam) -> np.ndarray:
        if is_infinite(lam):
            if self.hi > 0:
                raise BadParams("loop has a pole at infinity")
            return self.coef(0).copy()
        lam = scalar(lam)
        if lam == 0 and self.lo < 0:
            raise BadParams("loop has a pole at 0")
        powers = lam ** np.arange(self.lo, self.hi + 1, dtype=float) if lam != 0 else \
            (np.arange(self.lo, self.hi + 1) == 0).astype(complex)
        return np.einsum("j,jab->ab", powers, self.coeffs)

    def __matmul__(self, other: Loop) -> Loop:
        n1, n2 = self.coeffs.shape[0], other.coeffs.shape[0]
        out = np.zeros((n1 + n2 - 1, 2, 2), complex)
        for i in range(n1):
            out[i: i + n2] += np.einsum("ab,jbc->jac", self.coeffs[i], other.coeffs)
        return Loop(self.lo + other.lo, out)

    def __add__(self, other: Loop) -> Loop:
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return Loop(lo, self.padded(lo, hi) + other.padded(lo, hi))

    def __sub__(self, other: Loop) -> Loop:
        return self + other.scaled(-1)

    def scaled(self, s) -> Loop:
        return Loop(self.lo, self.coeffs * s)

    def adj(self) -> Loop:
        c = self.coeffs
        out = np.empty_like(c)
        out[:, 0, 0], out[:, 1, 1] = c[:, 1, 1], c[:, 0, 0]
        out[:, 0, 1], out[:, 1, 0] = -c[:, 0, 1], -c[:, 1, 0]
        return Loop(self.lo, out)

    def det(self):
        """``(lo, coefficients)`` of the scalar Laurent polynomial ``det``."""
        c = self.coeffs
        d = np.convolve(c[:, 0, 0], c[:, 1, 1]) - np.convolve(c[:, 0, 1], c[:, 1, 0])
        return 2 * self.lo, d

    def det_at(self, lam) -> complex:
        return complex(np.linalg.det(self(lam)))

    def with_radius(self, r: float) -> Loop:
        """The loop ``mu -> g(r mu)``."""
        return Loop(self.lo, self.coeffs * (float(r) ** np.arange(self.lo, self.hi + 1))[:, None, None])

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max())

    def distance(self, other: Loop) -> float:
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return float(np.abs(self.padded(lo, hi) - other.padded(lo, hi)).max())

    def is_member_N(self, tol: float = 1e-12) -> bool:
        if self.hi > 0 and np.abs(self.coeffs[-self.hi:]).max() > tol:
            return False
        A = self.coef(0)
        return abs(A[0, 0] - 1) <= tol and abs(A[1, 1] - 1) <= tol and abs(A[0, 1]) <= tol

    def is_member_B(self, tol: float = 1e-12) -> bool:
        if self.lo < 0 and np.abs(self.coeffs[: -self.lo]).max() > tol:
            return False
        A = self.coef(0)
        return abs(A[1, 0]) <= tol and abs(A[0, 0] * A[1, 1]) > tol

    def to_json_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi,
                "coeffs": [[[z.real, z.imag] for z in C.ravel()] for C in self.coeffs]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d) -> Loop:
        try:
            c = np.array([[complex(a, b) for a, b in C] for C in d["coeffs"]]).reshape(-1, 2, 2)
            loop = cls(d["lo"], c)
        except (KeyError, TypeError, ValueError) as exc:
            raise BadParams(f"malformed loop: {exc}") from exc
        if loop.hi != d.get("hi", loop.hi):
            raise BadParams("loop support bounds do not match coefficient count")
        return loop

    @classmethod
    def from_json(cls, text) -> Loop:
        return cls.from_json_dict(json.loads(text))

    def __repr__(self):
        return f"Loop(support={self.support})"


def Lambda_loop() -> Loop:
    """``[[0, 1/lambda], [1, 0]]``."""
    return Loop.from_powers({-1: [[0, 1], [0, 0]], 0: [[0, 0], [1, 0]]})


def gamma_plus_element(a_coeffs, b_coeffs) -> Loop:
    """``[[a, b], [lambda b, a]]`` for polynomials ``a``, ``b`` in ``lambda``; commutes with Lambda."""
    a = np.asarray(a_coeffs, complex)
    b = np.asarray(b_coeffs, complex)
    n = max(len(a), len(b) + 1)
    c = np.zeros((n, 2, 2), complex)
    c[: len(a), 0, 0] = a
    c[: len(a), 1, 1] = a
    c[: len(b), 0, 1] = b
    c[1: len(b) + 1, 1, 0] = b
    return Loop(0, c)


# ---- Birkhoff factorisation ------------------------------------------------------

def _solve_column(h: Loop, D: int, e: int, L: int, col: int):
    """Column ``col`` of ``Y = h_B^{-1}`` truncated at degree ``L``."""
    size = 2 * (L + 1)
    A = np.zeros((size, size), complex)
    rhs = np.zeros(size, complex)
    for i in range(1, L + 1):
        for j in range(L + 1):
            p = i - j
            if -D <= p <= e:
                A[2 * (i - 1): 2 * i, 2 * j: 2 * j + 2] = h.coef(p)
    r0 = 2 * L
    for j in range(L + 1):
        if -D <= -j <= e:
            A[r0: r0 + 2, 2 * j: 2 * j + 2] = h.coef(-j)
    if col == 0:
        # (hY)_0 first row = (1, .);  Y_0 upper triangular
        A[r0 + 1] = 0
        A[r0 + 1, 1] = 1
        rhs[r0] = 1
    else:
        rhs[r0 + 1] = 1
    if size <= 400:
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= SINGULAR_RTOL * s[0]:
            raise NotInBigCell("factorisation system is singular")
    try:
        y = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NotInBigCell("factorisation system is singular") from exc
    if not np.isfinite(y).all():
        raise NotInBigCell("factorisation system is singular")
    return y.reshape(L + 1, 2)


def _decay_length(g: Loop) -> int:
    """Truncation degree at which ``g_B^{-1}`` has decayed to rounding level.

    Its coefficients fall off like ``rho^-j`` where ``rho`` is the modulus of
    the zero of ``det g`` closest to the circle.
    """
    lo, d = g.det()
    nz = np.nonzero(np.abs(d) > 1e-14 * np.abs(d).max())[0]
    d = d[nz[0]: nz[-1] + 1]
    if len(d) < 2:
        return 0
    gap = np.abs(np.log(np.abs(np.roots(d[::-1])))).min()
    return int(min(MAX_TRUNCATION, math.ceil(37 / max(gap, 1e-6))))


def _fit_B(hN: Loop, h: Loop, e: int) -> Loop:
    lo, hi = hN.lo, max(h.hi, e)
    rows = hi - lo + 1
    M = np.zeros((2 * rows, 2 * (e + 1)), complex)
    for p in range(lo, hi + 1):
        for j in range(e + 1):
            M[2 * (p - lo): 2 * (p - lo) + 2, 2 * j: 2 * j + 2] = hN.coef(p - j)
    out = np.zeros((e + 1, 2, 2), complex)
    target = h.padded(lo, hi)
    for c in range(2):
        sol, *_ = np.linalg.lstsq(M, target[:, :, c].reshape(-1), rcond=None)
        out[:, :, c] = sol.reshape(e + 1, 2)
    return Loop(0, out)


def birkhoff_factorize(g: Loop, tol: float = FACTOR_TOL, rounds: int = 3,
                       radius: float = 1.0, check_circle: bool = True):
    """``g = g_N g_B`` with ``g_N`` in ``N`` and ``g_B`` in ``B``.

    Solves for ``Y = g_B^{-1}`` truncated at degree ``L`` from the conditions
    "``gY`` has no positive powers" and "``(gY)(inf)`` lower unipotent";
    ``g_N`` is the non-positive part of ``gY`` and ``g_B`` the least-squares
    solution of ``g_N g_B = g``.  ``L`` doubles on each retry.
    """
    if radius != 1.0:
        gN, gB = birkhoff_factorize(g.with_radius(radius), tol, rounds, 1.0, check_circle)
        return gN.with_radius(1 / radius), gB.with_radius(1 / radius)
    if check_circle:
        samples = np.exp(2j * np.pi * np.arange(32) / 32)
        smin = min(np.linalg.svd(g(lam), compute_uv=False)[-1] for lam in samples)
        if smin <= tol * max(1.0, g.max_abs()):
            raise NotInBigCell("loop is singular on the circle")
    D, e = max(0, -g.lo), max(0, g.hi)
    scale = max(1.0, g.max_abs())
    L = max(16, 4 * (D + e), min(_decay_length(g), MAX_TRUNCATION // 4))
    best = None
    for _ in range(rounds):
        Y = np.stack([_solve_column(g, D, e, L, c) for c in (0, 1)], axis=-1)  # (L+1, 2, 2)
        gN = Loop(-D, np.stack([sum(g.coef(p - j) @ Y[j] for j in range(L + 1)
                                    if -D <= p - j <= e) for p in range(-D, 1)]))
        gB = _fit_B(gN, g, e)
        res = (gN @ gB).distance(g) / scale
        if best is None or res < best[0]:
            best = (res, gN, gB)
        if res <= 1e-3 * tol:
            break
        L = min(2 * L, MAX_TRUNCATION)
    res, gN, gB = best
    if res > tol:
        raise NotInBigCell(f"factorisation residual {res:.2e} above {tol:.0e} after {rounds} rounds")
    if not (_det_zeros_outside(gN, inverse=True) and _det_zeros_outside(gB, inverse=False)):
        raise NotInBigCell("factors are not invertible on their discs (loop outside the big cell)")
    return gN, gB


def _det_zeros_outside(h: Loop, inverse: bool) -> bool:
    """Zeros of ``det h`` (in ``1/lambda`` if ``inverse``) all lie outside the closed unit disc."""
    lo, d = h.det()
    d = d[::-1] if not inverse else d
    nz = np.nonzero(np.abs(d) > 1e-14 * np.abs(d).max())[0]
    d = d[nz[0]:]
    if len(d) < 2:
        return True
    return bool(np.abs(np.roots(d)).min() > 1 + 1e-9)


# ---- Lax pair and frames ---------------------------------------------------------

@dataclass(frozen=True)
class LaxParams:
    alpha: complex
    beta: complex
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", scalar(self.alpha))
        object.__setattr__(self, "beta", scalar(self.beta))
        if self.alpha == 0 or self.beta == 0:
            raise BadParams("alpha and beta must be nonzero")
        if abs(self.q - 1) <= 1e-12:
            raise BadParams("beta^2/alpha^2 = 1 is excluded")

    @property
    def q(self) -> complex:
        return self.beta ** 2 / self.alpha ** 2

    @classmethod
    def for_q(cls, q, alpha=0.3) -> LaxParams:
        alpha = scalar(alpha)
        return cls(alpha, alpha * np.sqrt(complex(q)))

    def dressing_ready(self) -> bool:
        r = math.sqrt(self.radius)
        return abs(self.alpha) < r and abs(self.beta) < r

    def family_q(self, lam) -> complex:
        if is_infinite(lam):
            return self.q
        x = 1 / scalar(lam)
        a2, b2 = self.alpha ** 2, self.beta ** 2
        return b2 * (1 - x * a2) / (a2 * (1 - x * b2))


def step_loop(d, a2) -> Loop:
    """``[[1, a2/(d lambda)], [d, 1]]``."""
    return Loop.from_powers({-1: [[0, a2 / d], [0, 0]], 0: [[1, 0], [d, 1]]})


@dataclass
class LaxPair:
    params: LaxParams
    k0: int
    m0: int
    u: np.ndarray  # (K-1, M)
    v: np.ndarray  # (K, M-1)

    def U(self, k, m) -> Loop:
        return step_loop(self.u[k - self.k0, m - self.m0], self.params.alpha ** 2)

    def V(self, k, m) -> Loop:
        return step_loop(self.v[k - self.k0, m - self.m0], self.params.beta ** 2)


def _affine_values(L: DcmLattice) -> np.ndarray:
    if (L.status != SiteStatus.REGULAR).any():
        raise InfiniteSite("Lax pair needs every site regular")
    z = L.affine()
    if not np.isfinite(z).all():
        raise InfiniteSite("Lax pair needs a lattice in the finite plane")
    return z


def lax_pair(L: DcmLattice, params: LaxParams) -> LaxPair:
    z = _affine_values(L)
    u = z[1:, :] - z[:-1, :]
    v = z[:, 1:] - z[:, :-1]
    if (u == 0).any() or (v == 0).any():
        raise ZeroEdge("two neighbouring sites coincide")
    return LaxPair(params, L.k0, L.m0, u, v)


def lax_residual(L: DcmLattice, params: LaxParams) -> float:
    """Max relative coefficient residual of ``U(k,m) V(k+1,m) - V(k,m) U(k,m+1)``."""
    lp = lax_pair(L, params)
    a2, b2 = params.alpha ** 2, params.beta ** 2
    u0, u1 = lp.u[:, :-1], lp.u[:, 1:]  # U(k,m), U(k,m+1)
    v0, v1 = lp.v[:-1, :], lp.v[1:, :]  # V(k,m), V(k+1,m)
    # coefficients of [[1, a/(d lam)], [d, 1]] products, per power of 1/lam
    lhs = _pair_product(u0, a2, v1, b2)
    rhs = _pair_product(v0, b2, u1, a2)
    scale = np.maximum(1.0, np.maximum(np.abs(lhs).max(axis=(0, 3, 4)), np.abs(rhs).max(axis=(0, 3, 4))))
    return float((np.abs(lhs - rhs).max(axis=(0, 3, 4)) / scale).max()) if lhs.size else 0.0


def _pair_product(d1, a1, d2, a2):
    """Coefficients (powers 0, -1, -2) of ``step(d1, a1) @ step(d2, a2)`` on grids."""
    shape = d1.shape
    out = np.zeros((3,) + shape + (2, 2), complex)
    out[0, ..., 0, 0] = 1
    out[0, ..., 1, 0] = d1 + d2
    out[0, ..., 1, 1] = 1
    out[1, ..., 0, 0] = a1 / d1 * d2
    out[1, ..., 0, 1] = a1 / d1 + a2 / d2
    out[1, ..., 1, 1] = d1 * a2 / d2
    out[2, ..., 0, 1] = 0
    return out


@dataclass
class FrameSequence:
    """Extended frame on a window, stored as a polynomial part plus scalar exponents.

    ``Phi(k, m) = Phi_poly(k, m) * (1 - alpha^2/lambda)^ek * (1 - beta^2/lambda)^em``
    with ``ek = min(k, 0)`` and ``em = min(m, 0)``: stepping backwards
    multiplies by ``adj(U)`` and divides by ``det U``.
    """

    params: LaxParams
    k0: int
    m0: int
    poly: dict = field(default_factory=dict)  # (k, m) -> Loop
    lattice: DcmLattice | None = None

    def exponents(self, k, m):
        return min(k, 0), min(m, 0)

    def loop(self, k, m) -> Loop:
        return self.poly[(k, m)]

    def value(self, k, m, lam) -> np.ndarray:
        P = self.poly[(k, m)](lam)
        if is_infinite(lam):
            return P
        ek, em = self.exponents(k, m)
        x = 1 / scalar(lam)
        return P * (1 - self.params.alpha ** 2 * x) ** ek * (1 - self.params.beta ** 2 * x) ** em

    def sites(self):
        return sorted(self.poly)


def _walk(window, k_base=0, m_base=0):
    """Visit order from the base site: along the base row, then up/down each column.

    Yields ``(site, parent, direction, sign)``.
    """
    w = window
    for k in range(k_base + 1, w.k1 + 1):
        yield (k, m_base), (k - 1, m_base), "k", +1
    for k in range(k_base - 1, w.k0 - 1, -1):
        yield (k, m_base), (k + 1, m_base), "k", -1
    for k in range(w.k0, w.k1 + 1):
        for m in range(m_base + 1, w.m1 + 1):
            yield (k, m), (k, m - 1), "m", +1
        for m in range(m_base - 1, w.m0 - 1, -1):
            yield (k, m), (k, m + 1), "m", -1


def extended_frame(L: DcmLattice, params: LaxParams, check: bool = True,
                   tol: float = LAX_TOL) -> FrameSequence:
    w = L.window
    if not (w.k0 <= 0 <= w.k1 and w.m0 <= 0 <= w.m1):
        raise InputError("window must contain the base site (0, 0)")
    z = _affine_values(L)
    if abs(z[-w.k0, -w.m0]) > 1e-12:
        raise InputError("lattice must be based at 0 (z(0,0) = 0); see based_at_zero")
    lp = lax_pair(L, params)
    if check:
        res = lax_residual(L, params)
        if res > tol:
            raise PathInconsistency(f"Lax residual {res:.2e}: input is not a DCM with q = beta^2/alpha^2")
    fs = FrameSequence(params, w.k0, w.m0, {(0, 0): Loop.identity()}, L)
    for (k, m), (pk, pm), d, sgn in _walk(w):
        step = lp.U if d == "k" else lp.V
        if sgn > 0:
            fs.poly[(k, m)] = fs.poly[(pk, pm)] @ step(pk, pm)
        else:
            fs.poly[(k, m)] = fs.poly[(pk, pm)] @ step(k, m).adj()
    return fs


def based_at_zero(L: DcmLattice) -> DcmLattice:
    """Translate so that ``z(0, 0) = 0``."""
    z0 = L.point(0, 0).affine()
    return L.transformed(np.array([[1, -z0], [0, 1]]))


def frame_values(L: DcmLattice, params: LaxParams, lam) -> np.ndarray:
    """``Phi(k, m)(lam)`` up to a per-site scalar, by numeric recurrence.

    Rescaling each matrix keeps long products in range; lines are unaffected.
    """
    lam = scalar(lam)
    if lam == 0 or abs(lam - params.alpha ** 2) <= 1e-14 or abs(lam - params.beta ** 2) <= 1e-14:
        raise ExcludedLambda("lambda must avoid 0, alpha^2 and beta^2")
    lp = lax_pair(L, params)
    w = L.window
    a2, b2 = params.alpha ** 2, params.beta ** 2
    x = 1 / lam
    vals = {(0, 0): np.eye(2, dtype=complex)}

    def step(d, c):
        return np.array([[1, c * x / d], [d, 1]])

    for (k, m), (pk, pm), d, sgn in _walk(w):
        if d == "k":
            S = step(lp.u[pk - w.k0, pm - w.m0], a2) if sgn > 0 else \
                np.linalg.inv(step(lp.u[k - w.k0, m - w.m0], a2))
        else:
            S = step(lp.v[pk - w.k0, pm - w.m0], b2) if sgn > 0 else \
                np.linalg.inv(step(lp.v[k - w.k0, m - w.m0], b2))
        P = vals[(pk, pm)] @ S
        vals[(k, m)] = P / np.abs(P).max()
    out = np.empty(w.shape + (2, 2), complex)
    for (k, m), P in vals.items():
        out[k - w.k0, m - w.m0] = P
    return out


def family_map(frame, lam) -> DcmLattice:
    """Lattice of lines ``Phi(k, m)(lam) e_1`` (affine coordinate = second/first entry)."""
    fs = frame
    L = fs.lattice
    params = fs.params
    if is_infinite(lam):
        vals = np.stack([np.stack([fs.poly[(k, m)].coef(0)[:, 0] for m in range(L.m0, L.m0 + L.shape[1])])
                         for k in range(L.k0, L.k0 + L.shape[0])])
    else:
        vals = frame_values(L, params, lam)[..., :, 0]
    lifts = normalize_lifts(vals[..., ::-1])
    return DcmLattice(params.family_q(lam), L.k0, L.m0, lifts,
                      np.zeros(L.shape, np.int8))


def vacuum_frame_loop(params: LaxParams, k: int, m: int) -> Loop:
    """``(I + alpha Lambda)^k (I + beta Lambda)^m`` for ``k, m >= 0``."""
    if k < 0 or m < 0:
        raise BadParams("closed form implemented for k, m >= 0")
    Lam = Lambda_loop()
    out = Loop.identity()
    for _ in range(k):
        out = out @ (Loop.identity() + Lam.scaled(params.alpha))
    for _ in range(m):
        out = out @ (Loop.identity() + Lam.scaled(params.beta))
    return out


# ---- dressing ----------------------------------------------------------------------

@dataclass
class DressResult:
    lattice: DcmLattice
    frame: FrameSequence | None
    psi: dict
    failed: list

    def __iter__(self):
        yield self.lattice
        yield self.frame


def dress(frame: FrameSequence, g: Loop, method: str = "recursive",
          tol: float = FACTOR_TOL) -> DressResult:
    """Dress an extended frame by ``g`` in ``B``.

    ``recursive`` carries ``Psi`` from site to site: ``Psi U = Uhat Psi'``
    factorises a loop of support ``[-1, deg g]`` at every step.  ``direct``
    factorises ``g Phi(k, m)`` at every site.  Sites whose factorisation
    fails are left Unset; a broken chain resumes from a direct factorisation.
    """
    params = frame.params
    r = params.radius
    if not g.is_member_B():
        raise BadParams("dressing element must lie in B (no negative powers, g(0) upper triangular)")
    L = frame.lattice
    w = L.window
    lp = lax_pair(L, params)
    a2, b2 = params.alpha ** 2, params.beta ** 2
    zhat: dict = {(0, 0): 0j}
    psi: dict = {(0, 0): g}
    failed = []

    def direct(site):
        gN, gB = birkhoff_factorize(g @ frame.poly[site], tol, radius=r)
        return gN.coef(0)[1, 0], gB

    if method == "direct":
        for k in range(w.k0, w.k1 + 1):
            for m in range(w.m0, w.m1 + 1):
                if (k, m) == (0, 0):
                    continue
                try:
                    zhat[(k, m)], psi[(k, m)] = direct((k, m))
                except NotInBigCell:
                    failed.append((k, m))
    elif method == "recursive":
        for site, parent, d, sgn in _walk(w):
            k, m = site
            try:
                if parent not in psi:
                    raise NotInBigCell("chain broken")
                if sgn > 0:
                    step = step_loop(lp.u[parent[0] - w.k0, parent[1] - w.m0], a2) if d == "k" else \
                        step_loop(lp.v[parent[0] - w.k0, parent[1] - w.m0], b2)
                else:
                    step = (step_loop(lp.u[k - w.k0, m - w.m0], a2) if d == "k" else
                            step_loop(lp.v[k - w.k0, m - w.m0], b2)).adj()
                hN, hB = birkhoff_factorize(psi[parent] @ step, tol, radius=r, check_circle=False)
                zhat[site] = zhat[parent] + hN.coef(0)[1, 0]
                psi[site] = hB
            except NotInBigCell:
                try:
                    zhat[site], psi[site] = direct(site)
                except NotInBigCell:
                    failed.append(site)
    else:
        raise InputError(f"unknown dressing method {method!r}")

    vals = np.full(w.shape, np.nan, complex)
    for (k, m), z in zhat.items():
        vals[k - w.k0, m - w.m0] = z
    out = DcmLattice.from_affine(params.q, vals, w.k0, w.m0)
    detect_collapse(out)
    dressed_frame = None
    if not failed and (out.status == SiteStatus.REGULAR).all():
        try:
            dressed_frame = extended_frame(out, params, check=False)
        except (InputError, ZeroEdge):
            dressed_frame = None
    return DressResult(out, dressed_frame, psi, failed)


# ---- Grassmannian and discrete Baker functions ------------------------------------

@dataclass
class FiniteTypeW:
    """``W = span(added) + zeta^{-s} H_-`` with ``added`` finite Laurent polynomials.

    Each added element is a dict ``{power: coefficient}``.  ``len(added) == s``
    gives virtual dimension zero.
    """

    added: list
    s: int

    def __post_init__(self):
        self.added = [{int(p): complex(c) for p, c in w.items()} for w in self.added]
        if self.s < 0:
            raise BadParams("tail exponent must be >= 0")
        if len(self.added) != self.s:
            raise BadParams("need exactly s added elements for virtual dimension zero")
        # independence modulo the tail
        if self.s:
            M = self._matrix(self.added, -self.s + 1, self.top)
            if np.linalg.matrix_rank(M) < self.s:
                raise BadParams("added elements are dependent modulo the tail")

    @property
    def top(self) -> int:
        return max([max(w) for w in self.added if w] + [0])

    @staticmethod
    def _matrix(elems, lo, hi):
        M = np.zeros((hi - lo + 1, len(elems)), complex)
        for i, w in enumerate(elems):
            for p, c in w.items():
                if lo <= p <= hi:
                    M[p - lo, i] = c
        return M

    @classmethod
    def trivial(cls) -> FiniteTypeW:
        return cls([], 0)

    @classmethod
    def cubic(cls) -> FiniteTypeW:
        return cls([{1: 1.0}], 1)

    def shift_closed(self) -> bool:
        """``zeta^{-2} W`` is contained in ``W``, tested on the generators."""
        lo, hi = -self.s + 1, self.top
        M = self._matrix(self.added, lo, hi)
        for w in self.added:
            v = self._matrix([{p - 2: c for p, c in w.items()}], lo, hi)[:, 0]
            if not self.s:
                continue
            sol, *_ = np.linalg.lstsq(M, v, rcond=None)
            if np.abs(M @ sol - v).max() > 1e-10:
                return False
        return True


def binomial_series(a: complex, k: int, nterms: int) -> np.ndarray:
    """Coefficients of ``(1 + a zeta^{-1})^k`` at ``zeta^0, zeta^{-1}, ...``."""
    out = np.zeros(nterms, complex)
    c = 1 + 0j
    for j in range(nterms):
        out[j] = c
        c = c * (k - j) / (j + 1) * a
    return out


@dataclass
class BakerFunction:
    """Coefficients of ``psi`` at powers ``lo .. hi``; lower powers are omitted (tail)."""

    lo: int
    coeffs: np.ndarray

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    def coef(self, p: int) -> complex:
        return complex(self.coeffs[p - self.lo]) if self.lo <= p <= self.hi else 0j


def discrete_baker(W: FiniteTypeW, params: LaxParams, k: int, m: int,
                   depth: int = 4) -> BakerFunction:
    """The element ``psi`` of ``W`` with ``pr_-(phi^{-1} psi) = 1``, ``phi = (1+a/z)^k (1+b/z)^m``.

    ``psi = phi (1 + sum_{j=1..P} c_j zeta^j)`` with ``P`` the top power of
    ``W``; membership in ``W`` fixes ``c`` and the coordinates along the
    added generators by matching powers ``-s+1 .. P``.
    """
    P, s = W.top, W.s
    lo = -s - depth
    nphi = P - lo + 1
    phi = np.convolve(binomial_series(params.alpha, k, nphi),
                      binomial_series(params.beta, m, nphi))[:nphi]  # powers 0, -1, ...

    def phi_shifted(j):  # coefficients of phi * zeta^j at powers lo..P
        out = np.zeros(P - lo + 1, complex)
        for t in range(nphi):
            p = j - t
            if lo <= p <= P:
                out[p - lo] = phi[t]
        return out

    base = phi_shifted(0)
    cols = [phi_shifted(j) for j in range(1, P + 1)]
    gens = [FiniteTypeW._matrix([w], lo, P)[:, 0] for w in W.added]
    eq = slice(-s + 1 - lo, P - lo + 1)  # powers -s+1 .. P
    n = P + s
    if n == 0:
        return BakerFunction(lo, base)
    A = np.zeros((n, n), complex)
    for i, c in enumerate(cols):
        A[:, i] = c[eq]
    for i, gv in enumerate(gens):
        A[:, P + i] = -gv[eq]
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * max(1.0, sv[0]):
        raise BigCellFailure(f"Baker system singular at ({k}, {m})")
    sol = np.linalg.solve(A, -base[eq])
    psi = base + sum(sol[i] * cols[i] for i in range(P))
    return BakerFunction(lo, psi)


def quotient_basis(W: FiniteTypeW):
    """Two representatives spanning ``W / zeta^{-2} W`` (generator order), plus the relations.

    Everything is expressed by coefficients at powers ``-s-1 .. top``;
    lower powers lie in ``zeta^{-2} W`` automatically.
    """
    lo, hi = -W.s - 1, W.top
    rel = FiniteTypeW._matrix([{p - 2: c for p, c in w.items()} for w in W.added], lo, hi)
    cands = [FiniteTypeW._matrix([w], lo, hi)[:, 0] for w in W.added]
    cands += [FiniteTypeW._matrix([{-W.s: 1}], lo, hi)[:, 0],
              FiniteTypeW._matrix([{-W.s - 1: 1}], lo, hi)[:, 0]]
    chosen = []
    for c in cands:
        M = np.column_stack([rel] + chosen + [c]) if rel.size or chosen else c[:, None]
        if np.linalg.matrix_rank(M, tol=1e-10) == M.shape[1]:
            chosen.append(c)
        if len(chosen) == 2:
            break
    if len(chosen) < 2:
        raise BadParams("could not find a basis of the quotient")
    return lo, hi, chosen, rel


def baker_class(W: FiniteTypeW, psi: BakerFunction, basis=None) -> np.ndarray:
    """Coordinates of ``psi + zeta^{-2} W`` in the quotient basis."""
    lo, hi, chosen, rel = basis or quotient_basis(W)
    v = np.array([psi.coef(p) for p in range(lo, hi + 1)])
    M = np.column_stack(chosen + ([rel] if rel.size else []))
    sol, *_ = np.linalg.lstsq(M, v, rcond=None)
    return sol[:2]


def baker_quotient_map(W: FiniteTypeW, params: LaxParams, window) -> DcmLattice:
    """Lattice of classes ``[psi(k, m)]``; point ``[x1 : x2]`` has affine coordinate ``x2/x1``."""
    w = as_window(window)
    basis = quotient_basis(W)
    pts = np.full(w.shape + (2,), np.nan, complex)
    for i, k in enumerate(range(w.k0, w.k1 + 1)):
        for j, m in enumerate(range(w.m0, w.m1 + 1)):
            try:
                x1, x2 = baker_class(W, discrete_baker(W, params, k, m), basis)
            except BigCellFailure:
                continue
            pts[i, j] = (x2, x1)
    L = DcmLattice.from_lifts(params.q, pts, w.k0, w.m0)
    detect_collapse(L)
    return L


def discrete_cubic(k, m, params: LaxParams):
    a, b = params.alpha, params.beta
    k = np.asarray(k)
    m = np.asarray(m)
    val = ((k + 1) * k * (k - 1) * a ** 3 + 3 * k * k * m * a * a * b
           + 3 * k * m * m * a * b * b + (m + 1) * m * (m - 1) * b ** 3)
    return val[()] if np.ndim(val) == 0 else val


def cubic_lattice(params: LaxParams, window) -> DcmLattice:
    w = as_window(window)
    k, m = w.grids()
    L = DcmLattice.from_affine(params.q, discrete_cubic(k, m, params), w.k0, w.m0)
    detect_collapse(L)
    return L
