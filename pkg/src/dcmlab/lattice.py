"""Discrete conformal lattices: storage, evolution, audit, collapse detection, I/O.

Site ``(k, m)`` of a :class:`DcmLattice` lives at array index
``(k - k0, m - m0)``.  Windows are inclusive on both ends.  The cross-ratio
condition is ``[z(k,m+1) : z(k,m) : z(k+1,m) : z(k+1,m+1)] = q``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from .errors import (
    BadParams,
    DegenerateEdge,
    DegenerateInput,
    InputError,
    SeedEqualsBase,
)
from .mobius import (
    DEFAULT_TOL,
    ZERO_DET_TOL,
    ProjectivePoint,
    affine_from_lifts,
    as_point,
    chordal_gap,
    cross_ratio_array,
    edge_transfer,
    lifts_from_affine,
    mobius_from_triples,
    normalize_lifts,
    scalar,
)

AUDIT_TOL = 1e-8
COLLAPSE_TOL = 1e-9
# a quad whose smallest edge determinant is this small relative to its largest
# has (numerically) coincident neighbours and cannot carry a cross-ratio
COINCIDE_RTOL = 1e-9


class SiteStatus(IntEnum):
    REGULAR = 0
    COLLAPSED = 1
    UNSET = 2


_STATUS_NAMES = {SiteStatus.REGULAR: "Regular", SiteStatus.COLLAPSED: "Collapsed",
                 SiteStatus.UNSET: "Unset"}
_STATUS_BY_NAME = {v: k for k, v in _STATUS_NAMES.items()}


@dataclass(frozen=True)
class Window:
    """Inclusive index box ``k0..k1`` by ``m0..m1``."""

    k0: int
    k1: int
    m0: int
    m1: int

    def __post_init__(self):
        if self.k1 < self.k0 or self.m1 < self.m0:
            raise InputError(f"empty window {self}")

    @classmethod
    def parse(cls, text: str) -> Window:
        m = re.fullmatch(r"\s*(-?\d+):(-?\d+),(-?\d+):(-?\d+)\s*", text)
        if not m:
            raise InputError(f"window must look like K0:K1,M0:M1, got {text!r}")
        return cls(*map(int, m.groups()))

    @classmethod
    def centred(cls, K: int, M: int) -> Window:
        return cls(-(K // 2), K - K // 2 - 1, -(M // 2), M - M // 2 - 1)

    @property
    def shape(self):
        return (self.k1 - self.k0 + 1, self.m1 - self.m0 + 1)

    def grids(self):
        k = np.arange(self.k0, self.k1 + 1)
        m = np.arange(self.m0, self.m1 + 1)
        return np.meshgrid(k, m, indexing="ij")

    def __str__(self):
        return f"{self.k0}:{self.k1},{self.m0}:{self.m1}"


def as_window(w) -> Window:
    if isinstance(w, Window):
        return w
    if isinstance(w, str):
        return Window.parse(w)
    return Window(*w)


@dataclass
class DcmLattice:
    q: complex
    k0: int
    m0: int
    points: np.ndarray  # (K, M, 2) normalised lifts; NaN where unset
    status: np.ndarray  # (K, M) SiteStatus codes
    period_n: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = complex(self.q)
        self.points = np.asarray(self.points, dtype=complex)
        if self.points.ndim != 3 or self.points.shape[2] != 2:
            raise InputError("points must have shape (K, M, 2)")
        self.status = np.asarray(self.status, dtype=np.int8)
        if self.status.shape != self.points.shape[:2]:
            raise InputError("status grid shape mismatch")

    @classmethod
    def from_affine(cls, q, values, k0=0, m0=0, period_n=None, status=None) -> DcmLattice:
        values = np.asarray(values, dtype=complex)
        pts = lifts_from_affine(values)
        st = np.zeros(values.shape, np.int8) if status is None else np.asarray(status, np.int8)
        st = np.where(np.isnan(values), np.int8(SiteStatus.UNSET), st)
        return cls(q, k0, m0, pts, st, period_n)

    @classmethod
    def from_lifts(cls, q, lifts, k0=0, m0=0, period_n=None) -> DcmLattice:
        pts = normalize_lifts(lifts)
        st = np.where(np.isnan(pts).any(axis=-1), np.int8(SiteStatus.UNSET), np.int8(0))
        return cls(q, k0, m0, pts, st, period_n)

    @property
    def shape(self):
        return self.status.shape

    @property
    def window(self) -> Window:
        K, M = self.shape
        return Window(self.k0, self.k0 + K - 1, self.m0, self.m0 + M - 1)

    @property
    def k_range(self):
        return (self.k0, self.k0 + self.shape[0] - 1)

    @property
    def m_range(self):
        return (self.m0, self.m0 + self.shape[1] - 1)

    def index(self, k: int, m: int):
        i, j = k - self.k0, m - self.m0
        K, M = self.shape
        if self.period_n is not None and not 0 <= i < K:
            i = (k - self.k0) % self.period_n
        if not (0 <= i < K and 0 <= j < M):
            raise IndexError(f"site ({k}, {m}) outside {self.window}")
        return i, j

    def point(self, k: int, m: int) -> ProjectivePoint:
        """Site value; k is wrapped modulo ``period_n`` when that is set."""
        i, j = self.index(k, m)
        if self.status[i, j] == SiteStatus.UNSET:
            raise InputError(f"site ({k}, {m}) is unset")
        return ProjectivePoint.from_vector(self.points[i, j])

    def site_status(self, k: int, m: int) -> SiteStatus:
        return SiteStatus(int(self.status[self.index(k, m)]))

    def affine(self) -> np.ndarray:
        """Affine values; ``inf`` at the point (1, 0), NaN at unset sites."""
        return affine_from_lifts(self.points)

    def regular_mask(self) -> np.ndarray:
        return self.status == SiteStatus.REGULAR

    def copy(self) -> DcmLattice:
        return DcmLattice(self.q, self.k0, self.m0, self.points.copy(), self.status.copy(),
                          self.period_n, dict(self.meta))

    def transformed(self, g) -> DcmLattice:
        """Apply the Möbius map ``g`` to every site."""
        g = np.asarray(g, complex)
        pts = normalize_lifts(np.einsum("ij,kmj->kmi", g, self.points))
        return DcmLattice(self.q, self.k0, self.m0, pts, self.status.copy(), self.period_n)

    # ---- serialisation -------------------------------------------------

    def to_json_dict(self) -> dict:
        rows = []
        for i in range(self.shape[0]):
            row = []
            for j in range(self.shape[1]):
                v = self.points[i, j]
                if np.isnan(v).any():
                    row.append(None)
                else:
                    row.append([v[0].real, v[0].imag, v[1].real, v[1].imag])
            rows.append(row)
        d = {
            "q": [self.q.real, self.q.imag],
            "k_range": list(self.k_range),
            "m_range": list(self.m_range),
            "points": rows,
            "status": [[_STATUS_NAMES[SiteStatus(int(s))] for s in r] for r in self.status],
        }
        if self.period_n is not None:
            d["period_n"] = int(self.period_n)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> DcmLattice:
        try:
            k0, k1 = d["k_range"]
            m0, m1 = d["m_range"]
            K, M = k1 - k0 + 1, m1 - m0 + 1
            pts = np.full((K, M, 2), np.nan, dtype=complex)
            rows = d["points"]
            if len(rows) != K or any(len(r) != M for r in rows):
                raise InputError("points grid does not match k_range/m_range")
            for i, r in enumerate(rows):
                for j, v in enumerate(r):
                    if v is not None:
                        pts[i, j, 0] = complex(v[0], v[1])
                        pts[i, j, 1] = complex(v[2], v[3])
            st = np.array([[_STATUS_BY_NAME[s] for s in r] for r in d["status"]], np.int8)
            st = st.reshape(K, M)
            q = complex(*d["q"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed lattice JSON: {exc}") from exc
        return cls(q, k0, m0, pts, st, d.get("period_n"))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> DcmLattice:
        try:
            return cls.from_json_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> DcmLattice:
        with open(path) as f:
            return cls.from_json(f.read())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "m", "re", "im"])
        vals = self.affine()
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                k, m = self.k0 + i, self.m0 + j
                z = vals[i, j]
                if self.status[i, j] == SiteStatus.UNSET:
                    w.writerow([k, m, "nan", "nan"])
                elif np.isinf(z):
                    w.writerow([k, m, "inf", "inf"])
                else:
                    w.writerow([k, m, repr(z.real), repr(z.imag)])
        return buf.getvalue()


@dataclass(frozen=True)
class DiscreteCurve:
    """Closed polygon ``z_0 .. z_{n-1}`` in the projective line (indices mod n)."""

    points: tuple

    def __post_init__(self):
        pts = tuple(as_point(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 4:
            raise DegenerateInput("a periodic discrete curve needs n >= 4 points")
        for k in range(len(pts)):
            if pts[k].equals(pts[(k + 1) % len(pts)]):
                raise DegenerateEdge(f"consecutive points {k} and {(k + 1) % len(pts)} coincide")

    @classmethod
    def from_affine(cls, values) -> DiscreteCurve:
        return cls(tuple(values))

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, k):
        return self.points[k % self.n]

    def lifts(self) -> np.ndarray:
        return np.array([p.vector for p in self.points])

    def affine(self) -> np.ndarray:
        return np.array([p.affine() for p in self.points])

    def all_distinct(self, tol: float = DEFAULT_TOL) -> bool:
        return all(not self.points[i].equals(self.points[j], tol)
                   for i in range(self.n) for j in range(i + 1, self.n))

    def shifted(self, s: int = 1) -> DiscreteCurve:
        return DiscreteCurve(tuple(self[k + s] for k in range(self.n)))

    def transformed(self, g) -> DiscreteCurve:
        g = np.asarray(g, complex)
        return DiscreteCurve(tuple(ProjectivePoint.from_vector(g @ p.vector) for p in self.points))


@dataclass
class RowResult:
    points: list
    closure_defect: float | None = None


def evolve_row(row, seed, q, tol: float = DEFAULT_TOL) -> RowResult:
    """Next row from ``z'_{k+1} = T_k^q(z'_k)`` with ``z'_0 = seed``.

    For a :class:`DiscreteCurve` the chain is run once around and the
    returned ``closure_defect`` measures how far ``z'_n`` is from ``z'_0``.
    Running it with the seed ``z_{0,m-1}`` instead produces the row below.
    """
    periodic = isinstance(row, DiscreteCurve)
    pts = list(row.points) if periodic else [as_point(p) for p in row]
    seed = as_point(seed)
    q = scalar(q)
    if seed.equals(pts[0], tol):
        raise SeedEqualsBase("seed coincides with the row's base point")
    out = [seed]
    count = len(pts) if periodic else len(pts) - 1
    cur = seed.vector
    for k in range(count):
        T = edge_transfer(pts[k], pts[(k + 1) % len(pts)], q, tol)
        cur = T @ cur
        s = np.abs(cur).max()
        if s == 0:
            raise DegenerateInput(f"evolution hit the zero vector at k={k + 1}")
        cur = cur / s
        out.append(ProjectivePoint.from_vector(cur))
    if periodic:
        last = out.pop()
        defect = float(abs(last.v0 * seed.v1 - last.v1 * seed.v0))
        return RowResult(out, defect)
    return RowResult(out, None)


def _curve_from_points(pts) -> DiscreteCurve:
    return DiscreteCurve(tuple(pts))


def _choose_seed(Mq: np.ndarray, avoid, mu_ref, policy: str, tol: float):
    from .spectral import eigenpairs_numeric

    (mu1, v1), (mu2, v2) = eigenpairs_numeric(Mq, tol)
    if policy == "fixed":
        return (v1, mu1) if abs(mu1 - mu_ref) <= abs(mu2 - mu_ref) else (v2, mu2)
    # continuity: the eigenline that is not the row we came from
    g1 = abs(avoid.v0 * v1.v1 - avoid.v1 * v1.v0)
    g2 = abs(avoid.v0 * v2.v1 - avoid.v1 * v2.v0)
    return (v1, mu1) if g1 >= g2 else (v2, mu2)


def conformal_flow(curve: DiscreteCurve, q, steps_up: int, steps_down: int = 0,
                   branch_policy: str = "continuity", initial=0, k_window=None,
                   tol: float = DEFAULT_TOL) -> DcmLattice:
    """Flow a periodic curve in both lattice directions at cross-ratio ``q``.

    ``initial`` picks the eigenline of the row-0 holonomy at ``lambda = q``
    that seeds row 1: ``0`` or ``1`` index the two sheets ordered as in
    :func:`dcmlab.spectral.eigenpairs_numeric`, or pass a point to select the
    nearer eigenline.  The other eigenline seeds row -1.  ``k_window`` is an
    optional ``(k0, k1)``; columns outside ``0..n-1`` repeat periodically.
    """
    from .spectral import holonomy_at, eigenpairs_numeric

    if branch_policy not in ("continuity", "fixed"):
        raise InputError(f"unknown branch policy {branch_policy!r}")
    q = scalar(q)
    n = curve.n
    M0 = trace_free_at(holonomy_at(curve, q), q)
    pairs = eigenpairs_numeric(M0, tol)
    if isinstance(initial, (int, np.integer)):
        up_idx = int(initial)
        if up_idx not in (0, 1):
            raise InputError("initial must be 0, 1 or a point")
    else:
        p = as_point(initial)
        gaps = [abs(p.v0 * v.v1 - p.v1 * v.v0) for _, v in pairs]
        up_idx = int(np.argmin(gaps))
    mu_up, seed_up = pairs[up_idx]
    mu_dn, seed_dn = pairs[1 - up_idx]

    rows = {0: list(curve.points)}
    defects = []

    def run(direction, seed, mu_ref, steps):
        cur = curve
        prev_base = None
        for s in range(1, steps + 1):
            if s > 1:
                Mq = trace_free_at(holonomy_at(cur, q), q)
                seed, _ = _choose_seed(Mq, prev_base, mu_ref, branch_policy, tol)
            res = evolve_row(cur, seed, q, tol)
            defects.append(res.closure_defect)
            prev_base = cur.points[0]
            cur = _curve_from_points(res.points)
            rows[direction * s] = res.points

    if steps_up:
        run(1, seed_up, mu_up, steps_up)
    if steps_down:
        run(-1, seed_dn, mu_dn, steps_down)

    k0, k1 = (0, n - 1) if k_window is None else k_window
    K, M = k1 - k0 + 1, steps_up + steps_down + 1
    pts = np.empty((K, M, 2), complex)
    for j, m in enumerate(range(-steps_down, steps_up + 1)):
        r = rows[m]
        for i, k in enumerate(range(k0, k1 + 1)):
            pts[i, j] = r[k % n].vector
    L = DcmLattice(q, k0, -steps_down, pts, np.zeros((K, M), np.int8), period_n=n)
    L.meta["closure_defect"] = max(defects) if defects else 0.0
    L.meta["mu_q"] = mu_up
    return L


def trace_free_at(H: np.ndarray, lam) -> np.ndarray:
    """``lambda (H - tr(H)/2 I)`` at a finite ``lambda``."""
    p = (H[0, 0] + H[1, 1]) / 2
    return lam * (H - p * np.eye(2))


# ---- audit and collapse -----------------------------------------------

@dataclass
class AuditReport:
    q: complex
    max_abs_deviation: float
    max_rel_deviation: float
    worst_cell: tuple | None
    indeterminate_cells: list
    checked_cells: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_deviation <= self.tol

    def summary(self) -> str:
        verdict = "ok" if self.passed else "FAIL"
        return (f"audit: {verdict} q={self.q:.6g} max_dev={self.max_abs_deviation:.3e} "
                f"checked={self.checked_cells} indeterminate={len(self.indeterminate_cells)}")

    def to_dict(self) -> dict:
        return {
            "q": [self.q.real, self.q.imag],
            "max_abs_deviation": self.max_abs_deviation,
            "max_rel_deviation": self.max_rel_deviation,
            "worst_cell": list(self.worst_cell) if self.worst_cell else None,
            "indeterminate_cells": [list(c) for c in self.indeterminate_cells],
            "checked_cells": self.checked_cells,
            "passed": self.passed,
        }


def quad_cross_ratios(L: DcmLattice):
    """Cross-ratios of all elementary quads plus a mask of degenerate ones.

    Returns ``(cr, ok)`` of shape ``(K-1, M-1)``; ``ok`` is False where a
    corner is not Regular or two neighbouring corners coincide.
    """
    P = L.points
    a, b, c, d = P[:-1, 1:], P[:-1, :-1], P[1:, :-1], P[1:, 1:]
    cr, _, _ = cross_ratio_array(a, b, c, d)
    reg = L.regular_mask()
    corners = reg[:-1, 1:] & reg[:-1, :-1] & reg[1:, :-1] & reg[1:, 1:]
    gaps = np.stack([chordal_gap(a, b), chordal_gap(b, c), chordal_gap(c, d), chordal_gap(d, a)])
    with np.errstate(invalid="ignore"):
        coincide = gaps.min(axis=0) <= COINCIDE_RTOL * gaps.max(axis=0)
    ok = corners & ~coincide & np.isfinite(cr)
    return cr, ok, corners


def audit_cross_ratios(L: DcmLattice, tol: float = AUDIT_TOL) -> AuditReport:
    K, M = L.shape
    if K < 2 or M < 2:
        return AuditReport(L.q, 0.0, 0.0, None, [], 0, tol)
    cr, ok, corners = quad_cross_ratios(L)
    dev = np.where(ok, np.abs(cr - L.q), 0.0)
    rel = dev / max(1.0, abs(L.q))
    indet = [(int(L.k0 + i), int(L.m0 + j)) for i, j in zip(*np.nonzero(~ok))]
    if ok.any():
        i, j = np.unravel_index(np.argmax(np.where(ok, dev, -1.0)), dev.shape)
        worst = (int(L.k0 + i), int(L.m0 + j))
    else:
        worst = None
    return AuditReport(L.q, float(dev.max()), float(rel.max()), worst, indet,
                       int(ok.sum()), tol)


def detect_collapse(L: DcmLattice, tol: float = COLLAPSE_TOL, mark: bool = True) -> list:
    """Interior sites whose four neighbours coincide with them; marked Collapsed.

    "Coincide" is measured against the local scale: the largest chordal gap
    to a neighbour must be below ``tol`` times the largest gap to a diagonal
    neighbour (or below ``ZERO_DET_TOL`` outright).  An absolute test would
    flag every site of a lattice that has merely shrunk towards 0 or inf.
    """
    P = L.points
    K, M = L.shape
    if K < 3 or M < 3:
        return []
    c = P[1:-1, 1:-1]
    with np.errstate(invalid="ignore"):
        inner = np.max([chordal_gap(c, nb) for nb in
                        (P[2:, 1:-1], P[:-2, 1:-1], P[1:-1, 2:], P[1:-1, :-2])], axis=0)
        outer = np.max([chordal_gap(c, nb) for nb in
                        (P[2:, 2:], P[:-2, :-2], P[:-2, 2:], P[2:, :-2])], axis=0)
        near = (inner <= tol * outer) | (inner <= ZERO_DET_TOL)
    usable = ~np.isnan(inner) & (L.status[1:-1, 1:-1] != SiteStatus.UNSET)
    near &= usable
    sites = [(int(L.k0 + 1 + i), int(L.m0 + 1 + j)) for i, j in zip(*np.nonzero(near))]
    if mark:
        for k, m in sites:
            L.status[k - L.k0, m - L.m0] = SiteStatus.COLLAPSED
    return sites


def vacuum_lattice(alpha, beta, window) -> DcmLattice:
    """The parallelogram tiling ``z = k alpha + m beta``."""
    alpha, beta = scalar(alpha), scalar(beta)
    if alpha == 0 or beta == 0:
        raise BadParams("alpha and beta must be nonzero")
    q = beta ** 2 / alpha ** 2
    if abs(q - 1) <= DEFAULT_TOL:
        raise BadParams("beta^2/alpha^2 = 1 is excluded")
    w = as_window(window)
    k, m = w.grids()
    return DcmLattice.from_affine(q, k * alpha + m * beta, w.k0, w.m0)


# ---- comparisons --------------------------------------------------------

def period_defect(L: DcmLattice, n: int) -> float:
    """Max chordal gap between sites ``(k, m)`` and ``(k+n, m)`` inside the window."""
    K = L.shape[0]
    if n >= K:
        raise InputError(f"window has {K} columns, cannot test period {n}")
    a, b = L.points[:-n], L.points[n:]
    both = (L.status[:-n] != SiteStatus.UNSET) & (L.status[n:] != SiteStatus.UNSET)
    g = np.where(both, chordal_gap(a, b), 0.0)
    return float(g.max())


def _reference_sites(mask: np.ndarray, pts: np.ndarray):
    idx = list(zip(*np.nonzero(mask)))
    if len(idx) < 3:
        raise DegenerateInput("need at least three regular sites to align")
    flat = np.array([pts[i] for i in idx])
    first = 0
    d1 = chordal_gap(flat, flat[first])
    second = int(np.argmax(d1))
    d2 = chordal_gap(flat, flat[second])
    third = int(np.argmax(np.minimum(d1, d2)))
    return [idx[first], idx[second], idx[third]]


def align_mobius(src: DcmLattice, dst: DcmLattice):
    """Möbius map taking ``src`` to ``dst`` on three well-separated common sites."""
    if src.shape != dst.shape or (src.k0, src.m0) != (dst.k0, dst.m0):
        raise InputError("lattices must share a window")
    mask = src.regular_mask() & dst.regular_mask()
    refs = _reference_sites(mask, src.points)
    s = [ProjectivePoint.from_vector(src.points[r]) for r in refs]
    d = [ProjectivePoint.from_vector(dst.points[r]) for r in refs]
    return mobius_from_triples(s, d)


def lattice_distance(A: DcmLattice, B: DcmLattice, align: bool = False) -> float:
    """Max chordal gap over sites regular in both; optionally after Möbius alignment."""
    if align:
        A = A.transformed(align_mobius(A, B))
    mask = A.regular_mask() & B.regular_mask()
    if not mask.any():
        return 0.0
    return float(chordal_gap(A.points, B.points)[mask].max())


def lattice_from_function(q, f, window, period_n=None) -> DcmLattice:
    """Evaluate ``f(k, m)`` (vectorised over integer grids) on a window."""
    w = as_window(window)
    k, m = w.grids()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(f(k, m), dtype=complex)
    return DcmLattice.from_affine(q, vals, w.k0, w.m0, period_n)


def is_finite_complex(z) -> bool:
    return math.isfinite(z.real) and math.isfinite(z.imag)


def rows_as_sequence(L: DcmLattice, m: int) -> Sequence[ProjectivePoint]:
    j = m - L.m0
    return [ProjectivePoint.from_vector(L.points[i, j]) for i in range(L.shape[0])]
