"""Riemann theta functions and lattice reconstruction from period data.

A lattice is assembled site by site as

    z(k, m) = exp(2 pi i a_{g+1}) * theta(A_Pinf + a - A_D00 - kappa)
                                   / theta(A_Pinf~ + a - A_D00 - kappa)

where ``a`` (the first ``g`` entries of ``alpha'(k, m)``) accumulates the
step increments ``U_S`` in ``k`` and ``U_Q`` in ``m``, with the even or odd
increment chosen by the parity of ``k + m`` at the start of the step.

Period data is input: nothing here integrates differentials.  Nodal curves
replace theta by a closed form and need no period matrix.
"""
from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadParams,
    MissingLatticeGenerators,
    NotPositiveDefinite,
    RadiusTooSmall,
    UnsupportedNodeCount,
)
from .lattice import DcmLattice, SiteStatus, as_window, detect_collapse
from .mobius import normalize_lifts

THETA_TOL = 1e-12
COLLAPSE_TOL = 1e-9
SCHEMA = "dcmlab.perioddata"
SCHEMA_VERSION = 1


def _vec(v, n, name):
    a = np.atleast_1d(np.asarray(v, dtype=complex))
    if a.shape != (n,):
        raise BadParams(f"{name} must have length {n}, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise BadParams(f"{name} has non-finite entries")
    return a


def check_period_matrix(Omega) -> np.ndarray:
    Omega = np.atleast_2d(np.asarray(Omega, dtype=complex))
    if Omega.size == 0:
        return Omega.reshape(0, 0)
    if Omega.shape[0] != Omega.shape[1]:
        raise BadParams("period matrix must be square")
    if np.abs(Omega - Omega.T).max() > 1e-10:
        raise BadParams("period matrix must be symmetric")
    try:
        np.linalg.cholesky(Omega.imag)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Im(Omega) is not positive definite") from exc
    return Omega


@dataclass
class PeriodData:
    """Period data in the shape the reconstruction formula consumes.

    ``nodes`` switches to the nodal closed form (one or two node values);
    ``Omega`` is then ignored.  ``generators`` holds the period lattice of the
    generalised Jacobian as columns of a ``(g+1) x r`` matrix.
    """

    g: int
    Omega: np.ndarray
    A_Pinf: np.ndarray
    A_Pinf_tilde: np.ndarray
    A_D00: np.ndarray
    kappa: np.ndarray
    U_S_even: np.ndarray
    U_S_odd: np.ndarray
    U_Q_even: np.ndarray
    U_Q_odd: np.ndarray
    generators: np.ndarray | None = None
    nodes: tuple | None = None

    def __post_init__(self):
        g = int(self.g)
        if g < 0:
            raise BadParams("genus must be >= 0")
        self.g = g
        if self.nodes is not None:
            self.nodes = tuple(complex(x) for x in self.nodes)
            if len(self.nodes) != g:
                raise UnsupportedNodeCount("nodal data needs one node per theta variable")
            self.Omega = np.zeros((g, g), complex)
        else:
            self.Omega = check_period_matrix(self.Omega) if g else np.zeros((0, 0), complex)
            if self.Omega.shape != (g, g):
                raise BadParams(f"Omega must be {g}x{g}")
        for name in ("A_Pinf", "A_Pinf_tilde", "A_D00", "kappa"):
            setattr(self, name, _vec(getattr(self, name), g, name) if g else np.zeros(0, complex))
        for name in ("U_S_even", "U_S_odd", "U_Q_even", "U_Q_odd"):
            setattr(self, name, _vec(getattr(self, name), g + 1, name))
        # path independence around a unit square needs equal parity jumps
        jump_s = self.U_S_even - self.U_S_odd
        jump_q = self.U_Q_even - self.U_Q_odd
        if np.abs(jump_s - jump_q).max() > 1e-9 * max(1.0, np.abs(jump_s).max()):
            raise BadParams("U_S and U_Q parity jumps differ; alpha would be path dependent")
        if self.generators is not None:
            G = np.atleast_2d(np.asarray(self.generators, complex))
            if G.shape[0] != g + 1:
                raise BadParams(f"lattice generators must have {g + 1} rows")
            self.generators = G

    # alpha'(k, m) = k s + m t + [k+m odd] e
    def alpha(self, k, m) -> np.ndarray:
        s = (self.U_S_even + self.U_S_odd) / 2
        t = (self.U_Q_even + self.U_Q_odd) / 2
        e = (self.U_S_even - self.U_S_odd) / 2
        k = np.asarray(k)[..., None]
        m = np.asarray(m)[..., None]
        odd = ((k + m) % 2 == 1)
        return k * s + m * t + odd * e

    def theta(self, Z, with_scale: bool = False):
        if self.nodes is not None:
            return nodal_theta(Z, self.nodes, with_scale)
        if with_scale:
            val, bound, scale = riemann_theta_with_bound(Z, self.Omega, with_scale=True)
            if bound > THETA_TOL:
                raise RadiusTooSmall(f"tail bound {bound:.3e} exceeds {THETA_TOL:.1e}")
            return val, scale
        return riemann_theta(Z, self.Omega)

    def to_json_dict(self) -> dict:
        c = lambda v: [[z.real, z.imag] for z in np.ravel(v)]  # noqa: E731
        d = {
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "g": self.g,
            "Omega": [c(row) for row in self.Omega],
        }
        for name in ("A_Pinf", "A_Pinf_tilde", "A_D00", "kappa",
                     "U_S_even", "U_S_odd", "U_Q_even", "U_Q_odd"):
            d[name] = c(getattr(self, name))
        d["generators"] = None if self.generators is None else [c(r) for r in self.generators]
        d["nodes"] = None if self.nodes is None else c(self.nodes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d) -> PeriodData:
        if d.get("schema") != SCHEMA:
            raise BadParams("not a period-data document")
        if d.get("version") != SCHEMA_VERSION:
            raise BadParams(f"unsupported period-data version {d.get('version')}")
        v = lambda xs: np.array([complex(a, b) for a, b in xs], dtype=complex)  # noqa: E731
        g = d["g"]
        Omega = np.array([v(r) for r in d["Omega"]], complex).reshape(g, g)
        gens = d.get("generators")
        nodes = d.get("nodes")
        return cls(g, Omega, *(v(d[k]) for k in (
            "A_Pinf", "A_Pinf_tilde", "A_D00", "kappa",
            "U_S_even", "U_S_odd", "U_Q_even", "U_Q_odd")),
            generators=None if gens is None else np.array([v(r) for r in gens]),
            nodes=None if nodes is None else tuple(v(nodes)))

    @classmethod
    def from_json(cls, text) -> PeriodData:
        return cls.from_json_dict(json.loads(text))


# ---- theta series -----------------------------------------------------------

def theta_tail_bound(Omega, R: int, im_z_norm: float) -> float:
    """Upper bound on the terms of the theta series with ``|n|_inf > R``.

    A shell ``|n|_inf = j`` has at most ``2g (2j+1)^(g-1)`` points, each with
    ``|n|_2 >= j``; on it every term is at most
    ``exp(-pi lmin j^2 + 2 pi sqrt(g) j |Im z|)``.
    """
    Omega = np.atleast_2d(Omega)
    g = Omega.shape[0]
    lmin = float(np.linalg.eigvalsh(Omega.imag).min())
    if lmin <= 0:
        raise NotPositiveDefinite("Im(Omega) is not positive definite")
    c = 2 * math.pi * math.sqrt(g) * im_z_norm
    total = 0.0
    j = R + 1
    while True:
        expo = -math.pi * lmin * j * j + c * j
        term = 2 * g * (2 * j + 1) ** (g - 1) * math.exp(min(expo, 700.0))
        # past the peak of the exponent the shells decay faster than geometrically
        if j > c / (2 * math.pi * lmin) + 1 and term < 1e-300:
            break
        total += term
        j += 1
        if j > R + 10_000:
            return math.inf
    return total


def default_radius(Omega, im_z_norm: float, tol: float = THETA_TOL) -> int:
    R = 1
    while theta_tail_bound(Omega, R, im_z_norm) > tol:
        R += 1
        if R > 200:
            raise RadiusTooSmall("no radius up to 200 meets the tail tolerance")
    return R


def riemann_theta_with_bound(z, Omega, R: int | None = None, tol: float = THETA_TOL,
                             im_z_norm: float | None = None, with_scale: bool = False):
    """``(theta(z), tail_bound)`` for one vector or an array of vectors ``(..., g)``.

    ``with_scale`` appends the sum of the moduli of the summed terms, the
    natural yardstick for deciding that a theta value vanishes.
    """
    Omega = check_period_matrix(Omega)
    g = Omega.shape[0]
    z = np.asarray(z, dtype=complex)
    if g == 0:
        one = np.ones(z.shape[:-1] if z.ndim else ())
        return (one, 0.0, one) if with_scale else (one, 0.0)
    if z.shape[-1] != g:
        raise BadParams(f"argument must have trailing length {g}")
    if im_z_norm is None:
        im_z_norm = float(np.linalg.norm(z.imag, axis=-1).max()) if z.size else 0.0
    if R is None:
        R = default_radius(Omega, im_z_norm, tol)
    if R < 1:
        raise RadiusTooSmall("radius must be >= 1")
    bound = theta_tail_bound(Omega, R, im_z_norm)
    rng = np.arange(-R, R + 1)
    ns = np.array(list(itertools.product(rng, repeat=g)), dtype=float)  # (N, g)
    quad = np.einsum("ni,ij,nj->n", ns, Omega, ns)
    lin = z.reshape(-1, g) @ ns.T  # (P, N)
    terms = np.exp(1j * math.pi * quad[None, :] + 2j * math.pi * lin)
    vals = terms.sum(axis=1).reshape(z.shape[:-1])
    if with_scale:
        return vals, bound, np.abs(terms).sum(axis=1).reshape(z.shape[:-1])
    return vals, bound


def riemann_theta(z, Omega, R: int | None = None, tol: float = THETA_TOL,
                  im_z_norm: float | None = None, strict: bool = True):
    """Riemann theta function summed over the box ``|n|_inf <= R``.

    With ``R=None`` the radius is chosen so the tail bound is below ``tol``.
    An explicit ``R`` whose bound exceeds ``tol`` raises
    :class:`RadiusTooSmall` unless ``strict`` is False.
    """
    val, bound = riemann_theta_with_bound(z, Omega, R, tol, im_z_norm)
    if strict and bound > tol:
        raise RadiusTooSmall(f"tail bound {bound:.3e} exceeds {tol:.1e}; increase R")
    return val[()] if np.ndim(val) == 0 else val


def nodal_theta(Z, nodes, with_scale: bool = False):
    """Closed-form theta of a rational curve with one or two nodes.

    One node: ``exp(2 pi i Z) - 1``.  Two nodes with values ``x1, x2``:
    ``det [[X-1, (X+1) x1], [Y-1, (Y+1) x2]]`` with ``X, Y = exp(2 pi i Z_j)``.
    ``with_scale`` also returns a cancellation-free magnitude of the terms.
    """
    Z = np.asarray(Z, dtype=complex)
    nodes = tuple(nodes)
    if len(nodes) == 1 and (Z.ndim == 0 or Z.shape[-1] != 1):
        Z = Z[..., None]
    if len(nodes) not in (1, 2) or Z.shape[-1] != len(nodes):
        raise UnsupportedNodeCount(f"nodal theta supports 1 or 2 nodes, got {len(nodes)}")
    E = np.exp(2j * math.pi * Z)
    if len(nodes) == 1:
        out = E[..., 0] - 1
        scale = np.abs(E[..., 0]) + 1
    else:
        x1, x2 = nodes
        X, Y = E[..., 0], E[..., 1]
        out = (X - 1) * (Y + 1) * x2 - (X + 1) * (Y - 1) * x1
        scale = (np.abs(X) + 1) * (np.abs(Y) + 1) * (abs(x1) + abs(x2))
    if with_scale:
        return out, scale
    return out[()] if np.ndim(out) == 0 else out


# ---- reconstruction ---------------------------------------------------------

def theta_pair(pd: PeriodData, k, m):
    """Exponential prefactor and ``(value, scale)`` of both theta factors."""
    a = pd.alpha(k, m)
    base = a[..., : pd.g] - pd.A_D00 - pd.kappa
    pre = np.exp(2j * math.pi * a[..., pd.g])
    if pd.g == 0:
        one = np.ones(np.shape(pre), complex)
        return pre, (one, one.real), (one, one.real)
    return pre, pd.theta(base + pd.A_Pinf, True), pd.theta(base + pd.A_Pinf_tilde, True)


def dcm_from_theta(pd: PeriodData, window, q=None, collapse_tol: float = COLLAPSE_TOL,
                   period_n: int | None = None) -> DcmLattice:
    """Assemble the lattice; ``q`` is recorded for the audit (NaN if not given).

    A site where both theta values vanish relative to their term magnitudes
    is marked Collapsed and carries no point.
    """
    w = as_window(window)
    k, m = w.grids()
    pre, (tn, sn), (td, sd) = theta_pair(pd, k, m)
    lifts = np.stack([pre * tn, td], axis=-1)
    both = (np.abs(tn) <= collapse_tol * sn) & (np.abs(td) <= collapse_tol * sd)
    pts = normalize_lifts(lifts)
    status = np.zeros(k.shape, np.int8)
    status[both] = SiteStatus.COLLAPSED
    status[np.isnan(pts).any(axis=-1) & ~both] = SiteStatus.UNSET
    pts[both] = np.nan
    L = DcmLattice(complex(np.nan, np.nan) if q is None else q, w.k0, w.m0, pts, status, period_n)
    detect_collapse(L)
    return L


def _log(z) -> complex:
    return cmath.log(complex(z)) / (2j * math.pi)


def period_data_from_nodal(p) -> PeriodData:
    """Period data whose nodal reconstruction equals the closed-form soliton lattice.

    Each ``alpha`` component is the logarithm of a discrete exponential: the
    last one of ``h(y)``, the others of ``h(x_j)``.  The constant offsets
    encode the ratios ``(y -+ x_j)/(y +- x_j)`` and the phases ``c_j``.
    """
    from .soliton import NodalParams

    if not isinstance(p, NodalParams):
        raise BadParams("expected NodalParams")
    ts = list(p.nodes) + [p.y]
    S_e, S_o, Q_e, Q_o = [], [], [], []
    for t in ts:
        s = _log((p.a - t) / (p.a + t))
        u = _log((p.b - t) / (p.b + t))
        e = 0j if p.eps is None else _log((p.eps + t) / (p.eps - t))
        S_e.append(s + e)
        S_o.append(s - e)
        Q_e.append(u + e)
        Q_o.append(u - e)
    g = len(p.nodes)
    A_P, A_Pt = [], []
    for x, c in zip(p.nodes, p.phases):
        r = (p.y - x) / (p.y + x)
        A_P.append(_log(r) - c)
        A_Pt.append(-_log(r) - c)
    z = np.zeros(g, complex)
    return PeriodData(g, np.zeros((g, g)), np.array(A_P), np.array(A_Pt), z, z,
                      np.array(S_e), np.array(S_o), np.array(Q_e), np.array(Q_o),
                      generators=np.eye(g + 1, dtype=complex),
                      nodes=tuple(p.nodes) if g else None)


# ---- periodicity --------------------------------------------------------------

def lattice_distance(v, G) -> float:
    """Distance from ``v`` to the integer span of the columns of ``G``.

    Least squares in real coordinates, then the best integer point among the
    neighbours of the rounded solution.  ``G`` may be rank deficient.
    """
    v = np.asarray(v, complex)
    G = np.asarray(G, complex)
    Gr = np.vstack([G.real, G.imag])
    vr = np.concatenate([v.real, v.imag])
    c, *_ = np.linalg.lstsq(Gr, vr, rcond=None)
    base = np.round(c)
    r = G.shape[1]
    offsets = itertools.product((-1, 0, 1), repeat=r) if r <= 6 else [(0,) * r]
    best = math.inf
    for off in offsets:
        cand = base + np.array(off)
        best = min(best, float(np.linalg.norm(vr - Gr @ cand)))
    return best


def periodicity_check(pd: PeriodData, n: int, tol: float = 1e-9):
    """``(is_periodic, defect)`` for the k-period ``n``.

    ``alpha'(k+n, m) - alpha'(k, m)`` depends only on the parity of ``k+m``;
    both parities are tested.
    """
    if pd.generators is None:
        raise MissingLatticeGenerators("period data carries no lattice generators")
    defect = 0.0
    for k in (0, 1):
        diff = pd.alpha(k + n, 0) - pd.alpha(k, 0)
        defect = max(defect, lattice_distance(diff, pd.generators))
    return defect <= tol, defect
