"""Holonomy of a periodic discrete curve and the spectral data it carries.

With ``x = 1/lambda`` the holonomy ``H = T_{n-1} ... T_0`` is a matrix
polynomial in ``x`` with ``H(0) = I``.  Writing ``p = tr(H)/2``, the
trace-free part ``M = lambda (H - p I)`` is again polynomial in ``x`` and
``m = det M`` cuts out the curve ``mu^2 + m(lambda) = 0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import EigenlineCollision, InputError
from .laurent import (
    DEGREE_RTOL,
    LaurentMatrix2,
    LaurentPoly,
    cluster_roots,
    lm_commutator_residual,
    lm_det,
    lm_mul,
    lm_trace,
    poly_roots,
)
from .lattice import DcmLattice, DiscreteCurve, SiteStatus
from .mobius import (
    DEFAULT_TOL,
    ProjectivePoint,
    as_point,
    edge_transfer,
    is_infinite,
    projection_matrix,
    scalar,
)

CLUSTER_TOL = 1e-6
# precision for re-checking roots that cluster in double precision
EXACT_DPS = 60
EXACT_CLUSTER_RTOL = 1e-12


def _as_curve(curve) -> DiscreteCurve:
    return curve if isinstance(curve, DiscreteCurve) else DiscreteCurve(tuple(curve))


def holonomy(curve) -> LaurentMatrix2:
    curve = _as_curve(curve)
    H = LaurentMatrix2.identity()
    for k in range(curve.n):
        A = projection_matrix(curve[k], curve[k + 1])
        H = lm_mul(LaurentMatrix2.linear(np.eye(2), -A), H, rtol=None)
    return LaurentMatrix2(H.coeffs)


def holonomy_at(curve, lam) -> np.ndarray:
    """Numeric holonomy at a single finite ``lambda`` (cheaper than the polynomial)."""
    curve = _as_curve(curve)
    H = np.eye(2, dtype=complex)
    for k in range(curve.n):
        H = edge_transfer(curve[k], curve[k + 1], lam) @ H
    return H


def holonomy_det(curve) -> LaurentPoly:
    return lm_det(holonomy(curve))


def trace_free_part(H: LaurentMatrix2):
    """``(p, M)`` with ``p = tr(H)/2`` and ``M = lambda (H - p I)``."""
    p = LaurentPoly(lm_trace(H).coeffs / 2, rtol=None)
    c = H.coeffs.copy()
    for j in range(c.shape[0]):
        c[j] -= p[j] * np.eye(2)
    M = LaurentMatrix2(c[1:] if c.shape[0] > 1 else np.zeros((1, 2, 2)))
    return LaurentPoly(p.coeffs), M


def _kernel_line(mu, M: np.ndarray) -> ProjectivePoint | None:
    a = (M[0, 0] - M[1, 1]) / 2
    b, c = M[0, 1], M[1, 0]
    cols = (np.array([mu + a, c]), np.array([b, mu - a]))
    col = max(cols, key=lambda v: np.abs(v).max())
    if np.abs(col).max() == 0:
        return None
    return ProjectivePoint.from_vector(col)


def eigenpairs_numeric(Mq: np.ndarray, tol: float = DEFAULT_TOL):
    """The two ``(mu, eigenline)`` pairs of a 2x2 matrix's trace-free part.

    ``mu`` is the principal square root of ``-det`` first, its negative second.
    Raises :class:`EigenlineCollision` when the two coincide.
    """
    Mq = np.asarray(Mq, complex)
    a = (Mq[0, 0] - Mq[1, 1]) / 2
    mu = np.sqrt(complex(a * a + Mq[0, 1] * Mq[1, 0]))
    scale = max(1.0, np.abs(Mq).max())
    if abs(mu) <= tol * scale:
        raise EigenlineCollision("eigenlines coincide (branch point of the spectral curve)")
    return [(mu, _kernel_line(mu, Mq)), (-mu, _kernel_line(-mu, Mq))]


@dataclass
class CurvePoint:
    lam: complex
    mu: complex
    eigenline: ProjectivePoint | None
    curve_residual: float = 0.0
    eigen_residual: float = 0.0
    expected_gap: float | None = None

    def to_dict(self) -> dict:
        d = {
            "lambda": _enc(self.lam),
            "mu": _enc(self.mu),
            "eigenline": None if self.eigenline is None else
            [self.eigenline.v0.real, self.eigenline.v0.imag,
             self.eigenline.v1.real, self.eigenline.v1.imag],
            "curve_residual": self.curve_residual,
            "eigen_residual": self.eigen_residual,
            "expected_gap": self.expected_gap,
        }
        return d

    @classmethod
    def from_dict(cls, d) -> CurvePoint:
        e = d["eigenline"]
        line = None if e is None else ProjectivePoint(complex(e[0], e[1]), complex(e[2], e[3]))
        return cls(_dec(d["lambda"]), _dec(d["mu"]), line, d["curve_residual"],
                   d["eigen_residual"], d["expected_gap"])


def _enc(z):
    if is_infinite(z):
        return "inf"
    z = complex(z)
    return [z.real, z.imag]


def _dec(v):
    if v == "inf":
        return complex(np.inf, 0)
    return complex(v[0], v[1])


def _gap(p: ProjectivePoint | None, q) -> float | None:
    if p is None:
        return None
    q = as_point(q)
    return float(abs(p.v0 * q.v1 - p.v1 * q.v0))


def _curve_point(M: LaurentMatrix2, m: LaurentPoly, lam, mu) -> CurvePoint:
    Ml = M(lam)
    line = _kernel_line(mu, Ml)
    res = 0.0
    if line is not None:
        res = float(np.abs((mu * np.eye(2) - Ml) @ line.vector).max())
    return CurvePoint(complex(lam), complex(mu), line, float(abs(mu * mu + m(lam))), res)


def eigenlines_at(M: LaurentMatrix2, lam):
    """The two points of the spectral curve over ``lam`` (``mu = +-sqrt(-m)``)."""
    lam = scalar(lam)
    if lam == 0:
        raise InputError("use the rescaled chart for lambda = 0")
    m = lm_det(M)
    mu = np.sqrt(complex(-m(lam)))
    return _curve_point(M, m, lam, mu), _curve_point(M, m, lam, -mu)


@dataclass
class SpectralData:
    n: int
    d: int
    p: LaurentPoly
    m: LaurentPoly
    branch_points: list  # (lambda, multiplicity); lambda = 0 listed for odd deg m
    genus: int
    generic: dict
    marked: dict = field(default_factory=dict)

    @property
    def is_generic(self) -> bool:
        return all(self.generic.values())

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "p_coeffs": [_enc(c) for c in self.p.coeffs],
            "m_coeffs": [_enc(c) for c in self.m.coeffs],
            "branch_points": [[_enc(lam), mult] for lam, mult in self.branch_points],
            "genus": self.genus,
            "generic": dict(self.generic),
            "marked": {k: v.to_dict() for k, v in self.marked.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d) -> SpectralData:
        return cls(d["n"], d["d"],
                   LaurentPoly([_dec(c) for c in d["p_coeffs"]], rtol=None),
                   LaurentPoly([_dec(c) for c in d["m_coeffs"]], rtol=None),
                   [(_dec(lam), mult) for lam, mult in d["branch_points"]],
                   d["genus"], dict(d["generic"]),
                   {k: CurvePoint.from_dict(v) for k, v in d["marked"].items()})

    @classmethod
    def from_json(cls, text) -> SpectralData:
        return cls.from_json_dict(json.loads(text))


def _marked_O(M: LaurentMatrix2, m: LaurentPoly, z0, n: int) -> CurvePoint:
    # chart at lambda = 0: divide M by x^(d-1); mu rescales the same way.
    # For odd n the leading coefficient is nilpotent and O is a branch point.
    lead = M.coeffs[-1]
    m_lead = m[2 * M.degree]
    if n % 2:
        mus = [0j]
    else:
        a = (lead[0, 0] - lead[1, 1]) / 2
        mu = np.sqrt(complex(a * a + lead[0, 1] * lead[1, 0]))
        mus = [mu, -mu]
    best = None
    for mu in mus:
        line = _kernel_line(mu, lead)
        if line is None:
            continue
        gap = _gap(line, z0)
        if best is None or gap < best.expected_gap:
            res = float(np.abs((mu * np.eye(2) - lead) @ line.vector).max())
            best = CurvePoint(0j, mu, line, float(abs(mu * mu + m_lead)), res, gap)
    return best if best is not None else CurvePoint(0j, mus[0], None, float(abs(m_lead)))


def _select_mu(M: LaurentMatrix2, m: LaurentPoly, lam, target) -> CurvePoint:
    p1, p2 = eigenlines_at(M, lam)
    g1, g2 = _gap(p1.eigenline, target), _gap(p2.eigenline, target)
    best = p1 if (g1 if g1 is not None else np.inf) <= (g2 if g2 is not None else np.inf) else p2
    best.expected_gap = min(x for x in (g1, g2) if x is not None) if (g1, g2) != (None, None) else None
    return best


def _m_exact(curve: DiscreteCurve):
    """Coefficients of ``m`` (in ``x``) computed from the input points in extended precision."""
    n = curve.n

    def mul(A, B):
        out = [[[mpmath.mpc(0)] * (len(A) + len(B) - 1) for _ in range(2)] for _ in range(2)]
        for i in range(2):
            for j in range(2):
                for a in range(len(A)):
                    for b in range(len(B)):
                        out[i][j][a + b] += sum(A[a][i][l] * B[b][l][j] for l in range(2))
        return [[[out[i][j][d] for j in range(2)] for i in range(2)] for d in range(len(A) + len(B) - 1)]

    one, zero = mpmath.mpc(1), mpmath.mpc(0)
    H = [[[one, zero], [zero, one]]]
    for k in range(n):
        a = [mpmath.mpc(v) for v in curve[k].vector]
        b = [mpmath.mpc(v) for v in curve[k + 1].vector]
        w = [a[1], -a[0]]
        sc = w[0] * b[0] + w[1] * b[1]
        A = [[-b[i] * w[j] / sc for j in range(2)] for i in range(2)]
        H = mul([[[one, zero], [zero, one]], A], H)
    M = []
    for c in H[1:]:
        half = (c[0][0] + c[1][1]) / 2
        M.append([[c[0][0] - half, c[0][1]], [c[1][0], c[1][1] - half]])
    m = [mpmath.mpc(0)] * (2 * len(M) - 1)
    for i, X in enumerate(M):
        for j, Y in enumerate(M):
            m[i + j] += X[0][0] * Y[1][1] - X[0][1] * Y[1][0]
    while len(m) > 1 and abs(m[-1]) <= EXACT_CLUSTER_RTOL * max(abs(v) for v in m):
        m.pop()
    return m


def _exact_root_clusters(curve: DiscreteCurve):
    """Roots of ``m`` with multiplicities, resolved in extended precision."""
    with mpmath.workdps(EXACT_DPS):
        m = _m_exact(curve)
        roots = mpmath.polyroots(m[::-1], maxsteps=200, extraprec=2 * EXACT_DPS)
        scale = max([mpmath.mpf(1)] + [abs(r) for r in roots])
        groups = []
        for r in roots:
            for g in groups:
                if abs(r - g[0]) <= EXACT_CLUSTER_RTOL * scale:
                    g.append(r)
                    break
            else:
                groups.append([r])
        return [(complex(g[0]), len(g)) for g in groups]


def spectral_data(curve, q=None, z01=None, cluster_tol: float = CLUSTER_TOL) -> SpectralData:
    curve = _as_curve(curve)
    n = curve.n
    H = holonomy(curve)
    p, M = trace_free_part(H)
    m = lm_det(M)
    deg_m = m.degree if np.abs(m.coeffs).max() > 0 else -1

    branch = []
    distinct = True
    if deg_m >= 1:
        clusters = cluster_roots(poly_roots(m), cluster_tol)
        if any(mult > 1 for _, mult in clusters):
            # nearly repeated in double precision: decide from the exact input points
            clusters = _exact_root_clusters(curve)
        for x, mult in clusters:
            lam = complex(np.inf, 0) if abs(x) <= cluster_tol else 1 / x
            branch.append((lam, mult))
            distinct &= mult == 1
    if deg_m >= 0 and deg_m % 2 == 1:
        branch.append((0j, 1))
    genus = max((deg_m - 1) // 2, 0)
    generic = {
        "deg_is_n_minus_2": bool(deg_m == n - 2),
        "m_inf_nonzero": bool(abs(m[0]) > DEGREE_RTOL * max(1.0, np.abs(m.coeffs).max())),
        "roots_distinct": bool(distinct),
    }
    marked = {"O": _marked_O(M, m, curve[0], n)}
    marked["S"] = _curve_point(M, m, 1.0, -p(1.0))
    marked["S"].expected_gap = _gap(marked["S"].eigenline, curve[1])
    if q is not None:
        if z01 is not None:
            marked["Q"] = _select_mu(M, m, q, z01)
        else:
            marked["Q"], marked["Q~"] = eigenlines_at(M, q)
    return SpectralData(n, H.degree, p, m, branch, genus, generic, marked)


# ---- consistency checks ----------------------------------------------------

def _row_curve(L: DcmLattice, m: int) -> DiscreteCurve:
    n = L.period_n
    return DiscreteCurve(tuple(L.point(k, m) for k in range(L.k0, L.k0 + n)))


def evolution_conjugation_check(L: DcmLattice) -> float:
    """Largest relative coefficient residual of the two evolution laws.

    Checks ``T M_{k,m} = M_{k+1,m} T`` along rows and
    ``That M_{k,m} = M_{k,m+1} That`` with ``That = I - (q/lambda) Ahat``
    between rows, for every stored site.
    """
    if L.period_n is None:
        raise InputError("conjugation check needs a k-periodic lattice (period_n)")
    n = L.period_n
    if L.shape[0] < n:
        raise InputError("window must hold a full period of columns")
    rows = range(L.m0, L.m0 + L.shape[1])
    Ms = {}
    curves = {}
    for m in rows:
        if (L.status[:, m - L.m0] != SiteStatus.REGULAR).any():
            continue
        curves[m] = _row_curve(L, m)
        for s in range(n):
            _, Ms[(s, m)] = trace_free_part(holonomy(curves[m].shifted(s)))
    worst = 0.0
    I2 = np.eye(2)
    for (s, m), Mk in Ms.items():
        c = curves[m]
        T = LaurentMatrix2.linear(I2, -projection_matrix(c[s], c[s + 1]))
        worst = max(worst, lm_commutator_residual(T, Mk, Ms[((s + 1) % n, m)], T))
        if (s, m + 1) in Ms:
            Ah = projection_matrix(c[s], curves[m + 1][s])
            Th = LaurentMatrix2.linear(I2, -L.q * Ah)
            worst = max(worst, lm_commutator_residual(Th, Mk, Ms[(s, m + 1)], Th))
    return worst


def holonomy_eigenvalue_at_infinity_check(curve, x: float = 1e-6) -> dict:
    """How well ``p + mu/lambda`` tends to 1 as ``1/lambda -> 0`` on both sheets.

    The limit is estimated by one Richardson step ``2 f(x/2) - f(x)`` so the
    reported residual is O(x^2); the raw ``|f(x) - 1|`` is returned too.
    """
    curve = curve if isinstance(curve, (DiscreteCurve, LaurentMatrix2)) else _as_curve(curve)
    H = curve if isinstance(curve, LaurentMatrix2) else holonomy(curve)
    p, M = trace_free_part(H)
    m = lm_det(M)

    def sheet_values(xx, ref=None):
        mu = np.sqrt(complex(-m.at_x(xx)))
        mus = [mu, -mu]
        if ref is not None and abs(mus[0] - ref[0]) > abs(mus[1] - ref[0]):
            mus.reverse()
        return mus

    mu_x = sheet_values(x)
    mu_h = sheet_values(x / 2, mu_x)
    out = {"p0_residual": float(abs(p[0] - 1)), "sheet_residuals": [], "raw_residuals": []}
    for s in range(2):
        f1 = p.at_x(x) + x * mu_x[s]
        f2 = p.at_x(x / 2) + (x / 2) * mu_h[s]
        out["raw_residuals"].append(float(abs(f1 - 1)))
        out["sheet_residuals"].append(float(abs(2 * f2 - f1 - 1)))
    out["max_residual"] = max(out["sheet_residuals"] + [out["p0_residual"]])
    return out


@dataclass
class SurveyResult:
    n: int
    trials: int
    passed: int
    genus_matches: int
    deg_m_on_pass: list

    @property
    def fraction(self) -> float:
        return self.passed / self.trials


def random_curve(n: int, rng: np.random.Generator, min_sep: float = 1e-3) -> DiscreteCurve:
    """``n`` points uniform in the unit disc, pairwise at least ``min_sep`` apart."""
    while True:
        r = np.sqrt(rng.random(n))
        t = 2 * np.pi * rng.random(n)
        z = r * np.exp(1j * t)
        dz = np.abs(z[:, None] - z[None, :]) + np.eye(n)
        if dz.min() > min_sep:
            return DiscreteCurve.from_affine(z)


def genericity_survey(n: int, trials: int, rng_seed: int = 0) -> SurveyResult:
    if n < 4 or trials < 1:
        raise InputError("need n >= 4 and trials >= 1")
    streams = np.random.SeedSequence(rng_seed).spawn(trials)
    passed = genus_ok = 0
    degs = []
    for ss in streams:
        sd = spectral_data(random_curve(n, np.random.default_rng(ss)))
        if sd.is_generic:
            passed += 1
            degs.append(sd.m.degree)
            genus_ok += sd.genus == sd.d - 2
    return SurveyResult(n, trials, passed, genus_ok, degs)
