"""Closed-form lattices from rational curves with up to two nodes.

The curve is parameterised by ``zeta``; the marked points sit at
``zeta(S) = a``, ``zeta(Q) = b``, ``zeta(O) = eps`` and ``zeta(P_inf) = y``.
``eps = inf`` is allowed and removes the parity factor from ``h``.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadParams, NoSolution, PoleAtInfinityPoint
from .lattice import COLLAPSE_TOL, DcmLattice, SiteStatus, as_window, detect_collapse
from .mobius import is_infinite, lifts_from_affine, scalar

_SEP = 1e-9


def _finite_or_inf(v):
    if v is None or is_infinite(v):
        return None
    return scalar(v)


@dataclass(frozen=True)
class NodalParams:
    a: complex
    b: complex
    y: complex
    eps: complex | None = None  # None means infinity
    nodes: tuple = ()
    phases: tuple = ()
    period_n: int | None = None

    def __post_init__(self):
        for name in ("a", "b", "y"):
            object.__setattr__(self, name, scalar(getattr(self, name)))
        object.__setattr__(self, "eps", _finite_or_inf(self.eps))
        object.__setattr__(self, "nodes", tuple(scalar(x) for x in self.nodes))
        ph = tuple(scalar(c) for c in self.phases)
        if not ph:
            ph = (0j,) * len(self.nodes)
        object.__setattr__(self, "phases", ph)
        self.validate()

    def validate(self):
        if len(self.phases) != len(self.nodes):
            raise BadParams("need one phase per node")
        if len(self.nodes) > 2:
            raise BadParams("at most two nodes are supported")
        named = {"a": self.a, "b": self.b, "y": self.y}
        if self.eps is not None:
            named["eps"] = self.eps
        for j, x in enumerate(self.nodes):
            named[f"x{j + 1}"] = x
        vals = list(named.items())
        for name, v in vals:
            if abs(v) <= _SEP:
                raise BadParams(f"{name} must be nonzero")
        # the curve identifies zeta with -zeta, so +-values must all differ
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                (n1, v1), (n2, v2) = vals[i], vals[j]
                if abs(v1 - v2) <= _SEP or abs(v1 + v2) <= _SEP:
                    raise BadParams(f"{n1} and {n2} collide up to sign")

    @property
    def q(self) -> complex:
        return lambda_of(self.b, self)

    def to_json_dict(self) -> dict:
        enc = lambda z: [z.real, z.imag]  # noqa: E731
        d = {
            "a": enc(self.a), "b": enc(self.b), "y": enc(self.y),
            "eps": "inf" if self.eps is None else enc(self.eps),
            "nodes": [enc(x) for x in self.nodes],
            "phases": [enc(c) for c in self.phases],
        }
        if self.period_n is not None:
            d["period_n"] = self.period_n
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d) -> NodalParams:
        def dec(v):
            if isinstance(v, str):
                if is_infinite(v):
                    return None
                raise BadParams(f"bad complex value {v!r}")
            if isinstance(v, (int, float)):
                return complex(v)
            return complex(v[0], v[1])

        try:
            return cls(dec(d["a"]), dec(d["b"]), dec(d["y"]), dec(d.get("eps", "inf")),
                       tuple(dec(x) for x in d.get("nodes", [])),
                       tuple(dec(c) for c in d.get("phases", [])),
                       d.get("period_n"))
        except (KeyError, TypeError, IndexError) as exc:
            raise BadParams(f"malformed params: {exc}") from exc

    @classmethod
    def from_json(cls, text) -> NodalParams:
        return cls.from_json_dict(json.loads(text))


def lambda_of(zeta, p: NodalParams) -> complex:
    """Spectral parameter as a function of ``zeta``."""
    zeta = scalar(zeta)
    den = zeta * zeta - p.y * p.y
    if abs(den) <= _SEP * max(1.0, abs(p.y) ** 2):
        raise PoleAtInfinityPoint("zeta = +-y is the point over lambda = inf")
    val = (p.a * p.a - p.y * p.y) / den
    if p.eps is not None:
        val *= (zeta * zeta - p.eps ** 2) / (p.a * p.a - p.eps ** 2)
    return val


def h_km(k, m, p: NodalParams, t=None):
    """Discrete exponential ``A^k B^m`` (times ``(eps+t)/(eps-t)`` on odd sites) at ``t``.

    ``t`` defaults to ``y``.  Works elementwise on integer arrays.
    """
    t = p.y if t is None else scalar(t)
    A = (p.a - t) / (p.a + t)
    B = (p.b - t) / (p.b + t)
    k = np.asarray(k)
    m = np.asarray(m)
    val = np.power(complex(A), k) * np.power(complex(B), m)
    if p.eps is not None:
        odd = (k + m) % 2 == 1
        val = np.where(odd, val * (p.eps + t) / (p.eps - t), val)
    return val[()] if np.ndim(val) == 0 else val


def _phase(c) -> complex:
    return cmath.exp(2j * math.pi * c)


def exponential_values(k, m, p: NodalParams):
    return h_km(k, m, p)


def one_soliton_ratio(k, m, p: NodalParams):
    """``z / h(y)`` for the one-node lattice; evaluating it directly avoids cancellation."""
    x = p.nodes[0]
    r = (p.y - x) / (p.y + x)
    hx = h_km(k, m, p, x)
    e = _phase(p.phases[0])
    return (r * hx - e) / (hx / r - e)


def one_soliton_values(k, m, p: NodalParams):
    return h_km(k, m, p) * one_soliton_ratio(k, m, p)


def two_node_F(X, Y, x1, x2):
    """``det [[X-1, (X+1) x1], [Y-1, (Y+1) x2]]``."""
    return (X - 1) * (Y + 1) * x2 - (X + 1) * (Y - 1) * x1


def _two_node_parts(k, m, p: NodalParams):
    """Numerator and denominator of the two-node ratio, each with its term magnitude."""
    x1, x2 = p.nodes
    r1 = (p.y - x1) / (p.y + x1)
    r2 = (p.y - x2) / (p.y + x2)
    X = h_km(k, m, p, x1) * _phase(-p.phases[0])
    Y = h_km(k, m, p, x2) * _phase(-p.phases[1])

    def part(U, V):
        size = (np.abs(U) + 1) * (np.abs(V) + 1) * (abs(x1) + abs(x2))
        return two_node_F(U, V, x1, x2), size

    return part(r1 * X, r2 * Y), part(X / r1, Y / r2)


def two_soliton_ratio(k, m, p: NodalParams):
    (num, _), (den, _) = _two_node_parts(k, m, p)
    return num / den


def two_soliton_values(k, m, p: NodalParams):
    return h_km(k, m, p) * two_soliton_ratio(k, m, p)


def _two_node_collapse(k, m, p: NodalParams):
    """Sites where both factors vanish: the ratio is 0/0 and the neighbours coincide."""
    (num, sn), (den, sd) = _two_node_parts(k, m, p)
    return (np.abs(num) <= COLLAPSE_TOL * sn) & (np.abs(den) <= COLLAPSE_TOL * sd)


def _build(p: NodalParams, window, fn, singular=None) -> DcmLattice:
    w = as_window(window)
    k, m = w.grids()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = fn(k, m, p)
        both = np.zeros(k.shape, bool) if singular is None else singular(k, m, p)
    status = np.where(np.isnan(vals), SiteStatus.UNSET, SiteStatus.REGULAR).astype(np.int8)
    status[both] = SiteStatus.COLLAPSED
    vals = np.where(both, np.nan, vals)
    L = DcmLattice(p.q, w.k0, w.m0, lifts_from_affine(vals), status, p.period_n)
    detect_collapse(L)
    return L


def gen_exponential(p: NodalParams, window) -> DcmLattice:
    if p.nodes:
        raise BadParams("the exponential lattice takes no nodes")
    return _build(p, window, exponential_values)


def gen_one_soliton(p: NodalParams, window) -> DcmLattice:
    if len(p.nodes) != 1:
        raise BadParams("one-soliton lattice needs exactly one node")
    return _build(p, window, one_soliton_values)


def gen_two_soliton(p: NodalParams, window) -> DcmLattice:
    if len(p.nodes) != 2:
        raise BadParams("two-soliton lattice needs exactly two nodes")
    return _build(p, window, two_soliton_values, _two_node_collapse)


def generate(p: NodalParams, window) -> DcmLattice:
    """Dispatch on the number of nodes."""
    return (gen_exponential, gen_one_soliton, gen_two_soliton)[len(p.nodes)](p, window)


def merged_phase(p: NodalParams) -> complex:
    """Phase of the one-node lattice obtained when ``exp(-2 pi i c2) -> 0``.

    In that limit ``F(X, Y)`` is proportional to ``X (x2+x1)/(x2-x1) - 1``.
    """
    x1, x2 = p.nodes
    w = _phase(p.phases[0]) * (x2 - x1) / (x2 + x1)
    return cmath.log(w) / (2j * math.pi)


def _node_from_root(a: complex, j: int, n: int) -> complex:
    w = cmath.exp(2j * math.pi * j / n)
    return a * (w - 1) / (w + 1)


def solve_b(q, a, y, eps=None):
    """Both solutions ``b`` of ``lambda_of(b) = q``."""
    q = scalar(q)
    if eps is None:
        if q == 0:
            raise NoSolution("q = 0 has no finite b")
        b2 = y * y + (a * a - y * y) / q
    else:
        lhs = (a * a - y * y) - q * (a * a - eps * eps)
        if abs(lhs) <= _SEP:
            raise NoSolution("lambda_of(b) = q has no finite solution for these a, y, eps")
        b2 = (eps * eps * (a * a - y * y) - q * y * y * (a * a - eps * eps)) / lhs
    b = cmath.sqrt(b2)
    return b, -b


def periodicity_solver(n: int, nodes: int = 0, q_target=None, a=1.0, eps=None,
                       phases=None, exponents=None) -> list:
    """Parameters whose lattices are k-periodic with period ``n``.

    ``(a+y)/(a-y)`` and each ``(a+x_j)/(a-x_j)`` are set to distinct powers
    ``w^j`` of ``w = exp(2 pi i/n)``.  Exponents ``j`` and ``n-j`` give
    ``+-`` the same value and ``j = n/2`` gives infinity, so usable exponents
    are ``1 .. (n-1)//2``.  Both solutions ``b`` of ``lambda(b) = q_target``
    (default ``-1``) are returned.
    """
    if nodes not in (0, 1, 2):
        raise NoSolution("at most two nodes are supported")
    if n < 4:
        raise NoSolution("periods below 4 are excluded")
    eps = _finite_or_inf(eps)
    if eps is not None and n % 2:
        raise NoSolution("a finite eps forces an even period")
    usable = list(range(1, (n - 1) // 2 + 1))
    if exponents is None:
        if len(usable) < nodes + 1:
            raise NoSolution(f"period {n} admits at most {len(usable) - 1} node(s)")
        exponents = usable[: nodes + 1]
    exponents = list(exponents)
    if len(exponents) != nodes + 1:
        raise NoSolution("need one exponent for y and one per node")
    reduced = [min(j % n, (-j) % n) for j in exponents]
    if len(set(reduced)) != len(reduced) or any(r in (0, n / 2) for r in reduced):
        raise NoSolution(f"exponents {exponents} collide modulo +-/n")
    a = scalar(a)
    ys = [_node_from_root(a, j, n) for j in exponents]
    y, xs = ys[0], ys[1:]
    q = -1.0 if q_target is None else q_target
    if phases is None:
        phases = [0.1, 0.35][:nodes]
    out = []
    for b in solve_b(q, a, y, eps):
        try:
            out.append(NodalParams(a, b, y, eps, tuple(xs), tuple(phases), n))
        except BadParams as exc:
            raise NoSolution(f"solved b collides with another marked value: {exc}") from exc
    return out


def with_phase(p: NodalParams, *phases) -> NodalParams:
    return replace(p, phases=tuple(phases))


__all__ = [
    "NodalParams", "lambda_of", "h_km", "gen_exponential", "gen_one_soliton",
    "gen_two_soliton", "generate", "periodicity_solver", "solve_b", "two_node_F",
    "one_soliton_ratio", "two_soliton_ratio", "merged_phase", "with_phase",
]
