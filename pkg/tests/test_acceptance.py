"""Acceptance suite: one group of tests per criterion, tagged with ``criterion(n)``.

A summary with one PASS/FAIL line per criterion is printed at the end of the run.
"""
import cmath
import math
from math import comb

import mpmath
import numpy as np
import pytest

from dcmlab.cli import main as cli_main
from dcmlab.dressing import (
    FiniteTypeW,
    LaxParams,
    Loop,
    baker_quotient_map,
    based_at_zero,
    birkhoff_factorize,
    cubic_lattice,
    discrete_cubic,
    dress,
    extended_frame,
    family_map,
    gamma_plus_element,
    lax_residual,
    vacuum_frame_loop,
)
from dcmlab.errors import NoSolution, NotInBigCell
from dcmlab.lattice import (
    DcmLattice,
    DiscreteCurve,
    SiteStatus,
    audit_cross_ratios,
    conformal_flow,
    detect_collapse,
    lattice_distance,
    period_defect,
    quad_cross_ratios,
    vacuum_lattice,
)
from dcmlab.plot import plot_svg, svg_counts
from dcmlab.soliton import (
    NodalParams,
    gen_exponential,
    gen_one_soliton,
    gen_two_soliton,
    generate,
    h_km,
    one_soliton_values,
    periodicity_solver,
)
from dcmlab.spectral import (
    evolution_conjugation_check,
    genericity_survey,
    holonomy,
    holonomy_det,
    random_curve,
    spectral_data,
    trace_free_part,
)
from dcmlab.theta import dcm_from_theta, period_data_from_nodal, riemann_theta

W32 = "-16:15,-16:15"
ALPHA = 0.2
# |A| = |B| ~ 1 keeps the lattice bounded over a 32 x 32 window
ONE = NodalParams(a=1.0, b=0.6 + 0.05j, y=0.5j, nodes=(0.9 - 0.2j,), phases=(0.2,))
TWO = NodalParams(a=1.0, b=0.6 + 0.05j, y=0.5j, nodes=(0.9 - 0.2j, 0.4 + 1.1j), phases=(0.2, 0.1))
AUDIT = 1e-8


def report(n, ok, detail=""):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, detail


def perturbed_polygon(n, rng, eps=0.1):
    z = np.exp(2j * np.pi * np.arange(n) / n) + eps * (rng.normal(size=n) + 1j * rng.normal(size=n))
    return DiscreteCurve.from_affine(list(z))


def small_loop(rng, lo=-2, hi=2, scale=0.15):
    c = scale * (rng.normal(size=(hi - lo + 1, 2, 2)) + 1j * rng.normal(size=(hi - lo + 1, 2, 2))) / math.sqrt(2)
    c[-lo] += np.eye(2)
    return Loop(lo, c)


def soliton_frame(window=W32):
    L = based_at_zero(gen_one_soliton(ONE, window))
    lp = LaxParams.for_q(ONE.q, ALPHA)
    return L, lp, extended_frame(L, lp)


G_DRESS = Loop.from_powers({0: [[1, 0.2], [0, 1.1]], 1: [[0.1, 0], [0.1j, 0.05]]})


# ---- 1 -----------------------------------------------------------------

def _generators(rng):
    out = {"vacuum": vacuum_lattice(1.0, 0.4 + 1.2j, W32)}
    out["flow"] = conformal_flow(perturbed_polygon(6, rng), 2.0, 16, 15, k_window=(0, 31))
    for name, (n, nodes) in {"periodic-exp": (6, 0), "periodic-1node": (6, 1),
                             "periodic-2node": (8, 2)}.items():
        out[name] = generate(periodicity_solver(n, nodes)[0], W32)
    out["soliton-1"] = gen_one_soliton(ONE, W32)
    out["soliton-2"] = gen_two_soliton(TWO, W32)
    out["theta-1node"] = dcm_from_theta(period_data_from_nodal(ONE), W32, ONE.q)
    out["theta-2node"] = dcm_from_theta(period_data_from_nodal(TWO), W32, TWO.q)
    _, _, fs = soliton_frame()
    out["dressed"] = dress(fs, G_DRESS).lattice
    out["cubic"] = cubic_lattice(LaxParams(1.0, 2.0), W32)
    out["family_map"] = family_map(fs, 0.7 + 0.3j)
    return out


def _on_cubic_line(k, m):
    """Whether quad (k, m) has a corner with k + 2m = 0."""
    return any((k + dk) + 2 * (m + dm) == 0 for dk in (0, 1) for dm in (0, 1))


@pytest.mark.criterion(1)
def test_criterion_01_cross_ratio_conservation(rng):
    gens = _generators(rng)
    bad = {}
    for name, L in gens.items():
        assert L.shape == (32, 32), name
        r = audit_cross_ratios(L, AUDIT)
        # quads may only be skipped where the cubic (beta = 2 alpha) pinches its line s = 0
        allowed = _on_cubic_line if name == "cubic" else (lambda k, m: False)
        if not r.passed or not all(allowed(k, m) for k, m in r.indeterminate_cells):
            bad[name] = (r.max_rel_deviation, r.checked_cells)
    report(1, not bad, f"{len(gens)} generators on 32x32; failures: {bad}" if bad else f"{len(gens)} generators")


# ---- 2 -----------------------------------------------------------------

@pytest.mark.criterion(2)
def test_criterion_02_holonomy_identities():
    rng = np.random.default_rng(2)
    worst = 0.0
    for t in range(50):
        n = 4 + t % 6
        c = random_curve(n, rng)
        H = holonomy(c)
        assert np.array_equal(H.coeffs[0], np.eye(2))
        bound = n // 2 if n % 2 == 0 else (n + 1) // 2
        assert H.degree <= bound
        det = np.zeros(n + 1, complex)
        d = holonomy_det(c).coeffs
        det[: len(d)] = d
        binom = np.array([(-1) ** j * comb(n, j) for j in range(n + 1)], complex)
        worst = max(worst, np.abs(det - binom).max() / np.abs(binom).max())
        p, _ = trace_free_part(H)
        assert abs(p[0] - 1) <= 1e-12
        if n % 2:
            assert abs(p[H.degree]) <= 1e-9 * np.abs(p.coeffs).max()
        assert spectral_data(c).m.degree <= n - 2
    report(2, worst <= 1e-9, f"det deviation {worst:.1e}")


# ---- 3 -----------------------------------------------------------------

@pytest.mark.criterion(3)
def test_criterion_03_genericity():
    res = {n: genericity_survey(n, 200, rng_seed=0) for n in (5, 6, 7)}
    ok = all(r.fraction >= 0.99 and r.genus_matches == r.passed for r in res.values())
    report(3, ok, " ".join(f"n={n}:{r.fraction:.3f}" for n, r in res.items()))


# ---- 4 -----------------------------------------------------------------

@pytest.mark.criterion(4)
def test_criterion_04_marked_points():
    rng = np.random.default_rng(4)
    worst = 0.0
    for n in (5, 6, 7, 8):
        c = perturbed_polygon(n, rng)
        L = conformal_flow(c, 2.0, 1)
        sd = spectral_data(c, q=2.0, z01=L.point(0, 1))
        scale = max(1, np.abs(sd.m.coeffs).max())
        for name in ("O", "S", "Q"):
            pt = sd.marked[name]
            worst = max(worst, pt.curve_residual / scale, pt.eigen_residual, pt.expected_gap)
    report(4, worst <= 1e-8, f"worst residual {worst:.1e}")


# ---- 5 -----------------------------------------------------------------

@pytest.mark.criterion(5)
def test_criterion_05_flow_consistency():
    rng = np.random.default_rng(5)
    conj, swap, inverse = 0.0, 0.0, 0.0
    for n in (5, 6, 7):
        c = perturbed_polygon(n, rng)
        a = conformal_flow(c, 2.0, 8, 8, initial=0)
        b = conformal_flow(c, 2.0, 8, 8, initial=1)
        conj = max(conj, evolution_conjugation_check(a))
        za, zb = a.affine(), b.affine()
        swap = max(swap, np.abs(za[:, ::-1] - zb).max() / np.abs(za).max())
        # independent check: the row below flows back up to row 0 on the other branch
        below = DiscreteCurve.from_affine(list(za[:, 7]))
        back = conformal_flow(below, 2.0, 1, initial=a.point(0, 0))
        inverse = max(inverse, np.abs(back.affine()[:, 1] - za[:, 8]).max() / np.abs(za[:, 8]).max())
    report(5, max(conj, swap, inverse) <= 1e-8,
           f"conjugation {conj:.1e}, branch swap {swap:.1e}, inverse step {inverse:.1e}")


# ---- 6 -----------------------------------------------------------------

@pytest.mark.criterion(6)
def test_criterion_06_soliton_periodicity():
    worst = 0.0
    for n, nodes in [(6, 0), (6, 1), (8, 2)]:
        for p in periodicity_solver(n, nodes):
            worst = max(worst, period_defect(generate(p, f"0:{2 * n + 1},-3:3"), n))
    with pytest.raises(NoSolution):
        periodicity_solver(5, 0, eps=2.0)
    w = cmath.exp(2j * math.pi / 5)
    odd = NodalParams(a=1.0, b=0.4 + 0.3j, y=(w - 1) / (w + 1), eps=2.0)
    open_defect = period_defect(gen_exponential(odd, "0:12,0:2"), 5)
    report(6, worst <= 1e-9 and open_defect > 1e-3,
           f"closure defect {worst:.1e}; odd n with finite eps leaves {open_defect:.2e}")


# ---- 7 -----------------------------------------------------------------

@pytest.mark.criterion(7)
def test_criterion_07_one_soliton_asymptotics():
    p = NodalParams(a=1.0, b=0.6 + 0.1j, y=0.3 + 0.5j, nodes=(0.9 - 0.2j,), phases=(0.2,))
    assert abs((p.b - p.y) / (p.b + p.y)) < 1
    k = np.arange(-5, 6)
    x = p.nodes[0]
    up = np.abs(one_soliton_values(k, 40, p) / h_km(k, 40, p) - 1).max()
    limit = ((p.y - x) / (p.y + x)) ** 2
    down = np.abs(one_soliton_values(k, -40, p) / h_km(k, -40, p) - limit).max()
    report(7, max(up, down) <= 1e-6, f"m=+40: {up:.1e}, m=-40: {down:.1e}")


# ---- 8 -----------------------------------------------------------------

@pytest.mark.criterion(8)
def test_criterion_08_theta_consistency():
    base = dict(a=1.0, b=0.45 + 0.2j, y=0.3 + 0.55j)
    dist = 0.0
    for eps in (None, 2.3 + 0.4j):
        p = NodalParams(eps=eps, nodes=(0.8 - 0.35j,), phases=(0.15,), **base)
        L = dcm_from_theta(period_data_from_nodal(p), "-8:8,-8:8", p.q)
        dist = max(dist, lattice_distance(L, gen_one_soliton(p, "-8:8,-8:8"), align=True))
    Om = np.array([[1.1j + 0.2, 0.3 + 0.2j], [0.3 + 0.2j, 0.9j - 0.1]])
    rng = np.random.default_rng(8)
    qp = 0.0
    for _ in range(5):
        z = 0.5 * rng.normal(size=2) + 0.3j * rng.normal(size=2)
        t = riemann_theta(z, Om)
        qp = max(qp, abs(riemann_theta(-z, Om) - t) / max(1, abs(t)))
        for j in range(2):
            e = np.eye(2)[j]
            qp = max(qp, abs(riemann_theta(z + e, Om) - t) / max(1, abs(t)))
            s = riemann_theta(z + Om @ e, Om)
            f = np.exp(-1j * math.pi * Om[j, j] - 2j * math.pi * z[j])
            qp = max(qp, abs(s - f * t) / max(1, abs(s)))
    t0 = riemann_theta(np.zeros(1), np.array([[1j]]))
    oracle = complex(mpmath.nsum(lambda n: mpmath.exp(-mpmath.pi * n * n), [-mpmath.inf, mpmath.inf]))
    series = abs(t0 - oracle)
    report(8, dist <= 1e-8 and qp <= 1e-10 and series <= 1e-12,
           f"nodal vs soliton {dist:.1e}, parity/quasi-periodicity {qp:.1e}, theta(0) {series:.1e}")


# ---- 9 -----------------------------------------------------------------

@pytest.mark.criterion(9)
def test_criterion_09_lax_and_frame(rng):
    gens = _generators(rng)
    residuals = {}
    for name, L in gens.items():
        if name == "cubic":
            continue  # zero edges around the origin; checked on a window avoiding them
        residuals[name] = lax_residual(based_at_zero(L), LaxParams.for_q(L.q, ALPHA))
    residuals["cubic"] = lax_residual(cubic_lattice(LaxParams(1.0, 2.0), "1:32,1:32"), LaxParams(1.0, 2.0))
    lax_ok = max(residuals.values()) <= 1e-9

    L, lp, fs = soliton_frame("-6:6,-6:6")
    z = L.affine()
    structure = 0.0
    for (k, m), loop in fs.poly.items():
        A = loop("inf")
        structure = max(structure, abs(A[0, 0] - 1), abs(A[1, 1] - 1), abs(A[0, 1]),
                        abs(A[1, 0] - z[k - L.k0, m - L.m0]))
    vp = LaxParams(0.3, 0.2 + 0.4j)
    vfs = extended_frame(vacuum_lattice(vp.alpha, vp.beta, "-4:4,-4:4"), vp)
    vac = max(vfs.loop(k, m).distance(vacuum_frame_loop(vp, k, m)) for k in range(5) for m in range(5))
    worst = max(residuals, key=residuals.get)
    report(9, lax_ok and structure <= 1e-9 and vac <= 1e-12,
           f"Lax residual {residuals[worst]:.1e} ({worst}); Phi(inf) {structure:.1e}; vacuum frame {vac:.1e}")


# ---- 10 ----------------------------------------------------------------

@pytest.mark.criterion(10)
def test_criterion_10_deformation_family():
    rng = np.random.default_rng(10)
    _, lp, fs = soliton_frame()
    a2, b2 = lp.alpha ** 2, lp.beta ** 2
    worst = 0.0
    for _ in range(10):
        lam = cmath.rect(rng.uniform(0.5, 2.0), rng.uniform(0, 2 * math.pi))
        expected = b2 * (1 - a2 / lam) / (a2 * (1 - b2 / lam))
        cr, ok, _ = quad_cross_ratios(family_map(fs, lam))
        assert ok.all()
        worst = max(worst, np.abs(cr - expected).max() / max(1, abs(expected)))
    report(10, worst <= 1e-9, f"max cross-ratio deviation {worst:.1e}")


# ---- 11 ----------------------------------------------------------------

@pytest.mark.criterion(11)
def test_criterion_11_dressing():
    rng = np.random.default_rng(11)
    circle = np.exp(2j * np.pi * np.arange(16) / 16)
    resid, detdev, factored = 0.0, 0.0, 0
    while factored < 50:
        g = small_loop(rng)
        try:
            gN, gB = birkhoff_factorize(g)
        except NotInBigCell:
            continue
        factored += 1
        resid = max(resid, (gN @ gB).distance(g) / g.max_abs())
        for lam in circle:
            d = g.det_at(lam)
            detdev = max(detdev, abs(gN.det_at(lam) * gB.det_at(lam) - d) / max(1, abs(d)))

    L, lp, fs = soliton_frame("-8:8,-8:8")
    qdev = 0.0
    for _ in range(3):
        c = 0.1 * (rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2)))
        c[0] = np.triu(c[0]) + np.eye(2)
        res = dress(fs, Loop(0, c))
        cr, ok, _ = quad_cross_ratios(res.lattice)
        qdev = max(qdev, np.abs(cr[ok] - lp.q).max() / max(1, abs(lp.q)))

    vp = LaxParams(0.3, 0.2 + 0.4j)
    V = vacuum_lattice(vp.alpha, vp.beta, "-5:5,-5:5")
    fixed = lattice_distance(dress(extended_frame(V, vp), gamma_plus_element([1, 0.3, 0.1], [0.2, -0.1j])).lattice, V)
    report(11, resid <= 1e-9 and detdev <= 1e-9 and qdev <= 1e-9 and fixed <= 1e-9,
           f"factor residual {resid:.1e}, det {detdev:.1e}, dressed q {qdev:.1e}, Gamma+ on vacuum {fixed:.1e}")


# ---- 12 ----------------------------------------------------------------

@pytest.mark.criterion(12)
def test_criterion_12_discrete_cubic():
    lp = LaxParams(1.0, 2.0)
    C = cubic_lattice(lp, W32)
    audit = audit_cross_ratios(C, AUDIT)
    quad = [discrete_cubic(k, m, lp) for k, m in [(1, 0), (2, 0), (1, 1), (2, 1)]]
    # audit corner order: a = z(k, m+1), b = z(k, m), c = z(k+1, m), d = z(k+1, m+1)
    b, c, a, d = quad
    cr = (a - b) * (c - d) / ((b - c) * (d - a))
    lq = LaxParams(0.3, 0.47)
    Q = baker_quotient_map(FiniteTypeW.cubic(), lq, "-6:6,-6:6")
    dist = lattice_distance(Q, cubic_lattice(lq, "-6:6,-6:6"), align=True)
    report(12, audit.passed and lp.q == 4 and quad == [0, 6, 18, 54] and abs(cr - 4) <= 1e-12 and dist <= 1e-8,
           f"audit {audit.max_rel_deviation:.1e}, quad cross-ratio {cr}, Baker vs closed form {dist:.1e}")


# ---- 13 ----------------------------------------------------------------

@pytest.mark.criterion(13)
def test_criterion_13_collapse_semantics(tmp_path, capsys):
    checks = {}
    # a grid with one neighbourhood pinched to a point (not a DCM)
    z = np.add.outer(np.arange(7.0), 1j * np.arange(7.0))
    z[2:5, 3] = z[3, 3]
    z[3, 2:5] = z[3, 3]
    G = DcmLattice.from_affine(-1, z)
    rG = audit_cross_ratios(G)
    checks["pinched grid"] = (detect_collapse(G) == [(3, 3)]
                              and {(2, 2), (2, 3), (3, 2), (3, 3)} <= set(rG.indeterminate_cells))

    # two-soliton with zero phases: both theta factors vanish at the origin
    P0 = NodalParams(a=1.0, b=0.6 + 0.05j, y=0.5j, nodes=(0.9 - 0.2j, 0.4 + 1.1j))
    S = gen_two_soliton(P0, "-6:6,-6:6")
    T = dcm_from_theta(period_data_from_nodal(P0), "-6:6,-6:6", P0.q)
    for name, L in (("two-soliton", S), ("theta", T)):
        r = audit_cross_ratios(L, AUDIT)
        checks[name] = (L.site_status(0, 0) == SiteStatus.COLLAPSED
                        and (L.status == SiteStatus.COLLAPSED).sum() == 1
                        and {(-1, -1), (-1, 0), (0, -1), (0, 0)} <= set(r.indeterminate_cells)
                        and r.passed and r.checked_cells > 0)
    checks["paths agree"] = lattice_distance(S, T, align=True) <= 1e-8

    # the cubic with beta = 2 alpha pinches the whole line k + 2m = 0
    C = cubic_lattice(LaxParams(1.0, 2.0), "-5:5,-5:5")
    line = [(-2 * m, m) for m in range(-2, 3)]
    rC = audit_cross_ratios(C, AUDIT)
    checks["cubic"] = (all(C.site_status(k, m) == SiteStatus.COLLAPSED for k, m in line)
                       and (C.status == SiteStatus.COLLAPSED).sum() == len(line) and rC.passed)
    checks["plot"] = (svg_counts(plot_svg(C))["collapsed"] == len(line)
                      and svg_counts(plot_svg(S))["collapsed"] == 1)

    # the command-line pipeline finishes normally and reports the collapse
    params = tmp_path / "p.json"
    params.write_text(P0.to_json())
    out = tmp_path / "s.json"
    code = cli_main(["generate-soliton", "--params", str(params), "--window", "-6:6,-6:6", "--out", str(out)])
    line_out = capsys.readouterr().out
    back = DcmLattice.from_json(out.read_text())
    checks["cli"] = code == 0 and "collapsed=1" in line_out and back.site_status(0, 0) == SiteStatus.COLLAPSED

    failed = [k for k, v in checks.items() if not v]
    report(13, not failed, f"failed: {failed}" if failed else ", ".join(checks))
