import cmath
import math

import numpy as np
import pytest

from dcmlab.errors import BadParams, NoSolution, PoleAtInfinityPoint
from dcmlab.lattice import audit_cross_ratios, lattice_distance, period_defect
from dcmlab.soliton import (
    NodalParams,
    gen_exponential,
    gen_one_soliton,
    gen_two_soliton,
    generate,
    h_km,
    lambda_of,
    merged_phase,
    one_soliton_ratio,
    periodicity_solver,
    solve_b,
    two_node_F,
    two_soliton_ratio,
    with_phase,
)

BASE = dict(a=1.0, b=0.45 + 0.2j, y=0.3 + 0.55j)


def test_lambda_normalisation():
    p = NodalParams(eps=2.1 - 0.3j, **BASE)
    assert lambda_of(p.a, p) == pytest.approx(1, abs=1e-12)
    assert lambda_of(p.eps, p) == pytest.approx(0, abs=1e-12)
    assert p.q == lambda_of(p.b, p)
    with pytest.raises(PoleAtInfinityPoint):
        lambda_of(-p.y, p)


def test_params_reject_sign_collisions():
    with pytest.raises(BadParams):
        NodalParams(a=1, b=-1, y=0.5)
    with pytest.raises(BadParams):
        NodalParams(a=1, b=0.4, y=0.5, nodes=(-0.5,))
    with pytest.raises(BadParams):
        NodalParams(a=1, b=0.4, y=0.5, nodes=(0.2,), phases=(0.1, 0.2))


def test_params_json_round_trip():
    p = NodalParams(eps=None, nodes=(0.7j, 1.3), phases=(0.1, 0.2 + 0.1j), period_n=8, **BASE)
    assert NodalParams.from_json(p.to_json()) == p


def test_discrete_exponential():
    p = NodalParams(**BASE)
    A = (p.a - p.y) / (p.a + p.y)
    B = (p.b - p.y) / (p.b + p.y)
    assert h_km(0, 0, p) == 1
    assert h_km(3, -2, p) == pytest.approx(A ** 3 * B ** -2)
    assert h_km(2, 5, p) == pytest.approx(h_km(1, 2, p) * h_km(1, 3, p))


def test_parity_factor():
    p = NodalParams(eps=1.7 + 0.2j, **BASE)
    f = (p.eps + p.y) / (p.eps - p.y)
    assert h_km(1, 0, p) * h_km(0, 1, p) / h_km(1, 1, p) == pytest.approx(f * f)
    assert h_km(2, 2, p) == pytest.approx(h_km(1, 1, p) ** 2)


@pytest.mark.parametrize("eps", [None, 2.3 + 0.4j])
def test_exponential_lattice_audit(eps):
    L = gen_exponential(NodalParams(eps=eps, **BASE), "-8:7,-8:7")
    r = audit_cross_ratios(L)
    assert r.max_rel_deviation <= 1e-9 and r.checked_cells == 225


@pytest.mark.parametrize("eps", [None, 2.3 + 0.4j])
def test_one_soliton_audit(eps):
    p = NodalParams(eps=eps, nodes=(0.8 - 0.35j,), phases=(0.15,), **BASE)
    r = audit_cross_ratios(gen_one_soliton(p, "-12:11,-12:11"))
    assert r.max_rel_deviation <= 1e-9


@pytest.mark.parametrize("eps", [None, 2.3 + 0.4j])
def test_two_soliton_audit(eps):
    p = NodalParams(eps=eps, nodes=(0.8 - 0.35j, -0.2 + 1.1j), phases=(0.15, 0.4), **BASE)
    r = audit_cross_ratios(gen_two_soliton(p, "-12:11,-12:11"))
    assert r.max_rel_deviation <= 1e-9


def test_generate_dispatch_and_arity():
    p = NodalParams(nodes=(0.8,), **BASE)
    assert lattice_distance(generate(p, "0:3,0:3"), gen_one_soliton(p, "0:3,0:3")) == 0
    with pytest.raises(BadParams):
        gen_two_soliton(p, "0:3,0:3")


def test_two_node_F():
    assert two_node_F(1, 1, 0.3, 0.7) == 0
    X, Y, x1, x2 = 0.4 + 1j, -2 + 0.1j, 0.3, 0.9j
    det = np.linalg.det(np.array([[X - 1, (X + 1) * x1], [Y - 1, (Y + 1) * x2]]))
    assert two_node_F(X, Y, x1, x2) == pytest.approx(det)


def test_periodicity_solver_cases():
    for n, nodes in [(6, 0), (6, 1), (8, 2), (7, 2), (5, 1)]:
        sols = periodicity_solver(n, nodes)
        assert len(sols) == 2
        for p in sols:
            assert p.q == pytest.approx(-1, abs=1e-10)
            L = generate(p, f"0:{2 * n + 1},-3:3")
            assert period_defect(L, n) <= 1e-9
            assert audit_cross_ratios(L).passed


def test_solver_with_target_q():
    p = periodicity_solver(6, 1, q_target=2.5 + 0.5j)[0]
    assert p.q == pytest.approx(2.5 + 0.5j, abs=1e-10)
    b1, b2 = solve_b(3.0, 1.0, 0.4j)
    assert b1 == -b2


def test_solver_refusals():
    with pytest.raises(NoSolution):
        periodicity_solver(4, 1)
    with pytest.raises(NoSolution):
        periodicity_solver(5, 0, eps=2.0)
    with pytest.raises(NoSolution):
        periodicity_solver(8, 1, exponents=[1, 7])


def test_finite_eps_odd_period_does_not_close():
    w = cmath.exp(2j * math.pi / 5)
    y = (w - 1) / (w + 1)
    p = NodalParams(a=1.0, b=0.4 + 0.3j, y=y, eps=2.0)
    assert period_defect(gen_exponential(p, "0:12,0:2"), 5) > 1e-3
    assert period_defect(gen_exponential(with_eps_none(p), "0:12,0:2"), 5) < 1e-9


def with_eps_none(p):
    return NodalParams(a=p.a, b=p.b, y=p.y)


def test_one_soliton_limits():
    p = NodalParams(a=1.0, b=0.6 + 0.1j, y=0.3 + 0.5j, nodes=(0.9 - 0.2j,), phases=(0.2,))
    B = (p.b - p.y) / (p.b + p.y)
    assert abs(B) < 1
    k = np.arange(-5, 6)
    x = p.nodes[0]
    limit_minus = ((p.y - x) / (p.y + x)) ** 2
    assert np.abs(one_soliton_ratio(k, 40, p) - 1).max() <= 1e-6
    assert np.abs(one_soliton_ratio(k, -40, p) - limit_minus).max() <= 1e-6


def test_two_soliton_rows_settle():
    p = NodalParams(a=1.0, b=0.6 + 0.1j, y=0.3 + 0.5j, nodes=(0.9 - 0.2j, 1.4 + 0.6j), phases=(0.2, 0.1))
    k = np.arange(-4, 5)
    for m in (50, -50):
        step = np.abs(two_soliton_ratio(k, m + 1, p) - two_soliton_ratio(k, m, p)).max()
        assert step <= 1e-6


def test_degeneration_to_one_node():
    p = NodalParams(a=1.0, b=0.6 + 0.1j, y=0.3 + 0.5j, nodes=(0.9 - 0.2j, 1.4 + 0.6j), phases=(0.2, 0))
    delta = 1e-4
    c2 = 1j * math.log(delta) / (2 * math.pi)  # exp(-2 pi i c2) = delta
    two = gen_two_soliton(with_phase(p, p.phases[0], c2), "-3:3,-3:3")
    one = gen_one_soliton(NodalParams(a=p.a, b=p.b, y=p.y, nodes=(p.nodes[0],),
                                      phases=(merged_phase(p),)), "-3:3,-3:3")
    assert lattice_distance(two, one) <= 1e-2
