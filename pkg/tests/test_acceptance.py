"""Acceptance gate: one test per criterion, each timed against its budget.

Run with ``pytest tests/test_acceptance.py``; the summary lists pass/fail per criterion.
"""
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest
import sympy

from conftest import CRITERIA
from givental import _linalg as la
from givental.axioms import PASS, act_genus0, check_all, is_semisimple, quantum_product
from givental.jets import random_r_jet, random_s_jet
from givental.loop import LaurentMatrix, Metric, birkhoff_factorize
from givental.quantization import QuadHamiltonian, flow, operator_commutator, poisson_bracket, weyl_quantize
from givental.series import Poly, TruncatedPotential, TruncationSpec
from givental.tau import (
    SRData,
    builtin_theory,
    check_jet_property,
    point_correlators,
    point_potentials,
    rewrite_in_jet_variables,
    virasoro_system_correlators,
)
from givental.virasoro import check_annihilation, check_virasoro_relations, point_virasoro_family


@contextmanager
def criterion(n: int, title: str, budget: float):
    CRITERIA[n] = f"FAIL criterion {n:2d}: {title}"
    start = time.perf_counter()
    yield
    took = time.perf_counter() - start
    ok = took < budget
    CRITERIA[n] = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {title} ({took:.2f}s, budget {budget:g}s)"
    print(CRITERIA[n])
    assert ok, f"took {took:.2f}s, budget {budget}s"


def test_c01_intersection_table_two_routes():
    with criterion(1, "intersection numbers at G=2 D=6 agree across both routes", 10):
        spec = TruncationSpec(1, 9, 6, 2, 0)
        table = point_correlators(spec)
        assert table[(0, (0, 0, 0))] == 1
        assert table[(1, (1,))] == Fraction(1, 24)
        assert table[(2, (4,))] == Fraction(1, 1152)
        assert all(isinstance(v, Fraction) for v in table.entries.values())
        dual = virasoro_system_correlators(spec, ms=(-1, 0, 1, 2))
        assert dual.entries == table.entries


def test_c02_virasoro_relations():
    with criterion(2, "[L_m, L_n] = (m-n) L_(m+n) for -1 <= m,n <= 3, m+n <= 5", 5):
        fam = point_virasoro_family(TruncationSpec(1, 5, 6, 2, 0))
        for m in range(-1, 4):
            for n in range(-1, 4):
                if m + n <= 5:
                    rep = check_virasoro_relations(fam, m, n)
                    assert rep.ok is True, (m, n, rep.discrepancy.to_text())
                    assert rep.discrepancy.constant_term() == 0


def test_c03_point_tau_annihilated_and_tamper_detected():
    with criterion(3, "L_m tau = 0 for m in -1..2 at K=4 D=6 G=2, tampered 1/25 caught", 30):
        spec = TruncationSpec(1, 4, 6, 2, 0)
        tau = point_potentials(spec)
        fam = point_virasoro_family(spec)
        for m in (-1, 0, 1, 2):
            rep = check_annihilation(fam, m, tau)
            assert rep.ok, (m, rep.witnesses[:3])
        f1 = tau.genus(1)
        f1 = f1 + Poly.from_monomial([(0, 1)], Fraction(1, 25) - Fraction(1, 24), spec)
        bad = TruncatedPotential((tau.genus(0), f1, tau.genus(2)), spec)
        reps = [check_annihilation(fam, m, bad) for m in (-1, 0, 1, 2)]
        assert any(not r.ok and r.witnesses for r in reps)


def _closed_form_cocycle(kind1, pair1, kind2, pair2) -> int:
    (a, b), (c, d) = pair1, pair2
    contraction = int(a == c and b == d) + int(a == d and b == c)
    if (kind1, kind2) == ("pp", "qq"):
        return contraction
    if (kind1, kind2) == ("qq", "pp"):
        return -contraction
    return 0


def test_c04_cocycle_exhaustive():
    with criterion(4, "cocycle closed form over all quadratic monomial pairs, k,l <= 3, N <= 2", 5):
        for rank in (1, 2):
            lvars = [(mu, k) for mu in range(rank) for k in range(4)]
            sym = [(a, b) for i, a in enumerate(lvars) for b in lvars[i:]]
            monos = [("pp", p) for p in sym] + [("qq", p) for p in sym] + [("pq", (a, b)) for a in lvars for b in lvars]
            hams = [QuadHamiltonian.from_parts(**{kind: {pair: 1}}) for kind, pair in monos]
            ops = [weyl_quantize(h) for h in hams]
            seen = set()
            for i, (k1, p1) in enumerate(monos):
                for j, (k2, p2) in enumerate(monos):
                    defect = operator_commutator(ops[i], ops[j]) - weyl_quantize(poisson_bracket(hams[i], hams[j]))
                    expected = _closed_form_cocycle(k1, p1, k2, p2)
                    assert defect.terms == ({(0, (), ()): Fraction(expected)} if expected else {}), (k1, p1, k2, p2)
                    seen.add(abs(expected))
            assert seen == {0, 1, 2}


def test_c05_genus_zero_axioms_with_negative_controls():
    with criterion(5, "genus-zero axioms hold on point and N-point (N <= 3); each axiom has a failing control", 10):
        for n in (1, 2, 3):
            th = builtin_theory("point" if n == 1 else f"npoint:{n}", TruncationSpec(n, 3, 6, 0, 0))
            assert [r.status for r in check_all(th.potentials.genus(0), th.metric)] == [PASS] * 3
        th = builtin_theory("point", TruncationSpec(1, 3, 6, 0, 0))
        g0, spec = th.potentials.genus(0), th.spec
        for mono, broken in (([(0, 3)], 0), ([(0, 0), (0, 3)], 1)):
            reps = check_all(g0 + Poly.from_monomial(mono, Fraction(1, 7), spec), th.metric)
            assert [r.ok for r in reps] == [i != broken for i in range(3)]
            assert reps[broken].witnesses
        small = TruncationSpec(1, 2, 5, 0, 0)
        t = [Poly.var(0, k, small) for k in range(3)]
        trr_only = (
            (t[0] * t[0] * t[2] * t[2] * t[2]).scale(Fraction(1, 2))
            + t[0] * t[1] * t[1] * t[2] * t[2] + t[0] * t[1] * t[2] * t[2]
            + t[0] * t[2] * t[2] + t[1] * t[2] - t[2]
        )
        reps = check_all(point_potentials(small).genus(0) + trr_only, th.metric)
        assert [r.ok for r in reps] == [True, True, False] and reps[2].witnesses


def test_c06_loop_group_preserves_axioms():
    with criterion(6, "20 S- and 20 R-type jets (height 10) keep all three axioms on the 2-point theory", 60):
        spec = TruncationSpec(2, 3, 6, 0, 2)
        th = builtin_theory("npoint:2", spec)
        rng = random.Random(2024)
        ident = LaurentMatrix.identity(2, 2)
        count = 0
        for i in range(20):
            power = 1 + i % 2
            for sr in (
                SRData(random_s_jet(th.metric, rng, 2, power, 10), ident, th.metric),
                SRData(ident, random_r_jet(th.metric, rng, 2, power, 10), th.metric),
            ):
                _, reps = act_genus0(sr, th, spec)
                assert [r.status for r in reps] == [PASS] * 3, [r.to_table() for r in reps]
                assert all(r.compared > 0 for r in reps)
                count += 1
        assert count >= 20


def test_c07_string_flow_fixed_point():
    with criterion(7, "exp(eps L_-1^) fixes the point tau through eps^4", 10):
        spec = TruncationSpec(1, 3, 6, 2, 4)
        base = builtin_theory("point", spec.grow(degree=4))
        jet = flow(LaurentMatrix.from_z({-1: [[1]]}, 1, 4, eps_power=1), base.potentials, 4)
        assert jet.spec.contains(spec)
        assert jet.orders[0].restrict(spec) == base.potentials.restrict(spec)
        assert len(jet.orders) == 5 and all(o.is_zero() for o in jet.orders[1:])


def _random_invertible_jet(rng: random.Random) -> LaurentMatrix:
    def mat():
        return la.as_matrix([[Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for _ in range(2)] for _ in range(2)])

    m0 = mat()
    while la.rank(m0) < 2:
        m0 = mat()
    coeffs = {(0, 0): m0}
    for n in range(1, 4):
        for c in rng.sample(range(-2, 3), 2):
            coeffs[(n, c)] = mat()
    return LaurentMatrix(coeffs, 2, 3)


def test_c08_birkhoff_round_trip():
    with criterion(8, "Birkhoff factor-then-recompose is exact on 20 random jets; identity -> (I, I)", 5):
        rng = random.Random(8)
        for _ in range(20):
            m = _random_invertible_jet(rng)
            s, r = birkhoff_factorize(m)
            assert s * r == m
            assert s.is_one_sided("neg") and r.is_one_sided("pos")
        ident = LaurentMatrix.identity(2, 3)
        assert birkhoff_factorize(ident) == (ident, ident)


def test_c09_jet_property():
    with criterion(9, "F1 depends on u_0, u_1 only; F2 on u_k with k <= 4", 5):
        tau = builtin_theory("point", TruncationSpec(1, 6, 9, 2, 0)).potentials
        rep = check_jet_property(tau)
        assert rep.ok is True
        for g, top in ((1, 1), (2, 4)):
            h, off, d = rewrite_in_jet_variables(tau, g)
            assert not off and d >= 1
            assert max(k for mono in h.terms for _, k in mono) == top


def test_c10_semisimplicity():
    with criterion(10, "N-point theories semisimple with squarefree certificates; nilpotent fixture is not", 1):
        for n in (1, 2, 3):
            th = builtin_theory("point" if n == 1 else f"npoint:{n}", TruncationSpec(n, 1, 3, 0, 0))
            v = is_semisimple(quantum_product(th.potentials.genus(0), th.metric))
            assert v.semisimple is True
            poly = sympy.Poly(list(reversed(v.minimal_polynomial)), sympy.Symbol("x"), domain="QQ")
            assert poly.degree() == n
            assert sympy.gcd(poly, poly.diff()).degree() == 0
        fixture = Poly({((0, 0), (0, 0), (1, 0)): Fraction(1, 2)}, TruncationSpec(2, 1, 3, 0, 0))
        v = is_semisimple(quantum_product(fixture, Metric([[0, 1], [1, 0]], (1, 0))))
        assert v.semisimple is False


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
