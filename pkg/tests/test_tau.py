import json
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from givental.jets import random_r_jet, random_s_jet
from givental.loop import LaurentMatrix, Metric
from givental.series import Poly, TruncatedPotential, TruncationSpec
from givental.tau import (
    CorrelatorTable,
    SRData,
    Theory,
    UnderdeterminedError,
    act_jets,
    axiomatic_tau,
    builtin_theory,
    check_jet_property,
    correlators_from_potential,
    n_point_potentials,
    point_correlators,
    rewrite_in_jet_variables,
    virasoro_system_correlators,
    wk_correlator,
)

DATA = Path(__file__).parent / "data"


@pytest.mark.parametrize(
    "g, ks, value",
    [
        (0, (0, 0, 0), Fraction(1)),
        (1, (1,), Fraction(1, 24)),
        (1, (0, 2), Fraction(1, 24)),
        (1, (1, 1, 1), Fraction(1, 12)),
        (1, (0, 1, 2), Fraction(1, 12)),
        (2, (4,), Fraction(1, 1152)),
        (2, (0, 5), Fraction(1, 1152)),
        (2, (1, 4), Fraction(1, 384)),
        (2, (2, 3), Fraction(29, 5760)),
        (3, (7,), Fraction(1, 82944)),
        (0, (0, 0), Fraction(0)),
        (1, (2,), Fraction(0)),
    ],
)
def test_correlator_values(g, ks, value):
    assert wk_correlator(g, ks) == value


def test_one_point_closed_form():
    # <tau_{3g-2}>_g = 1 / (24^g g!)
    from math import factorial

    for g in range(1, 6):
        assert wk_correlator(g, (3 * g - 2,)) == Fraction(1, 24**g * factorial(g))


@st.composite
def correlator_keys(draw):
    g = draw(st.integers(0, 3))
    n = draw(st.integers(1, 6))
    assume(2 * g - 2 + n > 0)
    total = 3 * g - 3 + n
    assume(total >= 0)
    cuts = sorted(draw(st.lists(st.integers(0, total), min_size=n - 1, max_size=n - 1)))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [total])]
    return g, tuple(sorted(parts))


@given(correlator_keys())
def test_string_equation(key):
    g, ks = key
    lhs = wk_correlator(g, tuple(sorted((0,) + ks)))
    rhs = sum(
        (wk_correlator(g, tuple(sorted(ks[:i] + (ks[i] - 1,) + ks[i + 1 :]))) for i in range(len(ks)) if ks[i] > 0),
        Fraction(0),
    )
    if (g, len(ks)) != (0, 2):
        assert lhs == rhs


@given(correlator_keys())
def test_dilaton_equation(key):
    g, ks = key
    n = len(ks)
    assert wk_correlator(g, tuple(sorted((1,) + ks))) == (2 * g - 2 + n) * wk_correlator(g, ks)


def test_golden_table():
    spec = TruncationSpec(1, 9, 6, 2, 0)
    table = point_correlators(spec)
    assert table.to_text() == (DATA / "point_correlators_G2_D6.txt").read_text()
    assert CorrelatorTable.from_text(table.to_text(), spec).entries == table.entries
    assert CorrelatorTable.from_json(json.loads(json.dumps(table.to_json()))).entries == table.entries


def test_table_selection_examples():
    spec = TruncationSpec(1, 9, 6, 2, 0)
    table = point_correlators(spec)
    assert table.select(1, 1).lines() == ["1; 1; 1/24"]
    assert "0; 0,0,0; 1" in table.select(0, 3).lines()
    assert table.select(0, 2).lines() == []


def test_virasoro_system_matches_recursion():
    spec = TruncationSpec(1, 5, 5, 1, 0)
    assert virasoro_system_correlators(spec).entries == point_correlators(spec).entries


def test_virasoro_system_needs_enough_constraints():
    with pytest.raises(UnderdeterminedError):
        virasoro_system_correlators(TruncationSpec(1, 3, 4, 1, 0), ms=(-1,))


def test_potential_coefficients_and_round_trip():
    spec = TruncationSpec(1, 3, 6, 2, 0)
    tau = builtin_theory("point", spec).potentials
    assert tau.genus(0).coefficient([(0, 0)] * 3) == Fraction(1, 6)
    assert tau.genus(1).coefficient([(0, 1)]) == Fraction(1, 24)
    assert correlators_from_potential(tau).entries == point_correlators(spec).entries


def test_n_point_theory():
    spec = TruncationSpec(2, 3, 6, 1, 0)
    th = n_point_potentials(2, spec)
    f0 = th.potentials.genus(0)
    assert f0.coefficient([(0, 0)] * 3) == Fraction(1, 6)
    assert f0.coefficient([(0, 0), (1, 0), (1, 0)]) == 0
    assert th.metric.unit == (1, 1)
    one = n_point_potentials(1, TruncationSpec(1, 3, 6, 1, 0))
    assert one.potentials == builtin_theory("point", TruncationSpec(1, 3, 6, 1, 0)).potentials
    with pytest.raises(ValueError):
        builtin_theory("line", spec)


def test_theory_json_round_trip():
    th = builtin_theory("npoint:2", TruncationSpec(2, 2, 4, 1, 0))
    back = Theory.from_json(json.loads(json.dumps(th.to_json())))
    assert back.potentials == th.potentials and back.metric == th.metric and back.builtin == "npoint:2"


def test_jet_property_point():
    spec = TruncationSpec(1, 6, 9, 2, 0)
    tau = builtin_theory("point", spec).potentials
    rep = check_jet_property(tau)
    assert rep.ok and rep.checked == {1: 6, 2: 3}
    golden = (DATA / "point_jet_rewrite.txt").read_text().splitlines()
    for g, line in zip((1, 2), golden):
        h, off, _ = rewrite_in_jet_variables(tau, g)
        assert not off
        assert f"F{g} = " + h.to_text().replace("t0_", "u0_") == line


def test_jet_property_f1_is_log():
    tau = builtin_theory("point", TruncationSpec(1, 6, 9, 1, 0)).potentials
    h, _, d = rewrite_in_jet_variables(tau, 1)
    # (1/24) log(1 + x)
    assert h.terms == {((0, 1),) * j: Fraction((-1) ** (j + 1), 24 * j) for j in range(1, d + 1)}


def test_jet_property_negative_control():
    spec = TruncationSpec(1, 6, 9, 2, 0)
    tau = builtin_theory("point", spec).potentials
    f1 = tau.genus(1) + Poly.from_monomial([(0, 5)], Fraction(1, 7), spec)
    rep = check_jet_property(TruncatedPotential((tau.genus(0), f1, tau.genus(2)), spec))
    assert rep.ok is False and rep.offending == [(1, ((0, 5),))]


def test_jet_property_undecidable_without_room():
    rep = check_jet_property(builtin_theory("point", TruncationSpec(1, 3, 3, 1, 0)).potentials)
    assert rep.ok is None and rep.status == "undecidable"


def test_srdata_validation():
    m = Metric.n_point(2)
    ident = LaurentMatrix.identity(2, 1)
    not_symp = LaurentMatrix({(0, 0): [[1, 0], [0, 1]], (1, 2): [[1, 0], [0, 0]]}, 2, 1)
    with pytest.raises(ValueError, match="not symplectic"):
        SRData(ident, not_symp, m)
    s = random_s_jet(m, random.Random(0), 1)
    with pytest.raises(ValueError, match="series in z"):
        SRData(ident, s, m)
    scaled = LaurentMatrix({(0, 0): [[-1, 0], [0, 1]]}, 2, 1)
    with pytest.raises(ValueError, match="identity"):
        SRData(ident, scaled, m)


def test_identity_action_returns_base():
    spec = TruncationSpec(2, 2, 4, 1, 1)
    base = builtin_theory("npoint:2", spec)
    res = axiomatic_tau(base, SRData.identity(base.metric, 1), spec)
    assert res.theory.potentials == base.potentials


def test_action_then_inverse_returns_base():
    spec = TruncationSpec(2, 2, 4, 1, 2)
    base = builtin_theory("npoint:2", spec)
    rng = random.Random(4)
    r = random_r_jet(base.metric, rng, 2)
    s = random_s_jet(base.metric, rng, 2)
    lr, ls = r.log(), s.log()
    jet = act_jets(base, [lr, ls, -ls, -lr], spec)
    assert jet.orders[0] == base.potentials.restrict(jet.spec)
    assert all(o.is_zero() for o in jet.orders[1:])


def test_action_keeps_hbar_grading():
    spec = TruncationSpec(1, 2, 4, 2, 1)
    base = builtin_theory("point", spec)
    r = random_r_jet(base.metric, random.Random(2), 1)
    res = axiomatic_tau(base, SRData(LaurentMatrix.identity(1, 1), r, base.metric), spec)
    assert len(res.jet.orders[1].by_genus) == 3
    assert not res.jet.orders[1].is_zero()
