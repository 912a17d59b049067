import json
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rationals, rational_matrices
from givental import _linalg as la
from givental.jets import exp_jet, random_inf_symplectic, random_r_jet, random_s_jet
from givental.loop import (
    DarbouxConvention,
    LaurentMatrix,
    LoopEndo,
    LoopVector,
    Metric,
    WindowError,
    birkhoff_factorize,
    canonical_window,
    inf_symplectic_matrix,
    is_inf_symplectic,
    is_symplectic,
    loop_commutator,
    omega,
    virasoro_generator,
)

ANTIDIAGONAL = Metric([[0, 1], [1, 0]], (1, 0))


@st.composite
def loop_vectors(draw, rank: int = 2, lo: int = -3, hi: int = 2):
    terms = draw(st.dictionaries(st.tuples(st.integers(0, rank - 1), st.integers(lo, hi)), rationals, max_size=6))
    return LoopVector.from_terms(rank, terms)


@given(loop_vectors(), loop_vectors())
def test_omega_antisymmetric(f, g):
    assert omega(f, g, ANTIDIAGONAL) == -omega(g, f, ANTIDIAGONAL)


@given(loop_vectors(), loop_vectors(), loop_vectors(), rationals)
def test_omega_bilinear(f, g, h, c):
    m = ANTIDIAGONAL
    assert omega(f + g.scale(c), h, m) == omega(f, h, m) + c * omega(g, h, m)


@pytest.mark.parametrize("metric", [Metric.identity(2), ANTIDIAGONAL, Metric([[2, 1], [1, 3]], (1, 0))])
def test_darboux_pairing(metric):
    conv = DarbouxConvention(metric, 2)
    for mu in range(2):
        for k in range(3):
            q = conv.q_vector(mu, k)
            for nu in range(2):
                for l in range(3):
                    p = conv.p_vector(nu, l)
                    assert omega(q, p, metric) == (-1 if (mu, k) == (nu, l) else 0)
                    assert omega(q, conv.q_vector(nu, l), metric) == 0
                    assert omega(p, conv.p_vector(mu, k), metric) == 0


def test_darboux_coordinates_round_trip():
    conv = DarbouxConvention(ANTIDIAGONAL, 2)
    v = conv.q_vector(1, 2) + conv.p_vector(0, 1).scale(3)
    assert conv.coordinates(v) == {("q", 1, 2): 1, ("p", 0, 1): 3}


@pytest.mark.parametrize("m", range(-1, 4))
def test_virasoro_generators_are_inf_symplectic(m):
    w = canonical_window(5)
    assert is_inf_symplectic(virasoro_generator(m, 1, w), Metric.identity(1), canonical_window(5 - max(m, 0)))


def test_virasoro_closed_form_values():
    w = canonical_window(3)
    l0 = virasoro_generator(0, 1, w)
    # L_0 z^j = -(j + 1/2) z^j
    assert l0.column((0, 2)) == {(0, 2): Fraction(-5, 2)}
    lm1 = virasoro_generator(-1, 1, w)
    assert lm1.column((0, 2)) == {(0, 1): -1}


def test_loop_commutator_relation():
    w = canonical_window(6)
    l1, lm1, l0 = (virasoro_generator(m, 1, w) for m in (1, -1, 0))
    c = loop_commutator(l1, lm1)
    safe = c.safe_window()
    assert safe is not None
    assert (c - l0.scale(2)).is_zero_on(safe)


def test_lossy_column_raises():
    w = canonical_window(2)
    l1 = virasoro_generator(1, 1, w)
    sq = l1 @ l1
    with pytest.raises(WindowError):
        sq.column((0, 2))


def test_non_symplectic_certificate():
    w = canonical_window(2)
    ident = LoopEndo.identity(1, w)
    verdict = is_inf_symplectic(ident, Metric.identity(1))
    assert not verdict and verdict.certificate is not None


@given(st.integers(0, 2**32 - 1))
def test_random_generators_are_inf_symplectic(seed):
    rng = random.Random(seed)
    gen = random_inf_symplectic(ANTIDIAGONAL, [-1, 1, 2], rng)
    a = LaurentMatrix.from_z(gen, 2)
    assert inf_symplectic_matrix(a, ANTIDIAGONAL)
    assert is_symplectic(exp_jet(gen, 2, 3), ANTIDIAGONAL)


def test_exp_log_round_trip():
    x = LaurentMatrix.from_z({-1: [[1, 2], [0, 1]], 1: [[0, 1], [1, 0]]}, 2, 3, eps_power=1)
    assert x.exp().log() == x
    assert x.exp() * (-x).exp() == LaurentMatrix.identity(2, 3)


def test_inverse():
    m = LaurentMatrix({(0, 0): [[2, 1], [1, 1]], (1, -1): [[1, 0], [3, 1]], (2, 2): [[0, 5], [1, 1]]}, 2, 3)
    assert m * m.inverse() == LaurentMatrix.identity(2, 3)


@st.composite
def invertible_jets(draw):
    m0 = draw(rational_matrices(2, 3))
    if la.rank(m0) < 2:
        m0 = la.add(m0, la.identity(2))
        if la.rank(m0) < 2:
            m0 = la.identity(2)
    coeffs = {(0, 0): m0}
    for n in range(1, 4):
        for c in draw(st.lists(st.integers(-2, 2), max_size=3, unique=True)):
            coeffs[(n, c)] = draw(rational_matrices(2, 3))
    return LaurentMatrix(coeffs, 2, 3)


@given(invertible_jets())
def test_birkhoff_round_trip(m):
    s, r = birkhoff_factorize(m)
    assert s * r == m
    assert s.is_one_sided("neg") and r.is_one_sided("pos")
    assert s.eps_part(0) == {0: la.identity(2)}


def test_birkhoff_identity_and_errors():
    ident = LaurentMatrix.identity(2, 2)
    assert birkhoff_factorize(ident) == (ident, ident)
    singular = LaurentMatrix({(0, 0): [[1, 1], [1, 1]], (1, -1): [[1, 0], [0, 1]]}, 2, 1)
    with pytest.raises(ValueError):
        birkhoff_factorize(singular)
    two_sided = LaurentMatrix.from_z({0: [[1, 0], [0, 1]], -1: [[1, 0], [0, 0]], 1: [[0, 1], [0, 0]]}, 2)
    with pytest.raises(ValueError):
        birkhoff_factorize(two_sided)


def test_birkhoff_of_symplectic_product_gives_symplectic_factors():
    rng = random.Random(11)
    s = random_s_jet(ANTIDIAGONAL, rng, 3)
    r = random_r_jet(ANTIDIAGONAL, rng, 3)
    s2, r2 = birkhoff_factorize(s * r)
    assert (s2, r2) == (s, r)
    assert is_symplectic(s2, ANTIDIAGONAL) and is_symplectic(r2, ANTIDIAGONAL)


def test_laurent_json_round_trip():
    m = LaurentMatrix({(0, 0): [[1, 0], [0, 1]], (1, -2): [[Fraction(1, 3), 0], [2, -1]]}, 2, 2)
    data = json.loads(m.dumps(ANTIDIAGONAL))
    assert data["window"] == [-2, 0]
    assert LaurentMatrix.from_json(data) == m
    data["window"] = [-1, 0]
    with pytest.raises(ValueError):
        LaurentMatrix.from_json(data)


def test_metric_adjoint():
    a = [[1, 2], [3, 4]]
    m = ANTIDIAGONAL
    u, v = (Fraction(1), Fraction(2)), (Fraction(-1), Fraction(5))
    assert m.pair(la.matvec(a, u), v) == m.pair(u, la.matvec(m.adjoint(a), v))
