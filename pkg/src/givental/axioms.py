"""Genus-zero axioms (dilaton, string, TRR), Frobenius coordinates, quantum product, semisimplicity.

Every check accepts a single t-frame polynomial or an eps-family of them
(the eps-Taylor coefficients of a flowed potential).  Linear identities are
checked order by order; TRR is quadratic and uses the eps-convolution.
Comparisons are restricted to monomials whose value is exact at the window.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import sympy

from . import _linalg as la
from .loop import LaurentMatrix, Metric, birkhoff_factorize
from .series import Monomial, Poly, TruncationSpec, fmt_fraction, unit_vector

Witness = tuple[int, Monomial, Fraction, Fraction]  # (eps order, monomial, lhs, rhs)

PASS, FAIL, UNDECIDABLE = "pass", "fail", "undecidable"


@dataclass
class AxiomReport:
    axiom: str
    status: str
    witnesses: list[Witness] = field(default_factory=list)
    compared: int = 0
    detail: str = ""
    where: list[str] = field(default_factory=list)  # per-witness equation label, when one axiom has many

    @property
    def ok(self) -> bool:
        return self.status == PASS

    def to_json(self) -> dict:
        return {
            "axiom": self.axiom,
            "status": self.status,
            "compared": self.compared,
            "detail": self.detail,
            "witnesses": [
                {"eps": n, "monomial": [list(v) for v in m], "lhs": fmt_fraction(a), "rhs": fmt_fraction(b)}
                | ({"equation": self.where[i]} if self.where else {})
                for i, (n, m, a, b) in enumerate(self.witnesses)
            ],
        }

    def to_table(self) -> str:
        lines = [f"{self.axiom:8s} {self.status:12s} compared={self.compared}"]
        for i, (n, m, a, b) in enumerate(self.witnesses[:20]):
            mono = "*".join(f"t{mu}_{k}" for mu, k in m) or "1"
            label = f" [{self.where[i]}]" if self.where else ""
            lines.append(f"    eps^{n} {mono}: lhs={fmt_fraction(a)} rhs={fmt_fraction(b)}{label}")
        return "\n".join(lines)


def _family(g0: Poly | Sequence[Poly]) -> list[Poly]:
    fam = [g0] if isinstance(g0, Poly) else list(g0)
    if not fam:
        raise ValueError("empty family")
    for p in fam:
        if p.frame != "t":
            raise ValueError("axiom checks expect t-frame potentials")
        if p.spec != fam[0].spec:
            raise ValueError("family members on different specs")
    return fam


def _directional(p: Poly, u: Sequence[Fraction], k: int) -> Poly:
    out = Poly.zero(p.spec, p.frame)
    for mu, c in enumerate(u):
        if c:
            out = out + p.diff((mu, k)).scale(c)
    return out


def _compare(name: str, lhs: list[Poly], rhs: list[Poly], max_degree: int, max_k: int) -> AxiomReport:
    if max_degree < 0 or max_k < 0:
        return AxiomReport(name, UNDECIDABLE, detail="no monomial is exact at this window")
    wit: list[Witness] = []
    compared = 0
    for n, (a, b) in enumerate(zip(lhs, rhs)):
        monos = set(a.terms) | set(b.terms)
        for m in sorted(monos):
            if len(m) > max_degree or any(k > max_k for _, k in m):
                continue
            compared += 1
            x, y = a.terms.get(m, Fraction(0)), b.terms.get(m, Fraction(0))
            if x != y:
                wit.append((n, m, x, y))
    return AxiomReport(name, FAIL if wit else PASS, wit, compared)


def check_dilaton(g0: Poly | Sequence[Poly], unit: Sequence | None = None) -> AxiomReport:
    """``d G/d t^1_1 = sum t^mu_k dG/dt^mu_k - 2 G`` on degrees <= D - 1."""
    fam = _family(g0)
    spec = fam[0].spec
    if spec.max_descendant < 1:
        return AxiomReport("dilaton", UNDECIDABLE, detail="window has no t_1")
    u = unit_vector(spec.rank, unit)
    lhs = [_directional(p, u, 1) for p in fam]
    rhs = [p.map_terms(lambda m, c: c * (len(m) - 2)) for p in fam]
    return _compare("dilaton", lhs, rhs, spec.max_degree - 1, spec.max_descendant)


def check_string(g0: Poly | Sequence[Poly], metric: Metric | None = None) -> AxiomReport:
    """``d G/d t^1_0 = 1/2 <t_0, t_0> + sum t^nu_(k+1) dG/dt^nu_k`` on degrees <= D - 1."""
    fam = _family(g0)
    spec = fam[0].spec
    metric = metric or Metric.identity(spec.rank)
    u = metric.unit
    lhs = [_directional(p, u, 0) for p in fam]
    rhs = []
    for n, p in enumerate(fam):
        acc = Poly.zero(spec, "t")
        for mu, k in spec.variables():
            if k + 1 <= spec.max_descendant:
                acc = acc + p.diff((mu, k)).mul_monomial(((mu, k + 1),))
        if n == 0 and spec.max_degree >= 2:
            quad = {}
            for a in range(spec.rank):
                for b in range(spec.rank):
                    if metric.g[a][b]:
                        key = tuple(sorted(((a, 0), (b, 0))))
                        quad[key] = quad.get(key, 0) + Fraction(metric.g[a][b], 2)
            acc = acc + Poly(quad, spec, "t")
        rhs.append(acc)
    return _compare("string", lhs, rhs, spec.max_degree - 1, spec.max_descendant)


def check_trr(g0: Poly | Sequence[Poly], metric: Metric | None = None) -> AxiomReport:
    """``d^3 G / dt^a_(k+1) dt^b_l dt^c_m = sum d^2 G/dt^a_k dt^mu_0 g^(mu nu) d^3 G/dt^nu_0 dt^b_l dt^c_m``.

    Checked on degrees <= D - 3 for every index triple in the window.
    """
    fam = _family(g0)
    spec = fam[0].spec
    metric = metric or Metric.identity(spec.rank)
    D, K, N = spec.max_degree, spec.max_descendant, spec.rank
    if K < 1:
        return AxiomReport("TRR", UNDECIDABLE, detail="window has no descendants")
    if D - 3 < 0:
        return AxiomReport("TRR", UNDECIDABLE, detail="degree bound too small for third derivatives")
    E = len(fam) - 1
    variables = spec.variables()
    d1 = [{v: p.diff(v) for v in variables} for p in fam]
    d2: list[dict] = [dict() for _ in fam]

    def second(n, a, b):
        key = tuple(sorted((a, b)))
        if key not in d2[n]:
            d2[n][key] = d1[n][key[0]].diff(key[1])
        return d2[n][key]

    found: list[tuple[Witness, str]] = []
    compared = 0
    pairs = [(variables[i], variables[j]) for i in range(len(variables)) for j in range(i, len(variables))]
    for b, c in pairs:
        third_0 = [[second(n, b, c).diff((nu, 0)) for nu in range(N)] for n in range(E + 1)]
        for alpha in range(N):
            for k in range(K):
                lhs = [second(n, b, c).diff((alpha, k + 1)) for n in range(E + 1)]
                rhs = []
                for n in range(E + 1):
                    acc = Poly.zero(spec, "t")
                    for i in range(n + 1):
                        j = n - i
                        for mu in range(N):
                            left = second(i, (alpha, k), (mu, 0))
                            if not left:
                                continue
                            for nu in range(N):
                                gi = metric.g_inv[mu][nu]
                                if gi and third_0[j][nu]:
                                    acc = acc + (left * third_0[j][nu]).scale(gi)
                    rhs.append(acc)
                for n in range(E + 1):
                    monos = set(lhs[n].terms) | set(rhs[n].terms)
                    for m in monos:
                        if len(m) > D - 3:
                            continue
                        compared += 1
                        x, y = lhs[n].terms.get(m, Fraction(0)), rhs[n].terms.get(m, Fraction(0))
                        if x != y:
                            label = f"a={alpha} k={k} b=t{b[0]}_{b[1]} c=t{c[0]}_{c[1]}"
                            found.append(((n, m, x, y), label))
    found.sort()
    wit = [w for w, _ in found]
    return AxiomReport("TRR", FAIL if wit else PASS, wit, compared, where=[lab for _, lab in found])


def check_all(g0: Poly | Sequence[Poly], metric: Metric | None = None) -> list[AxiomReport]:
    unit = metric.unit if metric is not None else None
    return [check_dilaton(g0, unit), check_string(g0, metric), check_trr(g0, metric)]


def overall_status(reports: Sequence[AxiomReport]) -> str:
    statuses = {r.status for r in reports}
    if FAIL in statuses:
        return FAIL
    if UNDECIDABLE in statuses:
        return UNDECIDABLE
    return PASS


# ---------------------------------------------------------------------------
# Frobenius structure


def frobenius_coordinates(g0: Poly, unit: Sequence | None = None) -> dict[int, Poly]:
    """``s^mu = d^2 G / dt^mu_0 dt^1_0``, truncated to degree D - 2."""
    spec = g0.spec
    u = unit_vector(spec.rank, unit)
    d_unit = _directional(g0, u, 0)
    target = replace(spec, max_degree=max(spec.max_degree - 2, 0))
    return {mu: d_unit.diff((mu, 0)).restrict(target) for mu in range(spec.rank)}


@dataclass(frozen=True)
class QuantumProduct:
    """Structure constants ``constants[a][b][c] = A^c_ab`` at a point of the small phase space."""

    base_point: tuple[Fraction, ...]
    constants: tuple[tuple[tuple[Fraction, ...], ...], ...]
    unit: tuple[Fraction, ...]
    commutative: bool
    unit_ok: bool

    @property
    def rank(self) -> int:
        return len(self.constants)

    def multiply(self, x: Sequence[Fraction], y: Sequence[Fraction]) -> tuple[Fraction, ...]:
        n = self.rank
        return tuple(sum((x[a] * y[b] * self.constants[a][b][c] for a in range(n) for b in range(n)), Fraction(0)) for c in range(n))

    def multiplication_matrix(self, x: Sequence[Fraction]) -> la.Matrix:
        """Matrix of ``y -> x * y`` (column b is x * phi_b)."""
        n = self.rank
        return tuple(
            tuple(sum((Fraction(x[a]) * self.constants[a][b][c] for a in range(n)), Fraction(0)) for b in range(n)) for c in range(n)
        )


def quantum_product(g0: Poly, metric: Metric | None = None, base_point: Sequence | None = None) -> QuantumProduct:
    """Third derivatives in the t_0 directions at ``t^mu_0 = base_point``, raised with g^-1.

    Evaluation at a nonzero base point sums the truncated series, which is only
    as exact as the window.
    """
    spec = g0.spec
    n = spec.rank
    metric = metric or Metric.identity(n)
    point = tuple(Fraction(x) for x in (base_point or [0] * n))
    if len(point) != n:
        raise ValueError("base point has wrong length")

    def evaluate(p: Poly) -> Fraction:
        total = Fraction(0)
        for m, c in p.terms.items():
            if any(k != 0 for _, k in m):
                continue
            v = c
            for mu, _ in m:
                v *= point[mu]
            total += v
        return total

    low = [[[evaluate(g0.diff((a, 0)).diff((b, 0)).diff((c, 0))) for c in range(n)] for b in range(n)] for a in range(n)]
    raised = tuple(
        tuple(tuple(sum((low[a][b][mu] * metric.g_inv[mu][c] for mu in range(n)), Fraction(0)) for c in range(n)) for b in range(n))
        for a in range(n)
    )
    comm = all(raised[a][b] == raised[b][a] for a in range(n) for b in range(n))
    u = metric.unit
    unit_ok = all(
        sum((u[a] * raised[a][b][c] for a in range(n)), Fraction(0)) == (1 if b == c else 0) for b in range(n) for c in range(n)
    )
    return QuantumProduct(point, raised, u, comm, unit_ok)


@dataclass
class SemisimplicityVerdict:
    semisimple: bool | None  # None: every probe was degenerate
    minimal_polynomial: list[Fraction] | None
    probe: tuple[Fraction, ...] | None
    tried: int

    @property
    def status(self) -> str:
        return {True: PASS, False: FAIL, None: UNDECIDABLE}[self.semisimple]

    def certificate(self) -> str:
        if self.minimal_polynomial is None:
            return ""
        x = sympy.Symbol("x")
        expr = sum(sympy.Rational(c.numerator, c.denominator) * x**i for i, c in enumerate(self.minimal_polynomial))
        return str(sympy.factor(expr))


def minimal_polynomial(m: la.Matrix) -> list[Fraction]:
    """Monic minimal polynomial, low degree first, from the first linear dependence among powers."""
    n = len(m)
    powers = [la.identity(n)]
    while True:
        vecs = [[x for row in p for x in row] for p in powers]
        if la.rank(vecs) < len(powers):
            break
        powers.append(la.mul(powers[-1], m))
    d = len(powers) - 1
    # solve sum_{i<d} c_i M^i = -M^d
    a = sympy.Matrix([[sympy.Rational(powers[i][r][c].numerator, powers[i][r][c].denominator) for i in range(d)] for r in range(n) for c in range(n)])
    b = sympy.Matrix([-sympy.Rational(powers[d][r][c].numerator, powers[d][r][c].denominator) for r in range(n) for c in range(n)])
    sol, params = a.gauss_jordan_solve(b)
    if params.shape[0]:
        raise ArithmeticError("minimal polynomial not unique")
    return [la.from_sympy_scalar(x) for x in sol] + [Fraction(1)]


def _squarefree(coeffs: Sequence[Fraction]) -> bool:
    x = sympy.Symbol("x")
    p = sympy.Poly([sympy.Rational(c.numerator, c.denominator) for c in reversed(coeffs)], x, domain="QQ")
    return sympy.gcd(p, p.diff(x)).degree() == 0


def is_semisimple(qp: QuantumProduct, probe: Sequence | None = None) -> SemisimplicityVerdict:
    """Squarefree minimal polynomial of degree N for multiplication by a probe.

    Probes: the caller's (if any), then ``(1, i, i^2, ...)`` for i = 1 .. N + 2.
    A non-squarefree minimal polynomial proves non-semisimplicity at once.
    """
    n = qp.rank
    probes = [tuple(Fraction(x) for x in probe)] if probe is not None else []
    probes += [tuple(Fraction(i) ** j for j in range(n)) for i in range(1, n + 3)]
    tried = 0
    for pr in probes:
        tried += 1
        mp = minimal_polynomial(qp.multiplication_matrix(pr))
        if not _squarefree(mp):
            return SemisimplicityVerdict(False, mp, pr, tried)
        if len(mp) - 1 == n:
            return SemisimplicityVerdict(True, mp, pr, tried)
    return SemisimplicityVerdict(None, None, None, tried)


# ---------------------------------------------------------------------------
# loop-group action restricted to genus zero


def act_genus0(element, theory, spec: TruncationSpec | None = None):
    """Transform a theory by SR data (or a group-element jet) and re-run the three checks on genus 0.

    Returns ``(theory, reports)``; the reports are computed on the eps-family
    of the transformed genus-0 potential.
    """
    from .tau import SRData, axiomatic_tau

    spec = spec or theory.spec
    spec = replace(spec, max_genus=0, rank=theory.rank)
    if isinstance(element, LaurentMatrix):
        element = SRData.from_product(element.with_order(spec.flow_order), theory.metric)
    if not isinstance(element, SRData):
        raise TypeError("element must be SRData or a Laurent-matrix jet")
    result = axiomatic_tau(theory, element, spec)
    family = result.jet.genus_family(0)
    reports = check_all(family, theory.metric)
    return replace(result.theory, reports=tuple(reports)), reports
