"""Quadratic Hamiltonians, their Weyl quantization, and quantized flows on tau-functions.

A tau-function ``exp(sum_g hbar^(g-1) F_g)`` is never materialized.  Every
operator acts on the genus-graded log: slot ``g`` of a family stores the
coefficient of ``hbar^(g-1)``.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from typing import Iterable, Mapping, Sequence

from .loop import Basis, DarbouxConvention, LaurentMatrix, LoopEndo, Metric, WindowError, canonical_window, is_inf_symplectic
from .series import (
    Monomial,
    Poly,
    TruncatedPotential,
    TruncationError,
    TruncationSpec,
    VarIndex,
    fmt_fraction,
    mono_mul,
    parse_fraction,
    unit_vector,
)

LVar = tuple[str, int, int]  # ("p" | "q", mu, k)


class NotNilpotentError(ArithmeticError):
    """An exact endpoint was requested for a flow that does not terminate."""


class HbarGradingError(ArithmeticError):
    """A log slot below hbar^-1 appeared."""


# ---------------------------------------------------------------------------
# quadratic Hamiltonians


def _pair(a: LVar, b: LVar) -> tuple[LVar, LVar]:
    return (a, b) if a <= b else (b, a)


class QuadHamiltonian:
    """Quadratic form in Darboux coordinates, stored as monomial coefficients.

    ``terms[(x, y)]`` with ``x <= y`` is the coefficient of the monomial
    ``x*y``; the ``pp``/``pq``/``qq`` views index by :data:`VarIndex` pairs,
    with ``pq[(a, b)]`` the coefficient of ``q_a p_b``.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple[LVar, LVar], Fraction] | None = None):
        out: dict[tuple[LVar, LVar], Fraction] = {}
        for (x, y), c in (terms or {}).items():
            key = _pair(x, y)
            out[key] = out.get(key, Fraction(0)) + Fraction(c)
        self.terms = {k: v for k, v in out.items() if v}

    @classmethod
    def from_parts(cls, pp: Mapping | None = None, pq: Mapping | None = None, qq: Mapping | None = None) -> "QuadHamiltonian":
        t: dict[tuple[LVar, LVar], Fraction] = {}

        def put(key, c):
            key = _pair(*key)
            t[key] = t.get(key, Fraction(0)) + Fraction(c)

        for (a, b), c in (pp or {}).items():
            put((("p", *a), ("p", *b)), c)
        for (a, b), c in (qq or {}).items():
            put((("q", *a), ("q", *b)), c)
        for (a, b), c in (pq or {}).items():
            put((("p", *b), ("q", *a)), c)
        return cls(t)

    def _view(self, kinds: tuple[str, str]) -> dict[tuple[VarIndex, VarIndex], Fraction]:
        out = {}
        for (x, y), c in self.terms.items():
            if (x[0], y[0]) == kinds:
                out[(x[1:], y[1:])] = c
        return out

    @property
    def pp(self) -> dict[tuple[VarIndex, VarIndex], Fraction]:
        return self._view(("p", "p"))

    @property
    def qq(self) -> dict[tuple[VarIndex, VarIndex], Fraction]:
        return self._view(("q", "q"))

    @property
    def pq(self) -> dict[tuple[VarIndex, VarIndex], Fraction]:
        # stored as (p_b, q_a) because "p" < "q"
        return {(y, x): c for (x, y), c in self._view(("p", "q")).items()}

    def __add__(self, other: "QuadHamiltonian") -> "QuadHamiltonian":
        t = dict(self.terms)
        for k, c in other.terms.items():
            t[k] = t.get(k, 0) + c
        return QuadHamiltonian(t)

    def scale(self, c) -> "QuadHamiltonian":
        return QuadHamiltonian({k: Fraction(c) * v for k, v in self.terms.items()})

    def __neg__(self) -> "QuadHamiltonian":
        return self.scale(-1)

    def __sub__(self, other: "QuadHamiltonian") -> "QuadHamiltonian":
        return self + (-other)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, QuadHamiltonian) and self.terms == other.terms

    def __hash__(self) -> int:
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def restrict(self, max_descendant: int) -> "QuadHamiltonian":
        return QuadHamiltonian({k: c for k, c in self.terms.items() if max(k[0][2], k[1][2]) <= max_descendant})

    def gradient(self, var: LVar) -> dict[LVar, Fraction]:
        """Partial derivative, a linear form."""
        out: dict[LVar, Fraction] = {}
        for (x, y), c in self.terms.items():
            if x == y == var:
                out[x] = out.get(x, 0) + 2 * c
            elif x == var:
                out[y] = out.get(y, 0) + c
            elif y == var:
                out[x] = out.get(x, 0) + c
        return out

    def variables(self) -> set[LVar]:
        return {v for k in self.terms for v in k}

    def __repr__(self) -> str:
        parts = [f"{fmt_fraction(c)}*{x[0]}{x[1]}_{x[2]}*{y[0]}{y[1]}_{y[2]}" for (x, y), c in sorted(self.terms.items())]
        return "QuadHamiltonian(" + (" + ".join(parts) or "0") + ")"


def quadratic_hamiltonian(a: LoopEndo, conv: DarbouxConvention, *, check: bool = True, complete: bool = True) -> QuadHamiltonian:
    """``P(A)(f) = 1/2 Omega(A f, f)`` in the Darboux coordinates of ``conv``.

    All terms whose variables have descendent index at most K are produced.
    Raises :class:`WindowError` when K is too small for the pp or qq part to be
    complete, and :class:`ValueError` when A is not infinitesimally symplectic.
    """
    K = conv.max_descendant
    window = canonical_window(K)
    if a.rank != conv.rank:
        raise ValueError("rank mismatch")
    sub = a.with_window(window) if a.window != window else a
    if check and not is_inf_symplectic(sub, conv.metric, window):
        raise ValueError("A is not infinitesimally symplectic")
    shifts = [t[1] - s[1] for s, img in sub.columns.items() for t in img]
    if shifts and complete:
        if max(shifts) - 1 > K or -min(shifts) - 1 > K:
            raise WindowError(f"descendent bound {K} too small for a z-shift range {min(shifts)}..{max(shifts)}")
    coords = [("q", mu, k) for k in range(K + 1) for mu in range(conv.rank)] + [
        ("p", mu, k) for k in range(K + 1) for mu in range(conv.rank)
    ]
    # B(x, y) = Omega(A e_x, e_y); Omega(e_q, e_p) = -1, Omega(e_p, e_q) = +1
    images = {}
    for x in coords:
        img: dict[Basis, Fraction] = {}
        for b, c in conv.basis_vector(x).items():
            for t, v in sub.column(b).items():
                img[t] = img.get(t, 0) + c * v
        images[x] = conv.coordinates(img)
    terms: dict[tuple[LVar, LVar], Fraction] = {}
    for i, x in enumerate(coords):
        ax = images[x]
        for y in coords[i:]:
            dual = ("p", y[1], y[2]) if y[0] == "q" else ("q", y[1], y[2])
            b = ax.get(dual, Fraction(0)) * (1 if y[0] == "q" else -1)
            if b:
                terms[_pair(x, y)] = b if x != y else b / 2
    return QuadHamiltonian(terms)


def poisson_bracket(p1: QuadHamiltonian, p2: QuadHamiltonian) -> QuadHamiltonian:
    """``sum_v dP1/dp_v dP2/dq_v - dP2/dp_v dP1/dq_v``."""
    names = {(v[1], v[2]) for v in p1.variables() | p2.variables()}
    out: dict[tuple[LVar, LVar], Fraction] = {}
    for mu, k in names:
        p, q = ("p", mu, k), ("q", mu, k)
        for sign, (f, g) in ((1, (p1.gradient(p), p2.gradient(q))), (-1, (p2.gradient(p), p1.gradient(q)))):
            for x, a in f.items():
                for y, b in g.items():
                    key = _pair(x, y)
                    out[key] = out.get(key, 0) + sign * a * b
    return QuadHamiltonian(out)


def cocycle(p1: QuadHamiltonian, p2: QuadHamiltonian) -> Fraction:
    """Central term of ``[P1^, P2^] - {P1, P2}^`` for Darboux-canonical coordinates."""
    pp1, qq1, pp2, qq2 = p1.pp, p1.qq, p2.pp, p2.qq
    total = Fraction(0)
    for key, c in pp1.items():
        if key in qq2:
            total += c * qq2[key] * (2 if key[0] == key[1] else 1)
    for key, c in qq1.items():
        if key in pp2:
            total -= c * pp2[key] * (2 if key[0] == key[1] else 1)
    return total


# ---------------------------------------------------------------------------
# Fock operators

TermKey = tuple[int, Monomial, Monomial]  # (hbar power, q-monomial, d-monomial)


class FockOperator:
    """``sum c hbar^h q^Q d^D`` with every multiplication left of every derivative.

    ``window`` is the descendent bound below which the term list is complete
    (``None`` for operators that are exactly what they say).  ``frame`` names
    the variables the multipliers are written in.
    """

    __slots__ = ("terms", "window", "frame")

    def __init__(self, terms: Mapping[TermKey, Fraction] | None = None, window: int | None = None, frame: str = "q"):
        out: dict[TermKey, Fraction] = {}
        for (h, qm, dm), c in (terms or {}).items():
            key = (int(h), tuple(sorted(qm)), tuple(sorted(dm)))
            out[key] = out.get(key, Fraction(0)) + Fraction(c)
        self.terms = {k: v for k, v in out.items() if v}
        self.window = window
        self.frame = frame

    @classmethod
    def constant(cls, c, window: int | None = None) -> "FockOperator":
        return cls({(0, (), ()): Fraction(c)}, window)

    def _combine_window(self, other: "FockOperator") -> int | None:
        if self.window is None:
            return other.window
        if other.window is None:
            return self.window
        return min(self.window, other.window)

    def __add__(self, other: "FockOperator") -> "FockOperator":
        if self.frame != other.frame:
            raise TruncationError("operator frame mismatch")
        t = dict(self.terms)
        for k, c in other.terms.items():
            t[k] = t.get(k, 0) + c
        return FockOperator(t, self._combine_window(other), self.frame)

    def scale(self, c) -> "FockOperator":
        return FockOperator({k: Fraction(c) * v for k, v in self.terms.items()}, self.window, self.frame)

    def __neg__(self) -> "FockOperator":
        return self.scale(-1)

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return self + (-other)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FockOperator) and self.frame == other.frame and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.frame, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def constant_term(self) -> Fraction:
        return sum((c for (h, qm, dm), c in self.terms.items() if not qm and not dm), Fraction(0))

    def without_constant(self) -> "FockOperator":
        return FockOperator({k: c for k, c in self.terms.items() if k[1] or k[2]}, self.window, self.frame)

    def max_index(self) -> int:
        return max((v[1] for (_, qm, dm) in self.terms for v in qm + dm), default=-1)

    def reach(self) -> int:
        """Largest spread of descendent indices inside one term."""
        best = 0
        for _, qm, dm in self.terms:
            ks = [v[1] for v in qm + dm]
            if ks:
                best = max(best, max(ks) - min(ks))
        return best

    def restrict(self, max_descendant: int) -> "FockOperator":
        """Keep terms whose indices are all at most ``max_descendant``."""
        keep = {k: c for k, c in self.terms.items() if all(v[1] <= max_descendant for v in k[1] + k[2])}
        w = max_descendant if self.window is None else min(self.window, max_descendant)
        return FockOperator(keep, w, self.frame)

    def with_window(self, window: int | None) -> "FockOperator":
        return FockOperator(self.terms, window, self.frame)

    def order(self) -> int:
        return max((len(qm) + len(dm) for _, qm, dm in self.terms), default=0)

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (h, qm, dm), c in self:
            factors = [f"hbar^{h}"] if h else []
            factors += [f"{self.frame}{mu}_{k}" for mu, k in qm]
            factors += [f"d/d{self.frame}{mu}_{k}" for mu, k in dm]
            parts.append(fmt_fraction(c) + "".join("*" + f for f in factors))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"FockOperator({self.to_text()})"

    def to_json(self) -> dict:
        return {
            "frame": self.frame,
            "window": self.window,
            "terms": [[h, [list(v) for v in qm], [list(v) for v in dm], fmt_fraction(c)] for (h, qm, dm), c in self],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: Mapping) -> "FockOperator":
        terms: dict[TermKey, Fraction] = {}
        for h, qm, dm, c in data["terms"]:
            key = (int(h), tuple(sorted(tuple(v) for v in qm)), tuple(sorted(tuple(v) for v in dm)))
            terms[key] = terms.get(key, Fraction(0)) + parse_fraction(c)
        return cls(terms, data.get("window"), data.get("frame", "q"))


def weyl_quantize(p: QuadHamiltonian, window: int | None = None) -> FockOperator:
    """pp -> hbar d d, q p -> q d, qq -> q q / hbar."""
    terms: dict[TermKey, Fraction] = {}
    for (a, b), c in p.pp.items():
        terms[(1, (), tuple(sorted((a, b))))] = c
    for (a, b), c in p.pq.items():
        terms[(0, (a,), (b,))] = c
    for (a, b), c in p.qq.items():
        terms[(-1, tuple(sorted((a, b))), ())] = c
    return FockOperator(terms, window)


def _normal_product(a: TermKey, b: TermKey) -> dict[TermKey, Fraction]:
    """``(q^Q1 d^D1)(q^Q2 d^D2)`` brought to normal order."""
    h1, q1, d1 = a
    h2, q2, d2 = b
    alpha, beta = Counter(d1), Counter(q2)
    common = [v for v in alpha if v in beta]
    # d^alpha q^beta = sum_gamma prod_v C(alpha_v, g) C(beta_v, g) g! q^(beta-gamma) d^(alpha-gamma)
    partial: list[tuple[Counter, Fraction]] = [(Counter(), Fraction(1))]
    for v in common:
        nxt = []
        for gam, c in partial:
            for g in range(min(alpha[v], beta[v]) + 1):
                gg = Counter(gam)
                gg[v] = g
                nxt.append((gg, c * comb(alpha[v], g) * comb(beta[v], g) * factorial(g)))
        partial = nxt
    out: dict[TermKey, Fraction] = {}
    for gam, c in partial:
        qrest = list((beta - gam).elements())
        drest = list((alpha - gam).elements())
        key = (h1 + h2, tuple(sorted(q1 + tuple(qrest))), tuple(sorted(tuple(drest) + d2)))
        out[key] = out.get(key, 0) + c
    return out


def operator_product(o1: FockOperator, o2: FockOperator) -> FockOperator:
    if o1.frame != o2.frame:
        raise TruncationError("operator frame mismatch")
    out: dict[TermKey, Fraction] = {}
    for k1, c1 in o1.terms.items():
        for k2, c2 in o2.terms.items():
            for k, c in _normal_product(k1, k2).items():
                out[k] = out.get(k, 0) + c1 * c2 * c
    return FockOperator(out, o1._combine_window(o2), o1.frame)


def operator_commutator(o1: FockOperator, o2: FockOperator) -> FockOperator:
    """Normal-ordered ``O1 O2 - O2 O1`` for operators of order at most two.

    With truncated inputs the result is complete only for terms whose indices
    stay ``reach`` below the inputs' window; the returned window says so.
    """
    for o in (o1, o2):
        if any(len(qm) > 2 or len(dm) > 2 for _, qm, dm in o.terms):
            raise ValueError("operator has a term of order above two")
    out = operator_product(o1, o2) - operator_product(o2, o1)
    w = o1._combine_window(o2)
    if w is not None:
        w -= max(o1.reach(), o2.reach())
        if w < 0:
            raise WindowError("commutator has no complete sub-window")
    return out.with_window(w)


def quantize_endo(a: LoopEndo, conv: DarbouxConvention, *, check: bool = True) -> FockOperator:
    return weyl_quantize(quadratic_hamiltonian(a, conv, check=check), conv.max_descendant)


def shift_operator_frame(op: FockOperator, unit: Sequence | None = None) -> FockOperator:
    """Rewrite the multipliers of a q-frame operator in t-frame variables (``q_1 = t_1 - unit``)."""
    if op.frame == "t":
        return op
    rank = 1 + max((v[0] for _, qm, dm in op.terms for v in qm + dm), default=0)
    u = unit_vector(len(unit) if unit is not None else rank, unit)
    out: dict[TermKey, Fraction] = {}
    for (h, qm, dm), c in op.terms.items():
        partial: dict[Monomial, Fraction] = {(): c}
        for v in qm:
            s = -u[v[0]] if v[1] == 1 and v[0] < len(u) else 0
            nxt: dict[Monomial, Fraction] = {}
            for m, x in partial.items():
                nxt[mono_mul(m, (v,))] = nxt.get(mono_mul(m, (v,)), 0) + x
                if s:
                    nxt[m] = nxt.get(m, 0) + x * s
            partial = nxt
        for m, x in partial.items():
            out[(h, m, dm)] = out.get((h, m, dm), 0) + x
    return FockOperator(out, op.window, "t")


# ---------------------------------------------------------------------------
# action on genus-graded logs


@dataclass(frozen=True)
class AppliedValue:
    """``(O tau)/tau`` as an hbar-graded family; slot g holds the hbar^(g-1) coefficient.

    ``spec`` is the box on which every stored coefficient is exact.
    ``dropped_genus`` flags contributions above the genus bound that were cut.
    """

    by_genus: tuple[Poly, ...]
    spec: TruncationSpec
    dropped_genus: bool = False

    def slot(self, g: int) -> Poly:
        return self.by_genus[g]

    def hbar_power(self, g: int) -> Poly:
        return self.by_genus[g + 1]

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.by_genus)

    def nonzero(self) -> list[tuple[int, Monomial, Fraction]]:
        return [(g - 1, m, c) for g, p in enumerate(self.by_genus) for m, c in p]


@dataclass(frozen=True)
class WindowLoss:
    degree: int
    descendant: int


def _term_loss(op: FockOperator, max_genus: int) -> WindowLoss:
    lam = 0
    for (h, qm, dm), _ in op.terms.items():
        if not dm:
            continue
        if len(dm) == 1 or h <= max_genus:
            lam = max(lam, len(dm) - len(qm))
        if len(dm) == 2:
            lam = max(lam, 1 - len(qm))
    sigma = 0
    for (h, qm, dm), _ in op.terms.items():
        if qm and dm:
            sigma = max(sigma, max(v[1] for v in dm) - min(v[1] for v in qm))
    return WindowLoss(lam, sigma)


def window_loss(op: FockOperator, max_genus: int, unit: Sequence | None = None, frame: str = "q") -> WindowLoss:
    """Degree and descendent shrinkage of the exact box after one application."""
    sigma = _term_loss(op, max_genus).descendant
    eff = shift_operator_frame(op, unit) if frame == "t" else op
    return WindowLoss(_term_loss(eff, max_genus).degree, sigma)


class _Applier:
    """One operator prepared for repeated application to potentials on a fixed spec."""

    def __init__(self, op: FockOperator, spec: TruncationSpec, frame: str, unit: Sequence | None):
        if op.frame == "t" and frame == "q":
            raise TruncationError("t-frame operator applied to a q-frame potential")
        loss = window_loss(op, spec.max_genus, unit, frame)
        eff = shift_operator_frame(op, unit) if frame == "t" and op.frame == "q" else op
        K = spec.max_descendant
        k_out = K
        if op.window is not None:
            if op.window < K:
                raise WindowError(f"operator complete only up to k={op.window}, potential needs {K}")
            if frame == "t" and op.frame == "q" and op.window < 1 + loss.descendant:
                raise WindowError("operator window too small for the dilaton-shifted frame")
            k_out = min(k_out, op.window - loss.descendant)
        terms = []
        for (h, qm, dm), c in eff.terms.items():
            if any(v[1] > K or v[0] >= spec.rank for v in qm):
                continue
            if any(v[1] > K for v in dm):
                if not qm:
                    raise WindowError(f"derivative term {dm} reaches beyond k={K}")
                k_out = min(k_out, max(v[1] for v in qm) - 1)
                continue
            terms.append((h, qm, dm, c))
        if k_out < 0 or spec.max_degree - loss.degree < 0:
            raise WindowError("no exact box left after applying the operator")
        self.terms = terms
        self.spec = spec
        self.frame = frame
        self.out_spec = TruncationSpec(spec.rank, k_out, spec.max_degree - loss.degree, spec.max_genus, spec.flow_order)
        self.dropped = False

    def _slot(self, slots: list[Poly], g: int, p: Poly) -> None:
        if g < 0:
            if not p.restrict(self.out_spec).is_zero():
                raise HbarGradingError("log acquired an hbar power below -1")
            return
        if g > self.spec.max_genus:
            if not p.restrict(self.out_spec).is_zero():
                self.dropped = True
            return
        slots[g] = slots[g] + p

    def blank(self) -> list[Poly]:
        return [Poly.zero(self.spec, self.frame) for _ in range(self.spec.max_genus + 1)]

    def free(self, slots: list[Poly]) -> None:
        """Terms without derivatives: multiplication operators and constants."""
        for h, qm, dm, c in self.terms:
            if not dm:
                self._slot(slots, h + 1, Poly._raw({qm: c}, self.spec, self.frame) if len(qm) <= self.spec.max_degree else Poly.zero(self.spec, self.frame))

    def linear(self, slots: list[Poly], family: Sequence[Poly]) -> None:
        for h, qm, dm, c in self.terms:
            if not dm:
                continue
            for g, f in enumerate(family):
                if f.is_zero():
                    continue
                d = f
                for v in dm:
                    d = d.diff(v)
                if d:
                    self._slot(slots, g + h, d.mul_monomial(qm, c))

    def bilinear(self, slots: list[Poly], fam1: Sequence[Poly], fam2: Sequence[Poly]) -> None:
        d1cache: dict[tuple[int, VarIndex], Poly] = {}
        d2cache: dict[tuple[int, VarIndex], Poly] = {}

        def der(cache, fam, g, v):
            key = (g, v)
            if key not in cache:
                cache[key] = fam[g].diff(v)
            return cache[key]

        for h, qm, dm, c in self.terms:
            if len(dm) != 2:
                continue
            a, b = dm
            for g1, f1 in enumerate(fam1):
                if f1.is_zero():
                    continue
                da = der(d1cache, fam1, g1, a)
                for g2, f2 in enumerate(fam2):
                    slot = g1 + g2 - 1 + h
                    if slot > self.spec.max_genus or f2.is_zero():
                        if slot > self.spec.max_genus and not f2.is_zero():
                            self.dropped = True
                        continue
                    prod = da * der(d2cache, fam2, g2, b)
                    if prod:
                        self._slot(slots, slot, prod.mul_monomial(qm, c))

    def finish(self, slots: list[Poly]) -> tuple[Poly, ...]:
        return tuple(p.restrict(self.out_spec) for p in slots)


def _family(tau: TruncatedPotential) -> list[Poly]:
    return [tau.genus(g) for g in range(tau.spec.max_genus + 1)]


def apply_fock_operator(op: FockOperator, tau: TruncatedPotential, unit: Sequence | None = None) -> AppliedValue:
    """``(O tau)/tau`` through the log of ``tau``.

    A t-frame potential is handled by shifting the operator's multipliers to
    the t-frame; the exact box of the result is recorded in its ``spec``.
    """
    ap = _Applier(op, tau.spec, tau.frame, unit)
    slots = ap.blank()
    fam = _family(tau)
    ap.free(slots)
    ap.linear(slots, fam)
    ap.bilinear(slots, fam, fam)
    return AppliedValue(ap.finish(slots), ap.out_spec, ap.dropped)


# ---------------------------------------------------------------------------
# flows


@dataclass(frozen=True)
class PotentialJet:
    """eps-Taylor coefficients ``orders[n]`` of a potential family, all on one spec."""

    orders: tuple[TruncatedPotential, ...]
    spec: TruncationSpec
    stabilized: bool = False
    dropped_genus: bool = False

    def __post_init__(self) -> None:
        for p in self.orders:
            if p.spec != self.spec:
                raise TruncationError("jet orders on different specs")

    @classmethod
    def constant(cls, tau: TruncatedPotential, eps_order: int) -> "PotentialJet":
        zero = TruncatedPotential.zero(tau.spec, tau.frame)
        return cls((tau,) + (zero,) * eps_order, tau.spec)

    @property
    def eps_order(self) -> int:
        return len(self.orders) - 1

    @property
    def frame(self) -> str:
        return self.orders[0].frame

    def order(self, n: int) -> TruncatedPotential:
        return self.orders[n]

    def restrict(self, spec: TruncationSpec) -> "PotentialJet":
        return PotentialJet(tuple(p.restrict(spec) for p in self.orders), spec, self.stabilized, self.dropped_genus)

    def genus_family(self, g: int) -> list[Poly]:
        return [p.genus(g) for p in self.orders]

    def endpoint(self) -> TruncatedPotential:
        """Value at eps = 1; only meaningful when the jet is stabilized."""
        if not self.stabilized:
            raise NotNilpotentError("flow is not nilpotent at this truncation; no exact endpoint")
        out = self.orders[0]
        for p in self.orders[1:]:
            out = out + p
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PotentialJet):
            return NotImplemented
        return self.spec == other.spec and all(
            a.by_genus == b.by_genus for a, b in zip(self.orders, other.orders)
        ) and len(self.orders) == len(other.orders)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "stabilized": self.stabilized,
            "orders": [p.to_json() for p in self.orders],
        }


def _delta(mono: Monomial, g: int) -> int:
    return 3 * g - 3 + sum(1 - k for _, k in mono)


def _delta_weights(ops: Sequence[FockOperator]) -> list[int]:
    ws = []
    for op in ops:
        for (h, qm, dm), _ in op.terms.items():
            if not qm and not dm:
                ws.append(3 * h)
            else:
                ws.append(3 * h + sum(1 - k for _, k in qm) - sum(1 - k for _, k in dm))
    return ws


def _box_delta_range(spec: TruncationSpec) -> tuple[int, int]:
    hi = 3 * spec.max_genus - 3 + spec.max_degree
    lo = -3 + min(0, spec.max_degree * (1 - spec.max_descendant))
    return lo, hi


def _stabilization(ops_by_eps: Sequence[FockOperator], base: PotentialJet, out_spec: TruncationSpec, eps_order: int) -> bool:
    """Certify that eps-orders beyond ``eps_order`` vanish on the output box.

    Uses the grading ``delta = 3g - 3 - sum(k_i - 1)``: each application of a
    generator of pure positive (negative) weight moves delta up (down) by at
    least one, so once the eps order exceeds the box's delta range nothing
    survives.  Only single-order generators on delta-homogeneous bases with
    delta = 0 qualify.
    """
    if any(not op.is_zero() for op in ops_by_eps[2:]) or len(ops_by_eps) < 2:
        return False
    if any(not p.is_zero() for p in base.orders[1:]):
        return False
    for g, poly in enumerate(base.orders[0].by_genus):
        if any(_delta(m, g) != 0 for m in poly.terms):
            return False
    ws = _delta_weights([ops_by_eps[1]])
    if not ws:
        return True
    lo, hi = _box_delta_range(out_spec)
    if min(ws) >= 1:
        return eps_order + 1 > hi
    if max(ws) <= -1:
        return -(eps_order + 1) < lo
    return False


def flow_operators(
    ops_by_eps: Sequence[FockOperator],
    tau: TruncatedPotential | PotentialJet,
    eps_order: int,
    unit: Sequence | None = None,
) -> PotentialJet:
    """log of ``exp(X(eps)) tau`` with ``X = sum_n eps^n ops_by_eps[n]`` (``ops_by_eps[0]`` must vanish).

    Computed as ``H(s) = sum_m s^m H_m`` with ``H_(m+1) = [Phi(H)]_m / (m + 1)``,
    where Phi is the action of X on a log; eps-orders are convolved and H_m is
    O(eps^m), so m <= eps_order suffices.  Each step shrinks the exact box.
    """
    base = tau if isinstance(tau, PotentialJet) else PotentialJet.constant(tau, eps_order)
    if base.eps_order < eps_order:
        raise ValueError("base jet shorter than the requested order")
    base = PotentialJet(base.orders[: eps_order + 1], base.spec, base.stabilized, base.dropped_genus)
    ops = list(ops_by_eps[: eps_order + 1])
    if ops and not ops[0].is_zero():
        raise ValueError("generator must vanish at eps = 0")
    ops = [op for op in ops] + [FockOperator()] * (eps_order + 1 - len(ops))
    frame = base.frame
    spec = base.spec
    # loss per step: union over eps pieces
    lam = sig = 0
    for op in ops[1:]:
        if op.is_zero():
            continue
        wl = window_loss(op, spec.max_genus, unit, frame)
        lam, sig = max(lam, wl.degree), max(sig, wl.descendant)
    nonzero = any(not op.is_zero() for op in ops[1:])
    steps = eps_order if nonzero else 0
    specs = [spec]
    for _ in range(steps):
        specs.append(specs[-1].shrink(lam, sig))
    if not nonzero:
        return PotentialJet(base.orders, spec, True, False)

    # H[m][n]: list of genus Polys at s^m eps^n on specs[m]
    G = spec.max_genus
    H: list[list[list[Poly]]] = [[list(base.orders[n].by_genus) for n in range(eps_order + 1)]]
    dropped = False
    for m in range(steps):
        in_spec, out_spec = specs[m], specs[m + 1]
        appliers = {}
        for n, op in enumerate(ops):
            if n == 0 or op.is_zero():
                continue
            ap = _Applier(op, in_spec, frame, unit)
            if not ap.out_spec.contains(out_spec):
                raise WindowError("operator loses more window than budgeted")
            appliers[n] = ap
        restricted = [[[p.restrict(in_spec) for p in H[i][n]] for n in range(eps_order + 1)] for i in range(m + 1)]
        new = [[Poly.zero(out_spec, frame) for _ in range(G + 1)] for _ in range(eps_order + 1)]
        for n_op, ap in appliers.items():
            for n_tot in range(n_op, eps_order + 1):
                slots = ap.blank()
                if m == 0 and n_tot == n_op:
                    ap.free(slots)
                ap.linear(slots, restricted[m][n_tot - n_op])
                for i in range(m + 1):
                    j = m - i
                    for n1 in range(n_tot - n_op + 1):
                        n2 = n_tot - n_op - n1
                        ap.bilinear(slots, restricted[i][n1], restricted[j][n2])
                for g in range(G + 1):
                    new[n_tot][g] = new[n_tot][g] + slots[g].restrict(out_spec)
                dropped = dropped or ap.dropped
        H.append([[p.scale(Fraction(1, m + 1)) for p in new[n]] for n in range(eps_order + 1)])

    final_spec = specs[-1]
    orders = []
    for n in range(eps_order + 1):
        acc = [Poly.zero(final_spec, frame) for _ in range(G + 1)]
        for m in range(len(H)):
            for g in range(G + 1):
                acc[g] = acc[g] + H[m][n][g].restrict(final_spec)
        orders.append(TruncatedPotential(tuple(acc), final_spec))
    out = PotentialJet(tuple(orders), final_spec, False, dropped or base.dropped_genus)
    stab = _stabilization(ops, base, final_spec, eps_order)
    return PotentialJet(out.orders, final_spec, stab, out.dropped_genus)


def apply_operator_jet(ops_by_eps: Sequence[FockOperator], jet: PotentialJet, unit: Sequence | None = None) -> list[AppliedValue]:
    """eps-coefficients of ``(O(eps) tau(eps)) / tau(eps)`` for an operator jet and a potential jet."""
    E = jet.eps_order
    spec, frame = jet.spec, jet.frame
    appliers = {n: _Applier(op, spec, frame, unit) for n, op in enumerate(ops_by_eps[: E + 1]) if not op.is_zero()}
    if not appliers:
        return [AppliedValue(tuple(Poly.zero(spec, frame) for _ in range(spec.max_genus + 1)), spec) for _ in range(E + 1)]
    out_spec = None
    for ap in appliers.values():
        out_spec = ap.out_spec if out_spec is None else TruncationSpec(
            spec.rank,
            min(out_spec.max_descendant, ap.out_spec.max_descendant),
            min(out_spec.max_degree, ap.out_spec.max_degree),
            spec.max_genus,
            spec.flow_order,
        )
    fams = [list(p.by_genus) for p in jet.orders]
    values = []
    for n in range(E + 1):
        acc = [Poly.zero(out_spec, frame) for _ in range(spec.max_genus + 1)]
        dropped = False
        for a, ap in appliers.items():
            if a > n:
                continue
            slots = ap.blank()
            if a == n:
                ap.free(slots)
            ap.linear(slots, fams[n - a])
            for b1 in range(n - a + 1):
                ap.bilinear(slots, fams[b1], fams[n - a - b1])
            acc = [x + y.restrict(out_spec) for x, y in zip(acc, slots)]
            dropped = dropped or ap.dropped
        values.append(AppliedValue(tuple(acc), out_spec, dropped))
    return values


def quantize_jet(x: LaurentMatrix, metric: Metric, max_descendant: int) -> list[FockOperator]:
    """Quantize each eps-order of a Laurent-matrix jet on the canonical window."""
    conv = DarbouxConvention(metric, max_descendant)
    window = canonical_window(max_descendant)
    ops = []
    for n in range(x.eps_order + 1):
        part = x.eps_part(n)
        if not part:
            ops.append(FockOperator({}, max_descendant))
            continue
        ops.append(quantize_endo(LoopEndo.multiplication(part, x.rank, window), conv))
    return ops


def flow(
    a: LoopEndo | LaurentMatrix,
    tau: TruncatedPotential | PotentialJet,
    eps_order: int,
    metric: Metric | None = None,
    *,
    endpoint: bool = False,
) -> PotentialJet | TruncatedPotential:
    """eps-jet of ``exp(eps A^) tau`` (or ``exp(X(eps)^) tau`` for a Laurent jet X).

    With ``endpoint=True`` the value at eps = 1 is returned, which requires the
    flow to stabilize on the output box.
    """
    spec = tau.spec
    rank = spec.rank
    metric = metric or Metric.identity(rank)
    K = spec.max_descendant
    if isinstance(a, LaurentMatrix):
        ops = quantize_jet(a, metric, K)
    else:
        conv = DarbouxConvention(metric, K)
        ops = [FockOperator({}, K), quantize_endo(a, conv)]
    jet = flow_operators(ops, tau, eps_order, metric.unit)
    if endpoint:
        return jet.endpoint()
    return jet
