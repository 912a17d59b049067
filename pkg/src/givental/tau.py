"""Witten-Kontsevich correlators, point and N-point potentials, and the loop-group action on theories.

The correlator recursion is memoized with :func:`functools.lru_cache`.  The
cache is filled from a single thread of control; CPython's ``lru_cache`` is
safe to read concurrently, but the engine never fills it in parallel.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement
from math import factorial, prod
from typing import Iterable, Mapping, Sequence

from . import _linalg as la
from .loop import LaurentMatrix, Metric, birkhoff_factorize, is_symplectic
from .quantization import (
    FockOperator,
    PotentialJet,
    _Applier,
    flow_operators,
    quantize_jet,
    window_loss,
)
from .series import Monomial, Poly, VarIndex, TruncatedPotential, TruncationError, TruncationSpec, fmt_fraction, parse_fraction

CorrelatorKey = tuple[int, tuple[int, ...]]


# ---------------------------------------------------------------------------
# correlators of the point


def _dfact(n: int) -> int:
    """Double factorial with (-1)!! = 1."""
    return prod(range(n, 0, -2)) if n > 0 else 1


@lru_cache(maxsize=None)
def wk_correlator(g: int, ks: tuple[int, ...]) -> Fraction:
    """``<tau_k1 ... tau_kn>_g`` for a sorted tuple ``ks``.

    Strips tau_0 (string equation), then tau_1 (dilaton equation), then
    applies the Virasoro recursion on the largest index.
    """
    n = len(ks)
    if g < 0 or n == 0 or 2 * g - 2 + n <= 0 or any(k < 0 for k in ks):
        return Fraction(0)
    if sum(ks) != 3 * g - 3 + n:
        return Fraction(0)
    if g == 0 and ks == (0, 0, 0):
        return Fraction(1)
    if g == 1 and ks == (1,):
        return Fraction(1, 24)
    if ks[0] == 0:
        rest = list(ks[1:])
        total = Fraction(0)
        for j, k in enumerate(rest):
            if k > 0:
                nxt = rest[:j] + [k - 1] + rest[j + 1 :]
                total += wk_correlator(g, tuple(sorted(nxt)))
        return total
    if 1 in ks:
        rest = list(ks)
        rest.remove(1)
        return (2 * g - 2 + n - 1) * wk_correlator(g, tuple(rest))
    top = ks[-1]
    k = top - 1
    others = list(ks[:-1])
    total = Fraction(0)
    for j, d in enumerate(others):
        nxt = others[:j] + [d + k] + others[j + 1 :]
        total += Fraction(_dfact(2 * k + 2 * d + 1), _dfact(2 * d - 1)) * wk_correlator(g, tuple(sorted(nxt)))
    m = len(others)
    for r in range(k):
        s = k - 1 - r
        w = Fraction(_dfact(2 * r + 1) * _dfact(2 * s + 1), 2)
        total += w * wk_correlator(g - 1, tuple(sorted(others + [r, s])))
        for mask in range(1 << m):
            left = [others[i] for i in range(m) if mask >> i & 1]
            right = [others[i] for i in range(m) if not mask >> i & 1]
            for g1 in range(g + 1):
                a = wk_correlator(g1, tuple(sorted(left + [r])))
                if a:
                    total += w * a * wk_correlator(g - g1, tuple(sorted(right + [s])))
    return total / _dfact(2 * k + 3)


def _stable_keys(spec: TruncationSpec) -> list[CorrelatorKey]:
    keys = []
    for g in range(spec.max_genus + 1):
        for n in range(1, spec.max_degree + 1):
            if 2 * g - 2 + n <= 0:
                continue
            for ks in combinations_with_replacement(range(spec.max_descendant + 1), n):
                if sum(ks) == 3 * g - 3 + n:
                    keys.append((g, ks))
    return keys


@dataclass(frozen=True)
class CorrelatorTable:
    """Exact correlators keyed by ``(g, sorted ks)``; absent keys are zero."""

    entries: Mapping[CorrelatorKey, Fraction]
    spec: TruncationSpec

    def __post_init__(self) -> None:
        for (g, ks), _ in self.entries.items():
            if tuple(sorted(ks)) != ks:
                raise ValueError("correlator key must be sorted")
            if sum(ks) != 3 * g - 3 + len(ks):
                raise ValueError(f"entry {g, ks} violates the dimension constraint")

    def __getitem__(self, key: CorrelatorKey) -> Fraction:
        g, ks = key
        return self.entries.get((g, tuple(sorted(ks))), Fraction(0))

    def __len__(self) -> int:
        return len(self.entries)

    def select(self, genus: int | None = None, max_n: int | None = None) -> "CorrelatorTable":
        keep = {
            (g, ks): v
            for (g, ks), v in self.entries.items()
            if (genus is None or g == genus) and (max_n is None or len(ks) <= max_n)
        }
        return CorrelatorTable(keep, self.spec)

    def lines(self) -> list[str]:
        rows = sorted(self.entries.items(), key=lambda kv: (kv[0][0], len(kv[0][1]), kv[0][1]))
        return [f"{g}; {','.join(map(str, ks))}; {fmt_fraction(v)}" for (g, ks), v in rows]

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "entries": [[g, list(ks), fmt_fraction(v)] for (g, ks), v in sorted(self.entries.items(), key=lambda kv: (kv[0][0], len(kv[0][1]), kv[0][1]))],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "CorrelatorTable":
        ent = {(int(g), tuple(sorted(int(k) for k in ks))): parse_fraction(v) for g, ks, v in data["entries"]}
        return cls(ent, TruncationSpec.from_json(data["spec"]))

    @classmethod
    def from_text(cls, text: str, spec: TruncationSpec) -> "CorrelatorTable":
        ent = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            g, ks, v = (part.strip() for part in line.split(";"))
            ent[(int(g), tuple(sorted(int(k) for k in ks.split(",") if k)))] = parse_fraction(v)
        return cls(ent, spec)


def point_correlators(spec: TruncationSpec) -> CorrelatorTable:
    """All stable point correlators with g <= G, n <= D and k <= K."""
    if spec.max_genus > 12 or spec.max_degree > 24:
        raise ValueError("bounds beyond the supported range (G <= 12, D <= 24)")
    return CorrelatorTable({key: wk_correlator(*key) for key in _stable_keys(spec)}, spec)


def _sym_factor(ks: Sequence[int]) -> int:
    return prod(factorial(c) for c in Counter(ks).values())


def potentials_from_table(table: CorrelatorTable, spec: TruncationSpec, rank: int = 1) -> TruncatedPotential:
    """``F_g = sum <prod tau_k>_g prod t_k / |Aut|`` summed over ``rank`` identical copies."""
    spec = replace(spec, rank=rank)
    slots = []
    for g in range(spec.max_genus + 1):
        terms: dict[Monomial, Fraction] = {}
        for (gg, ks), v in table.entries.items():
            if gg != g or not v or len(ks) > spec.max_degree or (ks and max(ks) > spec.max_descendant):
                continue
            c = v / _sym_factor(ks)
            for mu in range(rank):
                terms[tuple((mu, k) for k in ks)] = c
        slots.append(Poly(terms, spec, "t"))
    return TruncatedPotential(tuple(slots), spec, normalized=True)


def point_potentials(spec: TruncationSpec) -> TruncatedPotential:
    return potentials_from_table(point_correlators(replace(spec, rank=1)), replace(spec, rank=1), 1)


def correlators_from_potential(tau: TruncatedPotential, mu: int = 0) -> CorrelatorTable:
    """Read the single-copy correlators back off a potential."""
    ent = {}
    for g in range(tau.spec.max_genus + 1):
        for m, c in tau.genus(g):
            if any(v[0] != mu for v in m):
                continue
            ks = tuple(sorted(k for _, k in m))
            if ks and 2 * g - 2 + len(ks) > 0 and sum(ks) == 3 * g - 3 + len(ks):
                ent[(g, ks)] = c * _sym_factor(ks)
    return CorrelatorTable(ent, tau.spec)


# ---------------------------------------------------------------------------
# the dual route: linear system from Virasoro annihilation


class UnderdeterminedError(ArithmeticError):
    pass


def _solve_affine(rows: list[list[Fraction]], rhs: list[Fraction], wanted: list[int]) -> dict[int, Fraction]:
    """Solve ``A x = rhs`` and return the uniquely determined ``x[i]`` for ``i`` in ``wanted``."""
    from sympy import QQ
    from sympy.polys.matrices import DomainMatrix

    if not rows:
        if wanted:
            raise UnderdeterminedError("no equations")
        return {}
    ncols = len(rows[0])
    aug = DomainMatrix([[QQ(x.numerator, x.denominator) for x in r] + [QQ(b.numerator, b.denominator)] for r, b in zip(rows, rhs)], (len(rows), ncols + 1), QQ)
    red, pivots = aug.rref()
    if ncols in pivots:
        raise ArithmeticError("inconsistent Virasoro system")
    dense = red.to_Matrix()
    free = [j for j in range(ncols) if j not in pivots]
    out = {}
    pivot_row = {p: i for i, p in enumerate(pivots)}
    for j in wanted:
        if j not in pivot_row:
            raise UnderdeterminedError(f"unknown {j} is free")
        i = pivot_row[j]
        if any(dense[i, f] != 0 for f in free):
            raise UnderdeterminedError(f"unknown {j} depends on free unknowns")
        v = dense[i, ncols]
        out[j] = Fraction(int(v.p), int(v.q))
    return out


def virasoro_system_correlators(spec: TruncationSpec, ms: Sequence[int] = (-1, 0, 1, 2)) -> CorrelatorTable:
    """Correlators extracted from the linear system ``L_m^ tau = 0`` for m in ``ms``.

    Genus 0 is swept by degree: equations of degree n - 1 are affine in the
    degree-n unknowns once lower degrees are known.  Each higher genus is one
    affine system whose equations only touch lower-genus data that is already
    pinned down, so the exact degree range drops by one per genus.  The work
    box starts at degree D + G + 1 to leave room for that, and every
    requested correlator must come out uniquely determined.
    """
    from .virasoro import build_point_virasoro

    spec = replace(spec, rank=1)
    G = spec.max_genus
    Dw = spec.max_degree + G + 1
    Kw = max(3 * G - 3 + Dw, spec.max_descendant) + 2
    work = TruncationSpec(1, Kw, Dw, G, spec.flow_order)
    ops = [build_point_virasoro(m, work, Kw + max(m, 1)) for m in ms]
    appliers = [_Applier(op, work, "t", None) for op in ops]
    solved: dict[CorrelatorKey, Fraction] = {}
    keys_all = _stable_keys(work)

    def family(values: Mapping[CorrelatorKey, Fraction]) -> list[Poly]:
        slots = [dict() for _ in range(G + 1)]
        for (g, ks), v in values.items():
            if v:
                slots[g][tuple((0, k) for k in ks)] = v / _sym_factor(ks)
        return [Poly._raw(s, work, "t") for s in slots]

    def equations(unknowns: list[CorrelatorKey], target_genus: int, degrees: range):
        known = family(solved)
        base_vals = []
        for ap in appliers:
            slots = ap.blank()
            ap.free(slots)
            ap.linear(slots, known)
            ap.bilinear(slots, known, known)
            base_vals.append(slots[target_genus].restrict(ap.out_spec))
        cols = []
        for key in unknowns:
            unit_fam = family({key: Fraction(1)})
            col = []
            for ap in appliers:
                slots = ap.blank()
                ap.linear(slots, unit_fam)
                ap.bilinear(slots, known, unit_fam)
                ap.bilinear(slots, unit_fam, known)
                col.append(slots[target_genus].restrict(ap.out_spec))
            cols.append(col)
        rows, rhs = [], []
        for i in range(len(appliers)):
            monos = set(base_vals[i].terms)
            for col in cols:
                monos |= set(col[i].terms)
            for m in sorted(monos):
                if len(m) in degrees:
                    rows.append([col[i].terms.get(m, Fraction(0)) for col in cols])
                    rhs.append(-base_vals[i].terms.get(m, Fraction(0)))
        return rows, rhs

    exact = Dw - 1  # genus-0 degrees that get fully determined
    for n in range(3, exact + 1):
        unknowns = [key for key in keys_all if key[0] == 0 and len(key[1]) == n]
        rows, rhs = equations(unknowns, 0, range(n - 1, n))
        for i, v in _solve_affine(rows, rhs, list(range(len(unknowns)))).items():
            solved[unknowns[i]] = v
    for g in range(1, G + 1):
        exact -= 1
        unknowns = [key for key in keys_all if key[0] == g and len(key[1]) <= exact]
        rows, rhs = equations(unknowns, g, range(0, exact))
        for i, v in _solve_affine(rows, rhs, list(range(len(unknowns)))).items():
            solved[unknowns[i]] = v
    return CorrelatorTable({key: solved[key] for key in _stable_keys(spec)}, spec)


# ---------------------------------------------------------------------------
# theories


@dataclass(frozen=True)
class Theory:
    """Metric plus genus-graded potentials (t-frame).

    ``builtin`` names a generator (``point`` or ``npoint:N``) so the theory can
    be rebuilt on a larger window when a flow needs padding.
    """

    metric: Metric
    potentials: TruncatedPotential
    semisimple_claimed: bool = False
    builtin: str | None = None
    reports: tuple = ()

    @property
    def rank(self) -> int:
        return self.metric.rank

    @property
    def spec(self) -> TruncationSpec:
        return self.potentials.spec

    def rebuild(self, spec: TruncationSpec) -> "Theory":
        if self.builtin is None:
            if self.spec.contains(spec) and self.spec.max_genus >= spec.max_genus:
                return replace(self, potentials=self.potentials.restrict(spec))
            raise TruncationError("theory is not a generator and its window is too small")
        return builtin_theory(self.builtin, spec)

    def to_json(self) -> dict:
        return {
            "metric": self.metric.to_json(),
            "semisimple_claimed": self.semisimple_claimed,
            "builtin": self.builtin,
            "potentials": self.potentials.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Theory":
        return cls(
            Metric.from_json(data["metric"]),
            TruncatedPotential.from_json(data["potentials"]),
            bool(data.get("semisimple_claimed", False)),
            data.get("builtin"),
        )


def n_point_potentials(n: int, spec: TruncationSpec) -> Theory:
    """N copies of the point in the idempotent basis, with identity metric and unit (1, ..., 1)."""
    if n < 1:
        raise ValueError("N must be positive")
    spec = replace(spec, rank=n)
    one = replace(spec, rank=1)
    pots = potentials_from_table(point_correlators(one), spec, n)
    name = "point" if n == 1 else f"npoint:{n}"
    metric = Metric.n_point(n)
    return Theory(metric, pots, semisimple_claimed=True, builtin=name)


def builtin_theory(name: str, spec: TruncationSpec) -> Theory:
    if name == "point":
        return n_point_potentials(1, spec)
    if name.startswith("npoint:"):
        return n_point_potentials(int(name.split(":", 1)[1]), spec)
    raise ValueError(f"unknown builtin theory {name!r}")


@dataclass
class JetReport:
    """``ok`` is None when no genus had an exact degree range in the window."""

    ok: bool | None
    offending: list[tuple[int, Monomial]]  # (genus, monomial in jet variables u^mu_k)
    checked: dict[int, int] = field(default_factory=dict)  # genus -> exact degree bound

    @property
    def status(self) -> str:
        return {True: "pass", False: "fail", None: "undecidable"}[self.ok]


def jet_variables(g0: Poly, max_k: int, spec: TruncationSpec) -> dict[VarIndex, Poly]:
    """``u^mu_k - u^mu_k(0)`` with ``u^mu_k = d_{t^mu_0}^(k+2) F_0``, on ``spec``.

    These are a formal change of coordinates only when each one starts with
    ``t^mu_k``; a ValueError is raised otherwise.
    """
    out = {}
    for mu in range(spec.rank):
        for k in range(max_k + 1):
            u = g0
            for _ in range(k + 2):
                u = u.diff((mu, 0))
            u = Poly({m: c for m, c in u.terms.items() if m and spec.admits(m)}, spec, g0.frame)
            linear = {m: c for m, c in u.terms.items() if len(m) == 1}
            if linear != {((mu, k),): Fraction(1)}:
                raise ValueError(f"u^{mu}_{k} does not start with t^{mu}_{k}; no jet coordinates")
            out[(mu, k)] = u
    return out


def rewrite_in_jet_variables(tau: TruncatedPotential, g: int, top: int | None = None) -> tuple[Poly, list[Monomial], int]:
    """F_g as a polynomial in the shifted jet variables ``u^mu_k - u^mu_k(0)``, k <= top.

    ``u_k = d_0^(k+2) F_0 = delta_{k1} + t_k + ...`` is a triangular change of
    coordinates, so the lowest-degree part of what is left of F_g is read off
    directly and its substitution subtracted.  Only degrees exact in the window
    are used, ``d <= min(D - top - 2, K - top + 1)``.  Returns the rewritten
    polynomial (monomials name jet variables), the offenders of the first
    degree that needed a variable with k > top, and the degree bound
    (negative when nothing is exact).
    """
    spec = tau.spec
    top = 3 * g - 2 if top is None else top
    d_max = min(spec.max_degree - top - 2, spec.max_descendant - top + 1)
    g0 = tau.genus(0)
    if d_max < 1:
        return Poly.zero(spec, g0.frame), [], d_max
    box = replace(spec, max_degree=d_max)
    u = jet_variables(g0, top, box)
    rest = Poly({m: c for m, c in tau.genus(g).terms.items() if len(m) <= d_max}, box, g0.frame)
    const = rest.coefficient(())
    rest = rest - Poly.constant(const, box, g0.frame)
    found: dict[Monomial, Fraction] = {(): const} if const else {}
    for d in range(1, d_max + 1):
        if any(len(m) < d for m in rest.terms):
            raise ArithmeticError("jet rewriting left a lower-degree remainder")
        part = {m: c for m, c in rest.terms.items() if len(m) == d}
        off = [m for m in sorted(part) if any(k > top for _, k in m)]
        if off:
            # higher degrees would inherit the offenders' substitution; stop here
            return Poly(found, box, g0.frame), off, d_max
        for m, c in part.items():
            found[m] = c
            term = Poly.constant(c, box, g0.frame)
            for v in m:
                term = term * u[v]
            rest = rest - term
    return Poly(found, box, g0.frame), [], d_max


def check_jet_property(tau: TruncatedPotential) -> JetReport:
    """Every F_g (g >= 1) is a function of the jet variables ``u^mu_k`` with k <= 3g - 2."""
    bad: list[tuple[int, Monomial]] = []
    checked: dict[int, int] = {}
    for g in range(1, tau.spec.max_genus + 1):
        _, off, d_max = rewrite_in_jet_variables(tau, g)
        if d_max < 1:
            continue
        checked[g] = d_max
        bad.extend((g, m) for m in off)
    if not checked:
        return JetReport(None, [], {})
    return JetReport(not bad, bad, checked)


# ---------------------------------------------------------------------------
# loop-group data and the axiomatic tau-function


@dataclass(frozen=True)
class SRData:
    """Jets ``S = I + O(z^-1)`` and ``R`` (series in z) whose eps^0 parts are the identity."""

    S: LaurentMatrix
    R: LaurentMatrix
    metric: Metric

    def __post_init__(self) -> None:
        if self.S.rank != self.metric.rank or self.R.rank != self.metric.rank:
            raise ValueError("rank mismatch")
        if self.S.eps_order != self.R.eps_order:
            raise ValueError("S and R jets must share the eps order")
        if not self.S.is_one_sided("neg") or any(c == 0 and n > 0 for n, c in self.S.coeffs):
            raise ValueError("S must be I + O(z^-1)")
        if not self.R.is_one_sided("pos"):
            raise ValueError("R must be a series in z")
        ident = la.identity(self.metric.rank)
        for m in (self.S, self.R):
            if m.eps_part(0) != {0: ident}:
                raise ValueError("eps^0 parts must be the identity")
        if not is_symplectic(self.S, self.metric):
            raise ValueError("S is not symplectic")
        if not is_symplectic(self.R, self.metric):
            raise ValueError("R is not symplectic")

    @property
    def eps_order(self) -> int:
        return self.S.eps_order

    @classmethod
    def identity(cls, metric: Metric, eps_order: int) -> "SRData":
        i = LaurentMatrix.identity(metric.rank, eps_order)
        return cls(i, i, metric)

    @classmethod
    def from_product(cls, m: LaurentMatrix, metric: Metric) -> "SRData":
        s, r = birkhoff_factorize(m)
        return cls(s, r, metric)

    def logs(self) -> tuple[LaurentMatrix, LaurentMatrix]:
        return self.S.log(), self.R.log()

    def z_spread(self) -> int:
        zs = [abs(c) for _, c in self.S.coeffs] + [abs(c) for _, c in self.R.coeffs]
        return max(zs, default=0)

    def to_json(self) -> dict:
        return {"metric": self.metric.to_json(), "S": self.S.to_json(), "R": self.R.to_json()}


def _ops_loss(ops: Sequence[FockOperator], G: int, unit, frame: str) -> tuple[int, int]:
    lam = sig = 0
    for op in ops:
        if op.is_zero():
            continue
        wl = window_loss(op, G, unit, frame)
        lam, sig = max(lam, wl.degree), max(sig, wl.descendant)
    return lam, sig


@dataclass(frozen=True)
class ActionResult:
    theory: Theory
    jet: PotentialJet


def act_jets(base: Theory, steps: Sequence[LaurentMatrix], spec: TruncationSpec) -> PotentialJet:
    """Apply ``exp(X_1^)``, then ``exp(X_2^)``, ... for eps-jets ``X_i`` to the base theory.

    The base is rebuilt on a window padded by the total loss of all flows, and
    the resulting eps-jet is restricted to ``spec``.
    """
    E = spec.flow_order
    metric = base.metric
    unit = metric.unit
    probe_k = max(spec.max_descendant, 2)
    losses = []
    for x in steps:
        spread = max((abs(c) for _, c in x.coeffs), default=0)
        ops = quantize_jet(x.with_order(E), metric, max(probe_k, spread + 1))
        losses.append(_ops_loss(ops, spec.max_genus, unit, "t"))
    lam = sum(l for l, _ in losses) * E
    sig = sum(s for _, s in losses) * E
    padded = spec.grow(degree=lam, descendant=sig)
    spread = max((abs(c) for x in steps for _, c in x.coeffs), default=0)
    if padded.max_descendant < spread + 1 + max((s for _, s in losses), default=0):
        padded = replace(padded, max_descendant=spread + 1 + max(s for _, s in losses))
    theory = base.rebuild(padded)
    jet = PotentialJet.constant(theory.potentials, E)
    for x in steps:
        ops = quantize_jet(x.with_order(E), metric, jet.spec.max_descendant)
        jet = flow_operators(ops, jet, E, unit)
    if not jet.spec.contains(spec):
        raise TruncationError("flows lost more window than budgeted")
    return jet.restrict(replace(jet.spec, max_degree=spec.max_degree, max_descendant=spec.max_descendant))


def axiomatic_tau(base: Theory, sr: SRData, spec: TruncationSpec) -> ActionResult:
    """``S^ (R^ tau_base)`` as an eps-jet; the theory carries the eps^E-truncated sum at eps = 1.

    Only hbar powers g - 1 with g >= 0 can occur; a lower power raises.
    """
    if sr.metric != base.metric:
        raise ValueError("SR data and theory use different metrics")
    if sr.eps_order != spec.flow_order:
        sr_e = spec.flow_order
        S, R = sr.S.with_order(sr_e), sr.R.with_order(sr_e)
    else:
        S, R = sr.S, sr.R
    s_log, r_log = S.log(), R.log()
    jet = act_jets(base, [r_log, s_log], spec)
    if jet.stabilized:
        pots = jet.endpoint()
    else:
        total = jet.orders[0]
        for p in jet.orders[1:]:
            total = total + p
        pots = total
    normalized = all(len(m) >= 3 for m in pots.by_genus[0].terms)
    out = TruncatedPotential(pots.by_genus, pots.spec, normalized)
    return ActionResult(Theory(base.metric, out, base.semisimple_claimed, None), jet)
