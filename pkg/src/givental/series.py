"""Exact truncated polynomial algebra in the descendent variables.

Variables are ``t^mu_k`` (the ``t`` frame) or ``q^mu_k`` (the ``q`` frame),
indexed by ``(mu, k)`` with ``0 <= mu < rank`` and ``0 <= k <= K``.  A
monomial is a sorted tuple of such pairs, with repetition, so ``t_0^3`` is
``((0, 0), (0, 0), (0, 0))``.  Coefficients are :class:`fractions.Fraction`.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import comb
from typing import Iterable, Iterator, Mapping, Sequence

VarIndex = tuple[int, int]
Monomial = tuple[VarIndex, ...]

FRAMES = ("t", "q")


class TruncationError(ValueError):
    """Raised when objects built under different truncations are mixed."""


@dataclass(frozen=True)
class TruncationSpec:
    """Finite window for all formal objects.

    ``rank`` is N, ``max_descendant`` is K (largest k in t^mu_k),
    ``max_degree`` is D, ``max_genus`` is G and ``flow_order`` is E.
    """

    rank: int = 1
    max_descendant: int = 3
    max_degree: int = 6
    max_genus: int = 2
    flow_order: int = 4

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if self.max_descendant < 0 or self.max_genus < 0 or self.flow_order < 0:
            raise ValueError("bounds must be non-negative")
        if self.max_degree < 0:
            raise ValueError("max_degree must be non-negative")

    def admits_var(self, v: VarIndex) -> bool:
        mu, k = v
        return 0 <= mu < self.rank and 0 <= k <= self.max_descendant

    def admits(self, m: Monomial) -> bool:
        return len(m) <= self.max_degree and all(self.admits_var(v) for v in m)

    def variables(self) -> list[VarIndex]:
        return [(mu, k) for k in range(self.max_descendant + 1) for mu in range(self.rank)]

    def shrink(self, degree: int = 0, descendant: int = 0) -> "TruncationSpec":
        d = self.max_degree - degree
        k = self.max_descendant - descendant
        if d < 0 or k < 0:
            raise TruncationError(f"window {self} too small to lose {degree} degrees, {descendant} descendants")
        return replace(self, max_degree=d, max_descendant=k)

    def grow(self, degree: int = 0, descendant: int = 0, genus: int = 0) -> "TruncationSpec":
        return replace(
            self,
            max_degree=self.max_degree + degree,
            max_descendant=self.max_descendant + descendant,
            max_genus=self.max_genus + genus,
        )

    def contains(self, other: "TruncationSpec") -> bool:
        """True if every monomial admitted by ``other`` is admitted here."""
        return (
            self.rank == other.rank
            and self.max_degree >= other.max_degree
            and self.max_descendant >= other.max_descendant
        )

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "max_descendant": self.max_descendant,
            "max_degree": self.max_degree,
            "max_genus": self.max_genus,
            "flow_order": self.flow_order,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "TruncationSpec":
        return cls(**{k: int(data[k]) for k in ("rank", "max_descendant", "max_degree", "max_genus", "flow_order")})


def monomial(*factors: VarIndex) -> Monomial:
    return tuple(sorted(factors))


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    return tuple(sorted(a + b))


def mono_remove(m: Monomial, v: VarIndex) -> Monomial:
    i = m.index(v)
    return m[:i] + m[i + 1 :]


def fmt_fraction(c: Fraction) -> str:
    return f"{c.numerator}/{c.denominator}" if c.denominator != 1 else str(c.numerator)


def parse_fraction(s: str | int) -> Fraction:
    return Fraction(s)


class Poly:
    """Sparse polynomial with rational coefficients, truncated to a spec.

    Instances are treated as immutable.  Arithmetic between polynomials of
    different frames or specs raises :class:`TruncationError`.
    """

    __slots__ = ("terms", "spec", "frame")

    def __init__(
        self,
        terms: Mapping[Monomial, Fraction] | None = None,
        spec: TruncationSpec | None = None,
        frame: str = "t",
        *,
        strict: bool = True,
    ) -> None:
        if spec is None:
            spec = TruncationSpec()
        if frame not in FRAMES:
            raise ValueError(f"unknown frame {frame!r}")
        clean: dict[Monomial, Fraction] = {}
        for m, c in (terms or {}).items():
            c = Fraction(c)
            if c == 0:
                continue
            m = tuple(sorted(m))
            if not spec.admits(m):
                if strict:
                    raise TruncationError(f"monomial {m} outside {spec}")
                continue
            clean[m] = clean.get(m, Fraction(0)) + c
            if clean[m] == 0:
                del clean[m]
        self.terms: dict[Monomial, Fraction] = clean
        self.spec = spec
        self.frame = frame

    @classmethod
    def _raw(cls, terms: dict[Monomial, Fraction], spec: TruncationSpec, frame: str) -> "Poly":
        # terms already canonical, nonzero and admitted
        p = object.__new__(cls)
        p.terms = terms
        p.spec = spec
        p.frame = frame
        return p

    @classmethod
    def zero(cls, spec: TruncationSpec, frame: str = "t") -> "Poly":
        return cls._raw({}, spec, frame)

    @classmethod
    def constant(cls, c, spec: TruncationSpec, frame: str = "t") -> "Poly":
        return cls({(): Fraction(c)}, spec, frame)

    @classmethod
    def var(cls, mu: int, k: int, spec: TruncationSpec, frame: str = "t") -> "Poly":
        return cls({((mu, k),): Fraction(1)}, spec, frame)

    @classmethod
    def from_monomial(cls, m: Iterable[VarIndex], c, spec: TruncationSpec, frame: str = "t") -> "Poly":
        return cls({tuple(m): Fraction(c)}, spec, frame)

    # -- basic queries -----------------------------------------------------
    def __iter__(self) -> Iterator[tuple[Monomial, Fraction]]:
        return iter(sorted(self.terms.items()))

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, m: Iterable[VarIndex]) -> Fraction:
        return self.terms.get(tuple(sorted(m)), Fraction(0))

    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=-1)

    def min_degree(self) -> int:
        return min((len(m) for m in self.terms), default=-1)

    def variables(self) -> set[VarIndex]:
        return {v for m in self.terms for v in m}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.frame == other.frame and self.spec == other.spec and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.frame, self.spec, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"Poly({self.to_text()}, frame={self.frame})"

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self:
            powers = Counter(m)
            mono = "*".join(
                f"{self.frame}{mu}_{k}" + (f"^{e}" if e > 1 else "") for (mu, k), e in sorted(powers.items())
            )
            parts.append(f"{fmt_fraction(c)}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    # -- arithmetic --------------------------------------------------------
    def _check(self, other: "Poly") -> None:
        if self.frame != other.frame:
            raise TruncationError(f"frame mismatch: {self.frame} vs {other.frame}")
        if self.spec != other.spec:
            raise TruncationError(f"spec mismatch: {self.spec} vs {other.spec}")

    def __add__(self, other: "Poly") -> "Poly":
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return Poly._raw(out, self.spec, self.frame)

    def __neg__(self) -> "Poly":
        return Poly._raw({m: -c for m, c in self.terms.items()}, self.spec, self.frame)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, c) -> "Poly":
        c = Fraction(c)
        if c == 0:
            return Poly.zero(self.spec, self.frame)
        return Poly._raw({m: c * v for m, v in self.terms.items()}, self.spec, self.frame)

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return self.scale(other)
        self._check(other)
        D = self.spec.max_degree
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            room = D - len(m1)
            for m2, c2 in other.terms.items():
                if len(m2) > room:
                    continue
                m = mono_mul(m1, m2)
                v = out.get(m, 0) + c1 * c2
                if v:
                    out[m] = v
                else:
                    del out[m]
        return Poly._raw(out, self.spec, self.frame)

    __rmul__ = scale

    def mul_monomial(self, m: Monomial, c=1) -> "Poly":
        """Multiply by ``c * m``; terms leaving the window are dropped."""
        c = Fraction(c)
        spec = self.spec
        if not all(spec.admits_var(v) for v in m) or c == 0:
            return Poly.zero(spec, self.frame)
        room = spec.max_degree - len(m)
        out = {}
        for m1, c1 in self.terms.items():
            if len(m1) <= room:
                out[mono_mul(m1, m)] = c * c1
        return Poly._raw(out, spec, self.frame)

    def diff(self, v: VarIndex) -> "Poly":
        if not self.spec.admits_var(v):
            raise TruncationError(f"variable {v} outside {self.spec}")
        out: dict[Monomial, Fraction] = {}
        for m, c in self.terms.items():
            e = m.count(v)
            if e:
                out[mono_remove(m, v)] = c * e
        return Poly._raw(out, self.spec, self.frame)

    def restrict(self, spec: TruncationSpec) -> "Poly":
        """Drop all monomials outside ``spec`` and relabel with it."""
        if spec.rank != self.spec.rank:
            raise TruncationError("rank mismatch")
        return Poly._raw({m: c for m, c in self.terms.items() if spec.admits(m)}, spec, self.frame)

    def with_frame(self, frame: str) -> "Poly":
        return Poly._raw(dict(self.terms), self.spec, frame)

    def map_terms(self, fn) -> "Poly":
        out = {}
        for m, c in self.terms.items():
            v = fn(m, c)
            if v:
                out[m] = Fraction(v)
        return Poly._raw(out, self.spec, self.frame)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "frame": self.frame,
            "terms": [[[list(v) for v in m], fmt_fraction(c)] for m, c in self],
        }

    @classmethod
    def from_json(cls, data: Mapping, spec: TruncationSpec | None = None) -> "Poly":
        spec = spec or TruncationSpec.from_json(data["spec"])
        terms: dict[Monomial, Fraction] = {}
        for mono, c in data["terms"]:
            m = tuple(sorted((int(mu), int(k)) for mu, k in mono))
            terms[m] = terms.get(m, Fraction(0)) + parse_fraction(c)
        return cls(terms, spec, data.get("frame", "t"))


def poly_arith(a: Poly, b: Poly | None, op: str, c=None) -> Poly:
    """Functional form of ``a + b``, ``a * b`` and ``c * a``."""
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "scale":
        return a.scale(c)
    raise ValueError(f"unknown op {op!r}")


def poly_diff(a: Poly, v: VarIndex) -> Poly:
    return a.diff(v)


def coefficient(a: Poly, m: Iterable[VarIndex]) -> Fraction:
    return a.coefficient(m)


def unit_vector(rank: int, unit: Sequence | None = None) -> tuple[Fraction, ...]:
    if unit is None:
        return tuple(Fraction(int(i == 0)) for i in range(rank))
    if len(unit) != rank:
        raise ValueError("unit vector has wrong length")
    return tuple(Fraction(u) for u in unit)


def shift_substitute(a: Poly, shift: Mapping[VarIndex, Fraction], frame: str) -> Poly:
    """Substitute ``x_v -> x_v + shift[v]`` and relabel to ``frame``.

    Substituting a constant never raises the degree, so the result is exact
    within the window.
    """
    spec = a.spec
    out: dict[Monomial, Fraction] = {}
    for m, c in a.terms.items():
        powers = Counter(m)
        # expand prod_v (x_v + s_v)^e_v
        partial: dict[Monomial, Fraction] = {(): c}
        for v, e in powers.items():
            s = shift.get(v, 0)
            nxt: dict[Monomial, Fraction] = {}
            for pm, pc in partial.items():
                if s == 0:
                    nxt[mono_mul(pm, (v,) * e)] = pc
                    continue
                for j in range(e + 1):
                    term = pc * comb(e, j) * Fraction(s) ** (e - j)
                    key = mono_mul(pm, (v,) * j)
                    nxt[key] = nxt.get(key, 0) + term
            partial = nxt
        for pm, pc in partial.items():
            if pc:
                out[pm] = out.get(pm, 0) + pc
    return Poly({m: c for m, c in out.items() if c}, spec, frame)


def dilaton_shift(a: Poly, direction: str, unit: Sequence | None = None) -> Poly:
    """Change between ``t`` and ``q`` frames via ``t^mu_1 = q^mu_1 + unit^mu``.

    ``unit`` holds the coordinates of the identity element; by default it is
    the first basis vector.
    """
    spec = a.spec
    if spec.max_descendant < 1:
        raise TruncationError("dilaton shift needs max_descendant >= 1")
    u = unit_vector(spec.rank, unit)
    if direction == "t_to_q":
        if a.frame != "t":
            raise TruncationError("t_to_q expects a t-frame polynomial")
        sign, frame = 1, "q"
    elif direction == "q_to_t":
        if a.frame != "q":
            raise TruncationError("q_to_t expects a q-frame polynomial")
        sign, frame = -1, "t"
    else:
        raise ValueError(f"unknown direction {direction!r}")
    shift = {(mu, 1): sign * u[mu] for mu in range(spec.rank) if u[mu]}
    return shift_substitute(a, shift, frame)


@dataclass(frozen=True)
class TruncatedPotential:
    """Genus-graded family ``F_0 .. F_G`` of truncated polynomials."""

    by_genus: tuple[Poly, ...]
    spec: TruncationSpec
    normalized: bool = field(default=False, compare=False)  # F_0 starts in degree 3; validated, not data

    def __post_init__(self) -> None:
        frames = {p.frame for p in self.by_genus}
        if len(frames) > 1:
            raise TruncationError("mixed frames in potential")
        for p in self.by_genus:
            if p.spec != self.spec:
                raise TruncationError("potential genus slot has a different spec")
        if self.normalized and self.by_genus and self.by_genus[0].terms:
            if self.by_genus[0].min_degree() < 3:
                raise ValueError("normalized potential has F_0 terms of degree < 3")

    @classmethod
    def zero(cls, spec: TruncationSpec, frame: str = "t") -> "TruncatedPotential":
        return cls(tuple(Poly.zero(spec, frame) for _ in range(spec.max_genus + 1)), spec)

    @property
    def frame(self) -> str:
        return self.by_genus[0].frame if self.by_genus else "t"

    def genus(self, g: int) -> Poly:
        if g < len(self.by_genus):
            return self.by_genus[g]
        return Poly.zero(self.spec, self.frame)

    def restrict(self, spec: TruncationSpec) -> "TruncatedPotential":
        slots = tuple(self.genus(g).restrict(spec) for g in range(spec.max_genus + 1))
        return TruncatedPotential(slots, spec, self.normalized)

    def __add__(self, other: "TruncatedPotential") -> "TruncatedPotential":
        if self.spec != other.spec:
            raise TruncationError("spec mismatch")
        return TruncatedPotential(tuple(a + b for a, b in zip(self.by_genus, other.by_genus)), self.spec)

    def __sub__(self, other: "TruncatedPotential") -> "TruncatedPotential":
        return self + other.scale(-1)

    def scale(self, c) -> "TruncatedPotential":
        return TruncatedPotential(tuple(p.scale(c) for p in self.by_genus), self.spec)

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.by_genus)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "frame": self.frame,
            "normalized": self.normalized,
            "genera": [Poly.to_json(p)["terms"] for p in self.by_genus],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: Mapping) -> "TruncatedPotential":
        spec = TruncationSpec.from_json(data["spec"])
        frame = data.get("frame", "t")
        slots = [Poly.from_json({"terms": t, "frame": frame}, spec) for t in data["genera"]]
        while len(slots) < spec.max_genus + 1:
            slots.append(Poly.zero(spec, frame))
        return cls(tuple(slots[: spec.max_genus + 1]), spec, bool(data.get("normalized", False)))
