"""The symplectic loop space H((z)) at a finite window.

Basis vectors are written ``(mu, j)`` for ``phi_mu z^j``.  A window
``[lo, hi]`` bounds the z-exponents of the basis we act on; the canonical
window for descendent bound K is ``[-K-1, K]``, which is closed under the
pairing ``j <-> -1-j`` of the symplectic form.

Loop-group elements are handled as *jets*: matrix Laurent polynomials whose
coefficients are further graded by a formal parameter ``eps`` and truncated
at ``eps**E``.  A plain Laurent polynomial is a jet with ``E = 0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Callable, Iterable, Mapping, Sequence

from . import _linalg as la
from ._linalg import Matrix
from .series import TruncationSpec, fmt_fraction, parse_fraction, unit_vector

Basis = tuple[int, int]  # (mu, z-exponent)


class WindowError(ValueError):
    """The window is too small to decide the question asked."""


class NotSymplecticError(ValueError):
    def __init__(self, msg: str, certificate=None):
        super().__init__(msg)
        self.certificate = certificate


@dataclass(frozen=True)
class Metric:
    """Nondegenerate symmetric pairing on H, plus the coordinates of the unit."""

    g: Matrix
    unit: tuple[Fraction, ...]
    g_inv: Matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        g = la.as_matrix(self.g)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "unit", unit_vector(len(g), self.unit))
        if la.transpose(g) != g:
            raise ValueError("metric must be symmetric")
        object.__setattr__(self, "g_inv", la.inverse(g))

    @property
    def rank(self) -> int:
        return len(self.g)

    @classmethod
    def identity(cls, rank: int, unit: Sequence | None = None) -> "Metric":
        return cls(la.identity(rank), unit_vector(rank, unit))

    @classmethod
    def n_point(cls, rank: int) -> "Metric":
        """Idempotent basis of N points: orthonormal, unit = sum of idempotents."""
        return cls(la.identity(rank), tuple(Fraction(1) for _ in range(rank)))

    def pair(self, u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
        return sum((u[i] * self.g[i][j] * v[j] for i in range(self.rank) for j in range(self.rank)), Fraction(0))

    def adjoint(self, a: Matrix) -> Matrix:
        """A* with <A u, v> = <u, A* v>."""
        return la.mul(la.mul(self.g_inv, la.transpose(a)), self.g)

    def is_orthonormal(self) -> bool:
        return self.g == la.identity(self.rank)

    def scaled(self, c) -> "Metric":
        return Metric(la.scale(self.g, c), self.unit)

    def to_json(self) -> dict:
        return {"g": la.fmt_matrix(self.g), "unit": [fmt_fraction(u) for u in self.unit]}

    @classmethod
    def from_json(cls, data: Mapping) -> "Metric":
        return cls(la.as_matrix([[parse_fraction(x) for x in r] for r in data["g"]]), tuple(parse_fraction(u) for u in data["unit"]))


def canonical_window(spec_or_k: TruncationSpec | int) -> tuple[int, int]:
    k = spec_or_k.max_descendant if isinstance(spec_or_k, TruncationSpec) else int(spec_or_k)
    return (-k - 1, k)


# ---------------------------------------------------------------------------
# vectors and the symplectic form


@dataclass(frozen=True)
class LoopVector:
    coeffs: Mapping[int, tuple[Fraction, ...]]
    rank: int

    def __post_init__(self) -> None:
        clean = {}
        for j, v in self.coeffs.items():
            v = tuple(Fraction(x) for x in v)
            if len(v) != self.rank:
                raise ValueError("H-vector has wrong length")
            if any(v):
                clean[int(j)] = v
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def basis(cls, rank: int, mu: int, j: int) -> "LoopVector":
        return cls({j: tuple(Fraction(int(i == mu)) for i in range(rank))}, rank)

    @classmethod
    def from_terms(cls, rank: int, terms: Mapping[Basis, Fraction]) -> "LoopVector":
        acc: dict[int, list[Fraction]] = {}
        for (mu, j), c in terms.items():
            acc.setdefault(j, [Fraction(0)] * rank)[mu] += Fraction(c)
        return cls({j: tuple(v) for j, v in acc.items()}, rank)

    def terms(self) -> dict[Basis, Fraction]:
        return {(mu, j): c for j, v in self.coeffs.items() for mu, c in enumerate(v) if c}

    def __add__(self, other: "LoopVector") -> "LoopVector":
        t = self.terms()
        for b, c in other.terms().items():
            t[b] = t.get(b, 0) + c
        return LoopVector.from_terms(self.rank, t)

    def scale(self, c) -> "LoopVector":
        return LoopVector.from_terms(self.rank, {b: Fraction(c) * v for b, v in self.terms().items()})


def omega(f: LoopVector, g: LoopVector, metric: Metric) -> Fraction:
    """Res_{z=0} <f(-z), g(z)>."""
    total = Fraction(0)
    for a, fa in f.coeffs.items():
        gb = g.coeffs.get(-1 - a)
        if gb is not None:
            total += (-1) ** (a % 2) * metric.pair(fa, gb)
    return total


def _omega_basis(x: Basis, y: Basis, metric: Metric) -> Fraction:
    if x[1] + y[1] != -1:
        return Fraction(0)
    return (-1) ** (x[1] % 2) * metric.g[x[0]][y[0]]


# ---------------------------------------------------------------------------
# endomorphisms


class LoopEndo:
    """Linear map on the windowed loop space, stored column by column.

    ``columns[(mu, j)]`` is the full image of ``phi_mu z^j`` (targets may lie
    outside the window).  Columns in ``lossy`` are not known exactly because a
    composition needed input from outside the window.
    """

    __slots__ = ("rank", "window", "columns", "lossy")

    def __init__(self, rank: int, window: tuple[int, int], columns: Mapping[Basis, Mapping[Basis, Fraction]], lossy: Iterable[Basis] = ()):
        self.rank = rank
        self.window = (int(window[0]), int(window[1]))
        cols = {}
        for s, img in columns.items():
            img = {t: Fraction(c) for t, c in img.items() if c}
            if img:
                cols[s] = img
        self.columns: dict[Basis, dict[Basis, Fraction]] = cols
        self.lossy = frozenset(lossy)

    # -- construction --------------------------------------------------
    def basis(self) -> list[Basis]:
        lo, hi = self.window
        return [(mu, j) for j in range(lo, hi + 1) for mu in range(self.rank)]

    @classmethod
    def from_function(cls, rank: int, window: tuple[int, int], fn: Callable[[Basis], Mapping[Basis, Fraction]]) -> "LoopEndo":
        lo, hi = window
        return cls(rank, window, {(mu, j): fn((mu, j)) for j in range(lo, hi + 1) for mu in range(rank)})

    @classmethod
    def identity(cls, rank: int, window: tuple[int, int]) -> "LoopEndo":
        return cls.from_function(rank, window, lambda b: {b: Fraction(1)})

    @classmethod
    def zero(cls, rank: int, window: tuple[int, int]) -> "LoopEndo":
        return cls(rank, window, {})

    @classmethod
    def multiplication(cls, coeffs: Mapping[int, Matrix], rank: int, window: tuple[int, int]) -> "LoopEndo":
        """Multiplication by the matrix Laurent polynomial sum_c M_c z^c."""

        def image(b: Basis) -> dict[Basis, Fraction]:
            mu, j = b
            out = {}
            for c, m in coeffs.items():
                for nu in range(rank):
                    if m[nu][mu]:
                        out[(nu, j + c)] = m[nu][mu]
            return out

        return cls.from_function(rank, window, image)

    # -- queries -------------------------------------------------------
    def in_window(self, b: Basis) -> bool:
        return self.window[0] <= b[1] <= self.window[1] and 0 <= b[0] < self.rank

    def column(self, b: Basis) -> dict[Basis, Fraction]:
        if not self.in_window(b):
            raise WindowError(f"{b} outside window {self.window}")
        if b in self.lossy:
            raise WindowError(f"column {b} lost information at the window boundary")
        return self.columns.get(b, {})

    def apply(self, v: LoopVector) -> LoopVector:
        out: dict[Basis, Fraction] = {}
        for b, c in v.terms().items():
            for t, x in self.column(b).items():
                out[t] = out.get(t, 0) + c * x
        return LoopVector.from_terms(self.rank, out)

    def safe_window(self) -> tuple[int, int] | None:
        """Largest symmetric sub-window ``[-k-1, k]`` whose columns are exact."""
        lo, hi = self.window
        k = min(-lo - 1, hi)
        while k >= 0:
            if not any((mu, j) in self.lossy for j in range(-k - 1, k + 1) for mu in range(self.rank)):
                return (-k - 1, k)
            k -= 1
        return None

    def has_loss(self) -> bool:
        return bool(self.lossy)

    # -- algebra -------------------------------------------------------
    def _check(self, other: "LoopEndo") -> None:
        if self.rank != other.rank or self.window != other.window:
            raise WindowError("endomorphisms live on different windows")

    def __add__(self, other: "LoopEndo") -> "LoopEndo":
        self._check(other)
        cols = {s: dict(img) for s, img in self.columns.items()}
        for s, img in other.columns.items():
            tgt = cols.setdefault(s, {})
            for t, c in img.items():
                tgt[t] = tgt.get(t, 0) + c
        return LoopEndo(self.rank, self.window, cols, self.lossy | other.lossy)

    def scale(self, c) -> "LoopEndo":
        c = Fraction(c)
        return LoopEndo(self.rank, self.window, {s: {t: c * x for t, x in img.items()} for s, img in self.columns.items()}, self.lossy)

    def __neg__(self) -> "LoopEndo":
        return self.scale(-1)

    def __sub__(self, other: "LoopEndo") -> "LoopEndo":
        return self + (-other)

    def __matmul__(self, other: "LoopEndo") -> "LoopEndo":
        """Composition ``self o other``, tracking window loss."""
        self._check(other)
        cols: dict[Basis, dict[Basis, Fraction]] = {}
        lossy = set(other.lossy)
        for s, img in other.columns.items():
            if s in lossy:
                continue
            out: dict[Basis, Fraction] = {}
            for t, c in img.items():
                if not self.in_window(t) or t in self.lossy:
                    lossy.add(s)
                    break
                for u, x in self.columns.get(t, {}).items():
                    out[u] = out.get(u, 0) + c * x
            else:
                cols[s] = out
        return LoopEndo(self.rank, self.window, cols, lossy)

    def equal_on(self, other: "LoopEndo", window: tuple[int, int]) -> bool:
        lo, hi = window
        for j in range(lo, hi + 1):
            for mu in range(self.rank):
                b = (mu, j)
                if self.column(b) != other.column(b):
                    return False
        return True

    def is_zero_on(self, window: tuple[int, int]) -> bool:
        lo, hi = window
        return all(not self.column((mu, j)) for j in range(lo, hi + 1) for mu in range(self.rank))

    def with_window(self, window: tuple[int, int]) -> "LoopEndo":
        """Restrict (or relabel) the source window; images are kept in full."""
        lo, hi = window
        cols = {s: img for s, img in self.columns.items() if lo <= s[1] <= hi}
        lossy = {s for s in self.lossy if lo <= s[1] <= hi}
        return LoopEndo(self.rank, window, cols, lossy)

    def __repr__(self) -> str:
        return f"LoopEndo(rank={self.rank}, window={self.window}, nnz={sum(map(len, self.columns.values()))}, lossy={len(self.lossy)})"


def loop_commutator(a: LoopEndo, b: LoopEndo) -> LoopEndo:
    """``AB - BA``; columns that touched the window boundary are marked lossy."""
    out = (a @ b) - (b @ a)
    if out.safe_window() is None:
        raise WindowError("commutator has no exact sub-window")
    return out


@dataclass
class SymplecticVerdict:
    ok: bool
    certificate: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def is_inf_symplectic(a: LoopEndo, metric: Metric, window: tuple[int, int] | None = None) -> SymplecticVerdict:
    """Check Omega(A f, g) + Omega(f, A g) = 0 on all windowed basis pairs.

    The window must be of the form ``[-k-1, k]``.  Raises :class:`WindowError`
    when a needed column is lossy.
    """
    lo, hi = window or a.window
    if lo + hi != -1:
        raise WindowError("window must be symmetric under j -> -1-j")
    basis = [(mu, j) for j in range(lo, hi + 1) for mu in range(a.rank)]
    for x in basis:
        ax = a.column(x)
        for y in basis:
            # Omega(A x, y): only the component of A x dual to y contributes
            lhs = Fraction(0)
            for (nu, jj), c in ax.items():
                if jj + y[1] == -1:
                    lhs += c * _omega_basis((nu, jj), y, metric)
            rhs = Fraction(0)
            for (nu, jj), c in a.column(y).items():
                if jj + x[1] == -1:
                    rhs += c * _omega_basis(x, (nu, jj), metric)
            if lhs + rhs != 0:
                return SymplecticVerdict(False, (x, y, lhs + rhs))
    return SymplecticVerdict(True)


# ---------------------------------------------------------------------------
# Virasoro generators by conjugation through half-integer powers


@dataclass(frozen=True)
class ShiftOperator:
    """Scalar operator ``z^a -> c(a) z^(a + shift)`` with ``c`` a polynomial in ``a``.

    ``coeff[i]`` is the coefficient of ``a**i``.  Exponents live in (1/2)Z.
    """

    shift: Fraction
    coeff: tuple[Fraction, ...]

    @classmethod
    def power(cls, e) -> "ShiftOperator":
        return cls(Fraction(e), (Fraction(1),))

    @classmethod
    def d_operator(cls) -> "ShiftOperator":
        # D = z (d/dz) z :  z^a -> (a + 1) z^(a + 1)
        return cls(Fraction(1), (Fraction(1), Fraction(1)))

    def __call__(self, a) -> Fraction:
        a = Fraction(a)
        return sum((c * a**i for i, c in enumerate(self.coeff)), Fraction(0))

    def then(self, other: "ShiftOperator") -> "ShiftOperator":
        """``other o self``: apply self first."""
        # c_total(a) = c_self(a) * c_other(a + s_self)
        shifted = _poly_compose_shift(other.coeff, self.shift)
        return ShiftOperator(self.shift + other.shift, _poly_mul(self.coeff, shifted))

    def scale(self, c) -> "ShiftOperator":
        return ShiftOperator(self.shift, tuple(Fraction(c) * x for x in self.coeff))


def _poly_mul(a: Sequence[Fraction], b: Sequence[Fraction]) -> tuple[Fraction, ...]:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return tuple(out)


def _poly_compose_shift(p: Sequence[Fraction], s: Fraction) -> tuple[Fraction, ...]:
    """Coefficients of ``p(a + s)``."""
    out = (Fraction(0),)
    for c in reversed(p):
        out = _poly_mul(out, (s, Fraction(1)))
        out = (out[0] + c,) + out[1:]
    return out


def virasoro_shift_operator(m: int) -> ShiftOperator:
    """``L_m = -z^(-1/2) D^(m+1) z^(-1/2)`` as a scalar shift operator."""
    if m < -1:
        raise ValueError("L_m is defined for m >= -1")
    half = ShiftOperator.power(Fraction(-1, 2))
    op = half
    for _ in range(m + 1):
        op = op.then(ShiftOperator.d_operator())
    op = op.then(half).scale(-1)
    if op.shift.denominator != 1:
        raise ArithmeticError(f"L_{m} has non-integer z-exponent shift {op.shift}")
    return op


def _closed_form(m: int, j: int) -> Fraction:
    out = Fraction(-1)
    for i in range(m + 1):
        out *= Fraction(2 * j + 1 + 2 * i, 2)
    return out


def virasoro_generator(m: int, rank: int, window: tuple[int, int]) -> LoopEndo:
    """The endomorphism L_m of H((z)), acting by the same scalar on every phi_mu."""
    op = virasoro_shift_operator(m)
    shift = int(op.shift)
    lo, hi = window
    for j in range(lo, hi + 1):
        if op(j) != _closed_form(m, j):
            raise ArithmeticError(f"L_{m} disagrees with the product formula at z^{j}")
    return LoopEndo.from_function(rank, window, lambda b: {(b[0], b[1] + shift): op(b[1])})


# ---------------------------------------------------------------------------
# matrix Laurent jets


@dataclass(frozen=True)
class LaurentMatrix:
    """Matrix Laurent polynomial jet ``sum eps^n z^c M[n, c]`` truncated at eps^E."""

    coeffs: Mapping[tuple[int, int], Matrix]
    rank: int
    eps_order: int = 0

    def __post_init__(self) -> None:
        clean = {}
        for (n, c), m in self.coeffs.items():
            m = la.as_matrix(m)
            if len(m) != self.rank or any(len(r) != self.rank for r in m):
                raise ValueError("coefficient has wrong shape")
            if n < 0 or n > self.eps_order:
                if n < 0:
                    raise ValueError("negative eps order")
                continue
            if not la.is_zero(m):
                key = (int(n), int(c))
                clean[key] = la.add(clean[key], m) if key in clean else m
        object.__setattr__(self, "coeffs", {k: v for k, v in clean.items() if not la.is_zero(v)})

    # -- constructors --------------------------------------------------
    @classmethod
    def identity(cls, rank: int, eps_order: int = 0) -> "LaurentMatrix":
        return cls({(0, 0): la.identity(rank)}, rank, eps_order)

    @classmethod
    def zero(cls, rank: int, eps_order: int = 0) -> "LaurentMatrix":
        return cls({}, rank, eps_order)

    @classmethod
    def from_z(cls, coeffs: Mapping[int, Sequence[Sequence]], rank: int, eps_order: int = 0, eps_power: int = 0) -> "LaurentMatrix":
        return cls({(eps_power, c): la.as_matrix(m) for c, m in coeffs.items()}, rank, eps_order)

    # -- queries -------------------------------------------------------
    def get(self, n: int, c: int) -> Matrix:
        return self.coeffs.get((n, c), la.zeros(self.rank))

    def eps_part(self, n: int) -> dict[int, Matrix]:
        return {c: m for (k, c), m in self.coeffs.items() if k == n}

    def z_range(self) -> tuple[int, int] | None:
        if not self.coeffs:
            return None
        cs = [c for _, c in self.coeffs]
        return (min(cs), max(cs))

    def is_one_sided(self, side: str) -> bool:
        cs = [c for _, c in self.coeffs]
        return all(c <= 0 for c in cs) if side == "neg" else all(c >= 0 for c in cs)

    def with_order(self, eps_order: int) -> "LaurentMatrix":
        return LaurentMatrix(self.coeffs, self.rank, eps_order)

    # -- algebra -------------------------------------------------------
    def _check(self, other: "LaurentMatrix") -> None:
        if self.rank != other.rank:
            raise ValueError("rank mismatch")

    def __add__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        self._check(other)
        out = dict(self.coeffs)
        for k, m in other.coeffs.items():
            out[k] = la.add(out[k], m) if k in out else m
        return LaurentMatrix(out, self.rank, min(self.eps_order, other.eps_order))

    def scale(self, c) -> "LaurentMatrix":
        return LaurentMatrix({k: la.scale(m, c) for k, m in self.coeffs.items()}, self.rank, self.eps_order)

    def __neg__(self) -> "LaurentMatrix":
        return self.scale(-1)

    def __sub__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        return self + (-other)

    def __mul__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        self._check(other)
        e = min(self.eps_order, other.eps_order)
        out: dict[tuple[int, int], Matrix] = {}
        for (n1, c1), a in self.coeffs.items():
            for (n2, c2), b in other.coeffs.items():
                if n1 + n2 > e:
                    continue
                k = (n1 + n2, c1 + c2)
                p = la.mul(a, b)
                out[k] = la.add(out[k], p) if k in out else p
        return LaurentMatrix(out, self.rank, e)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LaurentMatrix):
            return NotImplemented
        return self.rank == other.rank and self.eps_order == other.eps_order and dict(self.coeffs) == dict(other.coeffs)

    def star_neg(self, metric: Metric) -> "LaurentMatrix":
        """``M*(-z)``."""
        return LaurentMatrix({(n, c): la.scale(metric.adjoint(m), (-1) ** (c % 2)) for (n, c), m in self.coeffs.items()}, self.rank, self.eps_order)

    def _eps_nilpotent(self) -> bool:
        return not any(n == 0 for n, _ in self.coeffs)

    def power_series(self, weights: Callable[[int], Fraction], max_terms: int | None = None) -> "LaurentMatrix":
        """``sum_k weights(k) X^k``; requires termination of the series."""
        out = LaurentMatrix.identity(self.rank, self.eps_order).scale(weights(0))
        term = LaurentMatrix.identity(self.rank, self.eps_order)
        bound = max_terms if max_terms is not None else (self.eps_order + 1 if self._eps_nilpotent() else 64)
        for k in range(1, bound + 1):
            term = term * self
            if not term.coeffs:
                return out
            out = out + term.scale(weights(k))
        if self._eps_nilpotent():
            return out
        raise ArithmeticError("series does not terminate: generator is neither eps-small nor nilpotent")

    def exp(self) -> "LaurentMatrix":
        return self.power_series(lambda k: Fraction(1, factorial(k)))

    def log(self) -> "LaurentMatrix":
        x = self - LaurentMatrix.identity(self.rank, self.eps_order)
        return x.power_series(lambda k: Fraction(0) if k == 0 else Fraction((-1) ** (k + 1), k))

    def inverse(self) -> "LaurentMatrix":
        """Inverse when the eps^0 part is a constant invertible matrix."""
        base = self.eps_part(0)
        if set(base) - {0}:
            raise ArithmeticError("inverse needs a z-constant eps^0 part")
        m0inv = la.inverse(base.get(0, la.zeros(self.rank)))
        m0inv_l = LaurentMatrix({(0, 0): m0inv}, self.rank, self.eps_order)
        # M = M0 (I + X), X eps-small
        x = m0inv_l * self - LaurentMatrix.identity(self.rank, self.eps_order)
        geo = x.power_series(lambda k: Fraction((-1) ** k))
        return geo * m0inv_l

    def as_endo(self, n: int, window: tuple[int, int]) -> LoopEndo:
        return LoopEndo.multiplication(self.eps_part(n), self.rank, window)

    # -- file format ---------------------------------------------------
    def to_json(self, metric: Metric | None = None) -> dict:
        zr = self.z_range() or (0, 0)
        data = {
            "rank": self.rank,
            "eps_order": self.eps_order,
            "window": list(zr),
            "terms": [{"eps": n, "z": c, "matrix": la.fmt_matrix(m)} for (n, c), m in sorted(self.coeffs.items())],
        }
        if metric is not None:
            data["metric"] = metric.to_json()
        return data

    def dumps(self, metric: Metric | None = None) -> str:
        return json.dumps(self.to_json(metric), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: Mapping) -> "LaurentMatrix":
        rank = int(data["rank"])
        lo, hi = data.get("window", [None, None])
        coeffs: dict[tuple[int, int], Matrix] = {}
        for t in data["terms"]:
            c = int(t["z"])
            if lo is not None and not (lo <= c <= hi):
                raise ValueError(f"coefficient z^{c} outside declared window {lo, hi}")
            m = la.as_matrix([[parse_fraction(x) for x in r] for r in t["matrix"]])
            key = (int(t.get("eps", 0)), c)
            coeffs[key] = la.add(coeffs[key], m) if key in coeffs else m
        return cls(coeffs, rank, int(data.get("eps_order", 0)))


def metric_from_json(data: Mapping, rank: int) -> Metric:
    if "metric" in data:
        return Metric.from_json(data["metric"])
    return Metric.identity(rank)


def is_symplectic(m: LaurentMatrix, metric: Metric) -> bool:
    """``M*(-z) M(z) = I`` through the jet's eps order."""
    prod = m.star_neg(metric) * m
    return prod == LaurentMatrix.identity(m.rank, m.eps_order)


def inf_symplectic_matrix(a: LaurentMatrix, metric: Metric) -> bool:
    """``A*(-z) = -A(z)`` for a matrix Laurent jet."""
    return (a.star_neg(metric) + a).coeffs == {}


def birkhoff_factorize(m: LaurentMatrix) -> tuple[LaurentMatrix, LaurentMatrix]:
    """Split ``M = S R`` with ``S = I + O(z^-1)`` and ``R`` a series in ``z``.

    For a jet whose eps^0 part is a constant invertible matrix ``M0`` the
    factors are found order by order in eps: at each order the unknown
    ``S_n M0 + R_n`` equals a known Laurent polynomial, whose negative part
    gives ``S_n`` and non-negative part ``R_n``.  A plain (E = 0) matrix is
    accepted only when it is already one-sided.
    """
    rank, e = m.rank, m.eps_order
    base = m.eps_part(0)
    if set(base) - {0}:
        if e == 0 and m.is_one_sided("pos"):
            la.inverse(m.get(0, 0))
            return LaurentMatrix.identity(rank, e), m
        if e == 0 and m.is_one_sided("neg"):
            m0 = m.get(0, 0)
            inv = la.inverse(m0)
            s = m * LaurentMatrix({(0, 0): inv}, rank, e)
            return s, LaurentMatrix({(0, 0): m0}, rank, e)
        raise ValueError("Birkhoff factorization needs a z-constant eps^0 part (or a one-sided plain matrix)")
    m0 = base.get(0, la.zeros(rank))
    try:
        m0inv = la.inverse(m0)
    except ZeroDivisionError:
        raise ValueError("singular z^0 coefficient") from None
    s_parts: dict[int, dict[int, Matrix]] = {0: {0: la.identity(rank)}}
    r_parts: dict[int, dict[int, Matrix]] = {0: {0: m0}}
    for n in range(1, e + 1):
        x: dict[int, Matrix] = dict(m.eps_part(n))
        for i in range(1, n):
            for ca, a in s_parts[i].items():
                for cb, b in r_parts[n - i].items():
                    p = la.scale(la.mul(a, b), -1)
                    x[ca + cb] = la.add(x[ca + cb], p) if ca + cb in x else p
        s_parts[n] = {c: la.mul(v, m0inv) for c, v in x.items() if c < 0}
        r_parts[n] = {c: v for c, v in x.items() if c >= 0}
    s = LaurentMatrix({(n, c): v for n, d in s_parts.items() for c, v in d.items()}, rank, e)
    r = LaurentMatrix({(n, c): v for n, d in r_parts.items() for c, v in d.items()}, rank, e)
    if s * r != m:
        raise ArithmeticError("Birkhoff recomposition failed")
    return s, r


# ---------------------------------------------------------------------------
# Darboux coordinates


@dataclass(frozen=True)
class DarbouxConvention:
    """q-basis ``phi_mu z^k``; p-basis ``phi^mu (-z)^(-k-1)`` with ``phi^mu = g^{mu nu} phi_nu``.

    With these choices ``Omega(q-basis(mu,k), p-basis(nu,l)) = -delta delta``,
    i.e. ``Omega = sum dp ^ dq``.
    """

    metric: Metric
    max_descendant: int

    @property
    def rank(self) -> int:
        return self.metric.rank

    @property
    def window(self) -> tuple[int, int]:
        return canonical_window(self.max_descendant)

    def q_vector(self, mu: int, k: int) -> LoopVector:
        return LoopVector.basis(self.rank, mu, k)

    def p_vector(self, mu: int, k: int) -> LoopVector:
        sign = (-1) ** ((k + 1) % 2)
        v = tuple(Fraction(sign) * self.metric.g_inv[mu][nu] for nu in range(self.rank))
        return LoopVector({-k - 1: v}, self.rank)

    def coordinates(self, v: "LoopVector | Mapping[Basis, Fraction]") -> dict[tuple[str, int, int], Fraction]:
        """Darboux coordinates of a vector given in the ``(mu, j)`` basis.

        Components outside the window are ignored.
        """
        if isinstance(v, LoopVector):
            v = v.terms()
        out: dict[tuple[str, int, int], Fraction] = {}
        K = self.max_descendant
        for (mu, j), c in v.items():
            if 0 <= j <= K:
                out[("q", mu, j)] = out.get(("q", mu, j), 0) + c
            elif -K - 1 <= j < 0:
                k = -j - 1
                sign = (-1) ** ((k + 1) % 2)
                for nu in range(self.rank):
                    g = self.metric.g[nu][mu]
                    if g:
                        out[("p", nu, k)] = out.get(("p", nu, k), 0) + sign * g * c
        return {k: c for k, c in out.items() if c}

    def basis_vector(self, var: tuple[str, int, int]) -> dict[Basis, Fraction]:
        kind, mu, k = var
        vec = self.q_vector(mu, k) if kind == "q" else self.p_vector(mu, k)
        return vec.terms()
