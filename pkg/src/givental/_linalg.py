"""Small dense matrix helpers over Q (tuples of Fractions), sympy-backed where it matters."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import sympy

Matrix = tuple[tuple[Fraction, ...], ...]


def as_matrix(rows: Sequence[Sequence]) -> Matrix:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def identity(n: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


def zeros(n: int) -> Matrix:
    return tuple(tuple(Fraction(0) for _ in range(n)) for _ in range(n))


def is_zero(a: Matrix) -> bool:
    return all(x == 0 for row in a for x in row)


def add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x + y for x, y in zip(r, s)) for r, s in zip(a, b))


def sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x - y for x, y in zip(r, s)) for r, s in zip(a, b))


def scale(a: Matrix, c) -> Matrix:
    c = Fraction(c)
    return tuple(tuple(c * x for x in r) for r in a)


def mul(a: Matrix, b: Matrix) -> Matrix:
    cols = list(zip(*b))
    return tuple(tuple(sum((x * y for x, y in zip(r, col)), Fraction(0)) for col in cols) for r in a)


def transpose(a: Matrix) -> Matrix:
    return tuple(zip(*a))


def matvec(a: Matrix, v: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return tuple(sum((x * y for x, y in zip(r, v)), Fraction(0)) for r in a)


def to_sympy(a: Sequence[Sequence[Fraction]]) -> sympy.Matrix:
    return sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in r] for r in a])


def from_sympy_scalar(x) -> Fraction:
    x = sympy.Rational(x)
    return Fraction(int(x.p), int(x.q))


def from_sympy(m: sympy.Matrix) -> Matrix:
    return tuple(tuple(from_sympy_scalar(m[i, j]) for j in range(m.cols)) for i in range(m.rows))


def inverse(a: Matrix) -> Matrix:
    m = to_sympy(a)
    if m.det() == 0:
        raise ZeroDivisionError("singular matrix")
    return from_sympy(m.inv())


def rank(a: Sequence[Sequence[Fraction]]) -> int:
    if not a:
        return 0
    return to_sympy(a).rank()


def fmt_matrix(a: Matrix) -> list[list[str]]:
    from .series import fmt_fraction

    return [[fmt_fraction(x) for x in r] for r in a]
