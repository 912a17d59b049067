"""Deterministic pseudo-random infinitesimally symplectic generators and group-element jets."""
from __future__ import annotations

import random
from fractions import Fraction
from typing import Sequence

from . import _linalg as la
from .loop import LaurentMatrix, Metric


def random_inf_symplectic(metric: Metric, z_powers: Sequence[int], rng: random.Random, height: int = 10) -> dict[int, la.Matrix]:
    """Coefficients ``A_k`` with ``A_k* = (-1)^(k+1) A_k``, entries of numerator/denominator at most ``height``.

    Built as ``(X + s X*)/2`` from a random X, which lands in the right eigenspace of the adjoint.
    """
    n = metric.rank
    out = {}
    for k in z_powers:
        x = tuple(tuple(Fraction(rng.randint(-height, height), rng.randint(1, height)) for _ in range(n)) for _ in range(n))
        sign = -1 if k % 2 == 0 else 1
        a = la.scale(la.add(x, la.scale(metric.adjoint(x), sign)), Fraction(1, 2))
        if not la.is_zero(a):
            out[k] = a
    return out


def exp_jet(generator: dict[int, la.Matrix], rank: int, eps_order: int) -> LaurentMatrix:
    """``exp(eps A(z))`` through eps^E."""
    return LaurentMatrix.from_z(generator, rank, eps_order, eps_power=1).exp()


def random_r_jet(metric: Metric, rng: random.Random, eps_order: int, max_power: int = 1, height: int = 10) -> LaurentMatrix:
    return exp_jet(random_inf_symplectic(metric, range(1, max_power + 1), rng, height), metric.rank, eps_order)


def random_s_jet(metric: Metric, rng: random.Random, eps_order: int, max_power: int = 1, height: int = 10) -> LaurentMatrix:
    return exp_jet(random_inf_symplectic(metric, range(-max_power, 0), rng, height), metric.rank, eps_order)
