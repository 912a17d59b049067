"""Quantized Virasoro operators, their relations, and annihilation of tau-functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .loop import (
    DarbouxConvention,
    LaurentMatrix,
    LoopEndo,
    Metric,
    WindowError,
    canonical_window,
    loop_commutator,
    virasoro_generator,
)
from .quantization import (
    FockOperator,
    PotentialJet,
    apply_fock_operator,
    apply_operator_jet,
    cocycle,
    operator_commutator,
    quadratic_hamiltonian,
    weyl_quantize,
)
from .series import Monomial, TruncatedPotential, TruncationSpec

M_MAX = 5


@dataclass(frozen=True)
class VirasoroFamily:
    operators: Mapping[int, FockOperator]
    spec: TruncationSpec
    origin: str = "point"
    metric: Metric | None = None
    sr: object = None

    def __getitem__(self, m: int) -> FockOperator:
        return self.operators[m]

    @property
    def m_max(self) -> int:
        return max(self.operators)


def _central_constant(rank: int) -> Fraction:
    # fixed so that [L1^, L-1^] = 2 L0^ holds on the nose
    K = 1
    conv = DarbouxConvention(Metric.identity(rank), K)
    w = canonical_window(K)
    p1 = quadratic_hamiltonian(virasoro_generator(1, rank, w), conv)
    pm = quadratic_hamiltonian(virasoro_generator(-1, rank, w), conv)
    return cocycle(p1, pm) / 2


def build_point_virasoro(m: int, spec: TruncationSpec, window: int | None = None) -> FockOperator:
    """``L_m^`` for N copies of the point, complete for indices up to ``window`` (default K).

    ``L_0^`` carries the constant N/16.
    """
    if m < -1:
        raise ValueError("L_m is defined for m >= -1")
    K = spec.max_descendant if window is None else window
    if m - 1 > K:
        raise WindowError(f"k <= {K} cannot hold the hbar d d part of L_{m}")
    rank = spec.rank
    conv = DarbouxConvention(Metric.identity(rank), K)
    op = weyl_quantize(quadratic_hamiltonian(virasoro_generator(m, rank, canonical_window(K)), conv), K)
    if m == 0:
        op = op + FockOperator.constant(_central_constant(rank), K)
    return op


def point_virasoro_family(spec: TruncationSpec, m_max: int = M_MAX, window: int | None = None) -> VirasoroFamily:
    ops = {m: build_point_virasoro(m, spec, window) for m in range(-1, m_max + 1)}
    return VirasoroFamily(ops, spec, "point" if spec.rank == 1 else "N-point", Metric.n_point(spec.rank))


@dataclass
class RelationReport:
    ok: bool | None  # None: undecidable at this window
    m: int
    n: int
    discrepancy: FockOperator
    window: int | None = None

    @property
    def status(self) -> str:
        return {True: "pass", False: "fail", None: "undecidable"}[self.ok]


def _agree_on(a: FockOperator, b: FockOperator, k: int) -> FockOperator:
    return a.restrict(k) - b.restrict(k)


def check_virasoro_relations(family: VirasoroFamily, m: int, n: int, window: int | None = None) -> RelationReport:
    """``[L_m^, L_n^] - (m - n) L_(m+n)^`` on the complete sub-window.

    The point family is rebuilt on a padded window so that every term with
    indices up to K is exact; conjugated families are compared on whatever
    complete window they carry.
    """
    if m + n > family.m_max:
        return RelationReport(None, m, n, FockOperator(), None)
    K = family.spec.max_descendant if window is None else window
    if family.origin in ("point", "N-point"):
        pad = max(abs(m), abs(n), abs(m + n), 1) + 1
        big = family.spec.grow(descendant=pad)
        a = build_point_virasoro(m, big)
        b = build_point_virasoro(n, big)
        c = build_point_virasoro(m + n, big) if m != n else FockOperator()
    else:
        a, b = family[m], family[n]
        c = family[m + n] if m != n else FockOperator()
    comm = operator_commutator(a, b)
    cw = comm.window
    if cw is not None and cw < K:
        K = cw
    if K < 0:
        return RelationReport(None, m, n, FockOperator(), None)
    disc = _agree_on(comm, c.scale(m - n), K)
    return RelationReport(disc.is_zero(), m, n, disc, K)


@dataclass
class AnnihilationReport:
    ok: bool
    m: int
    witnesses: list[tuple]
    spec: TruncationSpec
    dropped_genus: bool = False

    @property
    def status(self) -> str:
        return "pass" if self.ok else "fail"


def check_annihilation(family: VirasoroFamily, m: int, tau: TruncatedPotential, unit: Sequence | None = None) -> AnnihilationReport:
    """Every coefficient of ``(L_m^ tau)/tau`` on the exact box must vanish.

    Witnesses are ``(hbar power, monomial, coefficient)`` for nonzero entries.
    """
    if tau.spec.rank != family.spec.rank:
        raise ValueError("rank mismatch")
    op = family[m]
    if family.origin in ("point", "N-point") and (op.window is None or op.window < tau.spec.max_descendant + max(m, 0)):
        op = build_point_virasoro(m, tau.spec, tau.spec.max_descendant + max(m, 1))
    if unit is None and family.metric is not None:
        unit = family.metric.unit
    val = apply_fock_operator(op, tau, unit)
    wit = val.nonzero()
    return AnnihilationReport(not wit, m, wit, val.spec, val.dropped_genus)


def check_annihilation_jet(families: Sequence[VirasoroFamily], m: int, jet: PotentialJet, unit: Sequence | None = None) -> AnnihilationReport:
    """Annihilation order by order in eps for an eps-jet of families acting on an eps-jet of potentials.

    The exact box of tau has to extend past the compared box, because the
    conjugated operators raise descendant indices. Witnesses are
    ``(eps order, hbar power, monomial, coefficient)``.
    """
    ops = [f[m] for f in families]
    if unit is None and families[0].metric is not None:
        unit = families[0].metric.unit
    vals = apply_operator_jet(ops, jet, unit)
    wit = [(n, h, mono, c) for n, v in enumerate(vals) for h, mono, c in v.nonzero()]
    return AnnihilationReport(not wit, m, wit, vals[0].spec, any(v.dropped_genus for v in vals))


# ---------------------------------------------------------------------------
# conjugation by loop-group jets


def _adjoint_series(x_parts: Mapping[int, LoopEndo], y: LoopEndo, conv: DarbouxConvention, eps_order: int):
    """``exp(ad X) Y`` for ``X = sum eps^n x_parts[n]`` at the Lie level, with cocycle constants.

    Returns eps-graded endomorphisms and constants such that the quantization
    of ``exp(ad X^) Y^`` is ``sum eps^n (ys[n]^ + consts[n])``.
    """
    def qh(e: LoopEndo) -> object:
        # only the pp and qq parts matter for the cocycle; they sit at small indices
        return quadratic_hamiltonian(e.with_window(canonical_window(conv.max_descendant)), conv, check=False, complete=False)

    # terms[k][n] = (ad X)^k Y at eps^n
    ys: dict[int, LoopEndo] = {0: y}
    consts: dict[int, Fraction] = {}
    layer: dict[int, LoopEndo] = {0: y}
    px = {n: qh(a) for n, a in x_parts.items()}
    fact = 1
    for k in range(1, eps_order + 1):
        fact *= k
        nxt: dict[int, LoopEndo] = {}
        for n_y, ey in layer.items():
            py = qh(ey)
            for n_x, ex in x_parts.items():
                n = n_y + n_x
                if n > eps_order:
                    continue
                c = loop_commutator(ex, ey)
                nxt[n] = nxt[n] + c if n in nxt else c
                consts[n] = consts.get(n, Fraction(0)) + cocycle(px[n_x], py) / fact
        layer = nxt
        for n, e in layer.items():
            ys[n] = ys[n] + e.scale(Fraction(1, fact)) if n in ys else e.scale(Fraction(1, fact))
    return ys, consts


def conjugated_virasoro(family: VirasoroFamily, sr, m_max: int | None = None) -> list[VirasoroFamily]:
    """``S^ R^ L_m^ R^-1 S^-1`` as an eps-jet of families (one family per eps order).

    Conjugation runs at the Lie level, ``exp(ad s) exp(ad r) L_m``, on a padded
    window whose lossy columns are tracked; each eps-coefficient is then
    quantized on its exact sub-window, and the cocycle supplies the constants.
    """
    from .tau import SRData

    if not isinstance(sr, SRData):
        raise TypeError("conjugation needs SRData")
    m_max = family.m_max if m_max is None else m_max
    spec = family.spec
    E = sr.eps_order
    metric = sr.metric
    K = spec.max_descendant
    spread = max(sr.z_spread(), 1)
    pad = 2 * E * spread + m_max + 2
    Kp = K + pad
    win = canonical_window(Kp)
    # quantize beyond K so the operators still reach the t-frame box
    Kq = K + m_max + 1
    conv = DarbouxConvention(metric, Kq)
    small = DarbouxConvention(metric, spread)
    s_log, r_log = sr.logs()
    s_parts = {n: LoopEndo.multiplication(s_log.eps_part(n), spec.rank, win) for n in range(1, E + 1) if s_log.eps_part(n)}
    r_parts = {n: LoopEndo.multiplication(r_log.eps_part(n), spec.rank, win) for n in range(1, E + 1) if r_log.eps_part(n)}
    fams: list[dict[int, FockOperator]] = [dict() for _ in range(E + 1)]
    for m in range(-1, m_max + 1):
        base = virasoro_generator(m, spec.rank, win)
        inner, c_inner = _adjoint_series(r_parts, base, small, E) if r_parts else ({0: base}, {})
        total: dict[int, LoopEndo] = {}
        consts: dict[int, Fraction] = dict(c_inner)
        for n_in, e in inner.items():
            outer, c_outer = _adjoint_series(s_parts, e, small, E - n_in) if s_parts else ({0: e}, {})
            for n_out, f in outer.items():
                n = n_in + n_out
                if n > E:
                    continue
                total[n] = total[n] + f if n in total else f
            for n_out, c in c_outer.items():
                if n_in + n_out <= E:
                    consts[n_in + n_out] = consts.get(n_in + n_out, Fraction(0)) + c
        for n in range(E + 1):
            e = total.get(n)
            ops = FockOperator({}, Kq)
            if e is not None:
                sw = e.safe_window()
                if sw is None or sw[1] < Kq:
                    raise WindowError("conjugated generator lost its exact window")
                ops = weyl_quantize(quadratic_hamiltonian(e.with_window(canonical_window(Kq)), conv, check=False), Kq)
            c = consts.get(n, Fraction(0)) + (family[m].constant_term() if n == 0 else 0)
            if c:
                ops = ops + FockOperator.constant(c, Kq)
            fams[n][m] = ops.with_window(Kq)
    return [VirasoroFamily(f, spec, "conjugated", metric, sr) for f in fams]
