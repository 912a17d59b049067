"""Command-line entry point: ``givental <command> ...``.

Exit codes: 0 pass, 1 fail, 2 undecidable, 64 usage error.
Verbosity is read from ``GIVENTAL_VERBOSITY`` (0 quiet, 1 info, 2 debug).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import _linalg as la
from .axioms import FAIL, PASS, UNDECIDABLE, check_all, is_semisimple, overall_status, quantum_product
from .loop import (
    DarbouxConvention,
    LaurentMatrix,
    LoopEndo,
    Metric,
    WindowError,
    birkhoff_factorize,
    canonical_window,
    inf_symplectic_matrix,
    is_symplectic,
    metric_from_json,
)
from .quantization import quadratic_hamiltonian, weyl_quantize
from .series import TruncatedPotential, TruncationError, TruncationSpec, fmt_fraction, parse_fraction
from .tau import (
    SRData,
    Theory,
    axiomatic_tau,
    builtin_theory,
    check_jet_property,
    point_correlators,
    virasoro_system_correlators,
)
from .virasoro import M_MAX, build_point_virasoro, check_annihilation, check_virasoro_relations, point_virasoro_family

EXIT_PASS, EXIT_FAIL, EXIT_UNDECIDABLE, EXIT_USAGE = 0, 1, 2, 64
_EXIT = {PASS: EXIT_PASS, FAIL: EXIT_FAIL, UNDECIDABLE: EXIT_UNDECIDABLE}
_SPEC_FLAGS = {"N": "rank", "K": "max_descendant", "D": "max_degree", "G": "max_genus", "E": "flow_order"}

log = logging.getLogger("givental")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one command run."""

    command: str
    truncation: TruncationSpec = field(default_factory=TruncationSpec)
    params: dict = field(default_factory=dict)
    input: Path | None = None
    output: Path | None = None
    format: str = "text"
    explicit: frozenset = frozenset()  # truncation fields set by flag or config

    def __post_init__(self) -> None:
        if self.format not in ("json", "text"):
            raise UsageError(f"unknown format {self.format!r}")
        t = self.truncation
        if t.rank < 1:
            raise UsageError("N must be at least 1")
        for f in fields(t):
            if getattr(t, f.name) < 0:
                raise UsageError(f"{f.name} must be non-negative")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits with 2 by default; 2 means undecidable here
        raise UsageError(message)


def _spec_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("truncation (defaults N=1 K=3 D=6 G=2 E=4)")
    for flag, name in _SPEC_FLAGS.items():
        g.add_argument(f"--{flag}", dest=name, type=int, default=None, help=name.replace("_", " "))


def _io_args(p: argparse.ArgumentParser, theory: bool = True) -> None:
    if theory:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--builtin", help="point or npoint:N")
        src.add_argument("--input", type=Path, help="theory or potential JSON file")
    p.add_argument("--output", type=Path, help="write here (atomically) instead of stdout")
    p.add_argument("--format", choices=("json", "text"), default=None)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="givental", allow_abbrev=False, description="Exact axiomatic Gromov-Witten computations at finite truncation.")
    p.add_argument("--config", type=Path, help="JSON file with truncation fields and format")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("intersect", help="point intersection numbers", allow_abbrev=False)
    s.add_argument("--g", dest="genus", type=int, default=None, help="only this genus")
    s.add_argument("--max-n", dest="max_n", type=int, default=None, help="at most this many insertions")
    s.add_argument("--route", choices=("recursion", "virasoro"), default="recursion")
    _spec_args(s)
    _io_args(s, theory=False)

    s = sub.add_parser("potentials", help="emit the potentials of a theory", allow_abbrev=False)
    _spec_args(s)
    _io_args(s)

    s = sub.add_parser("check", help="verify a theory", allow_abbrev=False)
    s.add_argument("what", choices=("axioms", "virasoro", "jet"))
    s.add_argument("--m", type=int, action="append", default=None, help="Virasoro index (repeatable)")
    s.add_argument("--relations", action="store_true", help="also check the commutation relations")
    _spec_args(s)
    _io_args(s)

    s = sub.add_parser("quantize", help="quantize L_m or an infinitesimal symplectic matrix", allow_abbrev=False)
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--virasoro", type=int, metavar="M")
    grp.add_argument("--matrix", type=Path, help="Laurent matrix JSON (eps order 0)")
    _spec_args(s)
    _io_args(s, theory=False)

    s = sub.add_parser("act", help="transform a theory by S and R jets", allow_abbrev=False)
    s.add_argument("--S", dest="s_file", type=Path, help="S jet (I + O(1/z))")
    s.add_argument("--R", dest="r_file", type=Path, help="R jet (series in z)")
    s.add_argument("--M", dest="m_file", type=Path, help="group element jet, Birkhoff-factored")
    s.add_argument("--string", action="store_true", help="S = exp(eps/z)")
    s.add_argument("--genus0", action="store_true", help="transform genus zero only")
    _spec_args(s)
    _io_args(s)

    s = sub.add_parser("birkhoff", help="factor M = S R", allow_abbrev=False)
    s.add_argument("--matrix", type=Path, required=True)
    s.add_argument("--s-out", type=Path)
    s.add_argument("--r-out", type=Path)
    _io_args(s, theory=False)

    s = sub.add_parser("semisimple", help="semisimplicity of the quantum product", allow_abbrev=False)
    s.add_argument("--base-point", help="comma-separated t^mu_0 values (default 0)")
    s.add_argument("--probe", help="comma-separated probe vector")
    _spec_args(s)
    _io_args(s)
    return p


def _fractions(text: str | None) -> tuple[Fraction, ...] | None:
    if text is None:
        return None
    try:
        return tuple(parse_fraction(x.strip()) for x in text.split(","))
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"bad rational list {text!r}: {e}") from None


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not JSON: {e}") from None


def make_config(ns: argparse.Namespace) -> RunConfig:
    base: dict[str, Any] = TruncationSpec().to_json()
    explicit = set()
    # files default to JSON, the terminal to text
    fmt = "json" if getattr(ns, "output", None) is not None else "text"
    if ns.config is not None:
        data = _read_json(ns.config)
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        for k, v in data.items():
            name = _SPEC_FLAGS.get(k, k)
            if name in base:
                base[name] = int(v)
                explicit.add(name)
            elif k == "format":
                fmt = str(v)
            else:
                raise UsageError(f"unknown config key {k!r}")
    for name in _SPEC_FLAGS.values():
        v = getattr(ns, name, None)
        if v is not None:
            base[name] = v
            explicit.add(name)
    if getattr(ns, "format", None):
        fmt = ns.format
    params = {k: v for k, v in vars(ns).items() if k not in set(_SPEC_FLAGS.values()) | {"config", "command", "input", "output", "format"}}
    try:
        spec = TruncationSpec(**base)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None
    return RunConfig(ns.command, spec, params, getattr(ns, "input", None), getattr(ns, "output", None), fmt, frozenset(explicit))


# ---------------------------------------------------------------------------
# output


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def _emit(cfg: RunConfig, data: dict, text: str) -> None:
    out = _dumps(data) if cfg.format == "json" else (text + "\n" if text and not text.endswith("\n") else text)
    if cfg.output is not None:
        atomic_write(cfg.output, out)
        log.info("wrote %s", cfg.output)
    else:
        sys.stdout.write(out)


# ---------------------------------------------------------------------------
# loading theories


def load_theory(cfg: RunConfig) -> Theory:
    builtin = cfg.params.get("builtin")
    if builtin is None and cfg.input is None:
        builtin = "point" if cfg.truncation.rank == 1 else f"npoint:{cfg.truncation.rank}"
    if builtin is not None:
        try:
            return builtin_theory(builtin, cfg.truncation)
        except ValueError as e:
            raise UsageError(str(e)) from None
    data = _read_json(cfg.input)
    try:
        if "potentials" in data:
            theory = Theory.from_json(data)
        else:
            pots = TruncatedPotential.from_json(data)
            theory = Theory(Metric.identity(pots.spec.rank), pots)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"{cfg.input}: not a theory file ({e})") from None
    # explicit truncation flags narrow a file's own window
    narrowed = {k: getattr(cfg.truncation, k) for k in cfg.explicit if k != "rank"}
    if narrowed:
        target = replace(theory.spec, **narrowed)
        try:
            theory = theory.rebuild(target)
        except TruncationError as e:
            raise UsageError(str(e)) from None
    return theory


def _load_matrix(path: Path) -> tuple[LaurentMatrix, dict]:
    data = _read_json(path)
    try:
        return LaurentMatrix.from_json(data), data
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise UsageError(f"{path}: not a Laurent matrix file ({e})") from None


def symplectic_defect(m: LaurentMatrix, metric: Metric) -> dict | None:
    """Lowest nonzero coefficient of ``M*(-z) M(z) - I``, or None."""
    d = m.star_neg(metric) * m - LaurentMatrix.identity(m.rank, m.eps_order)
    if not d.coeffs:
        return None
    (n, c), mat = min(d.coeffs.items())
    return {"identity": "M*(-z) M(z) = I", "eps": n, "z": c, "defect": la.fmt_matrix(mat)}


# ---------------------------------------------------------------------------
# commands


def cmd_intersect(cfg: RunConfig) -> int:
    g, max_n = cfg.params.get("genus"), cfg.params.get("max_n")
    if g is not None and not 0 <= g <= 12:
        raise UsageError("--g must lie in 0..12")
    if max_n is not None and not 0 <= max_n <= 24:
        raise UsageError("--max-n must lie in 0..24")
    spec = replace(cfg.truncation, rank=1)
    if g is not None and g > spec.max_genus:
        spec = replace(spec, max_genus=g)
    if max_n is not None and max_n > spec.max_degree:
        spec = replace(spec, max_degree=max_n)
    if spec.max_genus > 12 or spec.max_degree > 24:
        raise UsageError("bounds exceed G <= 12, D <= 24")
    if cfg.params.get("route") == "virasoro":
        table = virasoro_system_correlators(spec)
    else:
        table = point_correlators(spec)
    table = table.select(g, max_n)
    _emit(cfg, table.to_json(), table.to_text())
    return EXIT_PASS


def cmd_potentials(cfg: RunConfig) -> int:
    theory = load_theory(cfg)
    lines = [f"spec {json.dumps(theory.spec.to_json(), sort_keys=True)}"]
    for g in range(theory.spec.max_genus + 1):
        terms = [f"{fmt_fraction(c)}*" + "*".join(f"t{mu}_{k}" for mu, k in m) for m, c in theory.potentials.genus(g)]
        lines.append(f"F{g} = " + (" + ".join(terms) or "0"))
    _emit(cfg, theory.to_json(), "\n".join(lines))
    return EXIT_PASS


def _check_axioms(cfg: RunConfig, theory: Theory) -> tuple[str, dict, str]:
    reports = check_all(theory.potentials.genus(0), theory.metric)
    status = overall_status(reports)
    data = {"check": "axioms", "status": status, "reports": [r.to_json() for r in reports]}
    return status, data, "\n".join(r.to_table() for r in reports)


def _check_virasoro(cfg: RunConfig, theory: Theory) -> tuple[str, dict, str]:
    ms = cfg.params.get("m") or list(range(-1, 4))
    if any(m < -1 or m > M_MAX for m in ms):
        raise UsageError(f"--m must lie in -1..{M_MAX}")
    if theory.metric != Metric.n_point(theory.rank):
        return UNDECIDABLE, {"check": "virasoro", "status": UNDECIDABLE, "detail": "no Virasoro family is known for this metric"}, "undecidable: no Virasoro family is known for this metric"
    spec = theory.spec
    family = point_virasoro_family(spec, max(max(ms), 1), spec.max_descendant + max(max(ms), 1))
    results, lines = [], []
    statuses = []
    for m in sorted(set(ms)):
        try:
            r = check_annihilation(family, m, theory.potentials)
            st = PASS if r.ok else FAIL
            item = {"m": m, "status": st, "exact_box": r.spec.to_json(),
                    "witnesses": [{"hbar": h, "monomial": [list(v) for v in mono], "value": fmt_fraction(c)} for h, mono, c in r.witnesses]}
        except (WindowError, TruncationError) as e:
            st = UNDECIDABLE
            item = {"m": m, "status": st, "detail": str(e)}
        statuses.append(st)
        results.append(item)
        lines.append(f"L_{m}: {st}")
        for w in item.get("witnesses", [])[:20]:
            lines.append(f"    hbar^{w['hbar']} {w['monomial']}: {w['value']}")
    rel = []
    if cfg.params.get("relations"):
        for m in range(-1, max(ms) + 1):
            for n in range(-1, max(ms) + 1):
                if m + n > family.m_max:
                    continue
                rr = check_virasoro_relations(family, m, n)
                statuses.append(rr.status)
                rel.append({"m": m, "n": n, "status": rr.status, "window": rr.window})
                lines.append(f"[L_{m}, L_{n}] = ({m - n}) L_{m + n}: {rr.status}")
    status = overall_status_from(statuses)
    return status, {"check": "virasoro", "status": status, "annihilation": results, "relations": rel}, "\n".join(lines)


def overall_status_from(statuses: Sequence[str]) -> str:
    if FAIL in statuses:
        return FAIL
    if UNDECIDABLE in statuses or not statuses:
        return UNDECIDABLE
    return PASS


def _check_jet(cfg: RunConfig, theory: Theory) -> tuple[str, dict, str]:
    if theory.spec.max_genus < 1:
        return UNDECIDABLE, {"check": "jet", "status": UNDECIDABLE, "detail": "no genus >= 1 in window"}, "undecidable: no genus >= 1 in window"
    rep = check_jet_property(theory.potentials)
    status = PASS if rep.ok else FAIL
    off = [{"genus": g, "monomial": [list(v) for v in m]} for g, m in rep.offending]
    lines = [f"jet: {status}"] + [f"    F{o['genus']} {o['monomial']}" for o in off[:20]]
    return status, {"check": "jet", "status": status, "offending": off}, "\n".join(lines)


def cmd_check(cfg: RunConfig) -> int:
    theory = load_theory(cfg)
    what = cfg.params["what"]
    status, data, text = {"axioms": _check_axioms, "virasoro": _check_virasoro, "jet": _check_jet}[what](cfg, theory)
    data["spec"] = theory.spec.to_json()
    _emit(cfg, data, f"{text}\noverall: {status}")
    return _EXIT[status]


def cmd_quantize(cfg: RunConfig) -> int:
    spec = cfg.truncation
    K = spec.max_descendant
    m = cfg.params.get("virasoro")
    if m is not None:
        try:
            op = build_point_virasoro(m, spec)
        except (ValueError, WindowError) as e:
            raise UsageError(str(e)) from None
        name = f"L_{m}"
    else:
        a, data = _load_matrix(cfg.params["matrix"])
        metric = metric_from_json(data, a.rank)
        if a.eps_order != 0:
            raise UsageError("quantize takes a plain Laurent matrix (eps order 0)")
        if not inf_symplectic_matrix(a, metric):
            bad = a.star_neg(metric) + a
            (n, c), mat = min(bad.coeffs.items())
            cert = {"identity": "A*(-z) = -A(z)", "z": c, "defect": la.fmt_matrix(mat)}
            _emit(cfg, {"status": FAIL, "certificate": cert}, f"not infinitesimally symplectic: z^{c} defect {la.fmt_matrix(mat)}")
            return EXIT_FAIL
        spread = max(abs(c) for _, c in a.coeffs) if a.coeffs else 0
        win = canonical_window(K + spread)
        endo = LoopEndo.multiplication(a.eps_part(0), a.rank, win)
        conv = DarbouxConvention(metric, K)
        op = weyl_quantize(quadratic_hamiltonian(endo.with_window(canonical_window(K)), conv, check=False), K)
        spec = replace(spec, rank=a.rank)
        name = "A"
    data = {"status": PASS, "spec": spec.to_json(), "name": name, "operator": op.to_json(), "text": op.to_text()}
    _emit(cfg, data, f"{name}^ = {op.to_text()}")
    return EXIT_PASS


def _string_jet(rank: int, E: int) -> LaurentMatrix:
    return LaurentMatrix({(1, -1): la.identity(rank)}, rank, E).exp()


def cmd_act(cfg: RunConfig) -> int:
    theory = load_theory(cfg)
    E = cfg.truncation.flow_order
    spec = replace(theory.spec, flow_order=E)
    metric = theory.metric
    p = cfg.params
    ident = LaurentMatrix.identity(theory.rank, E)
    if p.get("m_file") and (p.get("s_file") or p.get("r_file") or p.get("string")):
        raise UsageError("--M excludes --S, --R and --string")
    jets: dict[str, LaurentMatrix] = {}
    if p.get("m_file"):
        jets["M"] = _load_matrix(p["m_file"])[0].with_order(E)
    else:
        if p.get("s_file") and p.get("string"):
            raise UsageError("--S excludes --string")
        jets["S"] = _load_matrix(p["s_file"])[0].with_order(E) if p.get("s_file") else (_string_jet(theory.rank, E) if p.get("string") else ident)
        jets["R"] = _load_matrix(p["r_file"])[0].with_order(E) if p.get("r_file") else ident
    for name, j in jets.items():
        if j.rank != theory.rank:
            raise UsageError(f"{name} has rank {j.rank}, theory has rank {theory.rank}")
        cert = symplectic_defect(j, metric)
        if cert is not None:
            cert["jet"] = name
            _emit(cfg, {"status": FAIL, "spec": spec.to_json(), "certificate": cert}, f"{name} is not symplectic: eps^{cert['eps']} z^{cert['z']} defect {cert['defect']}")
            return EXIT_FAIL
    try:
        sr = SRData.from_product(jets["M"], metric) if "M" in jets else SRData(jets["S"], jets["R"], metric)
    except (ValueError, ArithmeticError) as e:
        _emit(cfg, {"status": FAIL, "spec": spec.to_json(), "detail": str(e)}, f"rejected: {e}")
        return EXIT_FAIL
    if p.get("genus0"):
        spec = replace(spec, max_genus=0)
    log.info("acting on %s at %s", theory.builtin or cfg.input, spec)
    result = axiomatic_tau(theory, sr, spec)
    reports = check_all(result.jet.genus_family(0), metric)
    status = overall_status(reports)
    out = result.theory.to_json()
    out["reports"] = [r.to_json() for r in reports]
    out["stabilized"] = result.jet.stabilized
    if status != PASS:
        # never write a transformed theory that fails its own re-verification
        sys.stdout.write(_dumps({"status": status, "spec": spec.to_json(), "reports": out["reports"]}))
        return _EXIT[status]
    _emit(cfg, out, "\n".join(r.to_table() for r in reports) + f"\noverall: {status}")
    return EXIT_PASS


def cmd_birkhoff(cfg: RunConfig) -> int:
    m, data = _load_matrix(cfg.params["matrix"])
    try:
        s, r = birkhoff_factorize(m)
    except (ValueError, ZeroDivisionError, ArithmeticError) as e:
        _emit(cfg, {"status": FAIL, "detail": str(e)}, f"cannot factor: {e}")
        return EXIT_FAIL
    if s * r != m:  # birkhoff_factorize checks this too; the CLI never writes unchecked factors
        _emit(cfg, {"status": FAIL, "detail": "recomposition mismatch"}, "recomposition mismatch")
        return EXIT_FAIL
    metric = Metric.from_json(data["metric"]) if "metric" in data else None
    for path, f in ((cfg.params.get("s_out"), s), (cfg.params.get("r_out"), r)):
        if path is not None:
            atomic_write(path, f.dumps(metric) + "\n")
    out = {"status": PASS, "S": s.to_json(metric), "R": r.to_json(metric)}
    _emit(cfg, out, f"S = {s.to_json()['terms']}\nR = {r.to_json()['terms']}")
    return EXIT_PASS


def cmd_semisimple(cfg: RunConfig) -> int:
    theory = load_theory(cfg)
    bp = _fractions(cfg.params.get("base_point"))
    probe = _fractions(cfg.params.get("probe"))
    for v in (bp, probe):
        if v is not None and len(v) != theory.rank:
            raise UsageError(f"expected {theory.rank} entries")
    qp = quantum_product(theory.potentials.genus(0), theory.metric, bp)
    verdict = is_semisimple(qp, probe)
    data = {
        "spec": theory.spec.to_json(),
        "status": verdict.status,
        "semisimple": verdict.semisimple,
        "minimal_polynomial": None if verdict.minimal_polynomial is None else [fmt_fraction(c) for c in verdict.minimal_polynomial],
        "certificate": verdict.certificate(),
        "probe": None if verdict.probe is None else [fmt_fraction(c) for c in verdict.probe],
        "probes_tried": verdict.tried,
    }
    text = f"semisimple: {verdict.status}\nminimal polynomial: {data['certificate'] or '-'}"
    _emit(cfg, data, text)
    return _EXIT[verdict.status]


COMMANDS = {
    "intersect": cmd_intersect,
    "potentials": cmd_potentials,
    "check": cmd_check,
    "quantize": cmd_quantize,
    "act": cmd_act,
    "birkhoff": cmd_birkhoff,
    "semisimple": cmd_semisimple,
}


def _setup_logging() -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(int(os.environ.get("GIVENTAL_VERBOSITY", "0") or 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = make_config(ns)
        return COMMANDS[cfg.command](cfg)
    except UsageError as e:
        sys.stderr.write(f"givental: usage error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
