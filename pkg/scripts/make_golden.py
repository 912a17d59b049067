"""Regenerate the golden files under tests/data.

Each table is computed by two independent routes (the recursion and the
Virasoro linear system) and written only if they agree entry for entry.
"""
from __future__ import annotations

import sys
from pathlib import Path

from givental.cli import atomic_write
from givental.series import TruncationSpec
from givental.tau import builtin_theory, point_correlators, rewrite_in_jet_variables, virasoro_system_correlators
from givental.virasoro import build_point_virasoro

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main() -> int:
    DATA.mkdir(parents=True, exist_ok=True)
    spec = TruncationSpec(rank=1, max_descendant=9, max_degree=6, max_genus=2, flow_order=0)
    table = point_correlators(spec)
    dual = virasoro_system_correlators(spec, ms=(-1, 0, 1, 2))
    if dual.entries != table.entries:
        print("recursion and Virasoro system disagree; nothing written", file=sys.stderr)
        return 1
    atomic_write(DATA / "point_correlators_G2_D6.txt", table.to_text())

    ops = [f"L_{m}^ = {build_point_virasoro(m, TruncationSpec(1, 3, 6, 2, 0)).to_text()}" for m in range(-1, 4)]
    atomic_write(DATA / "point_virasoro_K3.txt", "\n".join(ops) + "\n")

    jet_spec = TruncationSpec(1, 6, 9, 2, 0)
    pots = builtin_theory("point", jet_spec).potentials
    lines = []
    for g in (1, 2):
        h, off, _ = rewrite_in_jet_variables(pots, g)
        if off:
            print(f"F{g} is not a jet-variable function", file=sys.stderr)
            return 1
        # the rewritten monomials name shifted jet variables u_k - u_k(0)
        lines.append(f"F{g} = " + h.to_text().replace("t0_", "u0_"))
    atomic_write(DATA / "point_jet_rewrite.txt", "\n".join(lines) + "\n")
    print(f"wrote {len(table)} correlators and the jet rewrites to {DATA}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
