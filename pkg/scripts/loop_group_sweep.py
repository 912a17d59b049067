"""Act with many pseudo-random S and R jets on the N-point theory and re-check the genus-zero axioms.

    python scripts/loop_group_sweep.py --count 50 --rank 2 --seed 1
"""
from __future__ import annotations

import argparse
import random
import sys
import time

from givental.axioms import PASS, act_genus0
from givental.jets import random_r_jet, random_s_jet
from givental.loop import LaurentMatrix
from givental.series import TruncationSpec
from givental.tau import SRData, builtin_theory


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--rank", type=int, default=2)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--height", type=int, default=10)
    ap.add_argument("--max-power", type=int, default=2)
    ap.add_argument("--K", type=int, default=3)
    ap.add_argument("--D", type=int, default=6)
    ap.add_argument("--E", type=int, default=2)
    args = ap.parse_args()

    spec = TruncationSpec(args.rank, args.K, args.D, 0, args.E)
    th = builtin_theory("point" if args.rank == 1 else f"npoint:{args.rank}", spec)
    rng = random.Random(args.seed)
    ident = LaurentMatrix.identity(args.rank, args.E)
    failures = 0
    start = time.perf_counter()
    for i in range(args.count):
        power = 1 + i % args.max_power
        kind = "S" if i % 2 == 0 else "R"
        if kind == "S":
            sr = SRData(random_s_jet(th.metric, rng, args.E, power, args.height), ident, th.metric)
        else:
            sr = SRData(ident, random_r_jet(th.metric, rng, args.E, power, args.height), th.metric)
        _, reports = act_genus0(sr, th, spec)
        statuses = [r.status for r in reports]
        failures += statuses != [PASS] * 3
        print(f"{i:3d} {kind} z^{power}: {' '.join(statuses)}")
    print(f"{args.count - failures}/{args.count} passed in {time.perf_counter() - start:.1f}s")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
