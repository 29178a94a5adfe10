#!/usr/bin/env python3
"""Print the reversal-cost table for all six single-session disciplines.

For each session length n the table shows the measured number of backward
steps to fully revert (C_br) and the stack size holding the history (C_mo),
next to the closed-form prediction.  A mismatch anywhere exits non-zero.
"""

import argparse
import sys

from revses import analysis
from revses.primitives import PrimitiveTable


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=10)
    ap.add_argument("--modes", default="case1,case2,case3,case4,case5,case6")
    args = ap.parse_args()

    modes = tuple(m for m in args.modes.split(",") if m)
    rep = analysis.cost_report(PrimitiveTable(), n_max=args.n_max, modes=modes)

    print(f"{'mode':8} {'n':>4} {'C_br':>6} {'C_mo':>6}   predicted")
    for row in rep.details["rows"]:
        want = tuple(row["want"])
        got = (row["cBr"], row["cMo"])
        mark = "" if got == want else "   <-- MISMATCH"
        print(
            f"{row['mode']:8} {row['n']:>4} {row['cBr']!s:>6} {row['cMo']!s:>6}"
            f"   {want}{mark}"
        )
    if not rep.passed:
        for v in rep.violations:
            print("violation:", v, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
