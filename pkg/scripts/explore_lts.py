#!/usr/bin/env python3
"""Dump the reachable transition system of a source file.

Explores forward and backward moves breadth-first under the chosen
semantics and writes the graph as line-delimited JSON, optionally with a
Graphviz rendering alongside.  Handy for eyeballing diamonds and checking
how quickly the tagged state space grows.
"""

import argparse
import sys

from revses import analysis
from revses import respi, single_session as boxes
from revses.cli import _components
from revses.parser import parse_process
from revses.primitives import PrimitiveTable


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("file")
    ap.add_argument("--mode", default="respi",
                    choices=boxes.MODES + ("respi", "respic"))
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--max-states", type=int, default=5000)
    ap.add_argument("--out", default="-", metavar="FILE")
    ap.add_argument("--dot", default=None, metavar="FILE")
    args = ap.parse_args()

    comps = _components(parse_process(open(args.file, encoding="utf-8").read()))
    prims = PrimitiveTable()
    if args.mode in boxes.MODES:
        conf = boxes.init_config(args.mode, comps, prims)
        engine = analysis.box_engine(args.mode, prims)
    else:
        conf = respi.split_forks(respi.lift_initial(comps))
        engine = analysis.respi_engine(prims, commit=args.mode == "respic")

    lts = analysis.build_lts(conf, engine, depth=args.depth,
                             max_states=args.max_states)
    lines, dot = analysis.export_lts(lts)

    sink = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    for line in lines:
        print(line, file=sink)
    if sink is not sys.stdout:
        sink.close()
        print(f"{len(lts.states)} states, {len(lts.edges)} edges -> {args.out}")
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fp:
            fp.write(dot + "\n")
        print(f"dot rendering -> {args.dot}")
    if lts.truncated:
        print("note: exploration truncated at the configured bounds",
              file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
