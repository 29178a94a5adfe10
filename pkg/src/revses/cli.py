"""Command line front end.

Four subcommands: `typecheck` runs the session type checkers over
source files, `run` executes a file under one of the reversible modes
and writes a trace, `step` is an interactive forward/backward stepper,
and `analyze` runs the state-space checks.

Exit codes: 0 success, 1 bad input, 2 a check found a violation,
3 an internal invariant broke.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Any

from . import analysis, respi, respic, single_session as boxes, trace as tracefmt
from .host import StaleRedex
from .parser import ParseError, parse_process, print_process
from .primitives import PrimitiveTable, PrimitivesFileError, load_primitives
from .syntax import Par, Process, uses_multiparty
from .typecheck import (
    TypingError,
    check_simple,
    check_simple_multiparty,
    typecheck_process,
)

EXIT_OK = 0
EXIT_USER = 1
EXIT_VIOLATION = 2
EXIT_INTERNAL = 3

BOX_MODES = ("case1", "case2", "case3", "case4", "case5", "case6")
MODES = BOX_MODES + ("respi", "respic")
CHECKS = ("loop", "square", "causal", "costs", "correspondence")


@dataclass
class RunConfig:
    mode: str = "case1"
    seed: int = 0
    max_steps: int = 100
    depth: int = 6
    primitives_path: str | None = None
    policy: str = "first"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose one of {', '.join(MODES)}")
        if self.max_steps < 0 or self.depth < 0:
            raise ValueError("maxSteps and depth must be non-negative")
        if self.policy not in ("first", "random"):
            raise ValueError(f"unknown policy {self.policy!r}")

    def primitives(self) -> PrimitiveTable:
        if self.primitives_path is None:
            return PrimitiveTable(seed=self.seed)
        return load_primitives(self.primitives_path, seed=self.seed)


def _config_from(args: argparse.Namespace) -> RunConfig:
    seed = getattr(args, "seed", 0)
    if "REVSES_SEED" in os.environ:
        try:
            seed = int(os.environ["REVSES_SEED"])
        except ValueError:
            raise ValueError("REVSES_SEED must be an integer") from None
    return RunConfig(
        mode=getattr(args, "mode", "case1"),
        seed=seed,
        max_steps=getattr(args, "max_steps", 100),
        depth=getattr(args, "depth", 6),
        primitives_path=getattr(args, "primitives", None),
        policy=getattr(args, "policy", "first"),
    )


def _components(p: Process) -> list[Process]:
    if isinstance(p, Par):
        return _components(p.left) + _components(p.right)
    return [p]


def _load_file(path: str) -> list[Process]:
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as e:
        raise ValueError(f"cannot read {path}: {e.strerror}") from None
    return _components(parse_process(text))


# --------------------------------------------------------------- typecheck


def cmd_typecheck(args: argparse.Namespace) -> int:
    prims = _config_from(args).primitives()
    for path in args.files:
        try:
            comps = _load_file(path)
        except ParseError as e:
            print(f"{path}: ParseError: {e}")
            return EXIT_USER
        whole = comps[0]
        for p in comps[1:]:
            whole = Par(whole, p)
        try:
            if uses_multiparty(whole):
                # only the syntactic single-session discipline exists here
                for p in comps:
                    check_simple_multiparty(p)
                print(f"{path}: OK (multiparty, syntactic check)")
                continue
            if args.simple:
                delta = check_simple(whole, prims=prims, commit_ok=True)
            else:
                delta = typecheck_process(whole, prims=prims, commit_ok=True)
            note = " isSimple" if args.simple else ""
            print(f"{path}: OK{note} ({len(delta)} open session endpoint(s))")
        except TypingError as e:
            rec = e.record()
            print(f"{path}: {type(e).__name__} [{rec['ruleName']}] {rec['message']}")
            return EXIT_USER
    return EXIT_OK


# --------------------------------------------------------------------- run


def _run_boxes(comps: list[Process], cfg: RunConfig) -> tuple[list[dict], dict]:
    prims = cfg.primitives()
    conf = boxes.init_config(cfg.mode, comps, prims)
    final, records = boxes.drive(
        conf, prims, max_steps=cfg.max_steps, policy=cfg.policy, seed=cfg.seed
    )
    rows = [
        {"channel": m["channel"], "cBr": m["c_br"], "cMo": m["c_mo"]}
        for m in boxes.measure_costs(final, prims)
    ]
    summary = {
        "steps": len(records),
        "finalHash": final.conf_hash(),
        "boxes": rows,
    }
    return records, summary


def _run_respi(comps: list[Process], cfg: RunConfig) -> tuple[list[dict], dict]:
    prims = cfg.primitives()
    conf = respi.split_forks(respi.lift_initial(comps))
    commit = cfg.mode == "respic"
    final, records = respi.drive(
        conf,
        prims,
        max_steps=cfg.max_steps,
        policy=cfg.policy,
        seed=cfg.seed,
        commit=commit,
    )
    summary: dict[str, Any] = {
        "steps": len(records),
        "finalHash": final.conf_hash(),
        "memories": len(final.mems()),
    }
    if commit:
        locked = respic.locked_memories(final)
        summary["lockedCount"] = len(locked)
        summary["lockedIds"] = sorted(locked)
    return records, summary


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    comps = _load_file(args.file)
    if cfg.mode in BOX_MODES:
        records, summary = _run_boxes(comps, cfg)
    else:
        records, summary = _run_respi(comps, cfg)
    header = tracefmt.make_header(
        tool="revses run",
        source=os.path.basename(args.file),
        mode=cfg.mode,
        policy=cfg.policy,
        seed=cfg.seed,
        maxSteps=cfg.max_steps,
    )
    if args.out in (None, "-"):
        tracefmt.write_trace(sys.stdout, header, records, summary)
    else:
        with open(args.out, "w", encoding="utf-8") as fp:
            tracefmt.write_trace(fp, header, records, summary)
        print(f"{summary['steps']} step(s) -> {args.out}")
        for row in summary.get("boxes", []):
            print(f"  box {row['channel']}: cBr={row['cBr']} cMo={row['cMo']}")
        if "lockedCount" in summary:
            print(f"  locked memories: {summary['lockedCount']}")
    return EXIT_OK


# -------------------------------------------------------------------- step


@dataclass
class _Stepper:
    cfg: RunConfig
    prims: PrimitiveTable
    source: str
    conf: Any
    records: list[dict] = field(default_factory=list)
    steps_taken: int = 0

    @property
    def boxed(self) -> bool:
        return self.cfg.mode in BOX_MODES

    def forward(self) -> list:
        if self.boxed:
            return boxes.enabled_forward(self.conf, self.prims)
        return respi.enabled_forward(self.conf, self.prims, commit=self.cfg.mode == "respic")

    def backward(self) -> list:
        if self.boxed:
            return boxes.enabled_backward(self.conf)
        if self.cfg.mode == "respic":
            return respic.enabled_backward_r(self.conf, self.prims)
        return respi.enabled_backward(self.conf, self.prims)

    def apply(self, redex: Any) -> dict:
        self.steps_taken += 1
        if self.boxed:
            self.conf, rec = boxes.apply_with_record(
                self.conf, redex, self.steps_taken, self.prims
            )
        else:
            self.conf, rec = respi.apply_with_record(
                self.conf,
                redex,
                self.steps_taken,
                self.prims,
                locked=self.cfg.mode == "respic",
            )
        self.records.append(rec)
        return rec

    def describe(self, redex: Any) -> str:
        if not self.boxed:
            return f"{redex.rule} {redex.mem}"
        it = self.conf.items[redex.locus[0]]
        chan = None
        if isinstance(it, boxes.SessionBox):
            chan = it.channel
        else:
            chan = getattr(it, "chan", None)
        if redex.direction == "bw":
            return f"{redex.rule} on {chan} to depth {redex.target}"
        core = redex.rule.split("-", 1)[1] if "-" in redex.rule else redex.rule
        return f"{core} on {chan}" if chan is not None else core

    def show(self) -> str:
        lines: list[str] = []
        if self.boxed:
            res = ", ".join(self.conf.restricted) or "(none)"
            lines.append(f"mode {self.cfg.mode}; restricted: {res}")
            for i, it in enumerate(self.conf.items):
                if isinstance(it, boxes.SessionBox):
                    lines.append(
                        f"  [{i}] box {it.channel} (stack {it.stack_len}): "
                        + print_process(it.body.to_process())
                    )
                else:
                    lines.append(f"  [{i}] " + print_process(it))
        else:
            res = ", ".join(self.conf.restricted_channels) or "(none)"
            lines.append(f"mode {self.cfg.mode}; restricted: {res}")
            for th in self.conf.threads():
                lines.append(f"  {respi.tag_str(th.tag)}: " + print_process(th.body))
            for m in self.conf.mems():
                lines.append(f"  mem {respi.mem_id(m)}")
        return "\n".join(lines)

    def costs(self) -> str:
        if self.boxed:
            rows = boxes.measure_costs(self.conf, self.prims)
            if not rows:
                return "no session boxes"
            return "\n".join(
                f"box {m['channel']}: cBr={m['c_br']} cMo={m['c_mo']}" for m in rows
            )
        n = len(self.conf.mems())
        if self.cfg.mode == "respic":
            return f"memories: {n}; locked: {len(respic.locked_memories(self.conf))}"
        return f"memories: {n}"

    def export(self, path: str) -> None:
        header = tracefmt.make_header(
            tool="revses step",
            source=self.source,
            mode=self.cfg.mode,
            policy=self.cfg.policy,
            seed=self.cfg.seed,
            maxSteps=self.cfg.max_steps,
        )
        summary = {"steps": len(self.records), "finalHash": _hash_of(self.conf)}
        with open(path, "w", encoding="utf-8") as fp:
            tracefmt.write_trace(fp, header, self.records, summary)


def _hash_of(conf: Any) -> str:
    return conf.conf_hash()


def cmd_step(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    comps = _load_file(args.file)
    prims = cfg.primitives()
    if cfg.mode in BOX_MODES:
        conf: Any = boxes.init_config(cfg.mode, comps, prims)
    else:
        conf = respi.split_forks(respi.lift_initial(comps))
    st = _Stepper(cfg, prims, os.path.basename(args.file), conf)
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            sys.stderr.write("revses> ")
            sys.stderr.flush()
        line = sys.stdin.readline()
        if not line:
            break
        words = line.split()
        if not words:
            continue
        cmd, rest = words[0], words[1:]
        if cmd == "quit":
            break
        elif cmd == "ls":
            fw, bw = st.forward(), st.backward()
            for i, r in enumerate(fw):
                print(f"fw {i}: {st.describe(r)}")
            for i, r in enumerate(bw):
                print(f"bw {i}: {st.describe(r)}")
            if not fw and not bw:
                print("no redexes")
        elif cmd in ("fw", "bw"):
            reds = st.forward() if cmd == "fw" else st.backward()
            if not reds:
                print(f"no {'forward' if cmd == 'fw' else 'backward'} redexes")
                continue
            try:
                idx = int(rest[0]) if rest else 0
                redex = reds[idx]
            except (ValueError, IndexError):
                arg = rest[0] if rest else "(none)"
                print(f"no such redex: {cmd} {arg}")
                continue
            desc = st.describe(redex)
            st.apply(redex)
            print(f"applied {cmd} {idx}: {desc}")
        elif cmd == "show":
            print(st.show())
        elif cmd == "costs":
            print(st.costs())
        elif cmd == "export":
            if not rest:
                print("usage: export FILE")
                continue
            st.export(rest[0])
            print(f"exported {len(st.records)} step(s) to {rest[0]}")
        else:
            print(f"unknown command: {cmd}")
    return EXIT_OK


# ------------------------------------------------------------------ analyze


def _analyze_one(
    name: str, comps: list[Process], cfg: RunConfig, args: argparse.Namespace
) -> analysis.CheckReport:
    prims = cfg.primitives()
    tagged = cfg.mode in ("respi", "respic")
    commit = cfg.mode == "respic"
    if name == "costs":
        return analysis.cost_report(prims, n_max=args.n_max)
    if name == "loop":
        if cfg.mode in ("case1", "case4"):
            raise ValueError(
                f"loop check is not applicable to {cfg.mode}: a whole-session undo "
                "jumps straight to the initial state, so single steps cannot be "
                "re-done one for one; use case2/3/5/6 or the tagged modes"
            )
        if tagged:
            return analysis.loop_check_respi(
                comps, prims, probes=args.probes, seed=cfg.seed, commit=commit
            )
        return analysis.loop_check_boxes(
            cfg.mode, comps, prims, probes=args.probes, seed=cfg.seed
        )
    if not tagged:
        raise ValueError(
            f"{name} check needs tag-level independence; run it with --mode respi"
            " or --mode respic"
        )
    if name == "correspondence":
        if commit:
            raise ValueError(
                "correspondence is stated for the commit-free tagged semantics; "
                "use --mode respi"
            )
        return analysis.correspondence_check(comps, prims, depth=cfg.depth)
    conf = respi.split_forks(respi.lift_initial(comps))
    engine = analysis.respi_engine(prims, commit=commit)
    if name == "square":
        return analysis.square_check(conf, engine, depth=cfg.depth)
    if name == "causal":
        return analysis.causal_consistency_check(conf, engine, max_len=args.max_len)
    raise ValueError(f"unknown check {name!r}")


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    names: list[str] = []
    for chunk in args.checks:
        names.extend(c for c in chunk.split(",") if c)
    bad = [c for c in names if c not in CHECKS]
    if bad:
        raise ValueError(
            f"unknown check(s) {', '.join(bad)}; choose from {', '.join(CHECKS)}"
        )
    if not names:
        raise ValueError("no checks requested")
    comps = _load_file(args.file)
    reports = []
    for name in names:
        rep = _analyze_one(name, comps, cfg, args)
        reports.append(rep)
        status = "ok" if rep.passed else "VIOLATION"
        print(f"{name}: {status} ({rep.states_visited} states)")
        if rep.truncated:
            print(f"  note: bound exceeded, {name} ran on a truncated state space")
        for v in rep.violations[:10]:
            print(f"  - {v}")
        if len(rep.violations) > 10:
            print(f"  ... and {len(rep.violations) - 10} more")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fp:
            for rep in reports:
                fp.write(tracefmt.dump_record(rep.to_dict()) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


# -------------------------------------------------------------------- main


def _add_config_flags(sp: argparse.ArgumentParser, *, mode_default: str | None) -> None:
    if mode_default is None:
        sp.add_argument("--mode", required=True, choices=MODES)
    else:
        sp.add_argument("--mode", default=mode_default, choices=MODES)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-steps", type=int, default=100)
    sp.add_argument("--depth", type=int, default=6)
    sp.add_argument("--primitives", metavar="FILE", default=None)
    sp.add_argument("--policy", choices=("first", "random"), default="first")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="revses",
        description="Run, reverse, type-check and analyze session protocols.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    tc = sub.add_parser("typecheck", help="type-check source files")
    tc.add_argument("files", nargs="+")
    tc.add_argument("--simple", action="store_true", help="also require simplicity")
    _add_config_flags(tc, mode_default="case1")
    tc.set_defaults(fn=cmd_typecheck)

    rn = sub.add_parser("run", help="execute a file and write a trace")
    rn.add_argument("file")
    rn.add_argument("--out", metavar="FILE", default=None)
    _add_config_flags(rn, mode_default=None)
    rn.set_defaults(fn=cmd_run)

    stp = sub.add_parser("step", help="interactive forward/backward stepper")
    stp.add_argument("file")
    _add_config_flags(stp, mode_default=None)
    stp.set_defaults(fn=cmd_step)

    an = sub.add_parser("analyze", help="run state-space checks")
    an.add_argument("file")
    an.add_argument("--checks", action="append", required=True, metavar="NAMES")
    an.add_argument("--n-max", type=int, default=50)
    an.add_argument("--max-len", type=int, default=4)
    an.add_argument("--probes", type=int, default=500)
    an.add_argument("--report", metavar="FILE", default=None)
    _add_config_flags(an, mode_default="respi")
    an.set_defaults(fn=cmd_analyze)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, PrimitivesFileError, tracefmt.TraceFormatError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USER
    except TypingError as e:
        print(f"{type(e).__name__} [{e.rule}]: {e}", file=sys.stderr)
        return EXIT_USER
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USER
    except (StaleRedex, AssertionError) as e:
        print(f"internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
