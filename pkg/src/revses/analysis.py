"""State-space checks over the reversible engines.

Everything here works on explored fragments of the transition system:
build an LTS by breadth-first search, then check the properties that make
the reversible semantics trustworthy:

  loop      every undo can be redone and vice versa, returning exactly
  square    concurrent steps commute state-for-state
  causal    coinitial traces are cofinal iff causally equivalent
  wipe      the tagged semantics projects onto the plain calculus
  costs     the six single-session modes hit their predicted price tags

Traces are compared by closing them under two rewrites: swapping adjacent
concurrent steps and cancelling adjacent inverse pairs.  Both preserve
the end state (the square and loop checks are what justify that), and the
closure is finite since nothing ever grows, so equivalence is decided by
normal forms rather than approximated.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

from . import respi, respic, single_session as boxes
from .host import host_successors, make_soup
from .primitives import PrimitiveTable
from .syntax import Process

# ---------------------------------------------------------------- reports


@dataclass
class CheckReport:
    check_name: str
    states_visited: int
    violations: list[str] = field(default_factory=list)
    truncated: bool = False
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "checkName": self.check_name,
            "statesVisited": self.states_visited,
            "violations": list(self.violations),
            "truncated": self.truncated,
            **self.details,
        }


# ----------------------------------------------------------------- engines


@dataclass(frozen=True)
class Engine:
    """Uniform view of one semantics for the explorers below."""

    name: str
    enabled_fw: Callable[[Any], list]
    enabled_bw: Callable[[Any], list]
    apply: Callable[[Any, Any], Any]
    key: Callable[[Any], str]


def respi_engine(prims: PrimitiveTable, *, commit: bool = False) -> Engine:
    bw = respic.enabled_backward_r if commit else respi.enabled_backward
    return Engine(
        name="respic" if commit else "respi",
        enabled_fw=lambda c: respi.enabled_forward(c, prims, commit=commit),
        enabled_bw=lambda c: bw(c, prims),
        apply=lambda c, r: respi.apply_redex(c, r, prims),
        key=lambda c: c.key(),
    )


def box_engine(mode: str, prims: PrimitiveTable) -> Engine:
    return Engine(
        name=mode,
        enabled_fw=lambda c: boxes.enabled_forward(c, prims),
        enabled_bw=lambda c: boxes.enabled_backward(c),
        apply=lambda c, r: boxes.apply_redex(c, r, prims),
        key=lambda c: c.key(),
    )


def _edge_label(redex) -> dict[str, Any]:
    if isinstance(redex, respi.RRedex):
        return {"direction": redex.direction, "rule": redex.rule, "mem": redex.mem}
    return {
        "direction": redex.direction,
        "rule": redex.rule,
        "locus": list(redex.locus),
        "target": redex.target,
    }


# -------------------------------------------------------------------- LTS


@dataclass
class LTS:
    initial: str
    states: dict[str, Any]
    edges: list[tuple[str, dict[str, Any], str]]
    truncated: bool


def build_lts(
    conf: Any, engine: Engine, *, depth: int | None = None, max_states: int = 20000
) -> LTS:
    """Breadth-first exploration of forward and backward moves."""
    k0 = engine.key(conf)
    states = {k0: conf}
    edges: list[tuple[str, dict[str, Any], str]] = []
    seen_depth = {k0: 0}
    queue = deque([conf])
    truncated = False
    while queue:
        cur = queue.popleft()
        ck = engine.key(cur)
        d = seen_depth[ck]
        if depth is not None and d >= depth:
            truncated = True  # frontier cut; edges beyond it unexplored
            continue
        for r in engine.enabled_fw(cur) + engine.enabled_bw(cur):
            nxt = engine.apply(cur, r)
            nk = engine.key(nxt)
            edges.append((ck, _edge_label(r), nk))
            if nk not in states:
                if len(states) >= max_states:
                    truncated = True
                    continue
                states[nk] = nxt
                seen_depth[nk] = d + 1
                queue.append(nxt)
    return LTS(k0, states, edges, truncated)


def export_lts(lts: LTS) -> tuple[list[str], str]:
    """Line-delimited records plus a dot rendering of the same graph."""
    ids = {k: i for i, k in enumerate(sorted(lts.states))}
    lines = [
        json.dumps(
            {
                "type": "lts",
                "formatVersion": 1,
                "states": len(ids),
                "edges": len(lts.edges),
                "truncated": lts.truncated,
            },
            sort_keys=True,
        )
    ]
    for k, i in sorted(ids.items(), key=lambda kv: kv[1]):
        lines.append(
            json.dumps(
                {"type": "state", "id": i, "initial": k == lts.initial, "key": k},
                sort_keys=True,
            )
        )
    for src, label, dst in lts.edges:
        lines.append(
            json.dumps(
                {"type": "edge", "src": ids[src], "dst": ids[dst], **label},
                sort_keys=True,
            )
        )
    dot = ["digraph lts {"]
    for k, i in ids.items():
        shape = "doublecircle" if k == lts.initial else "circle"
        dot.append(f'  n{i} [label="{i}", shape={shape}];')
    for src, label, dst in lts.edges:
        style = "solid" if label["direction"] == "fw" else "dashed"
        dot.append(
            f'  n{ids[src]} -> n{ids[dst]} [label="{label["rule"]}", style={style}];'
        )
    dot.append("}")
    return lines, "\n".join(dot)


# ------------------------------------------------------- moves and traces

Move = tuple[str, str, str, tuple]  # (mem, direction, rule, head tags)


def move_of(redex: respi.RRedex) -> Move:
    return (redex.mem, redex.direction, redex.rule, redex.tags)


def _rule_family(rule: str) -> str:
    base = rule[2:] if rule[:2] in ("fw", "bw") else rule
    return "If" if base in ("If", "If1", "If2") else base


def inverse_moves(a: Move, b: Move) -> bool:
    """Opposite-direction moves on the same memory undo each other."""
    return (
        a[0] == b[0]
        and {a[1], b[1]} == {"fw", "bw"}
        and _rule_family(a[2]) == _rule_family(b[2])
    )


def _prefix(a: tuple, b: tuple) -> bool:
    return len(a) <= len(b) and b[: len(a)] == a


def concurrent_moves(a: Move, b: Move) -> bool:
    """Independent iff neither touches the other's tag subtree.

    Everything a move creates or consumes beyond its head tags lives
    strictly below them, so subtree disjointness of the heads is the
    same as stamp disjointness for moves enabled on a common state
    (square_check asserts that agreement).
    """
    return not any(_prefix(u, v) or _prefix(v, u) for u in a[3] for v in b[3])


def stamp(redex: respi.RRedex, conf: Any) -> frozenset[tuple]:
    """All tags a move touches: heads, tails, and their fork splits."""
    tags = list(redex.tags)
    if redex.direction == "fw":
        tags += [t + ("c",) for t in redex.tags]
    else:
        m = next(m for m in conf.mems() if respi.mem_id(m) == redex.mem)
        tags += list(respi.mem_tail(m))
    fmap = conf.fork_map()
    out: set[tuple] = set()
    while tags:
        u = tags.pop()
        if u in out:
            continue
        out.add(u)
        fm = fmap.get(u)
        if fm is not None:
            tags += [fm.l, fm.r]
    return frozenset(out)


def concurrent(r1: respi.RRedex, r2: respi.RRedex, conf: Any) -> bool:
    """Coinitial moves are independent when their stamps are disjoint."""
    return not (stamp(r1, conf) & stamp(r2, conf))


def trace_class(trace: tuple[Move, ...], budget: int = 4000) -> frozenset | None:
    """Causal-equivalence class, as the closure under swap and cancel.

    Returns None if the budget is exhausted (traces too long to close).
    Closure never grows a trace, so for the short traces checked here it
    is exhaustive and classes are compared exactly.
    """
    seen = {trace}
    queue = deque([trace])
    while queue:
        t = queue.popleft()
        if len(seen) > budget:
            return None
        for i in range(len(t) - 1):
            a, b = t[i], t[i + 1]
            variants = []
            if concurrent_moves(a, b):
                variants.append(t[:i] + (b, a) + t[i + 2 :])
            if inverse_moves(a, b):
                variants.append(t[:i] + t[i + 2 :])
            for v in variants:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
    return frozenset(seen)


def causally_equivalent(
    t1: tuple[Move, ...], t2: tuple[Move, ...], budget: int = 4000
) -> bool | None:
    """Three-valued: equivalent, not, or undecided within budget."""
    c1 = trace_class(t1, budget)
    c2 = trace_class(t2, budget)
    if c1 is None or c2 is None:
        return None
    # rewrites only shorten or permute, so two traces are equivalent
    # exactly when their closures share a common reduct
    return bool(c1 & c2)


# ----------------------------------------------------------- square check


def square_check(
    conf: Any, engine: Engine, *, depth: int | None = None, max_states: int = 5000
) -> CheckReport:
    """Concurrent moves must commute to the same state, move for move."""
    if not engine.name.startswith("respi"):
        raise ValueError("independence is defined on tagged configurations")
    report = CheckReport("square", 0)
    lts = build_lts(conf, engine, depth=depth, max_states=max_states)
    report.truncated = lts.truncated
    squares = 0
    for key, cur in lts.states.items():
        report.states_visited += 1
        moves = engine.enabled_fw(cur) + engine.enabled_bw(cur)
        for i in range(len(moves)):
            for j in range(i + 1, len(moves)):
                a, b = moves[i], moves[j]
                indep = concurrent(a, b, cur)
                if indep != concurrent_moves(move_of(a), move_of(b)):
                    report.violations.append(
                        f"at {key[:40]}: stamp and subtree independence disagree "
                        f"for {a.rule}/{b.rule}"
                    )
                if not indep:
                    continue
                squares += 1
                via_a = engine.apply(cur, a)
                via_b = engine.apply(cur, b)
                b2 = [
                    r
                    for r in engine.enabled_fw(via_a) + engine.enabled_bw(via_a)
                    if (r.mem, r.direction, r.rule) == (b.mem, b.direction, b.rule)
                ]
                a2 = [
                    r
                    for r in engine.enabled_fw(via_b) + engine.enabled_bw(via_b)
                    if (r.mem, r.direction, r.rule) == (a.mem, a.direction, a.rule)
                ]
                if not b2 or not a2:
                    report.violations.append(
                        f"at {key[:40]}: {a.rule}/{b.rule} lack residuals"
                    )
                    continue
                k_ab = engine.key(engine.apply(via_a, b2[0]))
                k_ba = engine.key(engine.apply(via_b, a2[0]))
                if k_ab != k_ba:
                    report.violations.append(
                        f"at {key[:40]}: {a.rule} and {b.rule} do not commute"
                    )
    report.details["squaresChecked"] = squares
    return report


# ------------------------------------------------------- causal consistency


def causal_consistency_check(
    conf: Any, engine: Engine, *, max_len: int = 4, budget: int = 4000
) -> CheckReport:
    """Coinitial traces must be cofinal exactly when causally equivalent."""
    if not engine.name.startswith("respi"):
        raise ValueError("causal equivalence is defined on tagged configurations")
    report = CheckReport("causal", 0)
    k0 = engine.key(conf)
    traces: list[tuple[tuple[Move, ...], str]] = []
    seen_states = {k0}

    def explore(cur, trace: tuple[Move, ...]) -> None:
        traces.append((trace, engine.key(cur)))
        if len(trace) >= max_len:
            return
        for r in engine.enabled_fw(cur) + engine.enabled_bw(cur):
            nxt = engine.apply(cur, r)
            seen_states.add(engine.key(nxt))
            explore(nxt, trace + (move_of(r),))

    explore(conf, ())
    report.states_visited = len(seen_states)
    report.details["tracesChecked"] = len(traces)

    # group traces whose closures share a form: that is exactly causal
    # equivalence, since the rewrites are confluent modulo swaps
    unknowns = 0
    parent: dict[tuple[Move, ...], tuple[Move, ...]] = {}

    def find(x):
        while parent[x] is not x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx is not ry:
            parent[rx] = ry

    owner: dict[tuple[Move, ...], tuple[Move, ...]] = {}
    kept: list[tuple[tuple[Move, ...], str]] = []
    for trace, end in traces:
        cls = trace_class(trace, budget)
        if cls is None:
            unknowns += 1
            continue
        parent.setdefault(trace, trace)
        kept.append((trace, end))
        for form in cls:
            if form in owner:
                parent.setdefault(owner[form], owner[form])
                union(trace, owner[form])
            else:
                owner[form] = trace

    ends_of_class: dict[tuple[Move, ...], str] = {}
    class_of_end: dict[str, tuple[Move, ...]] = {}
    for trace, end in kept:
        root = find(trace)
        prev_end = ends_of_class.get(root)
        if prev_end is None:
            ends_of_class[root] = end
        elif prev_end != end:
            report.violations.append(
                f"equivalent traces end apart: {_show_trace(trace)}"
            )
        prev_cls = class_of_end.get(end)
        if prev_cls is None:
            class_of_end[end] = root
        elif prev_cls != root:
            report.violations.append(
                f"cofinal traces are causally unrelated: {_show_trace(trace)} "
                f"vs {_show_trace(prev_cls)}"
            )
    report.details["unknowns"] = unknowns
    report.details["classes"] = len(ends_of_class)
    return report


def _show_trace(trace: tuple[Move, ...]) -> str:
    return "; ".join(f"{m[2]}@{m[0]}" for m in trace) or "(empty)"


# -------------------------------------------------------------- loop lemma


def loop_check_respi(
    processes: list[Process],
    prims: PrimitiveTable,
    *,
    probes: int = 500,
    seed: int = 0,
    commit: bool = False,
) -> CheckReport:
    """Undo-redo and redo-undo return exactly, along a random walk."""
    eng = respi_engine(prims, commit=commit)
    report = CheckReport("loop", 0)
    rng = random.Random(seed)
    conf0 = respi.split_forks(respi.lift_initial(processes))
    cur = conf0
    done = 0
    while done < probes:
        report.states_visited += 1
        fw = eng.enabled_fw(cur)
        bw = eng.enabled_bw(cur)
        if fw:
            r = rng.choice(fw)
            if r.rule != "commit":  # commits are irreversible by design
                nxt = eng.apply(cur, r)
                undo = [b for b in eng.enabled_bw(nxt) if inverse_moves(move_of(r), move_of(b))]
                if len(undo) != 1 or eng.key(eng.apply(nxt, undo[0])) != eng.key(cur):
                    report.violations.append(f"fw {r.rule}@{r.mem} does not undo")
                done += 1
        if bw and done < probes:
            b = rng.choice(bw)
            prv = eng.apply(cur, b)
            redo = [f for f in eng.enabled_fw(prv) if inverse_moves(move_of(b), move_of(f))]
            if len(redo) != 1 or eng.key(eng.apply(prv, redo[0])) != eng.key(cur):
                report.violations.append(f"bw {b.rule}@{b.mem} does not redo")
            done += 1
        moves = fw + bw
        if not moves:
            if eng.key(cur) == eng.key(conf0):
                break  # the term has no moves at all: vacuously fine
            cur = conf0  # walked into a terminal state; start over
            continue
        cur = eng.apply(cur, rng.choice(moves))
    report.details["probes"] = done
    return report


def loop_check_boxes(
    mode: str,
    processes: list[Process],
    prims: PrimitiveTable,
    *,
    probes: int = 500,
    seed: int = 0,
) -> CheckReport:
    """Per-mode undo discipline along a random walk of a boxed session.

    In the popping modes a forward step is undone by exactly one pop; in
    the jumping modes a rollback to depth j is re-run forward to the exact
    pre-rollback state in stack-depth-difference many steps.
    """
    if mode not in ("case2", "case3", "case5", "case6"):
        raise ValueError(f"loop probes need a stack-keeping mode, not {mode}")
    eng = box_engine(mode, prims)
    report = CheckReport("loop", 0)
    rng = random.Random(seed)
    conf0 = boxes.init_config(mode, processes, prims)
    cur = conf0
    done = 0
    while done < probes:
        report.states_visited += 1
        fw = eng.enabled_fw(cur)
        if fw:
            r = rng.choice(fw)
            nxt = eng.apply(cur, r)
            if r.rule.endswith("Con") or r.host is not None:
                undos = [
                    b
                    for b in eng.enabled_bw(nxt)
                    if _undoes_last(nxt, b) and eng.key(eng.apply(nxt, b)) == eng.key(cur)
                ]
                if not undos:
                    report.violations.append(f"{r.rule} has no exact undo")
            done += 1
        bw = eng.enabled_bw(cur)
        if bw and done < probes:
            b = rng.choice(bw)
            box = cur.items[b.locus[0]]
            depth_gap = box.stack_len - b.target
            prv = eng.apply(cur, b)
            if not _refound(eng, prv, eng.key(cur), depth_gap):
                report.violations.append(
                    f"{b.rule} to depth {b.target} cannot be replayed in {depth_gap}"
                )
            done += 1
        moves = eng.enabled_fw(cur) + eng.enabled_bw(cur)
        if not moves:
            if eng.key(cur) == eng.key(conf0):
                break  # no moves anywhere: vacuously fine
            cur = conf0
            continue
        cur = eng.apply(cur, rng.choice(moves))
    report.details["probes"] = done
    return report


def _undoes_last(conf, redex) -> bool:
    box = conf.items[redex.locus[0]]
    return redex.target == box.stack_len - 1 or box.stack_len == 1


def _refound(eng: Engine, conf, want_key: str, steps: int) -> bool:
    """Exactly `steps` forward moves must be able to re-reach `want_key`."""
    frontier = {eng.key(conf): conf}
    for _ in range(steps):
        nxt: dict[str, Any] = {}
        for c in frontier.values():
            for r in eng.enabled_fw(c):
                n = eng.apply(c, r)
                nxt[eng.key(n)] = n
        frontier = nxt
        if not frontier:
            return False
    return want_key in frontier


# ----------------------------------------------------------- correspondence


def correspondence_check(
    processes: list[Process],
    prims: PrimitiveTable,
    *,
    depth: int = 6,
    max_states: int = 5000,
) -> CheckReport:
    """Erasing tags must project the tagged LTS onto the plain calculus.

    Forward steps must map onto plain steps and cover all of them;
    backward steps must map onto plain steps taken in reverse.
    """
    report = CheckReport("correspondence", 0)
    eng = respi_engine(prims)
    conf0 = respi.split_forks(respi.lift_initial(processes))
    lts = build_lts(conf0, eng, depth=depth, max_states=max_states)
    report.truncated = lts.truncated
    checked = 0
    for key, cur in lts.states.items():
        report.states_visited += 1
        wiped = respi.forgetful_map(cur)
        host_keys = {
            make_soup(p).key() for _, p in host_successors(wiped.to_process(), prims)
        }
        fw_keys = set()
        for r in eng.enabled_fw(cur):
            fw_keys.add(respi.forgetful_map(eng.apply(cur, r)).key())
        checked += len(fw_keys) + len(host_keys)
        for missing in host_keys - fw_keys:
            report.violations.append(
                f"plain step unmatched by any tagged step at {key[:40]}"
            )
        for extra in fw_keys - host_keys:
            report.violations.append(
                f"tagged step has no plain counterpart at {key[:40]}"
            )
        for b in eng.enabled_bw(cur):
            prv = eng.apply(cur, b)
            re_keys = {
                make_soup(p).key()
                for _, p in host_successors(respi.forgetful_map(prv).to_process(), prims)
            }
            if wiped.key() not in re_keys:
                report.violations.append(
                    f"backward step {b.rule} not a reverse plain step at {key[:40]}"
                )
    report.details["comparisons"] = checked
    return report


# ------------------------------------------------------------------- costs


def ladder_binary(n: int) -> list[Process]:
    """A session that runs for exactly n steps (1 opening + n-1 messages)."""
    from .syntax import Accept, Inact, Lit, Receive, Request, Send, SessionRef

    snd: Process = Inact()
    rcv: Process = Inact()
    for i in reversed(range(n - 1)):
        snd = Send(SessionRef("x"), Lit(i), snd)
        rcv = Receive(SessionRef("y"), f"v{i}", rcv)
    return [Request("lad", "x", snd), Accept("lad", "y", rcv)]


def ladder_multiparty(n: int) -> list[Process]:
    """Two-participant variant of the same ladder."""
    from .syntax import Inact, Lit, MAccept, MReceive, MRequest, MSend, SessionRef

    snd: Process = Inact()
    rcv: Process = Inact()
    for i in reversed(range(n - 1)):
        snd = MSend(SessionRef("x"), 1, Lit(i), snd)
        rcv = MReceive(SessionRef("y"), 2, f"v{i}", rcv)
    return [MRequest("lad", 2, "x", snd), MAccept("lad", 1, "y", rcv)]


_EXPECTED_COSTS = {
    "case1": lambda n: (1, 1),
    "case2": lambda n: (n, n),
    "case3": lambda n: (1, n),
    "case4": lambda n: (1, 1),
    "case5": lambda n: (n, n),
    "case6": lambda n: (1, n),
}


def cost_report(
    prims: PrimitiveTable, *, n_max: int = 50, modes: tuple[str, ...] = boxes.MODES
) -> CheckReport:
    """Run length-n ladders in every mode and compare against the theory."""
    report = CheckReport("costs", 0)
    rows: list[dict[str, Any]] = []
    for mode in modes:
        build = ladder_multiparty if mode in ("case4", "case5", "case6") else ladder_binary
        for n in range(1, n_max + 1):
            conf = boxes.init_config(mode, build(n), prims)
            final, recs = boxes.drive(conf, prims, max_steps=n + 1)
            report.states_visited += len(recs) + 1
            measured = boxes.measure_costs(final, prims)
            want = _EXPECTED_COSTS[mode](n)
            row = {"mode": mode, "n": n, "cBr": None, "cMo": None, "want": list(want)}
            if len(recs) != n or boxes.enabled_forward(final, prims):
                report.violations.append(f"{mode} ladder n={n} ran {len(recs)} steps")
            elif len(measured) != 1:
                report.violations.append(f"{mode} ladder n={n}: {len(measured)} boxes")
            else:
                got = (measured[0]["c_br"], measured[0]["c_mo"])
                row["cBr"], row["cMo"] = got
                if got != want:
                    report.violations.append(
                        f"{mode} n={n}: measured {got}, predicted {want}"
                    )
            rows.append(row)
    report.details["rows"] = rows
    report.details["nMax"] = n_max
    return report
