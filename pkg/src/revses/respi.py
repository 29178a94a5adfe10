"""Tagged reversible execution: every step leaves a memory behind.

Instead of a per-session stack, each sequential process carries a tag and
every reduction consumes tagged threads, producing continuation threads
under fresh tags plus a memory that records exactly what happened.  A
memory whose continuation tags are still intact can be undone, restoring
the consumed threads; nothing else ever needs to be stored.

Tags are paths: a continuation extends its parent with "c", fork children
with "L"/"R".  All generated names (tags, hoisted restrictions, created
sessions) are derived from the consuming tag alone, so the configuration
reached by a set of steps does not depend on the order they were taken
in.  That determinism is what lets the diamond and loop properties be
checked by plain state equality.

Parallel bodies are split eagerly: a thread whose body is a composition
is replaced by two child threads and a fork memory.  Undoing a step whose
continuation has forked re-joins the children first; reachable
configurations always re-join to exactly what the step produced, which
is asserted rather than trusted.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .congruence import _expr_key, _ref_key, struct_key
from .host import Soup, StaleRedex, normalize
from .primitives import ExprError, PrimitiveTable, eval_expr
from .syntax import (
    Accept,
    Branch,
    Commit,
    Expr,
    If,
    Par,
    Process,
    Receive,
    Request,
    Restrict,
    Select,
    Send,
    SessionRef,
    all_names,
    free_names,
    rename_free,
    subst_value,
    whnf,
)

Tag = tuple[str, ...]


def tag_str(t: Tag) -> str:
    return ".".join(t)


@dataclass(frozen=True)
class Thread:
    tag: Tag
    body: Process


@dataclass(frozen=True)
class InitEv:
    """Session creation: req chan(xvar).left | acc chan(yvar).right."""

    chan: str
    xvar: str
    yvar: str
    left: Process
    right: Process
    session: str


@dataclass(frozen=True)
class ComEv:
    """Value passing; subj is the receiving endpoint, payload unevaluated."""

    subj: SessionRef
    payload: Expr
    var: str
    left: Process  # sender continuation
    right: Process  # receiver continuation, before substitution


@dataclass(frozen=True)
class SelEv:
    """Label selection; subj is the branching endpoint."""

    subj: SessionRef
    label: str
    left: Process  # selector continuation
    branches: tuple[tuple[str, Process], ...]


@dataclass(frozen=True)
class ActionMem:
    t1: Tag  # requester / sender / selector
    t2: Tag
    event: InitEv | ComEv | SelEv
    k1: Tag
    k2: Tag


@dataclass(frozen=True)
class ChoiceMem:
    t: Tag
    cond: Expr
    then: Process
    orelse: Process
    k: Tag


@dataclass(frozen=True)
class ForkMem:
    t: Tag
    l: Tag
    r: Tag


@dataclass(frozen=True)
class CommitMem:
    """Irreversible close of a session; t1 held the dual endpoint."""

    t1: Tag
    session: str
    t2: Tag


Mem = ActionMem | ChoiceMem | ForkMem | CommitMem
Item = Thread | Mem


def mem_head(m: Mem) -> tuple[Tag, ...]:
    match m:
        case ActionMem(t1, t2, _, _, _) | CommitMem(t1, _, t2):
            return (t1, t2)
        case ChoiceMem(t, _, _, _, _) | ForkMem(t, _, _):
            return (t,)
    raise TypeError(f"not a memory: {m!r}")


def mem_tail(m: Mem) -> tuple[Tag, ...]:
    match m:
        case ActionMem(_, _, _, k1, k2):
            return (k1, k2)
        case ChoiceMem(_, _, _, _, k):
            return (k,)
        case ForkMem(_, l, r):
            return (l, r)
        case CommitMem():
            # the step is final: nothing downstream is reachable from it
            return ()
    raise TypeError(f"not a memory: {m!r}")


def mem_id(m: Mem) -> str:
    match m:
        case ActionMem(t1, t2, _, _, _):
            return f"A[{tag_str(t1)},{tag_str(t2)}]"
        case ChoiceMem(t, _, _, _, _):
            return f"C[{tag_str(t)}]"
        case ForkMem(t, _, _):
            return f"F[{tag_str(t)}]"
        case CommitMem(t1, _, t2):
            return f"K[{tag_str(t1)},{tag_str(t2)}]"
    raise TypeError(f"not a memory: {m!r}")


def _event_key(ev: InitEv | ComEv | SelEv) -> str:
    match ev:
        case InitEv(chan, x, y, left, right, session):
            return f"I({chan};{x};{y};{struct_key(left)};{struct_key(right)};{session})"
        case ComEv(subj, payload, var, left, right):
            return (
                f"O({_ref_key(subj, {})};{_expr_key(payload, {})};{var};"
                f"{struct_key(left)};{struct_key(right)})"
            )
        case SelEv(subj, label, left, branches):
            bs = ",".join(f"{l}:{struct_key(p)}" for l, p in branches)
            return f"S({_ref_key(subj, {})};{label};{struct_key(left)};{bs})"
    raise TypeError(f"not an event: {ev!r}")


def _item_key(it: Item) -> str:
    match it:
        case Thread(tag, body):
            return f"T:{tag_str(tag)}:{struct_key(body)}"
        case ActionMem() as m:
            return f"M:{mem_id(m)}:{_event_key(m.event)}"
        case ChoiceMem(t, cond, then, orelse, _) as m:
            return (
                f"M:{mem_id(m)}:?({_expr_key(cond, {})};"
                f"{struct_key(then)};{struct_key(orelse)})"
            )
        case ForkMem() as m:
            return f"M:{mem_id(m)}"
        case CommitMem(_, session, _) as m:
            return f"M:{mem_id(m)}:{session}"
    raise TypeError(f"not an item: {it!r}")


@dataclass(frozen=True)
class RConfig:
    restricted_channels: tuple[str, ...]
    items: tuple[Item, ...]

    def key(self) -> str:
        cached = self.__dict__.get("_key")
        if cached is None:
            res = ",".join(sorted(self.restricted_channels))
            cached = f"({res})" + "&".join(_item_key(it) for it in self.items)
            object.__setattr__(self, "_key", cached)
        return cached

    def conf_hash(self) -> str:
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = hashlib.sha256(self.key().encode()).hexdigest()[:16]
            object.__setattr__(self, "_hash", cached)
        return cached

    def threads(self) -> list[Thread]:
        return [it for it in self.items if isinstance(it, Thread)]

    def mems(self) -> list[Mem]:
        return [it for it in self.items if not isinstance(it, Thread)]

    def thread_map(self) -> dict[Tag, Thread]:
        return {th.tag: th for th in self.threads()}

    def fork_map(self) -> dict[Tag, ForkMem]:
        return {m.t: m for m in self.items if isinstance(m, ForkMem)}


def _config(restricted, items) -> RConfig:
    items = sorted(items, key=_item_key)
    return RConfig(tuple(sorted(restricted)), tuple(items))


# ------------------------------------------------------------- saturation


def _expand(thread: Thread, restricted: list[str], out: list[Item]) -> None:
    """Normalize a new thread in place: unfold, hoist restrictions, split.

    Hoisted names and child tags are derived from the thread tag, so the
    result is a function of (tag, body) alone.
    """
    t = thread.tag
    body = whnf(thread.body)
    hoists = 0
    while isinstance(body, Restrict):
        name = f"{body.chan}@{tag_str(t)}:h{hoists}"
        if name in restricted:
            raise ValueError(f"derived name collision: {name}")
        restricted.append(name)
        body = whnf(rename_free(body.body, body.chan, name))
        hoists += 1
    if isinstance(body, Par):
        out.append(ForkMem(t, t + ("L",), t + ("R",)))
        _expand(Thread(t + ("L",), body.left), restricted, out)
        _expand(Thread(t + ("R",), body.right), restricted, out)
    else:
        out.append(Thread(t, body))


def lift_initial(processes: list[Process]) -> RConfig:
    """Tag the initial composition; one root tag per given process.

    Compositions stay whole here; split_forks divides them.
    """
    for p in processes:
        bad = sorted(n for n in all_names(p) if "@" in n)
        if bad:
            raise ValueError(f"'@' is reserved for derived names: {', '.join(bad)}")
    items = [Thread((f"r{i}",), p) for i, p in enumerate(processes)]
    return _config([], items)


def split_forks(conf: RConfig) -> RConfig:
    """Divide every composite thread into tagged children plus fork records.

    Also unfolds top-level recursion and hoists restrictions out of thread
    bodies, so the result is the saturated form the step rules expect.
    Idempotent: already-split configurations come back unchanged.
    """
    restricted = list(conf.restricted_channels)
    items: list[Item] = []
    for it in conf.items:
        if isinstance(it, Thread):
            _expand(it, restricted, items)
        else:
            items.append(it)
    return _config(restricted, items)


# ------------------------------------------------------------ enumeration


@dataclass(frozen=True)
class RRedex:
    direction: str  # fw | bw
    rule: str  # fwCon fwCom fwLab fwIf1 fwIf2 commit bwCon bwCom bwLab bwIf
    mem: str  # memory id: the one to create (fw) or consume (bw)
    tags: tuple[Tag, ...]  # consumed thread tags (fw) or memory heads (bw)
    conf_hash: str


def _sorted_redexes(out: list[RRedex]) -> list[RRedex]:
    out.sort(key=lambda r: (r.rule, r.tags))
    return out


def enabled_forward(
    conf: RConfig, prims: PrimitiveTable | None = None, *, commit: bool = False
) -> list[RRedex]:
    prims = prims or PrimitiveTable()
    h = conf.conf_hash()
    out: list[RRedex] = []
    threads = conf.threads()

    def binary(r: SessionRef) -> tuple[str, bool] | None:
        return None if r.role is not None else (r.name, r.dual)

    for i, a in enumerate(threads):
        match a.body:
            case If(cond, _, _):
                try:
                    v = eval_expr(cond, {}, prims)
                except ExprError:
                    continue
                if type(v) is bool:
                    rule = "fwIf1" if v else "fwIf2"
                    out.append(RRedex("fw", rule, f"C[{tag_str(a.tag)}]", (a.tag,), h))
        for b in threads:
            if b is a:
                continue
            pair = (a.tag, b.tag)
            mid = f"A[{tag_str(a.tag)},{tag_str(b.tag)}]"
            match a.body, b.body:
                case (Request(c1, _, _), Accept(c2, _, _)) if c1 == c2:
                    out.append(RRedex("fw", "fwCon", mid, pair, h))
                case (Send(ks, e, _), Receive(kr, _, _)) if (
                    binary(ks) is not None
                    and binary(kr) == (ks.name, not ks.dual)
                ):
                    try:
                        eval_expr(e, {}, prims)
                    except ExprError:
                        continue
                    out.append(RRedex("fw", "fwCom", mid, pair, h))
                case (Select(ks, l, _), Branch(kr, bs)) if (
                    binary(ks) is not None
                    and binary(kr) == (ks.name, not ks.dual)
                    and l in dict(bs)
                ):
                    out.append(RRedex("fw", "fwLab", mid, pair, h))
                case (Commit(ks, _), Commit(kr, _)) if (
                    commit
                    and binary(ks) == (ks.name, True)
                    and binary(kr) == (ks.name, False)
                ):
                    kid = f"K[{tag_str(a.tag)},{tag_str(b.tag)}]"
                    out.append(RRedex("fw", "commit", kid, pair, h))
    return _sorted_redexes(out)


def enabled_backward(
    conf: RConfig, prims: PrimitiveTable | None = None
) -> list[RRedex]:
    prims = prims or PrimitiveTable()
    h = conf.conf_hash()
    tmap = conf.thread_map()
    fmap = conf.fork_map()

    def live(tag: Tag) -> bool:
        if tag in tmap:
            return True
        fm = fmap.get(tag)
        return fm is not None and live(fm.l) and live(fm.r)

    out: list[RRedex] = []
    for m in conf.mems():
        if isinstance(m, (ForkMem, CommitMem)):
            continue  # forks are congruence, commits are final
        if not all(live(k) for k in mem_tail(m)):
            continue
        if isinstance(m, ActionMem):
            rule = {InitEv: "bwCon", ComEv: "bwCom", SelEv: "bwLab"}[type(m.event)]
        else:
            rule = "bwIf"  # one rule undoes either branch; the memory knows which
        out.append(RRedex("bw", rule, mem_id(m), mem_head(m), h))
    return _sorted_redexes(out)


# ------------------------------------------------------------ application


def _continuations(m: Mem, prims: PrimitiveTable) -> list[tuple[Tag, Process]]:
    """What the recorded step produced under each continuation tag."""
    match m:
        case ActionMem(_, _, InitEv(_, x, y, left, right, s), k1, k2):
            return [
                (k1, subst_value(left, x, SessionRef(s, dual=True))),
                (k2, subst_value(right, y, SessionRef(s))),
            ]
        case ActionMem(_, _, ComEv(_, payload, var, left, right), k1, k2):
            v = eval_expr(payload, {}, prims)
            return [(k1, left), (k2, subst_value(right, var, v))]
        case ActionMem(_, _, SelEv(_, label, left, branches), k1, k2):
            return [(k1, left), (k2, dict(branches)[label])]
        case ChoiceMem(_, cond, then, orelse, k):
            v = eval_expr(cond, {}, prims)
            return [(k, then if v else orelse)]
    raise TypeError(f"no continuations for {m!r}")


def _heads(m: Mem) -> list[Thread]:
    """The threads the recorded step consumed."""
    match m:
        case ActionMem(t1, t2, InitEv(chan, x, y, left, right, _), _, _):
            return [
                Thread(t1, Request(chan, x, left)),
                Thread(t2, Accept(chan, y, right)),
            ]
        case ActionMem(t1, t2, ComEv(subj, payload, var, left, right), _, _):
            return [
                Thread(t1, Send(subj.dualized(), payload, left)),
                Thread(t2, Receive(subj, var, right)),
            ]
        case ActionMem(t1, t2, SelEv(subj, label, left, branches), _, _):
            return [
                Thread(t1, Select(subj.dualized(), label, left)),
                Thread(t2, Branch(subj, branches)),
            ]
        case ChoiceMem(t, cond, then, orelse, _):
            return [Thread(t, If(cond, then, orelse))]
    raise TypeError(f"no heads for {m!r}")


def apply_redex(
    conf: RConfig, redex: RRedex, prims: PrimitiveTable | None = None
) -> RConfig:
    prims = prims or PrimitiveTable()
    if redex.conf_hash != conf.conf_hash():
        raise StaleRedex("redex was computed against a different configuration")
    if redex.direction == "fw":
        return _apply_forward(conf, redex, prims)
    return _apply_backward(conf, redex, prims)


def _apply_forward(conf: RConfig, redex: RRedex, prims: PrimitiveTable) -> RConfig:
    tmap = conf.thread_map()
    try:
        heads = [tmap[t] for t in redex.tags]
    except KeyError as e:
        raise StaleRedex(f"no live thread tagged {e}") from None

    mem: Mem
    if redex.rule == "fwCon":
        rq, ac = heads[0].body, heads[1].body
        if not (isinstance(rq, Request) and isinstance(ac, Accept) and rq.chan == ac.chan):
            raise StaleRedex("not a request/accept pair")
        t1, t2 = heads[0].tag, heads[1].tag
        s = f"s@{tag_str(t1)}"
        mem = ActionMem(t1, t2, InitEv(rq.chan, rq.var, ac.var, rq.body, ac.body, s), t1 + ("c",), t2 + ("c",))
        extra_restricted = [s]
    elif redex.rule == "fwCom":
        snd, rcv = heads[0].body, heads[1].body
        if not (isinstance(snd, Send) and isinstance(rcv, Receive)):
            raise StaleRedex("not a send/receive pair")
        t1, t2 = heads[0].tag, heads[1].tag
        mem = ActionMem(t1, t2, ComEv(rcv.subj, snd.payload, rcv.var, snd.body, rcv.body), t1 + ("c",), t2 + ("c",))
        extra_restricted = []
    elif redex.rule == "fwLab":
        sel, bra = heads[0].body, heads[1].body
        if not (isinstance(sel, Select) and isinstance(bra, Branch)):
            raise StaleRedex("not a select/branch pair")
        t1, t2 = heads[0].tag, heads[1].tag
        mem = ActionMem(t1, t2, SelEv(bra.subj, sel.label, sel.body, bra.branches), t1 + ("c",), t2 + ("c",))
        extra_restricted = []
    elif redex.rule in ("fwIf1", "fwIf2"):
        cnd = heads[0].body
        if not isinstance(cnd, If):
            raise StaleRedex("not a conditional")
        t = heads[0].tag
        v = eval_expr(cnd.cond, {}, prims)
        if (redex.rule == "fwIf1") != bool(v):
            raise StaleRedex("condition value changed")
        mem = ChoiceMem(t, cnd.cond, cnd.then, cnd.orelse, t + ("c",))
        extra_restricted = []
    elif redex.rule == "commit":
        c1, c2 = heads[0].body, heads[1].body
        if not (isinstance(c1, Commit) and isinstance(c2, Commit) and c1.subj.dual):
            raise StaleRedex("not a commit pair")
        t1, t2 = heads[0].tag, heads[1].tag
        mem = CommitMem(t1, c1.subj.name, t2)
        extra_restricted = []
    else:
        raise StaleRedex(f"unknown forward rule {redex.rule}")

    restricted = list(conf.restricted_channels) + extra_restricted
    items: list[Item] = [it for it in conf.items if not (isinstance(it, Thread) and it.tag in set(redex.tags))]
    items.append(mem)
    if isinstance(mem, CommitMem):
        conts = [(mem.t1 + ("c",), c1.body), (mem.t2 + ("c",), c2.body)]
    else:
        conts = _continuations(mem, prims)
    for k, body in conts:
        _expand(Thread(k, body), restricted, items)
    return _config(restricted, items)


def _apply_backward(conf: RConfig, redex: RRedex, prims: PrimitiveTable) -> RConfig:
    target = next((m for m in conf.mems() if mem_id(m) == redex.mem), None)
    if target is None or isinstance(target, (ForkMem, CommitMem)):
        raise StaleRedex(f"no reversible memory {redex.mem}")

    # replay the recorded step's production; everything it yielded must be
    # live and unchanged, and is removed wholesale
    scratch_res: list[str] = []
    produced: list[Item] = []
    for k, body in _continuations(target, prims):
        _expand(Thread(k, body), scratch_res, produced)

    tmap = conf.thread_map()
    fmap = conf.fork_map()
    drop_tags: set[Tag] = set()
    drop_forks: set[Tag] = set()
    for it in produced:
        match it:
            case Thread(tag, body):
                live = tmap.get(tag)
                assert live is not None and struct_key(live.body) == struct_key(body), (
                    f"stored continuation for {tag_str(tag)} does not match the "
                    "configuration; not a reachable state"
                )
                drop_tags.add(tag)
            case ForkMem(t, _, _):
                assert fmap.get(t) == it, f"missing fork record at {tag_str(t)}"
                drop_forks.add(t)

    restricted = [c for c in conf.restricted_channels if c not in set(scratch_res)]
    if isinstance(target, ActionMem) and isinstance(target.event, InitEv):
        restricted.remove(target.event.session)

    items: list[Item] = []
    for it in conf.items:
        if it is target:
            continue
        if isinstance(it, Thread) and it.tag in drop_tags:
            continue
        if isinstance(it, ForkMem) and it.t in drop_forks:
            continue
        items.append(it)
    items.extend(_heads(target))

    if __debug__:
        names: set[str] = set()
        for it in items:
            if isinstance(it, Thread):
                fn = free_names(it.body)
                names |= fn.shared | fn.sessions
        gone = (set(conf.restricted_channels) - set(restricted)) & names
        assert not gone, f"undone restriction still referenced: {sorted(gone)}"
    return _config(restricted, items)


# -------------------------------------------------------------- forgetting


def forgetful_map(conf: RConfig) -> Soup:
    """Erase tags and memories, keeping channel restrictions."""
    return normalize(conf.restricted_channels, [th.body for th in conf.threads()])


# ------------------------------------------------------------------ driver


def drive(
    conf: RConfig,
    prims: PrimitiveTable | None = None,
    *,
    max_steps: int,
    policy: str = "first",
    seed: int = 0,
    commit: bool = False,
) -> tuple[RConfig, list[dict]]:
    """Run forward under a policy, producing trace records.

    The stack-length fields of a record count memories here: one is laid
    down per step, so they play the same role the per-box stack does in
    the single-session engines.
    """
    prims = prims or PrimitiveTable()
    rng = random.Random(seed)
    records: list[dict] = []
    for step in range(1, max_steps + 1):
        reds = enabled_forward(conf, prims, commit=commit)
        if not reds:
            break
        r = reds[0] if policy == "first" else rng.choice(reds)
        conf, rec = apply_with_record(conf, r, step, prims, locked=commit)
        records.append(rec)
    return conf, records


def apply_with_record(
    conf: RConfig,
    redex: RRedex,
    step: int,
    prims: PrimitiveTable | None = None,
    *,
    locked: bool = False,
) -> tuple[RConfig, dict]:
    """Apply one step and describe it as a trace record."""
    prims = prims or PrimitiveTable()
    before = len(conf.mems())
    tags_before = {th.tag for th in conf.threads()}
    after = apply_redex(conf, redex, prims)
    tags_after = {th.tag for th in after.threads()}
    rec = {
        "stepIndex": step,
        "direction": redex.direction,
        "ruleName": redex.rule,
        "boxChannel": _redex_channel(conf if redex.direction == "bw" else after, redex),
        "stackLenBefore": before,
        "stackLenAfter": len(after.mems()),
        "confHash": after.conf_hash(),
        "memoryId": redex.mem,
        "tagsCreated": [tag_str(t) for t in sorted(tags_after - tags_before)],
        "tagsConsumed": [tag_str(t) for t in sorted(tags_before - tags_after)],
    }
    if locked:
        from .respic import locked_memories

        ids = locked_memories(after)
        rec["lockedCount"] = len(ids)
        rec["lockedIds"] = sorted(ids)
    return after, rec


def _redex_channel(conf: RConfig, redex: RRedex) -> str | None:
    for m in conf.mems():
        if mem_id(m) == redex.mem:
            match m:
                case ActionMem(_, _, InitEv(_, _, _, _, _, s), _, _):
                    return s
                case ActionMem(_, _, (ComEv(subj, _, _, _, _) | SelEv(subj, _, _, _)), _, _):
                    return subj.name
                case CommitMem(_, session, _):
                    return session
    return None
