"""Reversible execution for the six single-session configurations.

A running session lives in a box: the channel it owns, a memory stack, and
the current body (a parallel soup of the participants' residuals).  The
stack bottom is the plain composition that initiated the session; whether
anything else is pushed, and how much of the stack one backward step may
consume, is what distinguishes the six modes:

  case1/case4  whole-session undo: nothing is pushed, one backward step
               dissolves the box back to its initiator.
  case2/case5  step-by-step undo: every in-box step pushes its pre-state,
               backward pops exactly one.
  case3/case6  arbitrary rollback: pushes like case2, but one backward
               step may jump to any stored depth (or dissolve).

Cases 1-3 are binary, 4-6 their multiparty twins.  Top-level conditionals
reduce without memory: they happen before any session exists and are out
of reversibility scope here.

Stack entries after the bottom are kept as soups rather than re-parsed
processes so that undo restores the exact prior representation.
"""

from __future__ import annotations

import hashlib
import itertools
import random
from dataclasses import dataclass, replace

from .congruence import struct_key
from .host import HostRedex, Soup, StaleRedex, apply_host, enabled_host, normalize
from .primitives import ExprError, PrimitiveTable, eval_expr
from .syntax import (
    Accept,
    If,
    MAccept,
    MRequest,
    Process,
    Request,
    SessionRef,
    all_names,
    free_names,
    fresh_name,
    subst_value,
    uses_multiparty,
)
from .typecheck import NotSimple, check_simple_multiparty, simple_diagnosis

MODES = ("case1", "case2", "case3", "case4", "case5", "case6")
_MODE_NUM = {m: i + 1 for i, m in enumerate(MODES)}
_MULTI = {"case4", "case5", "case6"}
_PUSHING = {"case2", "case3", "case5", "case6"}
_JUMPING = {"case3", "case6"}


@dataclass(frozen=True)
class SessionBox:
    """One running session: channel, memory stack, current body."""

    channel: str
    init: tuple[Process, ...]  # stack bottom: the initiating plain items
    pushes: tuple[Soup, ...]  # stack entries 1..L-1 (pre-state of each step)
    body: Soup

    @property
    def stack_len(self) -> int:
        return 1 + len(self.pushes)


Item = Process | SessionBox


@dataclass(frozen=True)
class SConfig:
    mode: str
    restricted: tuple[str, ...]
    items: tuple[Item, ...]

    def key(self) -> str:
        cached = self.__dict__.get("_key")
        if cached is not None:
            return cached
        parts = []
        for it in self.items:
            if isinstance(it, SessionBox):
                init = ";".join(struct_key(p) for p in it.init)
                hist = ";".join(s.key() for s in it.pushes)
                parts.append(f"b:{it.channel}[{init}|{hist}|{it.body.key()}]")
            else:
                parts.append("p:" + struct_key(it))
        res = ",".join(sorted(self.restricted))
        key = f"({res}){'&'.join(sorted(parts))}"
        object.__setattr__(self, "_key", key)
        return key

    def conf_hash(self) -> str:
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = hashlib.sha256(self.key().encode()).hexdigest()[:16]
            object.__setattr__(self, "_hash", cached)
        return cached

    def boxes(self) -> list[tuple[int, SessionBox]]:
        return [(i, it) for i, it in enumerate(self.items) if isinstance(it, SessionBox)]


@dataclass(frozen=True)
class SRedex:
    direction: str  # fw | bw
    rule: str
    locus: tuple[int, ...]
    conf_hash: str
    host: HostRedex | None = None
    target: int | None = None  # backward: stack depth to restore


# ------------------------------------------------------------------- init


def init_config(
    mode: str, processes: list[Process], prims: PrimitiveTable | None = None
) -> SConfig:
    """Build the starting configuration, gating on the simplicity discipline."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    prims = prims or PrimitiveTable()
    for p in processes:
        fn = free_names(p)
        if fn.variables:
            raise NotSimple(
                "Init", f"unbound variable(s): {', '.join(sorted(fn.variables))}"
            )
        if fn.sessions:
            raise NotSimple(
                "Init",
                "initial processes must not mention session endpoints "
                f"({', '.join(sorted(fn.sessions))})",
            )
        if fn.procvars:
            raise NotSimple(
                "Init", f"unbound process variable(s): {', '.join(sorted(fn.procvars))}"
            )
        if mode in _MULTI:
            check_simple_multiparty(p)
        else:
            if uses_multiparty(p):
                raise NotSimple(
                    "Init", "multiparty constructs require case4, case5 or case6"
                )
            diag = simple_diagnosis(p, prims=prims)
            if diag is not None:
                raise NotSimple("Init", diag)
    soup = normalize((), list(processes))
    return SConfig(mode, soup.restricted, soup.comps)


def _config_names(conf: SConfig) -> set[str]:
    avoid: set[str] = set(conf.restricted)
    for it in conf.items:
        if isinstance(it, SessionBox):
            avoid.add(it.channel)
            for p in it.init:
                avoid |= all_names(p)
            for s in (*it.pushes, it.body):
                avoid |= set(s.restricted)
                for c in s.comps:
                    avoid |= all_names(c)
        else:
            avoid |= all_names(it)
    return avoid


# ------------------------------------------------------------- enumeration


def enabled_forward(conf: SConfig, prims: PrimitiveTable | None = None) -> list[SRedex]:
    prims = prims or PrimitiveTable()
    h = conf.conf_hash()
    num = _MODE_NUM[conf.mode]
    out: list[SRedex] = []

    requests: list[tuple[int, Request]] = []
    accepts: list[tuple[int, Accept]] = []
    mrequests: list[tuple[int, MRequest]] = []
    maccepts: list[tuple[int, MAccept]] = []

    for i, it in enumerate(conf.items):
        if isinstance(it, SessionBox):
            for hr in enabled_host(it.body, prims):
                out.append(SRedex("fw", f"Fw({num})-{hr.rule}", (i,), h, host=hr))
            continue
        match it:
            case Request():
                requests.append((i, it))
            case Accept():
                accepts.append((i, it))
            case MRequest():
                mrequests.append((i, it))
            case MAccept():
                maccepts.append((i, it))
            case If(cond, _, _):
                try:
                    v = eval_expr(cond, {}, prims)
                except ExprError:
                    continue
                if type(v) is bool:
                    out.append(
                        SRedex("fw", "Fw-If1" if v else "Fw-If2", (i,), h)
                    )

    for i, rq in requests:
        for j, ac in accepts:
            if rq.chan == ac.chan:
                out.append(SRedex("fw", f"Fw({num})-Con", (i, j), h))

    for i, rq in mrequests:
        by_role: list[list[int]] = [[] for _ in range(rq.arity - 1)]
        for j, ac in maccepts:
            if ac.chan == rq.chan and 1 <= ac.part <= rq.arity - 1:
                by_role[ac.part - 1].append(j)
        if all(by_role):
            for combo in itertools.product(*by_role):
                if len(set(combo)) == len(combo):
                    out.append(SRedex("fw", f"Fw({num})-M-Con", (i, *combo), h))

    out.sort(key=lambda r: (r.locus, r.rule, r.host.indices if r.host else ()))
    return out


def enabled_backward(conf: SConfig) -> list[SRedex]:
    h = conf.conf_hash()
    num = _MODE_NUM[conf.mode]
    out: list[SRedex] = []
    for i, box in conf.boxes():
        L = box.stack_len
        if conf.mode in ("case1", "case4"):
            out.append(SRedex("bw", f"Bw({num})", (i,), h, target=0))
        elif conf.mode not in _JUMPING:
            if L == 1:
                out.append(SRedex("bw", f"Bw({num})-1", (i,), h, target=0))
            else:
                out.append(SRedex("bw", f"Bw({num})-2", (i,), h, target=L - 1))
        else:
            for j in range(L):
                if j == 0:
                    rule = f"Bw({num})-1" if L == 1 else f"Bw({num})-3"
                elif j == L - 1:
                    rule = f"Bw({num})-2"
                else:
                    rule = f"Bw({num})-4"
                out.append(SRedex("bw", rule, (i,), h, target=j))
    return out


# -------------------------------------------------------------- application


def _splice(items: tuple[Item, ...], idx: int, rep: list[Item], drop: set[int]) -> tuple[Item, ...]:
    out: list[Item] = []
    for k, it in enumerate(items):
        if k == idx:
            out.extend(rep)
        elif k not in drop:
            out.append(it)
    return tuple(out)


def apply_redex(
    conf: SConfig, redex: SRedex, prims: PrimitiveTable | None = None
) -> SConfig:
    prims = prims or PrimitiveTable()
    if redex.conf_hash != conf.conf_hash():
        raise StaleRedex("redex was computed against a different configuration")
    if redex.direction == "fw":
        return _apply_forward(conf, redex, prims)
    return _apply_backward(conf, redex)


def _apply_forward(conf: SConfig, redex: SRedex, prims: PrimitiveTable) -> SConfig:
    items = conf.items
    i = redex.locus[0]

    if redex.host is not None:
        box = items[i]
        if not isinstance(box, SessionBox):
            raise StaleRedex("locus is not a session box")
        fresh = None
        if redex.host.rule in ("Con", "M-Con"):
            fresh = fresh_name("s", _config_names(conf))
        post = apply_host(box.body, redex.host, prims, fresh_session=fresh)
        pushes = box.pushes + (box.body,) if conf.mode in _PUSHING else box.pushes
        return replace(conf, items=_splice(items, i, [replace(box, pushes=pushes, body=post)], set()))

    if redex.rule.endswith("M-Con"):
        rq = items[i]
        if not isinstance(rq, MRequest):
            raise StaleRedex("locus is not a session request")
        s = fresh_name("s", _config_names(conf))
        comps = [subst_value(rq.body, rq.var, SessionRef(s, role=rq.arity))]
        init = [rq]
        for j in redex.locus[1:]:
            ac = items[j]
            if not isinstance(ac, MAccept) or ac.chan != rq.chan:
                raise StaleRedex("locus is not a matching accept")
            comps.append(subst_value(ac.body, ac.var, SessionRef(s, role=ac.part)))
            init.append(ac)
        box = SessionBox(s, tuple(init), (), normalize((), comps))
        return replace(
            conf, items=_splice(items, i, [box], set(redex.locus[1:]))
        )

    if redex.rule.endswith("Con"):
        j = redex.locus[1]
        rq, ac = items[i], items[j]
        if not (isinstance(rq, Request) and isinstance(ac, Accept) and rq.chan == ac.chan):
            raise StaleRedex("locus is not a request/accept pair")
        s = fresh_name("s", _config_names(conf))
        body = normalize(
            (),
            [
                subst_value(rq.body, rq.var, SessionRef(s, dual=True)),
                subst_value(ac.body, ac.var, SessionRef(s)),
            ],
        )
        box = SessionBox(s, (rq, ac), (), body)
        return replace(conf, items=_splice(items, i, [box], {j}))

    # top-level conditional: memoryless
    it = items[i]
    if not isinstance(it, If):
        raise StaleRedex("locus is not a conditional")
    v = eval_expr(it.cond, {}, prims)
    branch = it.then if v else it.orelse
    if (redex.rule == "Fw-If1") != bool(v):
        raise StaleRedex("condition value changed")
    sub = normalize((), [branch])
    return SConfig(
        conf.mode,
        conf.restricted + sub.restricted,
        _splice(items, i, list(sub.comps), set()),
    )


def _apply_backward(conf: SConfig, redex: SRedex) -> SConfig:
    i = redex.locus[0]
    box = conf.items[i]
    if not isinstance(box, SessionBox):
        raise StaleRedex("locus is not a session box")
    j = redex.target
    if j is None or not 0 <= j < box.stack_len:
        raise StaleRedex("stack depth out of range")
    if conf.mode not in _JUMPING and not (
        j == box.stack_len - 1 or box.stack_len == 1
    ):
        raise StaleRedex("mode cannot jump below the top of the stack")
    if j == 0:
        sub = normalize((), list(box.init))
        return SConfig(
            conf.mode,
            conf.restricted + sub.restricted,
            _splice(conf.items, i, list(sub.comps), set()),
        )
    restored = replace(box, pushes=box.pushes[: j - 1], body=box.pushes[j - 1])
    return replace(conf, items=_splice(conf.items, i, [restored], set()))


# ------------------------------------------------------------------ costs


class NoSuchBox(Exception):
    pass


def measure_costs(
    conf: SConfig, prims: PrimitiveTable | None = None, channel: str | None = None
) -> list[dict]:
    """Per-box (C_br, C_mo): backward steps to fully revert, stack size.

    With a channel given, measures that box alone; NoSuchBox if absent.
    """
    chosen = [b for _, b in conf.boxes() if channel in (None, b.channel)]
    if channel is not None and not chosen:
        raise NoSuchBox(f"no session box on channel {channel!r}")
    out = []
    for box in chosen:
        c_mo = box.stack_len
        cur = conf
        c_br = 0
        while True:
            reds = [
                r
                for r in enabled_backward(cur)
                if isinstance(cur.items[r.locus[0]], SessionBox)
                and cur.items[r.locus[0]].channel == box.channel
            ]
            if not reds:
                break
            best = min(reds, key=lambda r: r.target)
            cur = apply_redex(cur, best, prims)
            c_br += 1
            if not any(b.channel == box.channel for _, b in cur.boxes()):
                break
        out.append({"channel": box.channel, "c_br": c_br, "c_mo": c_mo})
    return out


# ------------------------------------------------------------------ driver


def drive(
    conf: SConfig,
    prims: PrimitiveTable | None = None,
    *,
    max_steps: int,
    policy: str = "first",
    seed: int = 0,
) -> tuple[SConfig, list[dict]]:
    """Run forward steps under a policy, producing trace records."""
    prims = prims or PrimitiveTable()
    rng = random.Random(seed)
    records: list[dict] = []
    for step in range(1, max_steps + 1):
        reds = enabled_forward(conf, prims)
        if not reds:
            break
        r = reds[0] if policy == "first" else rng.choice(reds)
        conf, rec = apply_with_record(conf, r, step, prims)
        records.append(rec)
    return conf, records


def apply_with_record(
    conf: SConfig, redex: SRedex, step: int, prims: PrimitiveTable | None = None
) -> tuple[SConfig, dict]:
    """Apply one step and describe it as a trace record."""
    rec = step_record(conf, redex, step, prims=prims)
    old = {id(it) for it in conf.items}
    after = apply_redex(conf, redex, prims)
    rec["confHash"] = after.conf_hash()
    if rec["boxChannel"] is None and redex.rule.endswith("Con"):
        for it in after.items:
            if isinstance(it, SessionBox) and id(it) not in old:
                rec["boxChannel"] = it.channel
                break
    return after, rec


def step_record(
    conf: SConfig, redex: SRedex, step: int, prims: PrimitiveTable | None = None
) -> dict:
    """Trace record skeleton; confHash is filled in after application."""
    it = conf.items[redex.locus[0]]
    if isinstance(it, SessionBox):
        before = it.stack_len
        channel = it.channel
        if redex.direction == "bw":
            after = redex.target if redex.target else 0
        else:
            after = before + (1 if conf.mode in _PUSHING else 0)
    elif redex.rule.endswith("Con"):
        before, after = 0, 1
        channel = None  # the created box channel is only known after application
    else:
        before, after, channel = 0, 0, None
    return {
        "stepIndex": step,
        "direction": redex.direction,
        "ruleName": redex.rule,
        "boxChannel": channel,
        "stackLenBefore": before,
        "stackLenAfter": after,
        "confHash": None,
    }
