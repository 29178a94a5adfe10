"""Plain (memoryless) reduction semantics, shared by the engines.

Configurations are kept as soups: a set of restricted channels over a
flat multiset of parallel components, each component normalized so its
head constructor is exposed (recursions unfolded up to a budget, nested
parallels flattened, inert components dropped).  Both the session-box
engine (for in-box steps) and the forgetful-map correspondence checks
enumerate redexes through this module.

Rules: Con, Com, Lab, If1, If2 for the binary calculus and M-Con,
M-Com, M-Lab for the multiparty one; Par/Res/Str are baked into the
soup representation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .congruence import canonicalize, par_fold, split_soup, struct_key, wrap_restrictions
from .primitives import ExprError, PrimitiveTable, eval_expr
from .syntax import (
    Accept,
    Branch,
    If,
    Inact,
    MAccept,
    MBranch,
    MReceive,
    MRequest,
    MSelect,
    MSend,
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
    fresh_name,
    subst_value,
    whnf,
)


class StaleRedex(Exception):
    """A redex applied to a configuration it was not enumerated on."""


@dataclass(frozen=True)
class Soup:
    restricted: tuple[str, ...]
    comps: tuple[Process, ...]

    def to_process(self) -> Process:
        return wrap_restrictions(list(self.restricted), par_fold(list(self.comps)))

    def key(self) -> str:
        # soups are shared structurally (session stacks, LTS states), so
        # the canonical form is worth computing once per instance
        cached = self.__dict__.get("_key")
        if cached is None:
            cached = struct_key(self.to_process())
            object.__setattr__(self, "_key", cached)
        return cached


@dataclass(frozen=True)
class HostRedex:
    rule: str  # Con | Com | Lab | If1 | If2 | M-Con | M-Com | M-Lab
    indices: tuple[int, ...]
    channel: str | None = None
    label: str | None = None


def normalize(restricted: tuple[str, ...], comps: list[Process], whnf_budget: int = 16) -> Soup:
    out: list[Process] = []
    extra: list[str] = []
    pending = list(comps)
    while pending:
        c = whnf(pending.pop(0), whnf_budget)
        if isinstance(c, Inact):
            continue
        if isinstance(c, (Par, Restrict)):
            chain, sub = split_soup(c)
            extra.extend(chain)
            pending = sub + pending
            continue
        out.append(c)
    rest = tuple(restricted) + tuple(extra)
    used: set[str] = set()
    for c in out:
        fn = free_names(c)
        used |= fn.shared | fn.sessions | fn.variables
    rest = tuple(r for r in rest if r in used)
    return Soup(rest, tuple(out))


def make_soup(p: Process) -> Soup:
    chain, comps = split_soup(p)
    return normalize(tuple(chain), comps)


def _binary_subject(r: SessionRef) -> tuple[str, bool] | None:
    if r.role is not None:
        return None
    return r.name, r.dual


def enabled_host(soup: Soup, prims: PrimitiveTable) -> list[HostRedex]:
    comps = soup.comps
    out: list[HostRedex] = []

    for i, c in enumerate(comps):
        if isinstance(c, If):
            try:
                v = eval_expr(c.cond, {}, prims)
            except ExprError:
                continue
            if v is True:
                out.append(HostRedex("If1", (i,)))
            elif v is False:
                out.append(HostRedex("If2", (i,)))

    for i, j in itertools.permutations(range(len(comps)), 2):
        a, b = comps[i], comps[j]
        if isinstance(a, Request) and isinstance(b, Accept) and a.chan == b.chan:
            out.append(HostRedex("Con", (i, j), channel=a.chan))
        if isinstance(a, Send) and isinstance(b, Receive):
            sa, sb = _binary_subject(a.subj), _binary_subject(b.subj)
            if sa and sb and sa[0] == sb[0] and sa[1] != sb[1]:
                try:
                    eval_expr(a.payload, {}, prims)
                except ExprError:
                    continue
                out.append(HostRedex("Com", (i, j), channel=sa[0]))
        if isinstance(a, Select) and isinstance(b, Branch):
            sa, sb = _binary_subject(a.subj), _binary_subject(b.subj)
            if (
                sa
                and sb
                and sa[0] == sb[0]
                and sa[1] != sb[1]
                and any(l == a.label for l, _ in b.branches)
            ):
                out.append(HostRedex("Lab", (i, j), channel=sa[0], label=a.label))
        if isinstance(a, MSend) and isinstance(b, MReceive):
            if (
                a.subj.name == b.subj.name
                and a.subj.role is not None
                and b.subj.role is not None
                and a.subj.role == b.partner
                and b.subj.role == a.partner
            ):
                try:
                    eval_expr(a.payload, {}, prims)
                except ExprError:
                    continue
                out.append(HostRedex("M-Com", (i, j), channel=a.subj.name))
        if isinstance(a, MSelect) and isinstance(b, MBranch):
            if (
                a.subj.name == b.subj.name
                and a.subj.role is not None
                and b.subj.role is not None
                and a.subj.role == b.partner
                and b.subj.role == a.partner
                and any(l == a.label for l, _ in b.branches)
            ):
                out.append(HostRedex("M-Lab", (i, j), channel=a.subj.name, label=a.label))

    for i, c in enumerate(comps):
        if isinstance(c, MRequest):
            by_role: list[list[int]] = []
            for role in range(1, c.arity):
                cands = [
                    j
                    for j, d in enumerate(comps)
                    if j != i and isinstance(d, MAccept) and d.chan == c.chan and d.part == role
                ]
                by_role.append(cands)
            if all(by_role):
                for combo in itertools.product(*by_role):
                    out.append(HostRedex("M-Con", (i, *combo), channel=c.chan))

    out.sort(key=lambda r: (r.rule, r.indices, r.label or ""))
    return out


def fresh_session_name(soup: Soup, base: str = "s") -> str:
    avoid: set[str] = set(soup.restricted)
    for c in soup.comps:
        avoid |= all_names(c)
    return fresh_name(base, avoid)


def apply_host(
    soup: Soup,
    redex: HostRedex,
    prims: PrimitiveTable,
    fresh_session: str | None = None,
) -> Soup:
    comps = list(soup.comps)
    restricted = soup.restricted

    def need(idx: int, cls) -> Process:
        if idx >= len(comps) or not isinstance(comps[idx], cls):
            raise StaleRedex(f"{redex.rule} at {redex.indices}: configuration changed")
        return comps[idx]

    match redex.rule:
        case "If1" | "If2":
            (i,) = redex.indices
            c = need(i, If)
            v = eval_expr(c.cond, {}, prims)
            if v is not (redex.rule == "If1"):
                raise StaleRedex(f"{redex.rule}: condition now evaluates to {v}")
            comps[i] = c.then if v else c.orelse
        case "Con":
            i, j = redex.indices
            a = need(i, Request)
            b = need(j, Accept)
            if a.chan != redex.channel or b.chan != redex.channel:
                raise StaleRedex("Con: channel mismatch")
            s = fresh_session or fresh_session_name(soup)
            comps[i] = subst_value(a.body, a.var, SessionRef(s, dual=True))
            comps[j] = subst_value(b.body, b.var, SessionRef(s))
            restricted = restricted + (s,)
        case "Com":
            i, j = redex.indices
            a = need(i, Send)
            b = need(j, Receive)
            v = eval_expr(a.payload, {}, prims)
            comps[i] = a.body
            comps[j] = subst_value(b.body, b.var, v)
        case "Lab":
            i, j = redex.indices
            a = need(i, Select)
            b = need(j, Branch)
            cont = dict(b.branches).get(a.label)
            if cont is None:
                raise StaleRedex(f"Lab: label {a.label} gone")
            comps[i] = a.body
            comps[j] = cont
        case "M-Con":
            i, *js = redex.indices
            a = need(i, MRequest)
            s = fresh_session or fresh_session_name(soup)
            comps[i] = subst_value(a.body, a.var, SessionRef(s, role=a.arity))
            for j in js:
                b = need(j, MAccept)
                comps[j] = subst_value(b.body, b.var, SessionRef(s, role=b.part))
            restricted = restricted + (s,)
        case "M-Com":
            i, j = redex.indices
            a = need(i, MSend)
            b = need(j, MReceive)
            v = eval_expr(a.payload, {}, prims)
            comps[i] = a.body
            comps[j] = subst_value(b.body, b.var, v)
        case "M-Lab":
            i, j = redex.indices
            a = need(i, MSelect)
            b = need(j, MBranch)
            cont = dict(b.branches).get(a.label)
            if cont is None:
                raise StaleRedex(f"M-Lab: label {a.label} gone")
            comps[i] = a.body
            comps[j] = cont
        case _:
            raise StaleRedex(f"unknown rule {redex.rule}")

    return normalize(restricted, comps)


def host_successors(p: Process, prims: PrimitiveTable) -> list[tuple[HostRedex, Process]]:
    """One-step successors of a plain process, canonicalized."""
    soup = make_soup(p)
    out = []
    for r in enabled_host(soup, prims):
        nxt = apply_host(soup, r, prims)
        out.append((r, canonicalize(nxt.to_process())))
    return out
