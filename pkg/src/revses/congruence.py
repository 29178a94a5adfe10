"""Structural congruence via canonical forms.

`canonicalize` normalizes modulo the congruence laws that are decidable by
rewriting: parallel flattening/sorting with inert components dropped,
garbage-collection of unused restrictions, hoisting of restrictions to the
top of each parallel group (scope extrusion, made safe by freshening), a
fixed restriction-chain order, and a positional renaming of every binder.
Recursion unfolding is *not* applied here; `congruent` tries a bounded
number of unfoldings on each side on top of canonical equality.
"""

from __future__ import annotations

from .syntax import (
    Accept,
    Branch,
    Call,
    Chan,
    Expr,
    If,
    Inact,
    Lit,
    MAccept,
    MBranch,
    MReceive,
    MRequest,
    MSelect,
    MSend,
    Name,
    Par,
    Process,
    Rec,
    RecVar,
    Receive,
    Request,
    Restrict,
    Select,
    Send,
    SessionRef,
    Commit,
    ZERO,
    free_names,
    rename_free,
    unfold_rec,
)

import itertools

_TMP = "\x00r"  # internal marker prefix for hoisted restrictions
_tmp_counter = itertools.count()


def flatten_par(p: Process) -> list[Process]:
    if isinstance(p, Par):
        return flatten_par(p.left) + flatten_par(p.right)
    return [p]


def par_fold(comps: list[Process]) -> Process:
    if not comps:
        return ZERO
    out = comps[-1]
    for c in reversed(comps[:-1]):
        out = Par(c, out)
    return out


def wrap_restrictions(chain: list[str], body: Process) -> Process:
    for c in reversed(chain):
        body = Restrict(c, body)
    return body


def split_soup(p: Process) -> tuple[list[str], list[Process]]:
    """View a term as (restriction chain, parallel components), collecting
    restrictions across the parallel structure.  Hoisted binders are renamed
    to fresh internal names so extrusion cannot capture."""
    chain: list[str] = []
    comps: list[Process] = []

    def go(q: Process) -> None:
        if isinstance(q, Restrict):
            # globally unique so nested collections can never capture
            tmp = f"{_TMP}{next(_tmp_counter)}"
            chain.append(tmp)
            go(rename_free(q.body, q.chan, tmp))
        elif isinstance(q, Par):
            go(q.left)
            go(q.right)
        else:
            comps.append(q)

    go(p)
    return chain, comps


# ------------------------------------------------------------ struct keys


def _ref_key(r: SessionRef, env: dict[str, str]) -> str:
    base = env.get(r.name, f"f:{r.name}")
    if r.role is not None:
        return f"{base}[{r.role}]"
    return f"~{base}" if r.dual else base


def _expr_key(e: Expr, env: dict[str, str]) -> str:
    match e:
        case Lit(v):
            if isinstance(v, SessionRef):
                return "#" + _ref_key(v, env)
            if isinstance(v, Chan):
                return "#" + env.get(v.name, f"f:{v.name}")
            return f"#{v!r}"
        case Name(n, d):
            base = env.get(n, f"f:{n}")
            return f"~{base}" if d else base
        case Call(op, args):
            return f"{op}({','.join(_expr_key(a, env) for a in args)})"
    raise AssertionError(e)


def struct_key(p: Process, env: dict[str, str] | None = None) -> str:
    """A name-independent serialization: bound names become positional
    tokens, parallel groups are sorted, restriction chains are neutral.
    Equal keys coincide with alpha-AC-equality except for parallel
    components distinguishable only through same-chain restricted names.
    """
    env = dict(env or {})

    def go(q: Process, env: dict[str, str], vd: int, xd: int) -> str:
        match q:
            case Inact():
                return "0"
            case Request(c, x, b) | Accept(c, x, b):
                tag = "req" if isinstance(q, Request) else "acc"
                e2 = dict(env)
                e2[x] = f"v{vd}"
                return f"{tag}({env.get(c, f'f:{c}')}){go(b, e2, vd + 1, xd)}"
            case MRequest(c, n, x, b):
                e2 = dict(env)
                e2[x] = f"v{vd}"
                return f"mreq({env.get(c, f'f:{c}')},{n}){go(b, e2, vd + 1, xd)}"
            case MAccept(c, r0, x, b):
                e2 = dict(env)
                e2[x] = f"v{vd}"
                return f"macc({env.get(c, f'f:{c}')},{r0}){go(b, e2, vd + 1, xd)}"
            case Send(k, e, b):
                return f"snd({_ref_key(k, env)},{_expr_key(e, env)}){go(b, env, vd, xd)}"
            case MSend(k, pr, e, b):
                return f"msnd({_ref_key(k, env)},{pr},{_expr_key(e, env)}){go(b, env, vd, xd)}"
            case Receive(k, x, b):
                e2 = dict(env)
                e2[x] = f"v{vd}"
                return f"rcv({_ref_key(k, env)}){go(b, e2, vd + 1, xd)}"
            case MReceive(k, pr, x, b):
                e2 = dict(env)
                e2[x] = f"v{vd}"
                return f"mrcv({_ref_key(k, env)},{pr}){go(b, e2, vd + 1, xd)}"
            case Select(k, l, b):
                return f"sel({_ref_key(k, env)},{l}){go(b, env, vd, xd)}"
            case MSelect(k, pr, l, b):
                return f"msel({_ref_key(k, env)},{pr},{l}){go(b, env, vd, xd)}"
            case Branch(k, bs):
                inner = ";".join(f"{l}:{go(bb, env, vd, xd)}" for l, bb in bs)
                return f"bra({_ref_key(k, env)})[{inner}]"
            case MBranch(k, pr, bs):
                inner = ";".join(f"{l}:{go(bb, env, vd, xd)}" for l, bb in bs)
                return f"mbra({_ref_key(k, env)},{pr})[{inner}]"
            case Commit(k, b):
                return f"commit({_ref_key(k, env)}){go(b, env, vd, xd)}"
            case If(e, t, f):
                return f"if({_expr_key(e, env)})[{go(t, env, vd, xd)}|{go(f, env, vd, xd)}]"
            case Rec(x, b):
                e2 = dict(env)
                e2[x] = f"X{xd}"
                return f"rec{go(b, e2, vd, xd + 1)}"
            case RecVar(x):
                return env.get(x, f"f:{x}")
            case Par(_, _) | Restrict(_, _):
                chain, comps = split_soup(q)
                e2 = dict(env)
                for c in chain:
                    e2[c] = "nu"
                keys = sorted(go(c, e2, vd, xd) for c in comps)
                return f"(nu{len(chain)}|{';'.join(keys)})"
        raise AssertionError(q)

    return go(p, env, 0, 0)


# --------------------------------------------------------- canonicalization


def _canon_struct(p: Process) -> Process:
    match p:
        case Par(_, _) | Restrict(_, _):
            chain, comps = split_soup(p)
            comps = [_canon_struct(c) for c in comps]
            comps = [c for c in comps if not isinstance(c, Inact)]
            # canonicalizing a component never surfaces new top restrictions
            used: set[str] = set()
            for c in comps:
                fn = free_names(c)
                used |= fn.shared | fn.sessions | fn.variables
            chain = [c for c in chain if c in used]
            # sort with chain names neutralized so the order is stable
            # under the later binder renaming (idempotence)
            neutral = {nm: "nu" for nm in chain}
            comps.sort(key=lambda c: struct_key(c, neutral))
            order: dict[str, int] = {}
            for c in comps:
                key_names = free_names(c)
                occurring = (
                    key_names.shared | key_names.sessions | key_names.variables
                ) & set(chain)
                for nm in sorted(
                    occurring, key=lambda nm: _first_use(c, nm, neutral)
                ):
                    order.setdefault(nm, len(order))
            chain.sort(key=lambda nm: order.get(nm, len(order)))
            if not comps:
                return ZERO
            return wrap_restrictions(chain, par_fold(comps))
        case Inact() | RecVar(_):
            return p
        case Request(c, x, b):
            return Request(c, x, _canon_struct(b))
        case Accept(c, x, b):
            return Accept(c, x, _canon_struct(b))
        case MRequest(c, n, x, b):
            return MRequest(c, n, x, _canon_struct(b))
        case MAccept(c, r0, x, b):
            return MAccept(c, r0, x, _canon_struct(b))
        case Send(k, e, b):
            return Send(k, e, _canon_struct(b))
        case MSend(k, pr, e, b):
            return MSend(k, pr, e, _canon_struct(b))
        case Receive(k, x, b):
            return Receive(k, x, _canon_struct(b))
        case MReceive(k, pr, x, b):
            return MReceive(k, pr, x, _canon_struct(b))
        case Select(k, l, b):
            return Select(k, l, _canon_struct(b))
        case MSelect(k, pr, l, b):
            return MSelect(k, pr, l, _canon_struct(b))
        case Branch(k, bs):
            return Branch(k, tuple((l, _canon_struct(bb)) for l, bb in bs))
        case MBranch(k, pr, bs):
            return MBranch(k, pr, tuple((l, _canon_struct(bb)) for l, bb in bs))
        case Commit(k, b):
            return Commit(k, _canon_struct(b))
        case If(e, t, f):
            return If(e, _canon_struct(t), _canon_struct(f))
        case Rec(x, b):
            return Rec(x, _canon_struct(b))
    raise AssertionError(p)


def _first_use(p: Process, name: str, neutral: dict[str, str]) -> int:
    """Position of the first occurrence of `name` in the struct key, used to
    order same-level restriction binders deterministically.  Sibling chain
    names are neutralized so the offset does not depend on their spelling."""
    key = struct_key(p, {**neutral, name: "\x01HIT\x01"})
    pos = key.find("\x01HIT\x01")
    return pos if pos >= 0 else 1 << 30


def _canon_rename(p: Process) -> Process:
    fn = free_names(p)
    avoid = fn.variables | fn.shared | fn.sessions | fn.procvars
    counters = {"v": 0, "c": 0, "X": 0}

    def alloc(kind: str) -> str:
        while True:
            nm = f"_{kind}{counters[kind]}"
            counters[kind] += 1
            if nm not in avoid:
                return nm

    def go(q: Process, env: dict[str, str]) -> Process:
        def ref(r: SessionRef) -> SessionRef:
            nm = env.get(r.name, r.name)
            return SessionRef(nm, r.dual, r.role) if nm != r.name else r

        def ex(e: Expr) -> Expr:
            match e:
                case Name(n, d):
                    return Name(env.get(n, n), d)
                case Lit(v):
                    if isinstance(v, SessionRef):
                        return Lit(ref(v))
                    if isinstance(v, Chan) and v.name in env:
                        return Lit(Chan(env[v.name]))
                    return e
                case Call(op, args):
                    return Call(op, tuple(ex(a) for a in args))
            raise AssertionError(e)

        match q:
            case Inact():
                return q
            case RecVar(x):
                return RecVar(env.get(x, x))
            case Request(c, x, b) | Accept(c, x, b):
                cls = type(q)
                x2 = alloc("v")
                return cls(env.get(c, c), x2, go(b, {**env, x: x2}))
            case MRequest(c, n, x, b):
                x2 = alloc("v")
                return MRequest(env.get(c, c), n, x2, go(b, {**env, x: x2}))
            case MAccept(c, r0, x, b):
                x2 = alloc("v")
                return MAccept(env.get(c, c), r0, x2, go(b, {**env, x: x2}))
            case Send(k, e, b):
                return Send(ref(k), ex(e), go(b, env))
            case MSend(k, pr, e, b):
                return MSend(ref(k), pr, ex(e), go(b, env))
            case Receive(k, x, b):
                x2 = alloc("v")
                return Receive(ref(k), x2, go(b, {**env, x: x2}))
            case MReceive(k, pr, x, b):
                x2 = alloc("v")
                return MReceive(ref(k), pr, x2, go(b, {**env, x: x2}))
            case Select(k, l, b):
                return Select(ref(k), l, go(b, env))
            case MSelect(k, pr, l, b):
                return MSelect(ref(k), pr, l, go(b, env))
            case Branch(k, bs):
                return Branch(ref(k), tuple((l, go(bb, env)) for l, bb in bs))
            case MBranch(k, pr, bs):
                return MBranch(ref(k), pr, tuple((l, go(bb, env)) for l, bb in bs))
            case Commit(k, b):
                return Commit(ref(k), go(b, env))
            case If(e, t, f):
                return If(ex(e), go(t, env), go(f, env))
            case Par(l, r):
                return Par(go(l, env), go(r, env))
            case Restrict(c, b):
                c2 = alloc("c")
                return Restrict(c2, go(b, {**env, c: c2}))
            case Rec(x, b):
                x2 = alloc("X")
                return Rec(x2, go(b, {**env, x: x2}))
        raise AssertionError(q)

    return go(p, {})


def canonicalize(p: Process) -> Process:
    return _canon_rename(_canon_struct(p))


# ------------------------------------------------------------- congruence


def _unfold_variants(p: Process) -> list[Process]:
    """All terms obtained by unfolding exactly one rec subterm once."""
    out: list[Process] = []

    def subs(q: Process):
        """Yield (child, rebuild) pairs."""
        match q:
            case Request(c, x, b):
                yield b, lambda nb: Request(c, x, nb)
            case Accept(c, x, b):
                yield b, lambda nb: Accept(c, x, nb)
            case MRequest(c, n, x, b):
                yield b, lambda nb: MRequest(c, n, x, nb)
            case MAccept(c, r0, x, b):
                yield b, lambda nb: MAccept(c, r0, x, nb)
            case Send(k, e, b):
                yield b, lambda nb: Send(k, e, nb)
            case MSend(k, pr, e, b):
                yield b, lambda nb: MSend(k, pr, e, nb)
            case Receive(k, x, b):
                yield b, lambda nb: Receive(k, x, nb)
            case MReceive(k, pr, x, b):
                yield b, lambda nb: MReceive(k, pr, x, nb)
            case Select(k, l, b):
                yield b, lambda nb: Select(k, l, nb)
            case MSelect(k, pr, l, b):
                yield b, lambda nb: MSelect(k, pr, l, nb)
            case Commit(k, b):
                yield b, lambda nb: Commit(k, nb)
            case Branch(k, bs):
                for i, (l, bb) in enumerate(bs):
                    yield bb, lambda nb, i=i, l=l: Branch(
                        k, bs[:i] + ((l, nb),) + bs[i + 1 :]
                    )
            case MBranch(k, pr, bs):
                for i, (l, bb) in enumerate(bs):
                    yield bb, lambda nb, i=i, l=l: MBranch(
                        k, pr, bs[:i] + ((l, nb),) + bs[i + 1 :]
                    )
            case If(e, t, f):
                yield t, lambda nt: If(e, nt, f)
                yield f, lambda nf: If(e, t, nf)
            case Par(l, r):
                yield l, lambda nl: Par(nl, r)
                yield r, lambda nr: Par(l, nr)
            case Restrict(c, b):
                yield b, lambda nb: Restrict(c, nb)
            case Rec(x, b):
                yield b, lambda nb: Rec(x, nb)
            case _:
                return

    def go(q: Process, rebuild) -> None:
        if isinstance(q, Rec):
            unfolded = unfold_rec(q)
            if unfolded != q:
                out.append(rebuild(unfolded))
        for child, reb in subs(q):
            go(child, lambda nb, reb=reb: rebuild(reb(nb)))

    go(p, lambda x: x)
    return out


def congruent(p: Process, q: Process, unfold_budget: int = 1) -> bool:
    """Sound congruence check: canonical equality after at most
    `unfold_budget` one-step recursion unfoldings per side."""
    seen_p = {canonicalize(p)}
    seen_q = {canonicalize(q)}
    if seen_p & seen_q:
        return True
    front_p, front_q = list(seen_p), list(seen_q)
    for _ in range(unfold_budget):
        front_p = [
            v
            for t in front_p
            for v in (canonicalize(u) for u in _unfold_variants(t))
            if v not in seen_p
        ]
        front_q = [
            v
            for t in front_q
            for v in (canonicalize(u) for u in _unfold_variants(t))
            if v not in seen_q
        ]
        seen_p.update(front_p)
        seen_q.update(front_q)
        if seen_p & seen_q:
            return True
        if not front_p and not front_q:
            return False
    return False
