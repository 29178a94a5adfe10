"""Process terms for binary and multiparty session calculi.

All nodes are frozen dataclasses so terms hash and compare structurally.
Session subjects are `SessionRef`s: a name plus either a binary polarity
(`~s` is the dual endpoint of `s`) or a multiparty role (`s[2]`).  Before a
session starts the name is a bound variable; initiation substitutes the
fresh endpoint in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class SubstitutionError(Exception):
    pass


# ------------------------------------------------------------ identifiers


@dataclass(frozen=True)
class SessionRef:
    """A session identifier occurrence.

    `dual` marks the mirrored binary endpoint (written `~name`); `role`
    marks an established multiparty endpoint (written `name[role]`).
    """

    name: str
    dual: bool = False
    role: int | None = None

    def __post_init__(self) -> None:
        if self.dual and self.role is not None:
            raise SubstitutionError("an endpoint cannot be both dual and roled")

    def __str__(self) -> str:
        if self.role is not None:
            return f"{self.name}[{self.role}]"
        return f"~{self.name}" if self.dual else self.name

    def dualized(self) -> "SessionRef":
        if self.role is not None:
            raise MultipartyEndpointHasNoDual(str(self))
        return SessionRef(self.name, not self.dual)

    def channel(self) -> str:
        return self.name


class MultipartyEndpointHasNoDual(Exception):
    pass


@dataclass(frozen=True)
class Chan:
    """A shared channel used as a first-class value."""

    name: str

    def __str__(self) -> str:
        return self.name


# value universe: bool | int | Chan | SessionRef (an endpoint)
Value = object


# ------------------------------------------------------------ expressions


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Name:
    ident: str
    dual: bool = False  # ~x: the dual of whatever endpoint x holds


@dataclass(frozen=True)
class Call:
    op: str
    args: tuple["Expr", ...]


Expr = Lit | Name | Call


# -------------------------------------------------------------- processes


class Process:
    """Base class; concrete variants below."""

    __slots__ = ()


@dataclass(frozen=True)
class Inact(Process):
    pass


@dataclass(frozen=True)
class Request(Process):
    chan: str
    var: str
    body: Process


@dataclass(frozen=True)
class Accept(Process):
    chan: str
    var: str
    body: Process


@dataclass(frozen=True)
class Send(Process):
    subj: SessionRef
    payload: Expr
    body: Process


@dataclass(frozen=True)
class Receive(Process):
    subj: SessionRef
    var: str
    body: Process


@dataclass(frozen=True)
class Select(Process):
    subj: SessionRef
    label: str
    body: Process


@dataclass(frozen=True)
class Branch(Process):
    subj: SessionRef
    branches: tuple[tuple[str, Process], ...]

    def __post_init__(self) -> None:
        labels = [l for l, _ in self.branches]
        if len(labels) != len(set(labels)):
            raise SubstitutionError("duplicate label in branch")


@dataclass(frozen=True)
class If(Process):
    cond: Expr
    then: Process
    orelse: Process


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Restrict(Process):
    chan: str
    body: Process


@dataclass(frozen=True)
class RecVar(Process):
    name: str


@dataclass(frozen=True)
class Rec(Process):
    name: str
    body: Process


@dataclass(frozen=True)
class Commit(Process):
    subj: SessionRef
    body: Process


# multiparty ----------------------------------------------------------


@dataclass(frozen=True)
class MRequest(Process):
    chan: str
    arity: int
    var: str
    body: Process


@dataclass(frozen=True)
class MAccept(Process):
    chan: str
    part: int
    var: str
    body: Process


@dataclass(frozen=True)
class MSend(Process):
    subj: SessionRef
    partner: int
    payload: Expr
    body: Process


@dataclass(frozen=True)
class MReceive(Process):
    subj: SessionRef
    partner: int
    var: str
    body: Process


@dataclass(frozen=True)
class MSelect(Process):
    subj: SessionRef
    partner: int
    label: str
    body: Process


@dataclass(frozen=True)
class MBranch(Process):
    subj: SessionRef
    partner: int
    branches: tuple[tuple[str, Process], ...]

    def __post_init__(self) -> None:
        labels = [l for l, _ in self.branches]
        if len(labels) != len(set(labels)):
            raise SubstitutionError("duplicate label in branch")


ZERO = Inact()

MULTIPARTY_NODES = (MRequest, MAccept, MSend, MReceive, MSelect, MBranch)


def uses_multiparty(p: Process) -> bool:
    return any(isinstance(q, MULTIPARTY_NODES) for q in walk(p))


def uses_commit(p: Process) -> bool:
    return any(isinstance(q, Commit) for q in walk(p))


def walk(p: Process):
    """Pre-order traversal of all subprocesses."""
    yield p
    match p:
        case Request(_, _, b) | Accept(_, _, b) | Send(_, _, b) | Receive(_, _, b) \
            | Select(_, _, b) | Restrict(_, b) | Rec(_, b) | Commit(_, b) \
            | MRequest(_, _, _, b) | MAccept(_, _, _, b):
            yield from walk(b)
        case MSend(_, _, _, b) | MReceive(_, _, _, b) | MSelect(_, _, _, b):
            yield from walk(b)
        case Branch(_, bs) | MBranch(_, _, bs):
            for _, q in bs:
                yield from walk(q)
        case If(_, t, e):
            yield from walk(t)
            yield from walk(e)
        case Par(l, r):
            yield from walk(l)
            yield from walk(r)
        case _:
            pass


# -------------------------------------------------------------- free names


@dataclass
class FreeNames:
    variables: set[str] = field(default_factory=set)
    shared: set[str] = field(default_factory=set)
    sessions: set[str] = field(default_factory=set)
    procvars: set[str] = field(default_factory=set)


def expr_names(e: Expr):
    match e:
        case Name(n, _):
            yield n
        case Lit(v):
            if isinstance(v, SessionRef) or isinstance(v, Chan):
                yield v.name
        case Call(_, args):
            for a in args:
                yield from expr_names(a)


def free_names(p: Process) -> FreeNames:
    """Classify free occurrences: variables, shared channels, session channels,
    process variables.  A free name in subject position counts as a session
    channel (an endpoint literal); a free name in `req`/`acc` channel position
    counts as a shared channel; free names inside expressions count as
    variables unless they denote endpoint or channel literals.
    """
    out = FreeNames()

    def expr(e: Expr, bound: frozenset[str]) -> None:
        match e:
            case Name(n, _):
                if n not in bound:
                    out.variables.add(n)
            case Lit(v):
                if isinstance(v, SessionRef):
                    if v.name not in bound:
                        out.sessions.add(v.name)
                elif isinstance(v, Chan):
                    if v.name not in bound:
                        out.shared.add(v.name)
            case Call(_, args):
                for a in args:
                    expr(a, bound)

    def subj(r: SessionRef, bound: frozenset[str]) -> None:
        if r.name not in bound:
            out.sessions.add(r.name)

    def chanpos(c: str, bound: frozenset[str]) -> None:
        if c not in bound:
            out.shared.add(c)

    def go(q: Process, bound: frozenset[str], pbound: frozenset[str]) -> None:
        match q:
            case Inact():
                pass
            case Request(c, x, b) | Accept(c, x, b):
                chanpos(c, bound)
                go(b, bound | {x}, pbound)
            case MRequest(c, _, x, b) | MAccept(c, _, x, b):
                chanpos(c, bound)
                go(b, bound | {x}, pbound)
            case Send(k, e, b) | MSend(k, _, e, b):
                subj(k, bound)
                expr(e, bound)
                go(b, bound, pbound)
            case Receive(k, x, b) | MReceive(k, _, x, b):
                subj(k, bound)
                go(b, bound | {x}, pbound)
            case Select(k, _, b) | MSelect(k, _, _, b) | Commit(k, b):
                subj(k, bound)
                go(b, bound, pbound)
            case Branch(k, bs) | MBranch(k, _, bs):
                subj(k, bound)
                for _, bb in bs:
                    go(bb, bound, pbound)
            case If(e, t, f):
                expr(e, bound)
                go(t, bound, pbound)
                go(f, bound, pbound)
            case Par(l, r):
                go(l, bound, pbound)
                go(r, bound, pbound)
            case Restrict(c, b):
                go(b, bound | {c}, pbound)
            case Rec(x, b):
                go(b, bound, pbound | {x})
            case RecVar(x):
                if x not in pbound:
                    out.procvars.add(x)
            case _:
                raise SubstitutionError(f"free_names: unknown node {q!r}")

    go(p, frozenset(), frozenset())
    return out


def all_names(p: Process) -> set[str]:
    """Every identifier appearing anywhere (bound or free); for freshness."""
    out: set[str] = set()
    for q in walk(p):
        match q:
            case Request(c, x, _) | Accept(c, x, _):
                out |= {c, x}
            case MRequest(c, _, x, _) | MAccept(c, _, x, _):
                out |= {c, x}
            case Send(k, e, _) | MSend(k, _, e, _):
                out.add(k.name)
                out |= set(expr_names(e))
            case Receive(k, x, _) | MReceive(k, _, x, _):
                out |= {k.name, x}
            case Select(k, _, _) | MSelect(k, _, _, _) | Commit(k, _):
                out.add(k.name)
            case Branch(k, _) | MBranch(k, _, _):
                out.add(k.name)
            case If(e, _, _):
                out |= set(expr_names(e))
            case Restrict(c, _):
                out.add(c)
            case Rec(x, _):
                out.add(x)
            case RecVar(x):
                out.add(x)
            case _:
                pass
    return out


def fresh_name(base: str, avoid: set[str]) -> str:
    if base not in avoid:
        return base
    i = 1
    while f"{base}_{i}" in avoid:
        i += 1
    return f"{base}_{i}"


# ------------------------------------------------------------ substitution


def _subst_ref(r: SessionRef, var: str, val: Value) -> SessionRef:
    if r.name != var:
        return r
    if not isinstance(val, SessionRef):
        raise SubstitutionError(
            f"substituting non-endpoint {val!r} into subject position {r}"
        )
    if r.role is not None:
        raise SubstitutionError(f"variable subject {r} already carries a role")
    if r.dual:
        return val.dualized()
    return val


def _subst_expr(e: Expr, var: str, val: Value) -> Expr:
    match e:
        case Name(n, d):
            if n != var:
                return e
            if d:
                if not isinstance(val, SessionRef):
                    raise SubstitutionError(f"~{n} substituted with non-endpoint")
                return Lit(val.dualized())
            return Lit(val)
        case Lit(_):
            return e
        case Call(op, args):
            return Call(op, tuple(_subst_expr(a, var, val) for a in args))
    raise SubstitutionError(f"unknown expression {e!r}")


def subst_value(p: Process, var: str, val: Value) -> Process:
    """Capture-avoiding substitution of a closed value for a free variable.

    Values contain no variables, so only binders shadowing `var` itself (or
    colliding with a substituted endpoint/channel name) need care; colliding
    binders are renamed.
    """
    val_names: set[str] = set()
    if isinstance(val, (SessionRef, Chan)):
        val_names.add(val.name)

    def rec(q: Process) -> Process:
        match q:
            case Inact() | RecVar(_):
                return q
            case Request(c, x, b) | Accept(c, x, b):
                cls = type(q)
                c2 = _chan_pos(c)
                if x == var:
                    return cls(c2, x, b)
                x2, b = _avoid(x, b)
                return cls(c2, x2, rec(b))
            case MRequest(c, n, x, b):
                c2 = _chan_pos(c)
                if x == var:
                    return MRequest(c2, n, x, b)
                x2, b = _avoid(x, b)
                return MRequest(c2, n, x2, rec(b))
            case MAccept(c, r0, x, b):
                c2 = _chan_pos(c)
                if x == var:
                    return MAccept(c2, r0, x, b)
                x2, b = _avoid(x, b)
                return MAccept(c2, r0, x2, rec(b))
            case Send(k, e, b):
                return Send(_subst_ref(k, var, val), _subst_expr(e, var, val), rec(b))
            case MSend(k, pr, e, b):
                return MSend(
                    _subst_ref(k, var, val), pr, _subst_expr(e, var, val), rec(b)
                )
            case Receive(k, x, b):
                k2 = _subst_ref(k, var, val)
                if x == var:
                    return Receive(k2, x, b)
                x2, b = _avoid(x, b)
                return Receive(k2, x2, rec(b))
            case MReceive(k, pr, x, b):
                k2 = _subst_ref(k, var, val)
                if x == var:
                    return MReceive(k2, pr, x, b)
                x2, b = _avoid(x, b)
                return MReceive(k2, pr, x2, rec(b))
            case Select(k, l, b):
                return Select(_subst_ref(k, var, val), l, rec(b))
            case MSelect(k, pr, l, b):
                return MSelect(_subst_ref(k, var, val), pr, l, rec(b))
            case Branch(k, bs):
                return Branch(
                    _subst_ref(k, var, val), tuple((l, rec(bb)) for l, bb in bs)
                )
            case MBranch(k, pr, bs):
                return MBranch(
                    _subst_ref(k, var, val), pr, tuple((l, rec(bb)) for l, bb in bs)
                )
            case Commit(k, b):
                return Commit(_subst_ref(k, var, val), rec(b))
            case If(e, t, f):
                return If(_subst_expr(e, var, val), rec(t), rec(f))
            case Par(l, r):
                return Par(rec(l), rec(r))
            case Restrict(c, b):
                if c == var:
                    return q
                c2, b = _avoid(c, b)
                return Restrict(c2, rec(b))
            case Rec(x, b):
                return Rec(x, rec(b))
        raise SubstitutionError(f"subst_value: unknown node {q!r}")

    def _chan_pos(c: str) -> str:
        if c != var:
            return c
        if isinstance(val, Chan):
            return val.name
        raise SubstitutionError(f"channel position {c} substituted with {val!r}")

    def _avoid(bname: str, body: Process) -> tuple[str, Process]:
        if bname in val_names:
            fresh = fresh_name(bname, val_names | all_names(body) | {var})
            return fresh, rename_free(body, bname, fresh)
        return bname, body

    return rec(p)


def rename_free(p: Process, old: str, new: str) -> Process:
    """Rename every free occurrence of identifier `old` (any kind) to `new`.

    Used for alpha-renaming; `new` must be fresh for `p`.
    """

    def ren_ref(r: SessionRef) -> SessionRef:
        return SessionRef(new, r.dual, r.role) if r.name == old else r

    def ren_expr(e: Expr) -> Expr:
        match e:
            case Name(n, d):
                return Name(new, d) if n == old else e
            case Lit(v):
                if isinstance(v, SessionRef) and v.name == old:
                    return Lit(SessionRef(new, v.dual, v.role))
                if isinstance(v, Chan) and v.name == old:
                    return Lit(Chan(new))
                return e
            case Call(op, args):
                return Call(op, tuple(ren_expr(a) for a in args))
        raise SubstitutionError(f"unknown expression {e!r}")

    def go(q: Process) -> Process:
        match q:
            case Inact():
                return q
            case RecVar(x):
                return RecVar(new) if x == old else q
            case Request(c, x, b) | Accept(c, x, b):
                cls = type(q)
                c2 = new if c == old else c
                return cls(c2, x, b) if x == old else cls(c2, x, go(b))
            case MRequest(c, n, x, b):
                c2 = new if c == old else c
                return MRequest(c2, n, x, b) if x == old else MRequest(c2, n, x, go(b))
            case MAccept(c, r0, x, b):
                c2 = new if c == old else c
                return (
                    MAccept(c2, r0, x, b) if x == old else MAccept(c2, r0, x, go(b))
                )
            case Send(k, e, b):
                return Send(ren_ref(k), ren_expr(e), go(b))
            case MSend(k, pr, e, b):
                return MSend(ren_ref(k), pr, ren_expr(e), go(b))
            case Receive(k, x, b):
                return (
                    Receive(ren_ref(k), x, b)
                    if x == old
                    else Receive(ren_ref(k), x, go(b))
                )
            case MReceive(k, pr, x, b):
                return (
                    MReceive(ren_ref(k), pr, x, b)
                    if x == old
                    else MReceive(ren_ref(k), pr, x, go(b))
                )
            case Select(k, l, b):
                return Select(ren_ref(k), l, go(b))
            case MSelect(k, pr, l, b):
                return MSelect(ren_ref(k), pr, l, go(b))
            case Branch(k, bs):
                return Branch(ren_ref(k), tuple((l, go(bb)) for l, bb in bs))
            case MBranch(k, pr, bs):
                return MBranch(ren_ref(k), pr, tuple((l, go(bb)) for l, bb in bs))
            case Commit(k, b):
                return Commit(ren_ref(k), go(b))
            case If(e, t, f):
                return If(ren_expr(e), go(t), go(f))
            case Par(l, r):
                return Par(go(l), go(r))
            case Restrict(c, b):
                return Restrict(c, b) if c == old else Restrict(c, go(b))
            case Rec(x, b):
                return Rec(x, b) if x == old else Rec(x, go(b))
        raise SubstitutionError(f"rename_free: unknown node {q!r}")

    return go(p)


def subst_procvar(p: Process, pv: str, rep: Process) -> Process:
    """Capture-avoiding substitution of a process for a process variable
    (recursion unfolding)."""
    rep_free = free_names(rep)
    danger = rep_free.variables | rep_free.shared | rep_free.sessions

    def go(q: Process) -> Process:
        match q:
            case RecVar(x):
                return rep if x == pv else q
            case Inact():
                return q
            case Rec(x, b):
                return q if x == pv else Rec(x, go(b))
            case Request(c, x, b) | Accept(c, x, b):
                cls = type(q)
                x2, b2 = avoid(x, b)
                return cls(c, x2, go(b2))
            case MRequest(c, n, x, b):
                x2, b2 = avoid(x, b)
                return MRequest(c, n, x2, go(b2))
            case MAccept(c, r0, x, b):
                x2, b2 = avoid(x, b)
                return MAccept(c, r0, x2, go(b2))
            case Send(k, e, b):
                return Send(k, e, go(b))
            case MSend(k, pr, e, b):
                return MSend(k, pr, e, go(b))
            case Receive(k, x, b):
                x2, b2 = avoid(x, b)
                return Receive(k, x2, go(b2))
            case MReceive(k, pr, x, b):
                x2, b2 = avoid(x, b)
                return MReceive(k, pr, x2, go(b2))
            case Select(k, l, b):
                return Select(k, l, go(b))
            case MSelect(k, pr, l, b):
                return MSelect(k, pr, l, go(b))
            case Branch(k, bs):
                return Branch(k, tuple((l, go(bb)) for l, bb in bs))
            case MBranch(k, pr, bs):
                return MBranch(k, pr, tuple((l, go(bb)) for l, bb in bs))
            case Commit(k, b):
                return Commit(k, go(b))
            case If(e, t, f):
                return If(e, go(t), go(f))
            case Par(l, r):
                return Par(go(l), go(r))
            case Restrict(c, b):
                c2, b2 = avoid(c, b)
                return Restrict(c2, go(b2))
        raise SubstitutionError(f"subst_procvar: unknown node {q!r}")

    def avoid(bname: str, body: Process) -> tuple[str, Process]:
        if bname in danger and any(isinstance(s, RecVar) and s.name == pv for s in walk(body)):
            fresh = fresh_name(bname, danger | all_names(body))
            return fresh, rename_free(body, bname, fresh)
        return bname, body

    return go(p)


def unfold_rec(p: Rec) -> Process:
    """One unfolding: rec X.P becomes P{rec X.P / X}."""
    return subst_procvar(p.body, p.name, p)


def whnf(p: Process, budget: int = 16) -> Process:
    """Unfold top-level recursion until a non-rec constructor surfaces."""
    while isinstance(p, Rec) and budget > 0:
        q = unfold_rec(p)
        if q == p:
            return p  # rec X.X and friends: stuck
        p = q
        budget -= 1
    return p
