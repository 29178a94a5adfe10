"""Session type synthesis for the binary calculus.

The declarative rules are run in synthesis mode: every subterm reports the
minimal session typing (delta) forced by its endpoint usage, and composite
rules merge or join child typings.  This keeps parallel composition
deterministic (disjointness is checked at merge time instead of guessing a
split) and makes the simple-process check a set of per-rule cardinality
guards on the same traversal.

Recursion is handled with demand variables: a process variable occurrence
contributes an open frame, prefixes consumed above it record per-endpoint
demands as fresh unification variables, and the binder closes each demand
into a rec type (or rejects when the body typing cannot satisfy its own
assumption).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .primitives import PrimitiveTable, UnknownPrimitive
from .syntax import (
    Accept,
    Branch,
    Call,
    Chan,
    Commit,
    Expr,
    If,
    Inact,
    Lit,
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
    free_names,
    uses_multiparty,
)
from .syntax import (
    MAccept,
    MBranch,
    MReceive,
    MRequest,
    MSelect,
    MSend,
)
from .types import (
    BOOL,
    COMMIT,
    END,
    INT,
    BraT,
    ChanS,
    CommitT,
    EndT,
    InT,
    OutT,
    RecT,
    SelT,
    SessionType,
    Sort,
    SortVar,
    TUVar,
    TVar,
    ThrowT,
    CatchT,
    TypeStore,
    TypeError_,
    dual_type,
    merge_types,
    type_equal,
    type_str,
    unfold_type,
)

# session typings are keyed by (channel, dual-endpoint?)
Key = tuple[str, bool]


# ------------------------------------------------------------ diagnostics


class TypingError(Exception):
    """Base for all checker rejections; carries the rule that fired."""

    def __init__(self, rule: str, message: str, span=None) -> None:
        super().__init__(message)
        self.rule = rule
        self.span = span

    def record(self) -> dict:
        return {"ruleName": self.rule, "span": self.span, "message": str(self)}


class SortMismatch(TypingError):
    pass


class UnknownIdentifier(TypingError):
    pass


class NonDisjointParallel(TypingError):
    pass


class BranchTypingMismatch(TypingError):
    pass


class UnbalancedRestriction(TypingError):
    pass


class RecursionTypingMismatch(TypingError):
    pass


class DelegationUsed(TypingError):
    pass


class SessionUsedAfterCommit(TypingError):
    pass


class NotSimple(TypingError):
    pass


def _key_str(key: Key) -> str:
    ch, dual = key
    return f"~{ch}" if dual else ch


def _parse_key(s: str) -> Key:
    return (s[1:], True) if s.startswith("~") else (s, False)


# --------------------------------------------------------- delta carrier


@dataclass
class RecFrame:
    """Open assumption for one rec binder.

    `demands` collects the endpoint types the loop body consumes before
    reaching the recursion variable; the binder resolves them on close.
    """

    var: str
    depth: int
    demands: dict[Key, TUVar] = field(default_factory=dict)
    uses: int = 0


class DeltaMap:
    """A synthesized session typing plus any still-open rec frames."""

    __slots__ = ("entries", "frames")

    def __init__(self, entries=None, frames=()) -> None:
        self.entries: dict[Key, SessionType] = dict(entries or {})
        self.frames: list[RecFrame] = list(frames)

    def merge_frames(self, other: "DeltaMap") -> None:
        have = {id(f) for f in self.frames}
        for f in other.frames:
            if id(f) not in have:
                self.frames.append(f)
        self.frames.sort(key=lambda f: f.depth)


def _occurs(uid: int, ty: SessionType) -> bool:
    match ty:
        case TUVar(u):
            return u == uid
        case OutT(s, c) | InT(s, c):
            if isinstance(s, ChanS) and _occurs(uid, s.ty):
                return True
            return _occurs(uid, c)
        case ThrowT(b, c) | CatchT(b, c):
            return _occurs(uid, b) or _occurs(uid, c)
        case SelT(bs) | BraT(bs):
            return any(_occurs(uid, t) for _, t in bs)
        case RecT(_, b):
            return _occurs(uid, b)
        case _:
            return False


def _replace_uvar(ty: SessionType, uid: int, rep: SessionType) -> SessionType:
    match ty:
        case TUVar(u):
            return rep if u == uid else ty
        case OutT(s, c):
            if isinstance(s, ChanS):
                s = ChanS(_replace_uvar(s.ty, uid, rep))
            return OutT(s, _replace_uvar(c, uid, rep))
        case InT(s, c):
            if isinstance(s, ChanS):
                s = ChanS(_replace_uvar(s.ty, uid, rep))
            return InT(s, _replace_uvar(c, uid, rep))
        case ThrowT(b, c):
            return ThrowT(_replace_uvar(b, uid, rep), _replace_uvar(c, uid, rep))
        case CatchT(b, c):
            return CatchT(_replace_uvar(b, uid, rep), _replace_uvar(c, uid, rep))
        case SelT(bs, fx):
            return SelT(tuple((l, _replace_uvar(t, uid, rep)) for l, t in bs), fx)
        case BraT(bs, fx):
            return BraT(tuple((l, _replace_uvar(t, uid, rep)) for l, t in bs), fx)
        case RecT(n, b):
            return RecT(n, _replace_uvar(b, uid, rep))
        case _:
            return ty


# ---------------------------------------------------------- sort helpers


def _unify_sorts(a: Sort, b: Sort, store: TypeStore) -> bool:
    # piggyback on type_equal's sort unification by wrapping in a prefix
    return type_equal(InT(a, END), InT(b, END), store, unify=True)


def typecheck_expr(
    gamma: dict[str, Sort],
    e: Expr,
    prims: PrimitiveTable | None = None,
    store: TypeStore | None = None,
) -> Sort:
    """Sort of a data expression under `gamma`; registered primitives only."""
    prims = prims or PrimitiveTable()
    store = store or TypeStore()

    def go(x: Expr) -> Sort:
        match x:
            case Lit(v):
                if type(v) is bool:
                    return BOOL
                if type(v) is int:
                    return INT
                if isinstance(v, Chan):
                    return ChanS(store.fresh_tvar())
                raise SortMismatch(
                    "Expr", f"endpoint {v} is not a data value"
                )
            case Name(n, dual):
                if dual:
                    raise SortMismatch("Expr", f"~{n} is an endpoint, not a value")
                if n not in gamma:
                    raise UnknownIdentifier("Id", f"unbound variable {n!r}")
                return store.resolve_sort(gamma[n])
            case Call(fn, args):
                try:
                    pd = prims.lookup(fn)
                except UnknownPrimitive:
                    raise UnknownIdentifier(
                        "Expr", f"unknown primitive {fn!r}"
                    ) from None
                if len(args) != pd.arity:
                    raise SortMismatch(
                        "Expr",
                        f"{fn} expects {pd.arity} argument(s), got {len(args)}",
                    )
                for want, arg in zip(pd.arg_sorts, args):
                    got = go(arg)
                    if not _unify_sorts(got, want, store):
                        raise SortMismatch(
                            "Expr",
                            f"{fn}: argument has sort {got}, expected {want}",
                        )
                return pd.ret_sort
        raise SortMismatch("Expr", f"cannot type expression {x!r}")

    return store.deep_sort(go(e))


# ----------------------------------------------------------- the checker


class _Checker:
    def __init__(
        self,
        root: Process,
        *,
        theta: dict[str, dict[Key, SessionType]],
        gamma: dict[str, Sort],
        prims: PrimitiveTable,
        simple: bool,
        commit_ok: bool,
        store: TypeStore,
    ) -> None:
        self.store = store
        self.prims = prims
        self.simple = simple
        self.commit_ok = commit_ok
        self.gamma = gamma
        self.theta = theta
        self.rho: dict[str, RecFrame] = {}
        self.session_vars: set[str] = set()
        self._depth = 0
        self._root_sessions = set(free_names(root).sessions)

    # -- delta plumbing ------------------------------------------------

    def _innermost(self, dm: DeltaMap) -> RecFrame | None:
        return dm.frames[-1] if dm.frames else None

    def take_subject(self, dm: DeltaMap, key: Key) -> SessionType:
        """Consume an endpoint entry; loop bodies record a demand instead."""
        if key in dm.entries:
            return dm.entries.pop(key)
        fr = self._innermost(dm)
        if fr is not None:
            return fr.demands.setdefault(key, self.store.fresh_tvar())
        return END

    def frame_guard(self, dm: DeltaMap, name: str, rule: str) -> None:
        """Reject demands on a binder-owned name.

        A pending demand means a recursion body consumed the name below its
        own binder, which the rec rule can never satisfy.
        """
        for fr in dm.frames:
            if any(k[0] == name for k in fr.demands):
                raise RecursionTypingMismatch(
                    rule,
                    f"session variable {name!r} is consumed across the "
                    f"recursion on {fr.var!r}",
                )

    def take_bound(self, dm: DeltaMap, name: str, rule: str) -> SessionType:
        """Consume the entry of a request/accept-bound endpoint variable."""
        self.frame_guard(dm, name, rule)
        if (name, True) in dm.entries:
            raise SortMismatch(
                rule, f"~{name} is not an endpoint: {name!r} is bound here"
            )
        return dm.entries.pop((name, False), END)

    def join_type(self, a: SessionType, b: SessionType, rule: str) -> SessionType:
        """Least common typing of one endpoint across two alternatives.

        Internal-choice types join by label union (a selection may always be
        read at a wider type); everything else must agree up to unfolding.
        """
        st = self.store
        ra, rb = st.resolve(a), st.resolve(b)
        if isinstance(ra, TUVar) or isinstance(rb, TUVar):
            if type_equal(ra, rb, st, unify=True):
                return st.resolve(ra)
            raise BranchTypingMismatch(
                rule, f"branches disagree: {type_str(st.deep(a))} vs "
                f"{type_str(st.deep(b))}"
            )
        da, db = st.deep(ra), st.deep(rb)
        ua, ub = unfold_type(da), unfold_type(db)
        if isinstance(ua, SelT) and isinstance(ub, SelT) and ua.flex and ub.flex:
            left, right = dict(ua.branches), dict(ub.branches)
            out = []
            for lab, t in ua.branches:
                out.append((lab, self.join_type(t, right[lab], rule) if lab in right else t))
            for lab, t in ub.branches:
                if lab not in left:
                    out.append((lab, t))
            return SelT(tuple(out), True)
        if type_equal(da, db, st, unify=True):
            return da
        raise BranchTypingMismatch(
            rule, f"branches disagree: {type_str(da)} vs {type_str(db)}"
        )

    def join_deltas(self, dms: list[DeltaMap], rule: str) -> DeltaMap:
        keys: list[Key] = []
        for dm in dms:
            for k in dm.entries:
                if k not in keys:
                    keys.append(k)
        out = DeltaMap()
        for dm in dms:
            out.merge_frames(dm)
        for k in keys:
            vals = [self.take_subject(dm, k) for dm in dms]
            acc = vals[0]
            for v in vals[1:]:
                acc = self.join_type(acc, v, rule)
            out.entries[k] = acc
        return out

    def merge_parallel(self, d1: DeltaMap, d2: DeltaMap) -> DeltaMap:
        clash = set(d1.entries) & set(d2.entries)
        if clash:
            names = ", ".join(sorted(_key_str(k) for k in clash))
            raise NonDisjointParallel(
                "Conc", f"endpoint(s) {names} used in both parallel components"
            )
        d1.entries.update(d2.entries)
        d1.merge_frames(d2)
        return d1

    # -- guards ----------------------------------------------------------

    def guard(self, rule: str, dm: DeltaMap, subject: Key | None = None) -> None:
        if not self.simple:
            return
        keys = set(dm.entries)
        if rule in ("Req", "Acc"):
            if keys:
                raise NotSimple(
                    rule,
                    f"continuation of the {rule.lower()} still uses "
                    f"{', '.join(sorted(_key_str(k) for k in keys))}",
                )
        elif subject is not None:
            if keys != {subject}:
                extra = keys - {subject}
                names = ", ".join(sorted(_key_str(k) for k in extra)) or "none"
                raise NotSimple(
                    rule,
                    f"prefix on {_key_str(subject)} carries extra session "
                    f"context ({names})",
                )
        elif len(keys) > 1:
            raise NotSimple(
                rule,
                f"{rule} composes more than one open session "
                f"({', '.join(sorted(_key_str(k) for k in keys))})",
            )

    # -- gamma helpers ----------------------------------------------------

    def chan_carried(self, name: str, rule: str) -> SessionType:
        """Accept-side type carried by a shared channel, extending gamma."""
        if name in self.session_vars:
            raise SortMismatch(rule, f"{name!r} is a session endpoint, not a shared channel")
        s = self.gamma.get(name)
        if s is None:
            u = self.store.fresh_tvar()
            self.gamma[name] = ChanS(u)
            return u
        s = self.store.resolve_sort(s)
        if isinstance(s, SortVar):
            u = self.store.fresh_tvar()
            self.store.sorts[s.uid] = ChanS(u)
            return u
        if isinstance(s, ChanS):
            return s.ty
        raise SortMismatch(rule, f"{name!r} has sort {s}, not a shared channel")

    def _with_binding(self, name: str, sort: Sort):
        prev = self.gamma.get(name, _MISSING)
        prev_sv = name in self.session_vars
        self.gamma[name] = sort
        self.session_vars.discard(name)
        return prev, prev_sv

    def _restore(self, name: str, saved) -> None:
        prev, prev_sv = saved
        if prev is _MISSING:
            self.gamma.pop(name, None)
        else:
            self.gamma[name] = prev
        if prev_sv:
            self.session_vars.add(name)

    # -- payload classification -------------------------------------------

    def _endpoint_payload(self, e: Expr) -> Key | None:
        """Key of a delegated endpoint, or None for a data payload."""
        match e:
            case Lit(SessionRef(ch, dual, None)):
                return (ch, dual)
            case Name(n, dual):
                if dual or n in self.session_vars:
                    return (n, dual)
                if n in self.gamma:
                    return None
                return (n, dual)
        return None

    # -- main synthesis -----------------------------------------------------

    def ref_key(self, r: SessionRef, rule: str) -> Key:
        if r.role is not None:
            raise TypingError(
                rule, "multiparty endpoints are outside the binary type system"
            )
        return (r.name, r.dual)

    def go(self, p: Process) -> DeltaMap:
        match p:
            case Inact():
                return DeltaMap()

            case Request(a, x, body):
                carried = self.chan_carried(a, "Req")
                saved = self._with_binding(x, _SESSION_SORT)
                self.session_vars.add(x)
                try:
                    dm = self.go(body)
                finally:
                    self._restore(x, saved)
                ax = self.take_bound(dm, x, "Req")
                deep = self.store.deep(ax)
                try:
                    want = dual_type(deep)
                except TypeError_:
                    raise RecursionTypingMismatch(
                        "Req", f"cannot determine the session type of {x!r}"
                    ) from None
                if merge_types(carried, want, self.store) is None:
                    raise SortMismatch(
                        "Req",
                        f"shared channel {a!r} carries "
                        f"{type_str(self.store.deep(carried))}, requester uses "
                        f"{type_str(deep)}",
                    )
                self.guard("Req", dm)
                return dm

            case Accept(a, x, body):
                carried = self.chan_carried(a, "Acc")
                saved = self._with_binding(x, _SESSION_SORT)
                self.session_vars.add(x)
                try:
                    dm = self.go(body)
                finally:
                    self._restore(x, saved)
                ax = self.take_bound(dm, x, "Acc")
                if merge_types(carried, ax, self.store) is None:
                    raise SortMismatch(
                        "Acc",
                        f"shared channel {a!r} carries "
                        f"{type_str(self.store.deep(carried))}, accepter uses "
                        f"{type_str(self.store.deep(ax))}",
                    )
                self.guard("Acc", dm)
                return dm

            case Send(subj, payload, body):
                k = self.ref_key(subj, "Send")
                deleg = self._endpoint_payload(payload)
                if deleg is not None:
                    if self.simple:
                        raise DelegationUsed(
                            "Thr",
                            f"payload {_key_str(deleg)} is an endpoint; "
                            "delegation is not allowed here",
                        )
                    dm = self.go(body)
                    beta = self.take_subject(dm, k)
                    carried = self.store.fresh_tvar()
                    if deleg in dm.entries:
                        raise NonDisjointParallel(
                            "Thr",
                            f"endpoint {_key_str(deleg)} used after being delegated",
                        )
                    dm.entries[k] = ThrowT(carried, beta)
                    dm.entries[deleg] = carried
                    return dm
                dm = self.go(body)
                beta = self.take_subject(dm, k)
                s = typecheck_expr(self.gamma, payload, self.prims, self.store)
                dm.entries[k] = OutT(s, beta)
                self.guard("Send", dm, k)
                return dm

            case Receive(subj, x, body):
                k = self.ref_key(subj, "Rcv")
                sv = self.store.fresh_svar()
                saved = self._with_binding(x, sv)
                try:
                    dm = self.go(body)
                finally:
                    self._restore(x, saved)
                if (x, False) in dm.entries or (x, True) in dm.entries:
                    # continuation used the bound name as a session: catch
                    if self.simple:
                        raise DelegationUsed(
                            "Cat",
                            f"received name {x!r} is used as an endpoint; "
                            "delegation is not allowed here",
                        )
                    if not isinstance(self.store.resolve_sort(sv), SortVar):
                        raise SortMismatch(
                            "Cat", f"{x!r} used both as a value and as an endpoint"
                        )
                    alpha = self.take_bound(dm, x, "Cat")
                    beta = self.take_subject(dm, k)
                    dm.entries[k] = CatchT(alpha, beta)
                    return dm
                self.frame_guard(dm, x, "Rcv")
                beta = self.take_subject(dm, k)
                dm.entries[k] = InT(self.store.resolve_sort(sv), beta)
                self.guard("Rcv", dm, k)
                return dm

            case Select(subj, label, body):
                k = self.ref_key(subj, "Sel")
                dm = self.go(body)
                beta = self.take_subject(dm, k)
                dm.entries[k] = SelT(((label, beta),), True)
                self.guard("Sel", dm, k)
                return dm

            case Branch(subj, branches):
                k = self.ref_key(subj, "Br")
                dms = [self.go(b) for _, b in branches]
                alts = [self.take_subject(dm, k) for dm in dms]
                dm = self.join_deltas(dms, "Br")
                dm.entries[k] = BraT(
                    tuple((lab, t) for (lab, _), t in zip(branches, alts))
                )
                self.guard("Br", dm, k)
                return dm

            case If(cond, then, orelse):
                s = typecheck_expr(self.gamma, cond, self.prims, self.store)
                if not _unify_sorts(s, BOOL, self.store):
                    raise SortMismatch("If", f"condition has sort {s}, expected bool")
                dm = self.join_deltas([self.go(then), self.go(orelse)], "If")
                self.guard("If", dm)
                return dm

            case Par(left, right):
                dm = self.merge_parallel(self.go(left), self.go(right))
                self.guard("Conc", dm)
                return dm

            case Restrict(c, body):
                fn = free_names(body)
                as_session = c in fn.sessions
                as_shared = c in fn.shared
                if as_session and as_shared:
                    raise SortMismatch(
                        "Res",
                        f"{c!r} used both as a shared channel and as an endpoint",
                    )
                if as_shared:
                    saved = self._with_binding(c, ChanS(self.store.fresh_tvar()))
                    try:
                        dm = self.go(body)
                    finally:
                        self._restore(c, saved)
                    self.guard("Res", dm)
                    return dm
                dm = self.go(body)
                if as_session:
                    self.frame_guard(dm, c, "Res")
                    alpha = dm.entries.pop((c, False), END)
                    beta = dm.entries.pop((c, True), END)
                    self.check_balance(c, alpha, beta)
                self.guard("Res", dm)
                return dm

            case Rec(name, body):
                self._depth += 1
                frame = RecFrame(name, self._depth)
                prev = self.rho.get(name)
                self.rho[name] = frame
                try:
                    dm = self.go(body)
                finally:
                    if prev is None:
                        self.rho.pop(name, None)
                    else:
                        self.rho[name] = prev
                dm.frames = [f for f in dm.frames if f is not frame]
                self.close_rec(frame, dm)
                self.guard("Rec", dm)
                return dm

            case RecVar(name):
                fr = self.rho.get(name)
                if fr is not None:
                    fr.uses += 1
                    return DeltaMap(frames=(fr,))
                if name in self.theta:
                    return DeltaMap(entries=dict(self.theta[name]))
                raise UnknownIdentifier("Var", f"unbound process variable {name!r}")

            case Commit(subj, body):
                if not self.commit_ok:
                    raise TypingError(
                        "Commit", "commit prefixes are only typed in respic mode"
                    )
                k = self.ref_key(subj, "Commit")
                dm = self.go(body)
                beta = self.take_subject(dm, k)
                if not type_equal(beta, END, self.store, unify=True):
                    raise SessionUsedAfterCommit(
                        "Commit",
                        f"session {_key_str(k)} still used after commit: "
                        f"{type_str(self.store.deep(beta))}",
                    )
                dm.entries[k] = COMMIT
                self.guard("Commit", dm, k)
                return dm

            case MRequest() | MAccept() | MSend() | MReceive() | MSelect() | MBranch():
                raise TypingError(
                    "Multi",
                    "multiparty constructs have no binary typing; "
                    "use the syntactic simplicity check",
                )

        raise TypingError("?", f"cannot type process node {type(p).__name__}")

    # -- restriction balance ------------------------------------------------

    def check_balance(self, chan: str, alpha: SessionType, beta: SessionType) -> None:
        st = self.store
        da, db = st.deep(alpha), st.deep(beta)
        try:
            target = dual_type(db)
        except TypeError_:
            raise UnbalancedRestriction(
                "Res", f"cannot determine the type of ~{chan}"
            ) from None
        if not self.fits(da, target):
            raise UnbalancedRestriction(
                "Res",
                f"endpoints of {chan!r} are not dual: {type_str(da)} vs "
                f"{type_str(db)}",
            )

    def fits(self, x: SessionType, y: SessionType) -> bool:
        """Duality check up to selection padding.

        `x` and `y` are both views of the same endpoint; a selection may
        offer fewer labels than its peer's branching accepts, and dually a
        branching may offer more than its peer selects.
        """
        st = self.store
        assumed: set[tuple[str, str]] = set()

        def go(a: SessionType, b: SessionType) -> bool:
            a, b = st.resolve(a), st.resolve(b)
            if isinstance(a, TUVar) or isinstance(b, TUVar):
                return type_equal(a, b, st, unify=True)
            key = (type_str(a), type_str(b))
            if key in assumed:
                return True
            assumed.add(key)
            a, b = unfold_type(a), unfold_type(b)
            match (a, b):
                case (SelT(ba), SelT(bb)):
                    da, db = dict(ba), dict(bb)
                    return set(da) <= set(db) and all(go(da[l], db[l]) for l in da)
                case (BraT(ba), BraT(bb)):
                    da, db = dict(ba), dict(bb)
                    return set(db) <= set(da) and all(go(da[l], db[l]) for l in db)
                case (OutT(s1, c1), OutT(s2, c2)) | (InT(s1, c1), InT(s2, c2)):
                    return _unify_sorts(s1, s2, st) and go(c1, c2)
                case (ThrowT(b1, c1), ThrowT(b2, c2)) | (CatchT(b1, c1), CatchT(b2, c2)):
                    return type_equal(b1, b2, st, unify=True) and go(c1, c2)
                case (EndT(), EndT()) | (CommitT(), CommitT()):
                    return True
                case (TVar(n1), TVar(n2)):
                    return n1 == n2
                case _:
                    return False

        return go(x, y)

    # -- recursion close ------------------------------------------------------

    def close_rec(self, frame: RecFrame, dm: DeltaMap) -> None:
        if frame.uses:
            extra = set(dm.entries) - set(frame.demands)
            if extra:
                names = ", ".join(sorted(_key_str(k) for k in extra))
                raise RecursionTypingMismatch(
                    "Rec",
                    f"rec {frame.var!r}: endpoint(s) {names} are used beside "
                    "the recursion variable but not threaded through it",
                )
        st = self.store
        for key, u in frame.demands.items():
            if key not in dm.entries:
                raise RecursionTypingMismatch(
                    "Rec",
                    f"rec {frame.var!r} consumes {_key_str(key)} which its "
                    "body does not provide",
                )
            cur = st.resolve(u)
            body_t = st.deep(dm.entries[key])
            if isinstance(cur, TUVar) and cur.uid == u.uid:
                if isinstance(body_t, TUVar) and body_t.uid == u.uid:
                    raise RecursionTypingMismatch(
                        "Rec", f"rec {frame.var!r} loops on {_key_str(key)} "
                        "without any action (non-contractive)"
                    )
                if _occurs(u.uid, body_t):
                    tname = f"t{u.uid}"
                    closed = RecT(tname, _replace_uvar(body_t, u.uid, TVar(tname)))
                    st.types[u.uid] = closed
                    dm.entries[key] = closed
                else:
                    st.types[u.uid] = body_t
            else:
                if not type_equal(cur, body_t, st, unify=True):
                    raise RecursionTypingMismatch(
                        "Rec",
                        f"rec {frame.var!r}: {_key_str(key)} recurs at "
                        f"{type_str(st.deep(cur))} but the body provides "
                        f"{type_str(body_t)}",
                    )


_MISSING = object()
# bound session variables get a throwaway sort; their typing lives in delta
_SESSION_SORT = ChanS(END)


# ------------------------------------------------------------- entry points


def typecheck_process(
    p: Process,
    *,
    theta: dict[str, dict[str, SessionType]] | None = None,
    gamma: dict[str, Sort] | None = None,
    prims: PrimitiveTable | None = None,
    simple: bool = False,
    commit_ok: bool = False,
    store: TypeStore | None = None,
) -> dict[str, SessionType]:
    """Synthesize the session typing of a binary-calculus process.

    Returns the typing as a dict keyed by endpoint spelling (`s`, `~s`).
    With `simple=True` the traversal additionally enforces the
    single-session cardinality discipline and rejects delegation.
    """
    if uses_multiparty(p):
        raise TypingError(
            "Multi",
            "multiparty constructs have no binary typing; "
            "use the syntactic simplicity check",
        )
    store = store or TypeStore()
    th = {
        x: {_parse_key(k): t for k, t in d.items()} for x, d in (theta or {}).items()
    }
    ck = _Checker(
        p,
        theta=th,
        gamma=dict(gamma or {}),
        prims=prims or PrimitiveTable(),
        simple=simple,
        commit_ok=commit_ok,
        store=store,
    )
    dm = ck.go(p)
    assert not dm.frames, "rec frame escaped its binder"
    return {_key_str(k): store.deep(t) for k, t in sorted(dm.entries.items())}


def check_simple(
    p: Process,
    *,
    prims: PrimitiveTable | None = None,
    commit_ok: bool = False,
) -> dict[str, SessionType]:
    """Typecheck under the single-session discipline; raises on failure."""
    return typecheck_process(p, prims=prims, simple=True, commit_ok=commit_ok)


def is_simple(
    p: Process, *, prims: PrimitiveTable | None = None, commit_ok: bool = False
) -> bool:
    try:
        check_simple(p, prims=prims, commit_ok=commit_ok)
        return True
    except TypingError:
        return False


def simple_diagnosis(
    p: Process, *, prims: PrimitiveTable | None = None, commit_ok: bool = False
) -> str | None:
    """None when simple, otherwise a human-readable reason."""
    try:
        check_simple(p, prims=prims, commit_ok=commit_ok)
        return None
    except TypingError as e:
        return f"{e.rule}: {e}"


# ------------------------------------------------- multiparty (syntactic)


def check_simple_multiparty(p: Process) -> None:
    """Single-session shape check for multiparty processes.

    There is no multiparty typing here; this is a syntactic approximation:
    one initiation prefix at the head, every action on the endpoint it
    binds, no endpoint payloads, no initiation under recursion.
    """

    def expr_vars(e: Expr) -> set[str]:
        match e:
            case Name(n, _):
                return {n}
            case Call(_, args):
                out: set[str] = set()
                for a in args:
                    out |= expr_vars(a)
                return out
            case Lit(SessionRef() as r):
                return {r.name}
            case _:
                return set()

    def subject_ok(r: SessionRef, var: str | None) -> bool:
        return (
            var is not None and r.role is None and not r.dual and r.name == var
        )

    def go(q: Process, var: str | None, in_rec: bool) -> None:
        match q:
            case Inact() | RecVar(_):
                return
            case MRequest(_, arity, x, body) | MAccept(_, arity, x, body):
                if var is not None:
                    raise NotSimple("M-Init", "nested session initiation")
                if in_rec:
                    raise NotSimple("M-Init", "session initiation under recursion")
                if arity < 1:
                    raise NotSimple("M-Init", "role index must be positive")
                go(body, x, in_rec)
            case MSend(subj, _, payload, body):
                if not subject_ok(subj, var):
                    raise NotSimple("M-Com", f"action on unbound endpoint {subj}")
                if var in expr_vars(payload):
                    raise NotSimple("M-Com", "endpoint used as a payload")
                go(body, var, in_rec)
            case MReceive(subj, _, x, body):
                if not subject_ok(subj, var):
                    raise NotSimple("M-Com", f"action on unbound endpoint {subj}")
                if x == var:
                    raise NotSimple("M-Com", "received name shadows the endpoint")
                go(body, var, in_rec)
            case MSelect(subj, _, _, body):
                if not subject_ok(subj, var):
                    raise NotSimple("M-Lab", f"action on unbound endpoint {subj}")
                go(body, var, in_rec)
            case MBranch(subj, _, branches):
                if not subject_ok(subj, var):
                    raise NotSimple("M-Lab", f"action on unbound endpoint {subj}")
                for _, b in branches:
                    go(b, var, in_rec)
            case If(_, then, orelse):
                go(then, var, in_rec)
                go(orelse, var, in_rec)
            case Par(left, right):
                go(left, var, in_rec)
                go(right, var, in_rec)
            case Rec(_, body):
                go(body, var, True)
            case Restrict(_, body):
                go(body, var, in_rec)
            case _:
                raise NotSimple(
                    "M", f"binary construct {type(q).__name__} in multiparty mode"
                )

    go(p, None, False)


def is_simple_multiparty(p: Process) -> bool:
    try:
        check_simple_multiparty(p)
        return True
    except TypingError:
        return False


# ----------------------------------------------------- configuration typing


def typecheck_respi(
    config,
    *,
    theta: dict[str, dict[str, SessionType]] | None = None,
    gamma: dict[str, Sort] | None = None,
    prims: PrimitiveTable | None = None,
) -> dict[str, SessionType]:
    """Typecheck a tagged configuration.

    Threads are typed with their tags stripped and composed disjointly.
    A memory is not checkable in isolation: each one at the top of its
    dependency chain is re-typed through the term that generated it, and
    everything derived from it (continuation threads and later memories,
    through fork splits) is already accounted for by that term.  Overlap
    between those typings and the live threads rejects configurations
    whose past and present disagree about an endpoint.
    """
    from .respi import (
        ActionMem,
        ChoiceMem,
        CommitMem,
        ComEv,
        ForkMem,
        InitEv,
        SelEv,
        Thread,
        mem_head,
        mem_tail,
    )
    from .syntax import ZERO

    prims = prims or PrimitiveTable()
    threads = [it for it in config.items if isinstance(it, Thread)]
    mems = [it for it in config.items if not isinstance(it, Thread)]

    producer: dict = {}
    consumer: dict = {}
    for m in mems:
        for u in mem_head(m):
            consumer[u] = m
        for u in mem_tail(m):
            producer[u] = m

    def hard_ancestor(tag):
        # nearest non-fork memory above, looking through fork splits
        while tag in producer:
            m = producer[tag]
            if isinstance(m, ForkMem):
                tag = m.t
                continue
            return m
        return None

    def depth(m) -> int:
        best = 0
        for u in mem_head(m):
            d, t = 0, u
            while t in producer:
                mm = producer[t]
                if isinstance(mm, ForkMem):
                    t = mm.t
                    continue
                d += 1
                t = mem_head(mm)[0]
            best = max(best, d)
        return best

    def generating_term(m) -> Process:
        match m:
            case ActionMem(_, _, InitEv(a, x, y, left, right, _), _, _):
                return Par(Request(a, x, left), Accept(a, y, right))
            case ActionMem(_, _, ComEv(subj, payload, var, left, right), _, _):
                return Par(Send(subj.dualized(), payload, left), Receive(subj, var, right))
            case ActionMem(_, _, SelEv(subj, label, left, branches), _, _):
                return Par(Select(subj.dualized(), label, left), Branch(subj, branches))
            case ChoiceMem(_, cond, then, orelse, _):
                return If(cond, then, orelse)
            case CommitMem(_, session, _):
                return Par(
                    Commit(SessionRef(session, True), ZERO),
                    Commit(SessionRef(session, False), ZERO),
                )
        raise TypingError("Mem", f"no generating term for {type(m).__name__}")

    ignored_tags: set = set()
    ignored_mems: set[int] = set()

    def descend(tags) -> None:
        stack = list(tags)
        while stack:
            u = stack.pop()
            if u in ignored_tags:
                continue
            ignored_tags.add(u)
            m = consumer.get(u)
            if m is not None and id(m) not in ignored_mems:
                ignored_mems.add(id(m))
                stack.extend(mem_tail(m))

    deltas: list[tuple[str, dict[str, SessionType]]] = []
    candidates = sorted(
        (m for m in mems if not isinstance(m, ForkMem)), key=depth
    )
    for m in candidates:
        if id(m) in ignored_mems:
            continue
        ignored_mems.add(id(m))
        descend(mem_tail(m))
        deltas.append(
            (
                f"memory {type(m).__name__}",
                typecheck_process(
                    generating_term(m),
                    theta=theta,
                    gamma=gamma,
                    prims=prims,
                    commit_ok=True,
                ),
            )
        )

    for th in threads:
        if th.tag in ignored_tags:
            continue
        deltas.append(
            (
                f"thread {th.tag}",
                typecheck_process(
                    th.body, theta=theta, gamma=gamma, prims=prims, commit_ok=True
                ),
            )
        )

    merged: dict[str, SessionType] = {}
    for origin, d in deltas:
        clash = set(merged) & set(d)
        if clash:
            names = ", ".join(sorted(clash))
            raise NonDisjointParallel(
                "Conc'", f"endpoint(s) {names} re-used by {origin}"
            )
        merged.update(d)

    store = TypeStore()
    ck = _Checker(
        ZERO,
        theta={},
        gamma=dict(gamma or {}),
        prims=prims,
        simple=False,
        commit_ok=True,
        store=store,
    )
    for ch in sorted(config.restricted_channels):
        alpha = merged.pop(ch, END)
        beta = merged.pop(f"~{ch}", END)
        ck.check_balance(ch, alpha, beta)
    return merged
