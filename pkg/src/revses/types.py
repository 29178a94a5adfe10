"""Sorts and session types.

Sorts classify expression values (bool, int, shared channels carrying a
session type).  Session types describe one endpoint of a binary session:
send/receive of a sorted value, delegation throw/catch, internal/external
labelled choice, termination, and equi-recursive types.  `CommitT` marks an
endpoint that ends in an irreversible commit instead of plain `end`.
"""

from __future__ import annotations

from dataclasses import dataclass


class TypeError_(Exception):
    """Base for type-level errors (kept distinct from builtins.TypeError)."""


class NonContractiveType(TypeError_):
    pass


class DuplicateLabel(TypeError_):
    pass


# ---------------------------------------------------------------- sorts


@dataclass(frozen=True)
class BoolS:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class IntS:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class ChanS:
    """Sort of a shared channel whose sessions follow `ty` on the accept side."""

    ty: "SessionType"

    def __str__(self) -> str:
        return f"<{type_str(self.ty)}>"


@dataclass(frozen=True)
class SortVar:
    """Unification variable used during sort inference."""

    uid: int

    def __str__(self) -> str:
        return f"?s{self.uid}"


Sort = BoolS | IntS | ChanS | SortVar

BOOL = BoolS()
INT = IntS()


# ---------------------------------------------------------- session types


@dataclass(frozen=True)
class OutT:
    sort: Sort
    cont: "SessionType"


@dataclass(frozen=True)
class InT:
    sort: Sort
    cont: "SessionType"


@dataclass(frozen=True)
class ThrowT:
    carried: "SessionType"
    cont: "SessionType"


@dataclass(frozen=True)
class CatchT:
    carried: "SessionType"
    cont: "SessionType"


@dataclass(frozen=True)
class SelT:
    """Internal choice.  `flex` marks a label set synthesized from select
    prefixes, which is only a lower bound: the typing rule for selection
    admits any wider set, so unification may grow it until an exact peer
    (a branch term's type) seals it."""

    branches: tuple[tuple[str, "SessionType"], ...]
    flex: bool = False


@dataclass(frozen=True)
class BraT:
    branches: tuple[tuple[str, "SessionType"], ...]
    flex: bool = False


@dataclass(frozen=True)
class EndT:
    pass


@dataclass(frozen=True)
class CommitT:
    """The committed endpoint marker; self-dual."""


@dataclass(frozen=True)
class TVar:
    name: str


@dataclass(frozen=True)
class RecT:
    name: str
    body: "SessionType"


@dataclass(frozen=True)
class TUVar:
    """Unification variable over session types (delegation / recursion demands)."""

    uid: int


SessionType = (
    OutT | InT | ThrowT | CatchT | SelT | BraT | EndT | CommitT | TVar | RecT | TUVar
)

END = EndT()
COMMIT = CommitT()


def check_labels(branches: tuple[tuple[str, SessionType], ...]) -> None:
    seen = set()
    for lab, _ in branches:
        if lab in seen:
            raise DuplicateLabel(f"duplicate label {lab!r} in branch type")
        seen.add(lab)


def check_contractive(ty: SessionType) -> None:
    """Reject rec chains that reach their own binder without a constructor."""

    def chase(t: SessionType, pending: frozenset[str]) -> None:
        if isinstance(t, RecT):
            if t.name in pending:
                raise NonContractiveType(f"rec {t.name} has a non-contractive body")
            chase(t.body, pending | {t.name})
        elif isinstance(t, TVar):
            if t.name in pending:
                raise NonContractiveType(f"type variable {t.name} is not guarded")
        elif isinstance(t, (OutT, InT, ThrowT, CatchT)):
            chase(t.cont, frozenset())
            if isinstance(t, (ThrowT, CatchT)):
                chase(t.carried, frozenset())
            elif isinstance(t.sort, ChanS):
                chase(t.sort.ty, frozenset())
        elif isinstance(t, (SelT, BraT)):
            for _, b in t.branches:
                chase(b, frozenset())

    chase(ty, frozenset())


# ------------------------------------------------------------- duality


def dual_type(ty: SessionType) -> SessionType:
    """Swap the two endpoint views; an involution.

    Carried types of throw/catch are not dualized (the delegated endpoint is
    handed over as-is); rec binders and type variables pass through.
    """
    match ty:
        case OutT(s, c):
            return InT(s, dual_type(c))
        case InT(s, c):
            return OutT(s, dual_type(c))
        case ThrowT(b, c):
            return CatchT(b, dual_type(c))
        case CatchT(b, c):
            return ThrowT(b, dual_type(c))
        case SelT(bs, fx):
            return BraT(tuple((l, dual_type(t)) for l, t in bs), fx)
        case BraT(bs, fx):
            return SelT(tuple((l, dual_type(t)) for l, t in bs), fx)
        case EndT():
            return END
        case CommitT():
            return COMMIT
        case TVar(n):
            return TVar(n)
        case RecT(n, b):
            return RecT(n, dual_type(b))
        case TUVar(_):
            raise TypeError_("cannot dualize an unresolved type variable")
    raise TypeError_(f"dual_type: unknown type {ty!r}")


# -------------------------------------------------------- rec unfolding


def _tsubst(ty: SessionType, name: str, rep: SessionType) -> SessionType:
    match ty:
        case TVar(n):
            return rep if n == name else ty
        case RecT(n, b):
            return ty if n == name else RecT(n, _tsubst(b, name, rep))
        case OutT(s, c):
            return OutT(s, _tsubst(c, name, rep))
        case InT(s, c):
            return InT(s, _tsubst(c, name, rep))
        case ThrowT(b, c):
            return ThrowT(_tsubst(b, name, rep), _tsubst(c, name, rep))
        case CatchT(b, c):
            return CatchT(_tsubst(b, name, rep), _tsubst(c, name, rep))
        case SelT(bs, fx):
            return SelT(tuple((l, _tsubst(t, name, rep)) for l, t in bs), fx)
        case BraT(bs, fx):
            return BraT(tuple((l, _tsubst(t, name, rep)) for l, t in bs), fx)
        case _:
            return ty


def unfold_type(ty: SessionType) -> SessionType:
    """One-step unfolding of a top-level rec binder (equi-recursive view)."""
    seen = 0
    while isinstance(ty, RecT):
        ty = _tsubst(ty.body, ty.name, ty)
        seen += 1
        if seen > 64:
            raise NonContractiveType("rec unfolding does not reach a constructor")
    return ty


# ------------------------------------------------------------- equality


class TypeStore:
    """Union-find-ish store for TUVar bindings used during inference."""

    def __init__(self) -> None:
        self.types: dict[int, SessionType] = {}
        self.sorts: dict[int, Sort] = {}
        self._next = 0

    def fresh_tvar(self) -> TUVar:
        self._next += 1
        return TUVar(self._next)

    def fresh_svar(self) -> SortVar:
        self._next += 1
        return SortVar(self._next)

    def resolve(self, ty: SessionType) -> SessionType:
        while isinstance(ty, TUVar) and ty.uid in self.types:
            ty = self.types[ty.uid]
        return ty

    def resolve_sort(self, s: Sort) -> Sort:
        while isinstance(s, SortVar) and s.uid in self.sorts:
            s = self.sorts[s.uid]
        return s

    def deep(self, ty: SessionType) -> SessionType:
        """Fully substitute bound variables, for display and final results."""
        ty = self.resolve(ty)
        match ty:
            case OutT(s, c):
                return OutT(self.deep_sort(s), self.deep(c))
            case InT(s, c):
                return InT(self.deep_sort(s), self.deep(c))
            case ThrowT(b, c):
                return ThrowT(self.deep(b), self.deep(c))
            case CatchT(b, c):
                return CatchT(self.deep(b), self.deep(c))
            case SelT(bs, fx):
                return SelT(tuple((l, self.deep(t)) for l, t in bs), fx)
            case BraT(bs, fx):
                return BraT(tuple((l, self.deep(t)) for l, t in bs), fx)
            case RecT(n, b):
                return RecT(n, self.deep(b))
            case _:
                return ty

    def deep_sort(self, s: Sort) -> Sort:
        s = self.resolve_sort(s)
        if isinstance(s, ChanS):
            return ChanS(self.deep(s.ty))
        return s


def type_equal(
    a: SessionType,
    b: SessionType,
    store: TypeStore | None = None,
    *,
    unify: bool = False,
) -> bool:
    """Coinductive equality up to rec unfolding.

    With `unify=True` unresolved variables in `store` are bound on the fly;
    otherwise a variable is only equal to itself.
    """
    assumed: set[tuple[str, str]] = set()

    def go(x: SessionType, y: SessionType) -> bool:
        if store is not None:
            x = store.resolve(x)
            y = store.resolve(y)
        if isinstance(x, TUVar) or isinstance(y, TUVar):
            if isinstance(x, TUVar) and isinstance(y, TUVar) and x.uid == y.uid:
                return True
            if not (unify and store is not None):
                return False
            if isinstance(x, TUVar):
                store.types[x.uid] = y
                return True
            store.types[y.uid] = x
            return True
        key = (type_str(x), type_str(y))
        if key[0] == key[1]:
            return True
        if key in assumed:
            return True
        assumed.add(key)
        x = unfold_type(x)
        y = unfold_type(y)
        match (x, y):
            case (OutT(s1, c1), OutT(s2, c2)) | (InT(s1, c1), InT(s2, c2)):
                return sort_go(s1, s2) and go(c1, c2)
            case (ThrowT(b1, c1), ThrowT(b2, c2)) | (CatchT(b1, c1), CatchT(b2, c2)):
                return go(b1, b2) and go(c1, c2)
            case (SelT(bs1), SelT(bs2)) | (BraT(bs1), BraT(bs2)):
                d1, d2 = dict(bs1), dict(bs2)
                if set(d1) != set(d2):
                    return False
                return all(go(d1[l], d2[l]) for l in d1)
            case (EndT(), EndT()) | (CommitT(), CommitT()):
                return True
            case (TVar(n1), TVar(n2)):
                return n1 == n2
            case _:
                return False

    def sort_go(s1: Sort, s2: Sort) -> bool:
        if store is not None:
            s1 = store.resolve_sort(s1)
            s2 = store.resolve_sort(s2)
        if isinstance(s1, SortVar) or isinstance(s2, SortVar):
            if isinstance(s1, SortVar) and isinstance(s2, SortVar) and s1.uid == s2.uid:
                return True
            if not (unify and store is not None):
                return False
            if isinstance(s1, SortVar):
                store.sorts[s1.uid] = s2
                return True
            store.sorts[s2.uid] = s1
            return True
        if isinstance(s1, ChanS) and isinstance(s2, ChanS):
            return go(s1.ty, s2.ty)
        return s1 == s2

    return go(a, b)


def merge_types(
    a: SessionType, b: SessionType, store: TypeStore
) -> SessionType | None:
    """Unify two types, widening flexible selection label sets.

    Used where independently synthesized endpoint types of one shared
    channel meet: a flex label set absorbs the labels of its peer, and an
    exact peer seals the result.  Bindings made along the way (including
    re-bindings when widening refines an earlier result) persist in the
    store.  Returns the merged type, or None when irreconcilable.
    """
    assumed: set[tuple[str, str]] = set()

    def chase(t: SessionType) -> tuple[SessionType, TUVar | None]:
        last = None
        while isinstance(t, TUVar) and t.uid in store.types:
            last, t = t, store.types[t.uid]
        return t, last

    def go(x: SessionType, y: SessionType) -> SessionType | None:
        x, lx = chase(x)
        y, ly = chase(y)
        if isinstance(x, TUVar):
            if isinstance(y, TUVar) and x.uid == y.uid:
                return x
            store.types[x.uid] = y
            return y
        if isinstance(y, TUVar):
            store.types[y.uid] = x
            return x
        if x == y:
            return x
        key = (type_str(x), type_str(y))
        if key in assumed:
            return x
        assumed.add(key)
        m = struct(unfold_type(x), unfold_type(y))
        if m is not None:
            # keep later readers of the variable chain on the widened type
            if lx is not None and m != x:
                store.types[lx.uid] = m
            if ly is not None and m != y:
                store.types[ly.uid] = m
        return m

    def struct(x: SessionType, y: SessionType) -> SessionType | None:
        match (x, y):
            case (OutT(s1, c1), OutT(s2, c2)) | (InT(s1, c1), InT(s2, c2)):
                s, c = sorts(s1, s2), go(c1, c2)
                if s is None or c is None:
                    return None
                return type(x)(s, c)
            case (ThrowT(b1, c1), ThrowT(b2, c2)) | (CatchT(b1, c1), CatchT(b2, c2)):
                bm, cm = go(b1, b2), go(c1, c2)
                if bm is None or cm is None:
                    return None
                return type(x)(bm, cm)
            case (SelT(bs1, f1), SelT(bs2, f2)) | (BraT(bs1, f1), BraT(bs2, f2)):
                d1, d2 = dict(bs1), dict(bs2)
                # labels one side lacks must land on a widenable peer
                if any(l not in d2 for l in d1) and not f2:
                    return None
                if any(l not in d1 for l in d2) and not f1:
                    return None
                out = []
                for lab, t in bs1:
                    if lab in d2:
                        mt = go(t, d2[lab])
                        if mt is None:
                            return None
                        out.append((lab, mt))
                    else:
                        out.append((lab, t))
                out.extend((lab, t) for lab, t in bs2 if lab not in d1)
                return type(x)(tuple(out), f1 and f2)
            case (EndT(), EndT()) | (CommitT(), CommitT()):
                return x
            case (TVar(n1), TVar(n2)):
                return x if n1 == n2 else None
            case _:
                return None

    def sorts(s1: Sort, s2: Sort) -> Sort | None:
        s1, s2 = store.resolve_sort(s1), store.resolve_sort(s2)
        if isinstance(s1, SortVar):
            if isinstance(s2, SortVar) and s1.uid == s2.uid:
                return s1
            store.sorts[s1.uid] = s2
            return s2
        if isinstance(s2, SortVar):
            store.sorts[s2.uid] = s1
            return s1
        if isinstance(s1, ChanS) and isinstance(s2, ChanS):
            t = go(s1.ty, s2.ty)
            return None if t is None else ChanS(t)
        return s1 if s1 == s2 else None

    return go(a, b)


# -------------------------------------------------------------- display


def sort_str(s: Sort) -> str:
    return str(s)


def type_str(ty: SessionType) -> str:
    match ty:
        case OutT(s, c):
            return f"!{sort_str(s)}.{type_str(c)}"
        case InT(s, c):
            return f"?{sort_str(s)}.{type_str(c)}"
        case ThrowT(b, c):
            return f"!({type_str(b)}).{type_str(c)}"
        case CatchT(b, c):
            return f"?({type_str(b)}).{type_str(c)}"
        case SelT(bs):
            inner = ", ".join(f"{l}: {type_str(t)}" for l, t in bs)
            return "+{" + inner + "}"
        case BraT(bs):
            inner = ", ".join(f"{l}: {type_str(t)}" for l, t in bs)
            return "&{" + inner + "}"
        case EndT():
            return "end"
        case CommitT():
            return "commit"
        case TVar(n):
            return n
        case RecT(n, b):
            return f"rec {n}.{type_str(b)}"
        case TUVar(u):
            return f"?t{u}"
    raise TypeError_(f"type_str: unknown type {ty!r}")
