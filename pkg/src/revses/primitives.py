"""Primitive operations and expression evaluation.

The table maps operation names to arity, sort signature and a total,
deterministic Python function.  Backend-ish operations (quotes, dates,
addresses) are plain functions of their arguments so every run replays
bit-identically; a `noise` builtin derives values from the table seed for
experiments that want pseudo-random-looking data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

from .syntax import Call, Chan, Expr, Lit, Name, SessionRef, Value
from .types import BOOL, INT, ChanS, Sort


class ExprError(Exception):
    pass


class UnboundVariable(ExprError):
    pass


class UnknownPrimitive(ExprError):
    pass


class PrimitiveArityMismatch(ExprError):
    pass


class PrimitiveValueError(ExprError):
    pass


@dataclass(frozen=True)
class PrimDef:
    name: str
    arity: int
    arg_sorts: tuple[Sort, ...]
    ret_sort: Sort
    fn: Callable[..., Value]


def _int_args(name: str, args: tuple[Value, ...]) -> tuple[int, ...]:
    for a in args:
        if type(a) is not int:
            raise PrimitiveValueError(f"{name} expects ints, got {a!r}")
    return args  # type: ignore[return-value]


def _bool_args(name: str, args: tuple[Value, ...]) -> tuple[bool, ...]:
    for a in args:
        if type(a) is not bool:
            raise PrimitiveValueError(f"{name} expects bools, got {a!r}")
    return args  # type: ignore[return-value]


def stable_digest(*parts: object) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).hexdigest()
    return int(h[:12], 16)


@dataclass
class PrimitiveTable:
    seed: int = 0
    defs: dict[str, PrimDef] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.defs:
            self._install_standard()

    def register(self, pd: PrimDef) -> None:
        self.defs[pd.name] = pd

    def lookup(self, name: str) -> PrimDef:
        try:
            return self.defs[name]
        except KeyError:
            raise UnknownPrimitive(f"unknown primitive {name!r}") from None

    def _install_standard(self) -> None:
        def i2i(name, fn):
            self.register(PrimDef(name, 2, (INT, INT), INT, fn))

        def cmp2(name, fn):
            self.register(PrimDef(name, 2, (INT, INT), BOOL, fn))

        i2i("+", lambda a, b: _op_ii("+", a, b, lambda x, y: x + y))
        i2i("-", lambda a, b: _op_ii("-", a, b, lambda x, y: x - y))
        i2i("*", lambda a, b: _op_ii("*", a, b, lambda x, y: x * y))
        cmp2("<", lambda a, b: _op_ii("<", a, b, lambda x, y: x < y))
        cmp2("<=", lambda a, b: _op_ii("<=", a, b, lambda x, y: x <= y))
        cmp2(">", lambda a, b: _op_ii(">", a, b, lambda x, y: x > y))
        cmp2(">=", lambda a, b: _op_ii(">=", a, b, lambda x, y: x >= y))
        cmp2("==", lambda a, b: _op_ii("==", a, b, lambda x, y: x == y))
        cmp2("!=", lambda a, b: _op_ii("!=", a, b, lambda x, y: x != y))
        self.register(
            PrimDef("&&", 2, (BOOL, BOOL), BOOL, lambda a, b: _op_bb("&&", a, b, lambda x, y: x and y))
        )
        self.register(
            PrimDef("||", 2, (BOOL, BOOL), BOOL, lambda a, b: _op_bb("||", a, b, lambda x, y: x or y))
        )
        self.register(
            PrimDef("not", 1, (BOOL,), BOOL, lambda a: not _bool_args("not", (a,))[0])
        )
        # protocol backends: deterministic stand-ins for external services
        self.register(PrimDef("quote", 1, (INT,), INT, lambda t: 20))
        self.register(PrimDef("lastQuote", 1, (INT,), INT, lambda t: 20))
        self.register(
            PrimDef("split", 1, (INT,), INT, lambda q: _int_args("split", (q,))[0] // 2)
        )
        self.register(PrimDef("addr", 0, (), INT, lambda: 99))
        self.register(PrimDef("date", 0, (), INT, lambda: 20260815))
        self.register(
            PrimDef(
                "accept",
                1,
                (INT,),
                BOOL,
                lambda q: _int_args("accept", (q,))[0] <= 100,
            )
        )
        seed = self.seed
        self.register(
            PrimDef(
                "noise",
                1,
                (INT,),
                INT,
                lambda x: stable_digest(seed, "noise", x) % 1000,
            )
        )


def _op_ii(name, a, b, fn):
    x, y = _int_args(name, (a, b))
    return fn(x, y)


def _op_bb(name, a, b, fn):
    x, y = _bool_args(name, (a, b))
    return fn(x, y)


def eval_expr(e: Expr, env: dict[str, Value], prims: PrimitiveTable) -> Value:
    match e:
        case Lit(v):
            return v
        case Name(n, d):
            if n not in env:
                raise UnboundVariable(f"unbound variable {n!r}")
            v = env[n]
            if d:
                if not isinstance(v, SessionRef):
                    raise PrimitiveValueError(f"~{n}: {v!r} is not an endpoint")
                return v.dualized()
            return v
        case Call(op, args):
            pd = prims.lookup(op)
            if len(args) != pd.arity:
                raise PrimitiveArityMismatch(
                    f"{op} expects {pd.arity} argument(s), got {len(args)}"
                )
            vals = tuple(eval_expr(a, env, prims) for a in args)
            return pd.fn(*vals)
    raise ExprError(f"eval_expr: unknown expression {e!r}")


def value_sort_matches(v: Value, s: Sort) -> bool:
    if isinstance(s, ChanS):
        return isinstance(v, (Chan, SessionRef))
    if s == BOOL:
        return type(v) is bool
    if s == INT:
        return type(v) is int
    return True  # sort variables: anything goes at runtime


# ------------------------------------------------- primitives file format

# Line-delimited records:  name arity signature impl
#   signature:  int,int->int   or  ->int   (no args)
#   impl:       builtin:<id>   or  table:KEY=VAL,...,*=DEFAULT
# `--` starts a comment; blank lines are skipped.

_BUILTIN_IMPLS: dict[str, Callable[[int], Callable[..., Value]]] = {
    "halve": lambda seed: lambda q: _int_args("halve", (q,))[0] // 2,
    "ident": lambda seed: lambda q: _int_args("ident", (q,))[0],
    "noise": lambda seed: lambda *xs: stable_digest(seed, "noise", *xs) % 1000,
}


class PrimitivesFileError(Exception):
    pass


def _parse_sort_token(tok: str) -> Sort:
    if tok == "int":
        return INT
    if tok == "bool":
        return BOOL
    raise PrimitivesFileError(f"unknown sort {tok!r} in primitives file")


def _parse_value_token(tok: str) -> Value:
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        return int(tok)
    except ValueError:
        raise PrimitivesFileError(f"bad value {tok!r} in primitives table") from None


def load_primitives(path: str, seed: int = 0) -> PrimitiveTable:
    table = PrimitiveTable(seed=seed)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("--", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise PrimitivesFileError(
                    f"{path}:{lineno}: expected 'name arity signature impl'"
                )
            name, arity_s, sig, impl = parts
            try:
                arity = int(arity_s)
            except ValueError:
                raise PrimitivesFileError(f"{path}:{lineno}: bad arity {arity_s!r}")
            if "->" not in sig:
                raise PrimitivesFileError(f"{path}:{lineno}: bad signature {sig!r}")
            args_s, ret_s = sig.split("->", 1)
            arg_sorts = tuple(
                _parse_sort_token(t) for t in args_s.split(",") if t
            )
            ret_sort = _parse_sort_token(ret_s)
            if len(arg_sorts) != arity:
                raise PrimitivesFileError(
                    f"{path}:{lineno}: arity {arity} does not match signature {sig!r}"
                )
            fn = _compile_impl(impl, seed, path, lineno)
            table.register(PrimDef(name, arity, arg_sorts, ret_sort, fn))
    return table


def _compile_impl(impl: str, seed: int, path: str, lineno: int):
    if impl.startswith("builtin:"):
        key = impl.split(":", 1)[1]
        if key not in _BUILTIN_IMPLS:
            raise PrimitivesFileError(f"{path}:{lineno}: unknown builtin {key!r}")
        return _BUILTIN_IMPLS[key](seed)
    if impl.startswith("const:"):
        v = _parse_value_token(impl.split(":", 1)[1])
        return lambda *xs: v
    if impl.startswith("table:"):
        mapping: dict[int, Value] = {}
        default: Value | None = None
        for entry in impl.split(":", 1)[1].split(","):
            if "=" not in entry:
                raise PrimitivesFileError(f"{path}:{lineno}: bad table entry {entry!r}")
            k, v = entry.split("=", 1)
            if k == "*":
                default = _parse_value_token(v)
            else:
                mapping[int(k)] = _parse_value_token(v)

        def fn(*xs, _m=mapping, _d=default):
            key = xs[0] if xs else 0
            if key in _m:
                return _m[key]
            if _d is None:
                raise PrimitiveValueError(f"no table entry for {key!r}")
            return _d

        return fn
    raise PrimitivesFileError(f"{path}:{lineno}: unknown impl {impl!r}")
