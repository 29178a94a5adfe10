"""Concrete syntax: tokenizer, recursive-descent parsers, and printers.

Surface is ASCII-only; `~s` is the dual endpoint of `s`, `s[p]` a
multiparty endpoint, `--` starts a line comment.  Prefixes bind tighter
than `|`, so parallel continuations need parentheses (`new c.(P | Q)`).

Payload expressions in `snd k<e>` end at the first unparenthesized `>`,
so `>` and `>=` comparisons inside payloads must be parenthesized; the
printer inserts those parentheses itself.

Source spans are attached to diagnostics (ParseError) rather than AST
nodes so structural equality of terms stays spelling-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

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
)
from .types import (
    BOOL,
    COMMIT,
    END,
    INT,
    BraT,
    CatchT,
    ChanS,
    InT,
    OutT,
    RecT,
    SelT,
    SessionType,
    Sort,
    ThrowT,
    TVar,
    check_contractive,
    check_labels,
)

KEYWORDS = {
    "req", "acc", "snd", "rcv", "sel", "bra", "if", "then", "else",
    "new", "rec", "commit", "mreq", "macc", "true", "false", "not",
    "end", "bool", "int",
}

_SYMBOLS = [
    "||", "&&", "==", "!=", "<=", ">=",
    ".", ",", ":", "(", ")", "{", "}", "[", "]",
    "<", ">", "|", "~", "+", "-", "*", "&", "?", "!",
]


@dataclass(frozen=True)
class SourceSpan:
    byte_start: int
    byte_end: int
    line: int
    column: int

    def __post_init__(self) -> None:
        assert self.byte_start <= self.byte_end


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan, expected: frozenset[str] = frozenset()):
        self.message = message
        self.span = span
        self.expected = expected
        where = f"line {span.line}, column {span.column}"
        exp = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at {where}{exp}")


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT | INT | SYM | EOF
    value: str
    span: SourceSpan


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(start: int, end: int, l0: int, c0: int) -> SourceSpan:
        return SourceSpan(start, end, l0, c0)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start, l0, c0 = i, line, col
        if ch.isdigit():
            while i < n and text[i].isdigit():
                i += 1
            col += i - start
            toks.append(Token("INT", text[start:i], span(start, i, l0, c0)))
            continue
        if ch.isalpha() or ch == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            col += i - start
            toks.append(Token("IDENT", text[start:i], span(start, i, l0, c0)))
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                i += len(sym)
                col += len(sym)
                toks.append(Token("SYM", sym, span(start, i, l0, c0)))
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", span(start, start + 1, l0, c0))
    toks.append(Token("EOF", "", SourceSpan(n, n, line, col)))
    return toks


@dataclass
class _Cursor:
    toks: list[Token]
    pos: int = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at_sym(self, *vals: str) -> bool:
        t = self.peek()
        return t.kind == "SYM" and t.value in vals

    def at_kw(self, *vals: str) -> bool:
        t = self.peek()
        return t.kind == "IDENT" and t.value in vals

    def expect_sym(self, val: str) -> Token:
        t = self.peek()
        if t.kind == "SYM" and t.value == val:
            return self.next()
        raise ParseError(f"unexpected {t.value or 'end of input'!r}", t.span, frozenset({val}))

    def expect_kw(self, val: str) -> Token:
        t = self.peek()
        if t.kind == "IDENT" and t.value == val:
            return self.next()
        raise ParseError(f"unexpected {t.value or 'end of input'!r}", t.span, frozenset({val}))

    def expect_ident(self, what: str = "identifier") -> Token:
        t = self.peek()
        if t.kind == "IDENT" and t.value not in KEYWORDS:
            return self.next()
        raise ParseError(f"expected {what}, got {t.value or 'end of input'!r}", t.span)

    def expect_int(self) -> int:
        t = self.peek()
        if t.kind == "INT":
            self.next()
            return int(t.value)
        raise ParseError(f"expected integer, got {t.value or 'end of input'!r}", t.span)


# ------------------------------------------------------------- expressions

# precedence: || < && < comparison < additive < multiplicative < not < atom
_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


def _parse_expr(c: _Cursor, no_gt: bool) -> Expr:
    return _parse_or(c, no_gt)


def _parse_or(c: _Cursor, no_gt: bool) -> Expr:
    e = _parse_and(c, no_gt)
    while c.at_sym("||"):
        c.next()
        e = Call("||", (e, _parse_and(c, no_gt)))
    return e


def _parse_and(c: _Cursor, no_gt: bool) -> Expr:
    e = _parse_cmp(c, no_gt)
    while c.at_sym("&&"):
        c.next()
        e = Call("&&", (e, _parse_cmp(c, no_gt)))
    return e


def _parse_cmp(c: _Cursor, no_gt: bool) -> Expr:
    e = _parse_add(c, no_gt)
    if c.at_sym(*_CMP_OPS):
        op = c.peek().value
        if no_gt and op in (">", ">="):
            # closing delimiter of the payload, not an operator
            return e
        c.next()
        return Call(op, (e, _parse_add(c, no_gt)))
    return e


def _parse_add(c: _Cursor, no_gt: bool) -> Expr:
    e = _parse_mul(c, no_gt)
    while c.at_sym("+", "-"):
        op = c.next().value
        e = Call(op, (e, _parse_mul(c, no_gt)))
    return e


def _parse_mul(c: _Cursor, no_gt: bool) -> Expr:
    e = _parse_unary(c, no_gt)
    while c.at_sym("*"):
        c.next()
        e = Call("*", (e, _parse_unary(c, no_gt)))
    return e


def _parse_unary(c: _Cursor, no_gt: bool) -> Expr:
    if c.at_kw("not"):
        c.next()
        return Call("not", (_parse_unary(c, no_gt),))
    return _parse_expr_atom(c, no_gt)


def _parse_expr_atom(c: _Cursor, no_gt: bool) -> Expr:
    t = c.peek()
    if t.kind == "INT":
        c.next()
        return Lit(int(t.value))
    if c.at_kw("true"):
        c.next()
        return Lit(True)
    if c.at_kw("false"):
        c.next()
        return Lit(False)
    if c.at_sym("("):
        c.next()
        e = _parse_expr(c, no_gt=False)
        c.expect_sym(")")
        return e
    if c.at_sym("~"):
        c.next()
        name = c.expect_ident("endpoint name")
        return Name(name.value, dual=True)
    if t.kind == "IDENT" and t.value not in KEYWORDS:
        c.next()
        if c.at_sym("("):
            c.next()
            args: list[Expr] = []
            if not c.at_sym(")"):
                args.append(_parse_expr(c, no_gt=False))
                while c.at_sym(","):
                    c.next()
                    args.append(_parse_expr(c, no_gt=False))
            c.expect_sym(")")
            return Call(t.value, tuple(args))
        if c.at_sym("[") and c.peek(1).kind == "INT" and c.peek(2).value == "]":
            c.next()
            role = c.expect_int()
            c.expect_sym("]")
            return Lit(SessionRef(t.value, False, role))
        return Name(t.value)
    raise ParseError(f"expected expression, got {t.value or 'end of input'!r}", t.span)


# --------------------------------------------------------------- processes


def _parse_subject(c: _Cursor) -> tuple[str, bool, list[int]]:
    """name, dual flag, and up to two bracket indices."""
    dual = False
    if c.at_sym("~"):
        c.next()
        dual = True
    name = c.expect_ident("endpoint name")
    brackets: list[int] = []
    while len(brackets) < 2 and c.at_sym("["):
        c.next()
        brackets.append(c.expect_int())
        c.expect_sym("]")
    if dual and brackets:
        raise ParseError("multiparty endpoints have no dual", name.span)
    return name.value, dual, brackets


def _split_subject(name: str, dual: bool, brackets: list[int]) -> tuple[SessionRef, int | None]:
    """(subject, partner): one bracket is the partner of an unresolved
    endpoint, two are role-then-partner of a concrete one."""
    if not brackets:
        return SessionRef(name, dual), None
    if len(brackets) == 1:
        return SessionRef(name), brackets[0]
    return SessionRef(name, False, brackets[0]), brackets[1]


def _parse_prefix(c: _Cursor) -> Process:
    t = c.peek()
    if t.kind == "INT" and t.value == "0":
        c.next()
        return ZERO
    if c.at_sym("("):
        c.next()
        p = _parse_par(c)
        c.expect_sym(")")
        return p
    if c.at_kw("req", "acc"):
        kw = c.next().value
        chan = c.expect_ident("channel name").value
        c.expect_sym("(")
        var = c.expect_ident("variable").value
        c.expect_sym(")")
        c.expect_sym(".")
        body = _parse_prefix(c)
        return (Request if kw == "req" else Accept)(chan, var, body)
    if c.at_kw("mreq", "macc"):
        kw = c.next().value
        chan = c.expect_ident("channel name").value
        c.expect_sym("[")
        idx = c.expect_int()
        c.expect_sym("]")
        c.expect_sym("(")
        var = c.expect_ident("variable").value
        c.expect_sym(")")
        c.expect_sym(".")
        body = _parse_prefix(c)
        return (MRequest if kw == "mreq" else MAccept)(chan, idx, var, body)
    if c.at_kw("snd"):
        c.next()
        name, dual, brs = _parse_subject(c)
        subj, partner = _split_subject(name, dual, brs)
        c.expect_sym("<")
        payload = _parse_expr(c, no_gt=True)
        c.expect_sym(">")
        c.expect_sym(".")
        body = _parse_prefix(c)
        if partner is None:
            return Send(subj, payload, body)
        return MSend(subj, partner, payload, body)
    if c.at_kw("rcv"):
        c.next()
        name, dual, brs = _parse_subject(c)
        subj, partner = _split_subject(name, dual, brs)
        c.expect_sym("(")
        var = c.expect_ident("variable").value
        c.expect_sym(")")
        c.expect_sym(".")
        body = _parse_prefix(c)
        if partner is None:
            return Receive(subj, var, body)
        return MReceive(subj, partner, var, body)
    if c.at_kw("sel"):
        c.next()
        name, dual, brs = _parse_subject(c)
        subj, partner = _split_subject(name, dual, brs)
        label = c.expect_ident("label").value
        c.expect_sym(".")
        body = _parse_prefix(c)
        if partner is None:
            return Select(subj, label, body)
        return MSelect(subj, partner, label, body)
    if c.at_kw("bra"):
        c.next()
        name, dual, brs = _parse_subject(c)
        subj, partner = _split_subject(name, dual, brs)
        c.expect_sym("{")
        branches: list[tuple[str, Process]] = []
        while True:
            lab_tok = c.expect_ident("label")
            c.expect_sym(":")
            branches.append((lab_tok.value, _parse_par(c)))
            if c.at_sym(","):
                c.next()
                continue
            break
        c.expect_sym("}")
        labels = [l for l, _ in branches]
        if len(set(labels)) != len(labels):
            raise ParseError("duplicate branch label", t.span)
        if partner is None:
            return Branch(subj, tuple(branches))
        return MBranch(subj, partner, tuple(branches))
    if c.at_kw("commit"):
        c.next()
        name, dual, brs = _parse_subject(c)
        if brs:
            raise ParseError("commit takes a binary endpoint", t.span)
        c.expect_sym(".")
        return Commit(SessionRef(name, dual), _parse_prefix(c))
    if c.at_kw("if"):
        c.next()
        cond = _parse_expr(c, no_gt=False)
        c.expect_kw("then")
        then = _parse_prefix(c)
        c.expect_kw("else")
        orelse = _parse_prefix(c)
        return If(cond, then, orelse)
    if c.at_kw("new"):
        c.next()
        chan = c.expect_ident("channel name").value
        c.expect_sym(".")
        return Restrict(chan, _parse_prefix(c))
    if c.at_kw("rec"):
        c.next()
        var = c.expect_ident("recursion variable").value
        c.expect_sym(".")
        return Rec(var, _parse_prefix(c))
    if t.kind == "IDENT" and t.value not in KEYWORDS:
        c.next()
        return RecVar(t.value)
    raise ParseError(
        f"expected process, got {t.value or 'end of input'!r}",
        t.span,
        frozenset({"0", "req", "acc", "snd", "rcv", "sel", "bra", "if", "new", "rec", "commit", "("}),
    )


def _parse_par(c: _Cursor) -> Process:
    left = _parse_prefix(c)
    if c.at_sym("|"):
        c.next()
        return Par(left, _parse_par(c))
    return left


def parse_process(text: str) -> Process:
    c = _Cursor(tokenize(text))
    p = _parse_par(c)
    t = c.peek()
    if t.kind != "EOF":
        raise ParseError(f"trailing input {t.value!r}", t.span)
    return p


# -------------------------------------------------------------------- types


def _parse_sort(c: _Cursor) -> Sort:
    if c.at_kw("bool"):
        c.next()
        return BOOL
    if c.at_kw("int"):
        c.next()
        return INT
    if c.at_sym("<"):
        c.next()
        ty = _parse_type_inner(c)
        c.expect_sym(">")
        return ChanS(ty)
    t = c.peek()
    raise ParseError(
        f"expected sort, got {t.value or 'end of input'!r}",
        t.span,
        frozenset({"bool", "int", "<"}),
    )


def _parse_type_inner(c: _Cursor) -> SessionType:
    t = c.peek()
    if c.at_sym("!", "?"):
        op = c.next().value
        if c.at_sym("("):
            c.next()
            carried = _parse_type_inner(c)
            c.expect_sym(")")
            c.expect_sym(".")
            cont = _parse_type_inner(c)
            return ThrowT(carried, cont) if op == "!" else CatchT(carried, cont)
        sort = _parse_sort(c)
        c.expect_sym(".")
        cont = _parse_type_inner(c)
        return OutT(sort, cont) if op == "!" else InT(sort, cont)
    if c.at_sym("+", "&"):
        op = c.next().value
        c.expect_sym("{")
        branches: list[tuple[str, SessionType]] = []
        while True:
            lab = c.expect_ident("label")
            c.expect_sym(":")
            branches.append((lab.value, _parse_type_inner(c)))
            if c.at_sym(","):
                c.next()
                continue
            break
        c.expect_sym("}")
        bt = tuple(branches)
        check_labels(bt)
        return SelT(bt) if op == "+" else BraT(bt)
    if c.at_kw("end"):
        c.next()
        return END
    if c.at_kw("commit"):
        c.next()
        return COMMIT
    if c.at_kw("rec"):
        c.next()
        var = c.expect_ident("type variable").value
        c.expect_sym(".")
        return RecT(var, _parse_type_inner(c))
    if t.kind == "IDENT" and t.value not in KEYWORDS:
        c.next()
        return TVar(t.value)
    raise ParseError(
        f"expected type, got {t.value or 'end of input'!r}",
        t.span,
        frozenset({"!", "?", "+", "&", "end", "commit", "rec"}),
    )


def parse_type(text: str) -> SessionType:
    c = _Cursor(tokenize(text))
    ty = _parse_type_inner(c)
    t = c.peek()
    if t.kind != "EOF":
        raise ParseError(f"trailing input {t.value!r}", t.span)
    check_contractive(ty)
    return ty


def parse_sort(text: str) -> Sort:
    c = _Cursor(tokenize(text))
    s = _parse_sort(c)
    t = c.peek()
    if t.kind != "EOF":
        raise ParseError(f"trailing input {t.value!r}", t.span)
    if isinstance(s, ChanS):
        check_contractive(s.ty)
    return s


# ----------------------------------------------------------------- printers

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5}


def print_ref(r: SessionRef) -> str:
    if r.role is not None:
        return f"{r.name}[{r.role}]"
    return f"~{r.name}" if r.dual else r.name


def print_expr(e: Expr, min_prec: int = 0, payload: bool = False) -> str:
    match e:
        case Lit(bool() as b):
            return "true" if b else "false"
        case Lit(int() as v):
            return str(v)
        case Lit(SessionRef() as r):
            return print_ref(r)
        case Lit(Chan(name)):
            return name
        case Name(n, d):
            return f"~{n}" if d else n
        case Call("not", (a,)):
            s = f"not {print_expr(a, 6, payload)}"
            return f"({s})" if min_prec > 5 else s
        case Call(op, (a, b)) if op in _PREC:
            prec = _PREC[op]
            # comparisons are non-associative; payloads cannot contain a
            # bare > or >= (it would close the payload)
            if prec == 3:
                s = f"{print_expr(a, prec + 1, payload)} {op} {print_expr(b, prec + 1, payload)}"
                if payload and op in (">", ">="):
                    return f"({s})"
            else:
                s = f"{print_expr(a, prec, payload)} {op} {print_expr(b, prec + 1, payload)}"
            return f"({s})" if prec < min_prec else s
        case Call(op, args):
            return f"{op}({', '.join(print_expr(a) for a in args)})"
    raise AssertionError(e)


def _pp(p: Process) -> str:
    """prefix-level rendering: parallel children get parenthesized"""
    if isinstance(p, Par):
        return f"({_pp_par(p)})"
    return _pp_par(p)


def _pp_par(p: Process) -> str:
    match p:
        case Inact():
            return "0"
        case Par(l, r):
            left = f"({_pp_par(l)})" if isinstance(l, Par) else _pp_par(l)
            return f"{left} | {_pp_par(r)}"
        case Request(c, x, b):
            return f"req {c}({x}). {_pp(b)}"
        case Accept(c, x, b):
            return f"acc {c}({x}). {_pp(b)}"
        case MRequest(c, n, x, b):
            return f"mreq {c}[{n}]({x}). {_pp(b)}"
        case MAccept(c, r0, x, b):
            return f"macc {c}[{r0}]({x}). {_pp(b)}"
        case Send(k, e, b):
            return f"snd {print_ref(k)}<{print_expr(e, payload=True)}>. {_pp(b)}"
        case MSend(k, pr, e, b):
            return f"snd {print_ref(k)}[{pr}]<{print_expr(e, payload=True)}>. {_pp(b)}"
        case Receive(k, x, b):
            return f"rcv {print_ref(k)}({x}). {_pp(b)}"
        case MReceive(k, pr, x, b):
            return f"rcv {print_ref(k)}[{pr}]({x}). {_pp(b)}"
        case Select(k, l, b):
            return f"sel {print_ref(k)} {l}. {_pp(b)}"
        case MSelect(k, pr, l, b):
            return f"sel {print_ref(k)}[{pr}] {l}. {_pp(b)}"
        case Branch(k, bs):
            inner = ", ".join(f"{l}: {_pp_par(b)}" for l, b in bs)
            return f"bra {print_ref(k)} {{{inner}}}"
        case MBranch(k, pr, bs):
            inner = ", ".join(f"{l}: {_pp_par(b)}" for l, b in bs)
            return f"bra {print_ref(k)}[{pr}] {{{inner}}}"
        case Commit(k, b):
            return f"commit {print_ref(k)}. {_pp(b)}"
        case If(e, t, f):
            return f"if {print_expr(e)} then {_pp(t)} else {_pp(f)}"
        case Restrict(c, b):
            return f"new {c}. {_pp(b)}"
        case Rec(x, b):
            return f"rec {x}. {_pp(b)}"
        case RecVar(x):
            return x
    raise AssertionError(p)


def print_process(p: Process) -> str:
    return _pp_par(p)


def print_sort(s: Sort) -> str:
    from .types import sort_str

    return sort_str(s)


def print_type(t: SessionType) -> str:
    from .types import type_str

    return type_str(t)
