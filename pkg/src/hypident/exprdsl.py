"""Expression language shared by series terms, integrands and closed forms.

Grammar (see ``docs/grammar.md`` for the normative EBNF)::

    expr    = term { ("+" | "-") term }
    term    = unary { ("*" | "/") unary }
    unary   = ("-" | "+") unary | power
    power   = primary [ "^" unary ]
    primary = number | name | name "(" [ expr { "," expr } ] ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-2^2``
is ``-(2^2)``.  An integer literal divided by an integer literal is folded
into one exact rational literal, so ``1/2`` parses to ``Num(1/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping

from . import numkernel as nk
from .errors import ConvergenceError, DomainError, ParseError, UsageError
from .numkernel import EvalContext


# AST ------------------------------------------------------------------------

class Expr:
    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))
        if self.value < 0:
            raise ValueError("Num holds non-negative values; wrap in Neg")


@dataclass(frozen=True, slots=True)
class Const(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Call(Expr):
    name: str
    args: tuple


def num(q) -> Expr:
    """Literal for any rational, negative values wrapped in ``Neg``."""
    q = Fraction(q)
    return Neg(Num(-q)) if q < 0 else Num(q)


# function table: name -> (min arity, max arity)
_ELEM = {name: (1, 1) for name in nk.ELEMENTARY_NAMES}
FUNCTIONS: dict[str, tuple[int, int]] = {
    **_ELEM,
    "log": (1, 1),
    "fact": (1, 1),
    "dfact": (1, 1),
    "binom": (2, 2),
    "pochhammer": (2, 2),
    "harmonic": (1, 1),
    "altharmonic": (1, 1),
    "gamma": (1, 1),
    "digamma": (1, 1),
    "zeta": (1, 1),
    "polylog": (2, 2),
    "lerch": (3, 3),
    "re": (1, 1),
    "im": (1, 1),
    "abs": (1, 1),
    "sum": (4, 4),
    "hyp2f1": (4, 4),
    "hyp3f2": (6, 6),
}


# lexer ----------------------------------------------------------------------

_OPS = set("+-*/^(),")


def _byte_offset(text: str, i: int) -> int:
    return len(text[:i].encode("utf-8"))


def _tokenize(text: str):
    toks = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            toks.append(("num", text[i:j], i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("name", text[i:j], i))
            i = j
        elif c in _OPS:
            toks.append(("op", c, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {c!r}", _byte_offset(text, i), text)
    toks.append(("end", "", n))
    return toks


# parser ---------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def advance(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, _byte_offset(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != value:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            self.error(f"expected {value!r}, found {what}")
        return self.advance()

    def parse(self) -> Expr:
        e, _ = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(f"unexpected {tok[1]!r}")
        return e

    def expr(self):
        left, bare = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            right, _ = self.term()
            left, bare = BinOp(op, left, right), False
        return left, bare

    def term(self):
        left, bare = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            right, rbare = self.unary()
            if op == "/" and bare and rbare:
                if right.value == 0:
                    left = BinOp("/", left, right)
                else:
                    left = Num(left.value / right.value)
            else:
                left = BinOp(op, left, right)
            bare = False
        return left, bare

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.advance()
            arg, _ = self.unary()
            return (Neg(arg) if tok[1] == "-" else arg), False
        return self.power()

    def power(self):
        base, bare = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            expo, _ = self.unary()
            return BinOp("^", base, expo), False
        return base, bare

    def primary(self):
        tok = self.peek()
        kind, val, _ = tok
        if kind == "num":
            self.advance()
            if "." in val:
                whole, frac = val.split(".")
                q = Fraction(int(whole or "0") * 10 ** len(frac) + int(frac or "0"), 10 ** len(frac))
                return Num(q), False
            return Num(Fraction(int(val))), True
        if kind == "name":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                return self.call(tok), False
            if val in FUNCTIONS:
                self.error(f"function {val!r} used without arguments", tok)
            if val in nk.CONSTANTS:
                return Const(val), False
            return Var(val), False
        if kind == "op" and val == "(":
            self.advance()
            e, _ = self.expr()
            self.expect(")")
            return e, False
        if kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected {val!r}")

    def call(self, name_tok):
        name = name_tok[1]
        if name not in FUNCTIONS:
            self.error(f"unknown function {name!r}", name_tok)
        self.expect("(")
        args = []
        if not (self.peek()[0] == "op" and self.peek()[1] == ")"):
            args.append(self.expr()[0])
            while self.peek()[0] == "op" and self.peek()[1] == ",":
                self.advance()
                args.append(self.expr()[0])
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if not lo <= len(args) <= hi:
            self.error(f"{name} takes {lo} argument(s), got {len(args)}", name_tok)
        if name == "sum" and not isinstance(args[1], Var):
            self.error("sum needs a variable name as its second argument", name_tok)
        return Call(name, tuple(args))


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# printer --------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Num) and e.value.denominator != 1:
        return 2
    return 5


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_text(e)
    return f"({s})" if _prec(e) < min_prec else s


def _is_int_num(e: Expr) -> bool:
    return isinstance(e, Num) and e.value.denominator == 1


def to_text(e: Expr) -> str:
    """Canonical text; ``parse(to_text(e)) == e``."""
    if isinstance(e, Num):
        v = e.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(e, (Const, Var)):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, 3)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            left = _wrap(e.left, 5)
            right = _wrap(e.right, 4) if not isinstance(e.right, Neg) else f"({to_text(e.right)})"
            return f"{left}^{right}"
        left = _wrap(e.left, p)
        if e.op == "/" and _is_int_num(e.left) and _is_int_num(e.right):
            left = f"({left})"
        right = _wrap(e.right, p + 1)
        if isinstance(e.right, Neg):
            right = f"({to_text(e.right)})"
        sep = f" {e.op} " if p == 1 else e.op
        return f"{left}{sep}{right}"
    if isinstance(e, Call):
        return f"{e.name}(" + ", ".join(to_text(a) for a in e.args) + ")"
    raise TypeError(f"not an Expr: {e!r}")


# analysis -------------------------------------------------------------------

def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Num, Const)):
        return set()
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Call):
        if e.name == "sum":
            term, var, lo, hi = e.args
            return (free_vars(term) - {var.name}) | free_vars(lo) | free_vars(hi)
        out: set[str] = set()
        for a in e.args:
            out |= free_vars(a)
        return out
    raise TypeError(f"not an Expr: {e!r}")


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace free variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (Num, Const)):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        if e.name == "sum":
            inner = {k: v for k, v in mapping.items() if k != e.args[1].name}
            term, var, lo, hi = e.args
            return Call("sum", (substitute(term, inner), var, substitute(lo, mapping), substitute(hi, mapping)))
        return Call(e.name, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(f"not an Expr: {e!r}")


# evaluation -----------------------------------------------------------------

def _exact(v) -> bool:
    return isinstance(v, Fraction)


def _as_int(v, what: str) -> int:
    if isinstance(v, Fraction) and v.denominator == 1:
        return int(v)
    raise DomainError(f"{what} needs an integer argument")


def _add(a, b, ctx):
    if _exact(a) and _exact(b):
        return a + b
    return nk.lift(a, ctx) + nk.lift(b, ctx)


def _sub(a, b, ctx):
    if _exact(a) and _exact(b):
        return a - b
    return nk.lift(a, ctx) - nk.lift(b, ctx)


def _mul(a, b, ctx):
    if _exact(a) and _exact(b):
        return a * b
    return nk.lift(a, ctx) * nk.lift(b, ctx)


def _div(a, b, ctx):
    if b == 0:
        raise DomainError("division by zero")
    if _exact(a) and _exact(b):
        return a / b
    return nk.lift(a, ctx) / nk.lift(b, ctx)


def _pow(a, b, ctx):
    if _exact(b) and b.denominator == 1:
        k = int(b)
        if _exact(a):
            if a == 0 and k < 0:
                raise DomainError("zero raised to a negative power")
            if abs(k) <= 100_000:
                return a**k
        return nk.complex_pow(a, b, ctx)
    return nk.complex_pow(a, b, ctx)


@lru_cache(maxsize=4096)
def _harmonic(n: int) -> Fraction:
    return sum((Fraction(1, j) for j in range(1, n + 1)), Fraction(0))


@lru_cache(maxsize=4096)
def _altharmonic(n: int) -> Fraction:
    return sum((Fraction((-1) ** (j + 1), j) for j in range(1, n + 1)), Fraction(0))


def _dfact(n: int) -> int:
    if n < -1:
        raise DomainError("dfact needs an argument >= -1")
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _rising_exact(a: Fraction, k: int) -> Fraction:
    out = Fraction(1)
    for j in range(k):
        out *= a + j
    return out


def _fn_fact(args, ctx):
    (x,) = args
    if _exact(x) and x.denominator == 1:
        if x < 0:
            raise DomainError("factorial of a negative integer")
        return Fraction(math.factorial(int(x)))
    return nk.gamma(_add(x, Fraction(1), ctx), ctx)


def _fn_dfact(args, ctx):
    (x,) = args
    return Fraction(_dfact(_as_int(x, "dfact")))


def _fn_binom(args, ctx):
    a, b = args
    if _exact(b) and b.denominator == 1:
        k = int(b)
        if k < 0:
            return Fraction(0)
        if _exact(a):
            return _rising_exact(a - k + 1, k) / math.factorial(k)
        out = nk.lift(1, ctx)
        for j in range(k):
            out *= nk.lift(a, ctx) - j
        return out / math.factorial(k)
    one = Fraction(1)
    return _div(
        nk.gamma(_add(a, one, ctx), ctx),
        _mul(nk.gamma(_add(b, one, ctx), ctx), nk.gamma(_add(_sub(a, b, ctx), one, ctx), ctx), ctx),
        ctx,
    )


def _fn_pochhammer(args, ctx):
    a, n = args
    if _exact(n) and n.denominator == 1 and n >= 0:
        k = int(n)
        if _exact(a):
            return _rising_exact(a, k)
        if k <= 10_000:
            out = nk.lift(1, ctx)
            base = nk.lift(a, ctx)
            for j in range(k):
                out *= base + j
            return out
    return _div(nk.gamma(_add(a, n, ctx), ctx), nk.gamma(a, ctx), ctx)


def _fn_harmonic(args, ctx):
    n = _as_int(args[0], "harmonic")
    if n < 0:
        raise DomainError("harmonic needs a non-negative integer")
    return _harmonic(n)


def _fn_altharmonic(args, ctx):
    n = _as_int(args[0], "altharmonic")
    if n < 0:
        raise DomainError("altharmonic needs a non-negative integer")
    return _altharmonic(n)


def _fn_gamma(args, ctx):
    (x,) = args
    if _exact(x) and x.denominator == 1 and x > 0:
        return Fraction(math.factorial(int(x) - 1))
    return nk.gamma(x, ctx)


def _fn_zeta(args, ctx):
    return nk.zeta_int(_as_int(args[0], "zeta"), ctx)


def _fn_polylog(args, ctx):
    return nk.polylog(_as_int(args[0], "polylog"), args[1], ctx)


def _fn_lerch(args, ctx):
    z, s, a = args
    return nk.lerch_phi(z, _as_int(s, "lerch"), a, ctx)


def _fn_re(args, ctx):
    (x,) = args
    if _exact(x):
        return x
    x = nk.lift(x, ctx)
    return x.real if isinstance(x, ctx.mp.mpc) else x


def _fn_im(args, ctx):
    (x,) = args
    if _exact(x):
        return Fraction(0)
    x = nk.lift(x, ctx)
    return x.imag if isinstance(x, ctx.mp.mpc) else ctx.mp.mpf(0)


def _fn_abs(args, ctx):
    (x,) = args
    if _exact(x):
        return abs(x)
    return abs(nk.lift(x, ctx))


def _rational_params(vals, name):
    out = []
    for v in vals:
        if not _exact(v):
            raise DomainError(f"{name} parameters must be exact rationals")
        out.append(v)
    return out


def _fn_hyp(p):
    def f(args, ctx):
        from .hyper import pfq_value

        tops = _rational_params(args[:p], "hypergeometric")
        bottoms = _rational_params(args[p:-1], "hypergeometric")
        return pfq_value(tops, bottoms, args[-1], ctx)
    return f


_NUMERIC = {
    "digamma": lambda args, ctx: nk.digamma(args[0], ctx),
}

_FUNCS: dict[str, Callable] = {
    "fact": _fn_fact,
    "dfact": _fn_dfact,
    "binom": _fn_binom,
    "pochhammer": _fn_pochhammer,
    "harmonic": _fn_harmonic,
    "altharmonic": _fn_altharmonic,
    "gamma": _fn_gamma,
    "zeta": _fn_zeta,
    "polylog": _fn_polylog,
    "lerch": _fn_lerch,
    "re": _fn_re,
    "im": _fn_im,
    "abs": _fn_abs,
    "hyp2f1": _fn_hyp(2),
    "hyp3f2": _fn_hyp(3),
    **_NUMERIC,
}


def _elem(name):
    def f(args, ctx):
        return nk.elementary(name, args[0], ctx)
    return f


for _name in nk.ELEMENTARY_NAMES:
    _FUNCS[_name] = _elem(_name)
_FUNCS["log"] = _elem("ln")


def _normalize_binding(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int) and not isinstance(v, bool):
        return Fraction(v)
    if isinstance(v, float):
        raise UsageError("float bindings are not accepted; use Fraction or mpmath values")
    return v


Compiled = Callable[[dict], object]


def compile_expr(e: Expr, ctx: EvalContext) -> Compiled:
    """Closure evaluating ``e`` for a bindings dict; closed subtrees fold once."""
    fv_cache: dict[int, set] = {}

    def fv(node):
        key = id(node)
        if key not in fv_cache:
            fv_cache[key] = free_vars(node)
        return fv_cache[key]

    def build(node) -> Compiled:
        if not fv(node) and not isinstance(node, Num):
            fn = build_raw(node)
            value = fn({})
            return lambda env: value
        return build_raw(node)

    def build_raw(node) -> Compiled:
        if isinstance(node, Num):
            v = node.value
            return lambda env: v
        if isinstance(node, Const):
            v = nk.const_value(node.name, ctx)
            return lambda env: v
        if isinstance(node, Var):
            name = node.name

            def var(env):
                try:
                    return env[name]
                except KeyError:
                    raise UsageError(f"unbound variable {name!r}") from None
            return var
        if isinstance(node, Neg):
            a = build(node.arg)
            return lambda env: -a(env)
        if isinstance(node, BinOp):
            a = build(node.left)
            b = build(node.right)
            op = {"+": _add, "-": _sub, "*": _mul, "/": _div, "^": _pow}[node.op]
            return lambda env: op(a(env), b(env), ctx)
        if isinstance(node, Call):
            if node.name == "sum":
                return build_sum(node)
            impl = _FUNCS[node.name]
            parts = [build(a) for a in node.args]
            return lambda env: impl([p(env) for p in parts], ctx)
        raise TypeError(f"not an Expr: {node!r}")

    def build_sum(node) -> Compiled:
        term, var, lo, hi = node.args
        t = build(term)
        lo_f = build(lo)
        hi_f = build(hi)
        name = var.name

        def total(env):
            a = _as_int(lo_f(env), "sum bound")
            b = _as_int(hi_f(env), "sum bound")
            acc = Fraction(0)
            inner = dict(env)
            for k in range(a, b + 1):
                inner[name] = Fraction(k)
                acc = _add(acc, t(inner), ctx)
            return acc
        return total

    return build(e)


def evaluate_raw(e: Expr, bindings: Mapping | None, ctx: EvalContext):
    """Evaluate keeping exact rationals exact (Fraction, mpf or mpc result)."""
    env = {k: _normalize_binding(v) for k, v in (bindings or {}).items()}
    missing = free_vars(e) - set(env)
    if missing:
        raise UsageError(f"unbound variable(s): {', '.join(sorted(missing))}")
    return compile_expr(e, ctx)(env)


def evaluate(e: Expr, bindings: Mapping | None, ctx: EvalContext):
    """Evaluate to an mpmath number at the context's working precision."""
    v = evaluate_raw(e, bindings, ctx)
    v = nk.lift(v, ctx)
    return nk.check_finite(v, ctx, "expression value")


def evaluate_text(text: str, bindings: Mapping | None, ctx: EvalContext):
    return evaluate(parse(text), bindings, ctx)


def is_exact_rational(e: Expr, bindings: Mapping | None = None) -> Fraction | None:
    """Exact rational value of ``e`` if it evaluates without leaving Q."""
    ctx = _EXACT_PROBE_CTX
    try:
        v = evaluate_raw(e, bindings, ctx)
    except (DomainError, UsageError, ConvergenceError):
        return None
    return v if isinstance(v, Fraction) else None


_EXACT_PROBE_CTX = EvalContext(15)
