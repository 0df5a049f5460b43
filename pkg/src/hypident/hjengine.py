"""Termwise-integration engine for series of the form g(n) x^(pn+q) prod (1-x^r)^(un+v).

A series is decomposed into a :class:`TermPattern`; each :class:`TransformRule`
rewrites the pattern the way integrating both sides of an identity rewrites
its summand.  ``derive_chain`` folds a list of rules over a seed series.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import numkernel as nk
from .errors import DomainError, PatternError, RuleError, UsageError
from .exprdsl import (
    BinOp, Call, Const, Expr, Neg, Num, Var, compile_expr, evaluate, free_vars,
    is_exact_rational, num, parse, substitute,
)
from .hyper import SeriesSpec
from .numkernel import EvalContext


@dataclass(frozen=True)
class LinForm:
    """p*n + q with exact rational coefficients."""
    p: Fraction
    q: Fraction

    def __post_init__(self):
        object.__setattr__(self, "p", Fraction(self.p))
        object.__setattr__(self, "q", Fraction(self.q))

    def __add__(self, other):
        if not isinstance(other, LinForm):
            other = LinForm(0, other)
        return LinForm(self.p + other.p, self.q + other.q)

    def scale(self, k) -> "LinForm":
        k = Fraction(k)
        return LinForm(self.p * k, self.q * k)

    def at(self, n) -> Fraction:
        return self.p * n + self.q

    def is_zero(self) -> bool:
        return self.p == 0 and self.q == 0

    def integral_valued(self) -> bool:
        return self.p.denominator == 1 and self.q.denominator == 1

    def positive_from(self, n0: int) -> bool:
        """True when p*n + q > 0 for every integer n >= n0."""
        return self.p >= 0 and self.at(n0) > 0

    def to_expr(self, var: str = "n") -> Expr:
        if self.p == 0:
            return num(self.q)
        lead = Var(var) if self.p == 1 else BinOp("*", num(self.p), Var(var))
        if self.p == -1:
            lead = Neg(Var(var))
        if self.q == 0:
            return lead
        if self.q > 0:
            return BinOp("+", lead, Num(self.q))
        return BinOp("-", lead, Num(-self.q))

    def __str__(self):
        return str(self.to_expr())


@dataclass(frozen=True)
class Factor:
    """(1 - x^r)^outer."""
    r: int
    outer: LinForm


@dataclass(frozen=True)
class TermPattern:
    coeff: Expr
    xpow: LinForm
    factors: tuple = ()
    var: str = "x"
    index: str = "n"

    def to_expr(self) -> Expr:
        x = Var(self.var)
        out = self.coeff
        if not self.xpow.is_zero():
            out = BinOp("*", out, BinOp("^", x, _exponent(self.xpow, self.index)))
        for f in self.factors:
            base = BinOp("-", Num(Fraction(1)), x if f.r == 1 else BinOp("^", x, Num(Fraction(f.r))))
            out = BinOp("*", out, BinOp("^", base, _exponent(f.outer, self.index)))
        return out


def _exponent(lf: LinForm, index: str) -> Expr:
    return lf.to_expr(index)


# pattern extraction ---------------------------------------------------------

def _linform(e: Expr, index: str) -> LinForm | None:
    fv = free_vars(e)
    if fv - {index}:
        return None
    vals = []
    for n in (0, 1, 2, 3, 7):
        v = is_exact_rational(e, {index: Fraction(n)})
        if v is None:
            return None
        vals.append(v)
    p = vals[1] - vals[0]
    lf = LinForm(p, vals[0])
    if any(lf.at(n) != v for n, v in zip((0, 1, 2, 3, 7), vals)):
        return None
    return lf


def _one_minus_xr(e: Expr, var: str) -> int | None:
    """r when ``e`` is 1 - x^r with r a positive integer."""
    if not (isinstance(e, BinOp) and e.op == "-" and e.left == Num(Fraction(1))):
        return None
    t = e.right
    if t == Var(var):
        return 1
    if isinstance(t, BinOp) and t.op == "^" and t.left == Var(var) and isinstance(t.right, Num):
        r = t.right.value
        if r.denominator == 1 and r > 0:
            return int(r)
    return None


class _Collector:
    def __init__(self, var: str, index: str):
        self.var = var
        self.index = index
        self.num: list[Expr] = []
        self.den: list[Expr] = []
        self.sign = 1
        self.xpow = LinForm(0, 0)
        self.factors: dict[int, LinForm] = {}

    def fail(self, node: Expr):
        raise PatternError(f"not a monomial pattern in {self.var}: {node}")

    def add(self, node: Expr, k: Fraction, exp: LinForm | None = None):
        """Record node^(k * exp) where exp defaults to 1."""
        exp = exp if exp is not None else LinForm(0, 1)
        scaled = exp.scale(k)
        if self.var not in free_vars(node):
            if scaled == LinForm(0, 1):
                self.num.append(node)
            elif scaled == LinForm(0, -1):
                self.den.append(node)
            elif scaled.p == 0 and scaled.q < 0:
                self.den.append(BinOp("^", node, num(-scaled.q)))
            else:
                self.num.append(BinOp("^", node, scaled.to_expr(self.index)))
            return
        if isinstance(node, Var):
            self.xpow = self.xpow + scaled
            return
        if isinstance(node, Neg):
            if exp != LinForm(0, 1) or k.denominator != 1:
                self.fail(node)
            if k.numerator % 2:
                self.sign = -self.sign
            self.add(node.arg, k)
            return
        if isinstance(node, BinOp):
            if node.op == "*":
                self.add(node.left, k, exp)
                self.add(node.right, k, exp)
                return
            if node.op == "/":
                self.add(node.left, k, exp)
                self.add(node.right, -k, exp)
                return
            if node.op == "^":
                inner = _linform(node.right, self.index)
                if inner is None:
                    self.fail(node)
                if exp == LinForm(0, 1):
                    combined = inner
                elif inner.p == 0:
                    combined = exp.scale(inner.q)
                else:
                    self.fail(node)
                r = _one_minus_xr(node.left, self.var)
                if r is not None:
                    prev = self.factors.get(r, LinForm(0, 0))
                    self.factors[r] = prev + combined.scale(k)
                    return
                self.add(node.left, k, combined)
                return
            r = _one_minus_xr(node, self.var)
            if r is not None:
                prev = self.factors.get(r, LinForm(0, 0))
                self.factors[r] = prev + scaled
                return
        self.fail(node)


def _product(nodes: list) -> Expr:
    out: Expr | None = None
    for node in nodes:
        out = node if out is None else BinOp("*", out, node)
    return out if out is not None else Num(Fraction(1))


def pattern_of(term: Expr, var: str = "x", index: str = "n") -> TermPattern:
    """Split a summand into coeff(n) * x^(pn+q) * prod (1-x^r)^(un+v)."""
    if isinstance(term, str):
        term = parse(term)
    col = _Collector(var, index)
    col.add(term, Fraction(1))
    coeff = _product(col.num)
    if col.den:
        coeff = BinOp("/", coeff, _product(col.den))
    if col.sign < 0:
        coeff = Neg(coeff)
    factors = tuple(Factor(r, lf) for r, lf in sorted(col.factors.items()) if not lf.is_zero())
    return TermPattern(coeff, col.xpow, factors, var, index)


# rules ----------------------------------------------------------------------

RULE_KINDS = ("beta_01", "wallis", "x_sin_pi", "integrate_0x", "multiply_xpow", "substitute_x_sq")

_RULE_RE = re.compile(r"^\s*([a-z_0-9]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


@dataclass(frozen=True)
class TransformRule:
    kind: str
    k: Fraction | None = None

    @classmethod
    def parse(cls, text: str) -> "TransformRule":
        m = _RULE_RE.match(text)
        if not m or m.group(1) not in RULE_KINDS:
            raise UsageError(f"unknown transform rule {text!r}")
        kind, arg = m.group(1), m.group(2)
        if kind == "multiply_xpow":
            if arg is None or arg == "":
                raise UsageError("multiply_xpow needs an exponent, e.g. multiply_xpow(1)")
            try:
                return cls(kind, Fraction(arg.replace(" ", "")))
            except ValueError:
                raise UsageError(f"bad exponent in {text!r}") from None
        if arg:
            raise UsageError(f"rule {kind} takes no argument")
        return cls(kind)

    def __str__(self):
        return f"{self.kind}({self.k})" if self.kind == "multiply_xpow" else self.kind


def _mul(a: Expr, b: Expr) -> Expr:
    if a == Num(Fraction(1)):
        return b
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    return BinOp("/", a, b)


def _gamma(e: Expr) -> Expr:
    return Call("gamma", (e,))


def beta_factor(u: LinForm, c: LinForm, index: str = "n") -> Expr:
    """B(u, c+1) = gamma(u) gamma(c+1) / gamma(u+c+1) as an expression in n.

    Uses the exact rising-factorial form when c or u-1 is integer valued.
    """
    if c.integral_valued():
        # c! / (u)_(c+1)
        return _div(Call("fact", (c.to_expr(index),)),
                    Call("pochhammer", (u.to_expr(index), (c + 1).to_expr(index))))
    if (u + (-1)).integral_valued():
        return _div(Call("fact", ((u + (-1)).to_expr(index),)),
                    Call("pochhammer", ((c + 1).to_expr(index), u.to_expr(index))))
    return _div(BinOp("*", _gamma(u.to_expr(index)), _gamma((c + 1).to_expr(index))),
                _gamma((u + c + 1).to_expr(index)))


def apply_rule(pat: TermPattern, rule: TransformRule, start: int = 0) -> TermPattern:
    """One rewrite step; ``start`` is the first summation index (for domain checks)."""
    idx = pat.index
    if rule.kind == "integrate_0x":
        if pat.factors:
            raise RuleError("integrate_0x needs a pure monomial in x")
        a1 = pat.xpow + 1
        if not a1.positive_from(start):
            raise RuleError(f"integrate_0x: exponent {pat.xpow} + 1 not positive for n >= {start}")
        return TermPattern(_div(pat.coeff, a1.to_expr(idx)), a1, (), pat.var, idx)

    if rule.kind == "multiply_xpow":
        return TermPattern(pat.coeff, pat.xpow + rule.k, pat.factors, pat.var, idx)

    if rule.kind == "substitute_x_sq":
        return TermPattern(pat.coeff, pat.xpow.scale(2),
                           tuple(Factor(2 * f.r, f.outer) for f in pat.factors), pat.var, idx)

    if rule.kind == "beta_01":
        if len(pat.factors) > 1:
            raise RuleError("beta_01 needs at most one (1-x^r) factor")
        r, c = (pat.factors[0].r, pat.factors[0].outer) if pat.factors else (1, LinForm(0, 0))
        a1 = pat.xpow + 1
        if not a1.positive_from(start) or not (c + 1).positive_from(start):
            raise RuleError("beta_01: integral diverges at an endpoint for some n")
        u = a1.scale(Fraction(1, r))
        factor = beta_factor(u, c, idx)
        if r != 1:
            factor = _div(factor, Num(Fraction(r)))
        return TermPattern(_mul(pat.coeff, factor), LinForm(0, 0), (), pat.var, idx)

    if rule.kind == "wallis":
        # x -> sin t, integrate over [0, pi/2]
        m = pat.xpow.scale(Fraction(1, 2))
        if not pat.factors:
            if not m.integral_valued():
                raise RuleError("wallis needs an even power of x")
            if not (m + 1).positive_from(start):
                raise RuleError("wallis: negative power of sin t")
            factor = _div(BinOp("*", BinOp("/", Const("pi"), Num(Fraction(2))),
                                Call("pochhammer", (Num(Fraction(1, 2)), m.to_expr(idx)))),
                          Call("fact", (m.to_expr(idx),)))
            return TermPattern(_mul(pat.coeff, factor), LinForm(0, 0), (), pat.var, idx)
        if len(pat.factors) == 1 and pat.factors[0].r == 2:
            # sin^(2m) t cos^(2c) t over [0, pi/2] = B(m+1/2, c+1/2)/2
            c = pat.factors[0].outer
            u = m + Fraction(1, 2)
            cc = c + Fraction(-1, 2)
            if not u.positive_from(start) or not (cc + 1).positive_from(start):
                raise RuleError("wallis: integral diverges at an endpoint for some n")
            factor = _div(beta_factor(u, cc, idx), Num(Fraction(2)))
            return TermPattern(_mul(pat.coeff, factor), LinForm(0, 0), (), pat.var, idx)
        raise RuleError("wallis applies to x^(2m) or x^(2m)(1-x^2)^c only")

    if rule.kind == "x_sin_pi":
        # x -> sin t, then integrate t * (...) over [0, pi]
        if pat.factors:
            raise RuleError("x_sin_pi needs a pure monomial in x")
        m = pat.xpow
        if not (m + 1).positive_from(start):
            raise RuleError("x_sin_pi: power of sin t must exceed -1")
        half = m.scale(Fraction(1, 2))
        factor = _div(BinOp("*", BinOp("^", Const("pi"), Num(Fraction(3, 2))),
                            _gamma((half + Fraction(1, 2)).to_expr(idx))),
                      BinOp("*", Num(Fraction(2)), _gamma((half + 1).to_expr(idx))))
        return TermPattern(_mul(pat.coeff, factor), LinForm(0, 0), (), pat.var, idx)

    raise RuleError(f"unknown rule {rule.kind}")


def rule_factor(pat_in: TermPattern, rule: TransformRule, n: int) -> Expr:
    """The n-specific multiplier a rule applies to the coefficient."""
    out = apply_rule(TermPattern(Num(Fraction(1)), pat_in.xpow, pat_in.factors,
                                 pat_in.var, pat_in.index), rule)
    return substitute(out.coeff, {pat_in.index: num(n)})


def derive_chain(seed: SeriesSpec, chain: Sequence, x: str = "x",
                 bindings: Mapping | None = None) -> SeriesSpec:
    """Apply ``chain`` (rules or rule strings) to ``seed``; errors name the step."""
    term = seed.term
    if bindings:
        term = substitute(term, {k: num(v) for k, v in bindings.items()})
    try:
        pat = pattern_of(term, x, seed.var)
    except PatternError as exc:
        raise RuleError(f"seed is outside the pattern language: {exc}", 0) from None
    for i, step in enumerate(chain, start=1):
        try:
            rule = step if isinstance(step, TransformRule) else TransformRule.parse(step)
            pat = apply_rule(pat, rule, seed.start)
        except (RuleError, UsageError) as exc:
            msg = exc.args[0] if isinstance(exc, RuleError) else str(exc)
            raise RuleError(msg, i) from None
    return SeriesSpec(seed.start, pat.to_expr(), seed.var, pat)


def compare_termwise(
    a: SeriesSpec,
    b: SeriesSpec,
    n_range: Iterable[int],
    samples: Sequence[Mapping],
    ctx: EvalContext,
):
    """Largest relative difference between corresponding terms."""
    mp = ctx.mp
    fa = compile_expr(a.term, ctx)
    fb = compile_expr(b.term, ctx)
    worst = mp.mpf(0)
    for sample in samples or [{}]:
        env = {k: Fraction(v) if isinstance(v, int) else v for k, v in sample.items()}
        for n in n_range:
            env[a.var] = Fraction(n)
            env[b.var] = Fraction(n)
            try:
                va = nk.lift(fa(env), ctx)
                vb = nk.lift(fb(env), ctx)
            except (DomainError, ZeroDivisionError, UsageError) as exc:
                raise DomainError(f"term evaluation failed at n={n}, {sample}: {exc}") from None
            scale = max(abs(va), abs(vb))
            if scale == 0:
                continue
            worst = max(worst, abs(va - vb) / scale)
    return worst


def digits_of(rel, ctx: EvalContext) -> int:
    """floor(-log10(rel)), capped at the context target."""
    if rel == 0:
        return ctx.target_digits
    d = int(ctx.mp.floor(-ctx.mp.log10(rel)))
    return min(d, ctx.target_digits)


# least-squares-free linear fit ---------------------------------------------

@dataclass
class FitResult:
    coefficients: list
    rational: list
    residual: object
    samples: list = field(default_factory=list)


def fit_linear_combination(
    target,
    known,
    basis: Sequence,
    xs: Sequence,
    ctx: EvalContext,
    max_denominator: int = 10**6,
) -> FitResult:
    """Solve target(x) = known(x) + sum c_j basis_j(x) at len(basis) points.

    ``target``, ``known`` and each basis entry are callables of one mpmath
    number.  The recovered coefficients are also rounded to nearby rationals;
    ``residual`` is the largest relative disagreement of the rounded fit at the
    midpoints between consecutive sample abscissas.
    """
    mp = ctx.mp
    if len(xs) != len(basis):
        raise UsageError("need exactly one sample point per basis function")
    rows = []
    rhs = []
    for x in xs:
        xv = nk.lift(x, ctx)
        rows.append([b(xv) for b in basis])
        rhs.append(target(xv) - known(xv))
    sol = mp.lu_solve(mp.matrix(rows), mp.matrix(rhs))
    coeffs = [sol[i] for i in range(len(basis))]
    rational = []
    for c in coeffs:
        q = Fraction(str(mp.nstr(c, ctx.working_digits))).limit_denominator(max_denominator)
        rational.append(q)
    resid = mp.mpf(0)
    pts = [nk.lift(x, ctx) for x in xs]
    for lo, hi in zip(pts, pts[1:]):
        xm = (lo + hi) / 2
        fit = known(xm) + sum(nk.lift(q, ctx) * b(xm) for q, b in zip(rational, basis))
        tv = target(xm)
        resid = max(resid, abs(fit - tv) / abs(tv))
    return FitResult(coeffs, rational, resid, list(xs))
