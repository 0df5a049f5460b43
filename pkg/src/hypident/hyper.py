"""Series summation: pFq with convergence classes, DSL-term series, acceleration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

from . import numkernel as nk
from .errors import ConvergenceError, DivergentError, DomainError, UsageError
from .exprdsl import Expr, compile_expr, evaluate, free_vars, is_exact_rational, num
from .numkernel import EvalContext

MAX_TERMS = 10**6
PROBE_WINDOW = 32


@dataclass(frozen=True)
class PFQSpec:
    tops: tuple
    bottoms: tuple
    z: Expr

    def __post_init__(self):
        object.__setattr__(self, "tops", tuple(Fraction(a) for a in self.tops))
        object.__setattr__(self, "bottoms", tuple(Fraction(b) for b in self.bottoms))
        if not isinstance(self.z, Expr):
            object.__setattr__(self, "z", num(self.z))
        _check_bottoms(self.tops, self.bottoms)

    @property
    def p(self) -> int:
        return len(self.tops)

    @property
    def q(self) -> int:
        return len(self.bottoms)


@dataclass(frozen=True)
class SeriesSpec:
    start: int
    term: Expr
    var: str = "n"
    pattern: object = None


@dataclass(frozen=True)
class ConvergenceClass:
    kind: str
    ratio: object = None
    exponent: Fraction | None = None

    def __str__(self):
        if self.kind == "geometric":
            return f"geometric({self.ratio})"
        if self.kind == "algebraic":
            return f"algebraic(s={self.exponent})"
        return self.kind


@dataclass
class SumResult:
    value: object
    achieved_digits: int
    terms_used: int
    method: str
    tail_bound: object = None
    exact: Fraction | None = field(default=None, repr=False)


def _terminating_order(tops) -> int | None:
    orders = [int(-a) for a in tops if a.denominator == 1 and a <= 0]
    return min(orders) if orders else None


def _check_bottoms(tops, bottoms):
    m = _terminating_order(tops)
    for b in bottoms:
        if b.denominator == 1 and b <= 0:
            if m is None or -b < m:
                raise DomainError(f"bottom parameter {b} hits a pole before the series terminates")


def _z_value(spec: PFQSpec, bindings: Mapping | None, ctx: EvalContext):
    exact = is_exact_rational(spec.z, bindings)
    if exact is not None:
        return exact
    return evaluate(spec.z, bindings, ctx)


def _classify_values(tops, bottoms, z) -> ConvergenceClass:
    p, q = len(tops), len(bottoms)
    if _terminating_order(tops) is not None or z == 0:
        return ConvergenceClass("terminating")
    if p <= q:
        return ConvergenceClass("geometric", ratio=0)
    if p > q + 1:
        return ConvergenceClass("divergent")
    az = abs(z)
    if az < 1:
        return ConvergenceClass("geometric", ratio=az)
    if az > 1:
        return ConvergenceClass("divergent")
    if z == 1:
        s = sum(bottoms) - sum(tops)
        if s <= 0:
            return ConvergenceClass("divergent", exponent=s)
        return ConvergenceClass("algebraic", exponent=s)
    return ConvergenceClass("boundary-unknown")


def pfq_classify(spec: PFQSpec, bindings: Mapping | None = None) -> ConvergenceClass:
    z = _z_value(spec, bindings, EvalContext(20))
    return _classify_values(spec.tops, spec.bottoms, z)


def _sum_terminating_exact(tops, bottoms, z: Fraction) -> Fraction:
    m = _terminating_order(tops)
    if m is None:
        m = 0
    total = Fraction(0)
    t = Fraction(1)
    for k in range(m + 1):
        total += t
        num_ = Fraction(1)
        for a in tops:
            num_ *= a + k
        den = Fraction(k + 1)
        for b in bottoms:
            den *= b + k
        if num_ == 0:
            break
        t = t * num_ * z / den
    return total


def _ratio_factor(tops, bottoms, k, z, mp):
    r = z / (k + 1)
    for a in tops:
        r *= a + k
    for b in bottoms:
        r /= b + k
    return r


def _sum_direct_pfq(tops, bottoms, z, ctx: EvalContext, limit) -> SumResult:
    mp = ctx.mp
    tops_m = [nk.lift(a, ctx) for a in tops]
    bottoms_m = [nk.lift(b, ctx) for b in bottoms]
    z = nk.lift(z, ctx)
    limit = nk.lift(limit, ctx)
    tol = mp.mpf(10) ** (-(ctx.target_digits + 3))
    turn = max([abs(float(v)) for v in list(tops) + list(bottoms)] + [0.0]) + 2
    t = mp.mpf(1)
    total = mp.mpf(0)
    biggest = mp.mpf(1)
    satisfied = 0
    tail = None
    for k in range(MAX_TERMS):
        total += t
        biggest = max(biggest, abs(t))
        nxt = t * _ratio_factor(tops_m, bottoms_m, k, z, mp)
        if nxt == 0:
            tail = mp.mpf(0)
            break
        if k > turn:
            rho = abs(nxt / t)
            rho2 = abs(_ratio_factor(tops_m, bottoms_m, k + 1, z, mp))
            r = max(rho, rho2, limit)
            if r < 1:
                tail = abs(nxt) / (1 - r)
                if tail <= tol * abs(total):
                    satisfied += 1
                    if satisfied >= 2:
                        total += nxt
                        break
                else:
                    satisfied = 0
        t = nxt
    else:
        raise ConvergenceError("pFq direct summation hit the iteration cap")
    return SumResult(
        value=total,
        achieved_digits=_rounding_digits(ctx, biggest, total),
        terms_used=k + 1,
        method="direct",
        tail_bound=tail,
    )


def _rounding_digits(ctx: EvalContext, biggest, total) -> int:
    """Digits surviving cancellation between the largest term and the sum."""
    if total == 0:
        return ctx.target_digits
    loss = max(0, math.ceil(float(ctx.mp.log10(biggest / abs(total)))))
    return max(0, min(ctx.target_digits, ctx.working_digits - loss - 2))


def _accel_context(ctx: EvalContext) -> EvalContext:
    # Levin-u loses roughly one digit per transform order, so the working
    # precision is about doubled
    return ctx.raised(ctx.working_digits + 10)


def _pfq_term_stream(tops, bottoms, z, wctx: EvalContext) -> Iterator:
    mp = wctx.mp
    tops_m = [nk.lift(a, wctx) for a in tops]
    bottoms_m = [nk.lift(b, wctx) for b in bottoms]
    z = nk.lift(z, wctx)
    t = mp.mpf(1)
    k = 0
    while True:
        yield t
        t = t * _ratio_factor(tops_m, bottoms_m, k, z, mp)
        k += 1


def _sum_pfq_values(tops, bottoms, z, ctx: EvalContext) -> SumResult:
    cls = _classify_values(tops, bottoms, z)
    if cls.kind == "terminating":
        if isinstance(z, Fraction):
            exact = _sum_terminating_exact(tops, bottoms, z)
            m = _terminating_order(tops) or 0
            return SumResult(nk.lift(exact, ctx), ctx.target_digits, m + 1, "direct", 0, exact)
        return _sum_direct_pfq(tops, bottoms, z, ctx, 0)
    if cls.kind == "geometric":
        return _sum_direct_pfq(tops, bottoms, z, ctx, cls.ratio)
    if cls.kind == "algebraic":
        wctx = _accel_context(ctx)
        res = accelerate(_pfq_term_stream(tops, bottoms, z, wctx), "levin_u", ctx, work_ctx=wctx)
        if res.achieved_digits < min(10, ctx.target_digits):
            raise ConvergenceError("acceleration failed to reach 10 digits")
        return res
    if cls.kind == "divergent":
        raise DivergentError(f"pFq series diverges ({cls})")
    raise ConvergenceError(f"pFq convergence undecided ({cls})")


def pfq_sum(spec: PFQSpec, ctx: EvalContext, bindings: Mapping | None = None) -> SumResult:
    z = _z_value(spec, bindings, ctx)
    return _sum_pfq_values(spec.tops, spec.bottoms, z, ctx)


def pfq_value(tops, bottoms, z, ctx: EvalContext):
    """Value of pFq for use inside expressions; exact when terminating."""
    tops = tuple(Fraction(a) for a in tops)
    bottoms = tuple(Fraction(b) for b in bottoms)
    _check_bottoms(tops, bottoms)
    if not isinstance(z, Fraction):
        z = nk.realify(z, ctx)
    res = _sum_pfq_values(tops, bottoms, z, ctx)
    if res.exact is not None:
        return res.exact
    if res.achieved_digits < ctx.target_digits:
        raise ConvergenceError(
            f"pFq reached only {res.achieved_digits} of {ctx.target_digits} digits"
        )
    return res.value


# acceleration ---------------------------------------------------------------

def _digits_between(mp, a, b):
    d = abs(a - b)
    scale = abs(a)
    if d == 0:
        return math.inf
    if scale == 0:
        return -math.inf
    return float(-mp.log10(d / scale))


class _Plateau:
    """Tracks estimates and picks the most stable one."""

    def __init__(self, mp, goal: float, patience: int):
        self.mp = mp
        self.goal = goal
        self.patience = patience
        self.history: list = []
        self.best = None  # (digits, value, index, err)

    def push(self, value) -> bool:
        """Record an estimate; return True when summation can stop."""
        h = self.history
        h.append(value)
        if len(h) < 3:
            return False
        d1 = _digits_between(self.mp, h[-1], h[-2])
        d2 = _digits_between(self.mp, h[-2], h[-3])
        digits = min(d1, d2)
        if self.best is None or digits > self.best[0]:
            err = abs(h[-1]) * self.mp.mpf(10) ** (-digits) if math.isfinite(digits) else self.mp.mpf(0)
            self.best = (digits, value, len(h) - 1, err)
        if self.best[0] >= self.goal:
            return True
        return len(h) - 1 - self.best[2] > self.patience


def _levin_u(terms, partial, k, mp):
    beta = 1
    num_ = mp.mpf(0)
    den = mp.mpf(0)
    kb = mp.mpf(k + beta)
    binom = 1
    for j in range(k + 1):
        w = (j + beta) * terms[j]
        c = binom * (mp.mpf(j + beta) / kb) ** (k - 1)
        if j % 2:
            c = -c
        num_ += c * partial[j] / w
        den += c / w
        binom = binom * (k - j) // (j + 1)
    if den == 0:
        return None
    return num_ / den


def accelerate(
    terms: Iterable,
    method: str,
    ctx: EvalContext,
    *,
    work_ctx: EvalContext | None = None,
    max_terms: int | None = None,
) -> SumResult:
    """Extrapolate the sum of ``terms`` by Levin-u or Wynn-epsilon.

    ``achieved_digits`` is the agreement plateau of successive transform
    orders minus two, capped at ``ctx.target_digits``.
    """
    if method not in ("levin_u", "wynn_epsilon"):
        raise UsageError(f"unknown acceleration method {method!r}")
    wctx = work_ctx or _accel_context(ctx)
    mp = wctx.mp
    if max_terms is None:
        max_terms = int(1.6 * wctx.working_digits) + 40
    goal = ctx.target_digits + 4
    it = iter(terms)
    seq: list = []
    partial: list = []
    total = mp.mpf(0)
    plateau = _Plateau(mp, goal, patience=12)
    wynn_state: list = []
    for idx in range(max_terms):
        try:
            t = next(it)
        except StopIteration:
            break
        t = nk.lift(t, wctx)
        seq.append(t)
        total = total + t
        partial.append(total)
        if method == "levin_u":
            if t == 0:
                raise ConvergenceError("levin_u needs non-vanishing terms")
            if idx < 2:
                continue
            est = _levin_u(seq, partial, idx, mp)
            if est is None:
                continue
        else:
            est = _wynn_push(wynn_state, total, mp)
            if idx < 2:
                continue
        if plateau.push(est):
            break
    if len(seq) < 20 and plateau.best is None:
        raise ConvergenceError("acceleration needs at least 20 terms")
    if plateau.best is None:
        raise ConvergenceError("acceleration found no plateau")
    if method == "wynn_epsilon":
        _wynn_applicable(seq)
    digits, value, _, err = plateau.best
    achieved = ctx.target_digits if math.isinf(digits) else min(ctx.target_digits, int(math.floor(digits)) - 2)
    if achieved < 1:
        raise ConvergenceError("acceleration found no plateau")
    return SumResult(
        value=nk.lift(value, ctx),
        achieved_digits=achieved,
        terms_used=len(seq),
        method=method,
        tail_bound=err,
    )


def _wynn_push(state: list, s, mp):
    """Append a partial sum to the epsilon table's last antidiagonal."""
    new = [s]
    for j in range(1, len(state) + 1):
        left = state[j - 2] if j >= 2 else mp.mpf(0)
        diff = new[j - 1] - state[j - 1]
        if diff == 0:
            break
        new.append(left + 1 / diff)
    state[:] = new
    top = len(new) - 1
    return new[top - (top % 2)]


def _wynn_applicable(seq):
    # epsilon overstates its accuracy on one-signed logarithmic series
    tail = seq[-10:]
    if all(t > 0 for t in tail) or all(t < 0 for t in tail):
        if abs(tail[-1] / tail[-2]) > 0.9:
            raise ConvergenceError("wynn_epsilon does not apply to logarithmically convergent series")


# DSL-term series ------------------------------------------------------------

def _term_stream(spec: SeriesSpec, bindings: Mapping | None, ctx: EvalContext) -> Iterator:
    fn = compile_expr(spec.term, ctx)
    env = {k: v if not isinstance(v, int) else Fraction(v) for k, v in (bindings or {}).items()}
    missing = free_vars(spec.term) - set(env) - {spec.var}
    if missing:
        raise UsageError(f"unbound variable(s): {', '.join(sorted(missing))}")
    n = spec.start
    while True:
        env[spec.var] = Fraction(n)
        v = fn(env)
        yield nk.lift(v, ctx)
        n += 1


def series_sum_direct(
    spec: SeriesSpec,
    bindings: Mapping | None,
    ctx: EvalContext,
    *,
    allow_algebraic: bool = False,
    max_terms: int = MAX_TERMS,
) -> SumResult:
    """Partial sums with a geometric (or, optionally, power-law) tail bound."""
    mp = ctx.mp
    tol = mp.mpf(10) ** (-(ctx.target_digits + 3))
    total = mp.mpf(0)
    biggest = mp.mpf(0)
    window: list = []
    tail = None
    count = 0
    for count, t in enumerate(_term_stream(spec, bindings, ctx), start=1):
        total += t
        at = abs(t)
        biggest = max(biggest, at)
        window.append(at)
        if len(window) > PROBE_WINDOW + 1:
            window.pop(0)
        if len(window) > PROBE_WINDOW and count > 2 * PROBE_WINDOW:
            ratios = [window[i + 1] / window[i] for i in range(len(window) - 1) if window[i] != 0]
            if at == 0 and all(w == 0 for w in window):
                tail = mp.mpf(0)
                break
            r = max(ratios) if ratios else mp.mpf(0)
            if r < 1:
                tail = r * at / (1 - r)
                if tail <= tol * abs(total):
                    break
            elif allow_algebraic and window[0] > 0 and at > 0:
                n_now = spec.start + count - 1
                n_then = n_now - PROBE_WINDOW
                if n_then > 0:
                    p = float(mp.log(window[0] / at) / mp.log(mp.mpf(n_now) / n_then))
                    if p > 1.05:
                        tail = at * n_now / (p - 1)
                        if tail <= tol * abs(total):
                            break
        if count >= max_terms:
            raise ConvergenceError(f"no decay detected within {max_terms} terms")
    return SumResult(
        value=total,
        achieved_digits=_rounding_digits(ctx, biggest or mp.mpf(1), total),
        terms_used=count,
        method="direct",
        tail_bound=tail,
    )


def _probe_geometric(spec: SeriesSpec, bindings: Mapping | None, ctx: EvalContext) -> bool:
    """Decide between geometric and algebraic decay from the first 65 terms.

    log|t_n| is linear in n for geometric decay and linear in log n for
    algebraic decay, so the drop over [32, 64] is about twice the drop over
    [16, 32] in the first case and about equal in the second.
    """
    probe_ctx = EvalContext(15)
    mags = []
    for i, t in enumerate(_term_stream(spec, bindings, probe_ctx)):
        mags.append(abs(t))
        if i >= 2 * PROBE_WINDOW:
            break
    mp = probe_ctx.mp

    def level(k):
        return max(mags[k - 3:k + 1])

    m16, m32, m64 = level(16), level(32), level(64)
    if m64 == 0 or m32 == 0:
        return True
    d1 = mp.log(m16 / m32)
    d2 = mp.log(m32 / m64)
    if d1 <= 0 or d2 <= 0:
        return False
    return d2 / d1 > 1.5


def series_sum(
    spec: SeriesSpec,
    bindings: Mapping | None,
    ctx: EvalContext,
    method: str = "auto",
) -> SumResult:
    """Sum a DSL-term series, choosing direct summation or acceleration."""
    if method == "auto":
        method = "direct" if _probe_geometric(spec, bindings, ctx) else "levin_u"
    if method == "direct":
        return series_sum_direct(spec, bindings, ctx)
    wctx = _accel_context(ctx)
    try:
        return accelerate(_term_stream(spec, bindings, wctx), method, ctx, work_ctx=wctx)
    except ConvergenceError:
        if method != "levin_u":
            raise
        return accelerate(_term_stream(spec, bindings, wctx), "wynn_epsilon", ctx, work_ctx=wctx)
