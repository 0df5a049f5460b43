"""Tanh-sinh quadrature on finite intervals.

Abscissas are stored as distances ``c`` from the nearer endpoint so that
points crowding an endpoint stay accurate; a node whose mapped abscissa rounds
onto an endpoint is dropped.  The integrand is sampled at ``QUAD_EXTRA_DIGITS``
beyond the working precision, and at twice that precision for nodes so close
to a nonzero endpoint that rounding ``b - c`` would lose the offset ``c``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import numkernel as nk
from .errors import ConvergenceError, DomainError, UsageError
from .exprdsl import Expr, compile_expr, evaluate, free_vars
from .numkernel import EvalContext

MAX_LEVEL = 12
MIN_LEVEL = 3
QUAD_EXTRA_DIGITS = 10

_node_cache: dict = {}
_node_lock = threading.Lock()


@dataclass
class QuadResult:
    value: object
    error_estimate: object
    levels_used: int
    evaluations: int
    digits: int
    level_errors: list = field(default_factory=list)


def _level_nodes(qctx: EvalContext, level: int):
    """(c, w) pairs for t > 0 new at ``level``; level 0 also carries t = 0."""
    key = (qctx.prec, level)
    nodes = _node_cache.get(key)
    if nodes is not None:
        return nodes
    mp = qctx.mp
    # keep nodes down to c ~ 10^(-2D): enough to absorb x^(-1/2) behaviour at
    # an endpoint that is exactly representable
    c_floor = mp.mpf(10) ** (-2 * qctx.working_digits)
    half_pi = mp.pi / 2
    h = mp.mpf(2) ** (-level)
    out = []
    if level == 0:
        out.append((mp.mpf(1), half_pi))
        k, step = 1, 1
    else:
        k, step = 1, 2
    while True:
        t = k * h
        u = half_pi * mp.sinh(t)
        eu = mp.exp(u)
        cu = (eu + 1 / eu) / 2
        c = 1 / (eu * cu)
        if c < c_floor:
            break
        w = half_pi * mp.cosh(t) / (cu * cu)
        out.append((c, w))
        k += step
    with _node_lock:
        _node_cache.setdefault(key, out)
    return _node_cache[key]


def integrate_fn(
    f: Callable,
    a,
    b,
    ctx: EvalContext,
    *,
    max_level: int = MAX_LEVEL,
    edge: tuple | None = None,
) -> QuadResult:
    """Integrate a Python callable (taking an mpmath number) over [a, b].

    ``edge = (f_hi, a_hi, b_hi, hi_ctx)`` supplies a higher-precision copy of
    the integrand and bounds, used for nodes hugging a nonzero endpoint.
    """
    qctx = ctx.raised(QUAD_EXTRA_DIGITS)
    mp = qctx.mp
    a = nk.realify(a, qctx)
    b = nk.realify(b, qctx)
    if isinstance(a, mp.mpc) or isinstance(b, mp.mpc):
        raise UsageError("integration bounds must be real")
    if not a < b:
        raise UsageError("integration needs a < b (zero-width or reversed panel)")
    half = (b - a) / 2
    evals = 0
    # below this offset, b - c rounded to the working precision is too coarse
    c_edge = mp.mpf(10) ** (ctx.target_digits - qctx.working_digits)
    if edge is not None:
        f_hi, a_hi, b_hi, hctx = edge
        a_hi = nk.realify(a_hi, hctx)
        b_hi = nk.realify(b_hi, hctx)
        half_hi = (b_hi - a_hi) / 2
        edge_left = a_hi != 0
        edge_right = b_hi != 0

    def sample(x, fn=f):
        nonlocal evals
        evals += 1
        try:
            v = nk.lift(fn(x), qctx)
        except (ZeroDivisionError, DomainError) as exc:
            raise ConvergenceError(f"integrand not finite at x = {mp.nstr(x, 15)}") from exc
        if isinstance(v, mp.mpc):
            ok = mp.isfinite(v.real) and mp.isfinite(v.imag)
        else:
            ok = mp.isfinite(v)
        if not ok:
            raise ConvergenceError(f"integrand not finite at x = {mp.nstr(x, 15)}")
        return v

    def level_sum(level):
        s = mp.mpf(0)
        l1 = mp.mpf(0)
        for idx, (c, w) in enumerate(_level_nodes(qctx, level)):
            if level == 0 and idx == 0:
                v = sample(a + half) * w
                s += v
                l1 += abs(v)
                continue
            dx = half * c
            xl = a + dx
            xr = b - dx
            near = edge is not None and c < c_edge
            if near and edge_left:
                x = a_hi + half_hi * c
                v = sample(x, f_hi) * w if x != a_hi else 0
            else:
                v = sample(xl) * w if xl != a and xl < b else 0
            s += v
            l1 += abs(v)
            if near and edge_right:
                x = b_hi - half_hi * c
                v = sample(x, f_hi) * w if x != b_hi else 0
            else:
                v = sample(xr) * w if xr != b and xr > a else 0
            s += v
            l1 += abs(v)
        return s, l1

    target = ctx.target_digits
    total, l1 = level_sum(0)
    estimate = total * half
    prev = None
    err = None
    digits = 0
    history = []
    for level in range(1, max_level + 1):
        s, l1_new = level_sum(level)
        total += s
        l1 += l1_new
        h = mp.mpf(2) ** (-level)
        prev, estimate = estimate, total * h * half
        err = abs(estimate - prev)
        history.append(err)
        scale = max(abs(estimate), abs(l1 * h * half) * mp.mpf(10) ** (-qctx.working_digits // 2))
        if level < MIN_LEVEL:
            continue
        if err == 0 or scale == 0:
            digits = target
        else:
            digits = min(target, int(math.floor(float(-mp.log10(err / scale)))) - 2)
        if digits >= target:
            return QuadResult(nk.lift(estimate, ctx), err, level, evals, digits, history)
    raise ConvergenceError(
        f"tanh-sinh did not converge in {max_level} levels (about {max(digits, 0)} digits)"
    )


def _bound_value(e, bindings, ctx):
    if isinstance(e, Expr):
        return evaluate(e, bindings, ctx)
    return nk.lift(e, ctx)


def integrate(
    integrand: Expr,
    var: str,
    a,
    b,
    bindings: Mapping | None,
    ctx: EvalContext,
    *,
    max_level: int = MAX_LEVEL,
) -> QuadResult:
    """Integrate a DSL expression in ``var`` over [a, b]."""
    qctx = ctx.raised(QUAD_EXTRA_DIGITS)
    env = dict(bindings or {})
    missing = free_vars(integrand) - set(env) - {var}
    if missing:
        raise UsageError(f"unbound variable(s): {', '.join(sorted(missing))}")
    fn = compile_expr(integrand, qctx)
    hctx = qctx.raised(qctx.working_digits)
    fn_hi = compile_expr(integrand, hctx)

    def f(x):
        env[var] = x
        return fn(env)

    def f_hi(x):
        env[var] = x
        return fn_hi(env)

    lo = _bound_value(a, bindings, qctx)
    hi = _bound_value(b, bindings, qctx)
    edge = (f_hi, _bound_value(a, bindings, hctx), _bound_value(b, bindings, hctx), hctx)
    return integrate_fn(f, lo, hi, ctx, max_level=max_level, edge=edge)


def integrate_split(
    integrand: Expr,
    var: str,
    a,
    b,
    breakpoints: Sequence,
    bindings: Mapping | None,
    ctx: EvalContext,
    *,
    max_level: int = MAX_LEVEL,
) -> QuadResult:
    """Sum of panel integrals over [a, p1], [p1, p2], ..., [pk, b]."""
    qctx = ctx.raised(QUAD_EXTRA_DIGITS)
    pts = [_bound_value(p, bindings, qctx) for p in [a, *breakpoints, b]]
    for left, right in zip(pts, pts[1:]):
        if not left < right:
            raise UsageError("breakpoints must be strictly increasing inside (a, b)")
    value = None
    err = None
    levels = 0
    evals = 0
    digits = ctx.target_digits
    raw = [a, *breakpoints, b]
    for left, right in zip(raw, raw[1:]):
        r = integrate(integrand, var, left, right, bindings, ctx, max_level=max_level)
        value = r.value if value is None else value + r.value
        err = r.error_estimate if err is None else err + r.error_estimate
        levels = max(levels, r.levels_used)
        evals += r.evaluations
        digits = min(digits, r.digits)
    return QuadResult(value, err, levels, evals, digits)
