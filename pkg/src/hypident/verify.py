"""Evaluate both sides of catalog identities and classify the outcome."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import numkernel as nk
from .catalog import IdentityRecord
from .errors import ConvergenceError, DomainError, RuleError, UsageError
from .exprdsl import evaluate
from .hjengine import compare_termwise, derive_chain, digits_of
from .hyper import SeriesSpec, pfq_sum, series_sum
from .numkernel import EvalContext
from .quad import integrate_split

STRATEGIES = ("auto", "series", "integral", "pfq", "chain")
AUTO_ORDER = ("integral", "pfq", "series", "chain")
DEFAULT_SLACK = 5
CHAIN_TERMS = 51


@dataclass
class SampleResult:
    bindings: dict
    digits: int
    raw_digits: int
    lhs: object = None
    rhs: object = None
    achieved: int = 0
    error: str = ""


@dataclass
class VerifyReport:
    id: str
    status: str
    digits_matched: int
    strategy: str
    wall_ms: int = 0
    samples: list = field(default_factory=list)
    message: str = ""
    required: bool = False
    expected_status: str = "verified"

    def line(self) -> str:
        return f"{self.id} {self.status} {self.digits_matched} {self.strategy} {self.wall_ms}ms"


def match_threshold(rec: IdentityRecord, ctx: EvalContext) -> int:
    t = ctx.target_digits - DEFAULT_SLACK
    if rec.match_digits is not None:
        t = min(t, rec.match_digits)
    return max(t, 1)


def agreement_digits(a, b, ctx: EvalContext) -> int:
    """floor(-log10(|a-b| / max(|a|,|b|))), capped at the target."""
    mp = ctx.mp
    a = nk.lift(a, ctx)
    b = nk.lift(b, ctx)
    scale = max(abs(a), abs(b))
    diff = abs(a - b)
    if diff == 0:
        return ctx.target_digits
    if scale == 0:
        return 0
    d = int(mp.floor(-mp.log10(diff / scale)))
    return max(0, min(d, ctx.target_digits))


# sides ----------------------------------------------------------------------

def rhs_value(rec: IdentityRecord, bindings: Mapping, ctx: EvalContext):
    """RHS with a guard-digit stability check; returns (value, achieved digits)."""
    g = ctx.guard_digits
    v1 = evaluate(rec.rhs, bindings, ctx)
    v2 = evaluate(rec.rhs, bindings, ctx.with_guard(2 * g))
    d = agreement_digits(v1, v2, ctx)
    if d < ctx.target_digits:
        # unstable at the default guard; retry with more and trust the last pair
        v1 = v2
        v2 = evaluate(rec.rhs, bindings, ctx.with_guard(4 * g))
        d = agreement_digits(v1, v2, ctx)
    return nk.lift(v2, ctx), d


def lhs_value(rec: IdentityRecord, strategy: str, bindings: Mapping, ctx: EvalContext,
              index: Mapping[str, IdentityRecord] | None = None):
    """(value, achieved digits, extra) for one representation at one sample."""
    if strategy == "integral":
        li = rec.lhs_integral
        if li is None:
            raise UsageError(f"{rec.id} has no integral representation")
        r = integrate_split(li.integrand, li.var, li.a, li.b, li.breakpoints, bindings, ctx)
        return r.value, r.digits, None
    if strategy == "pfq":
        if rec.lhs_pfq is None:
            raise UsageError(f"{rec.id} has no pFq representation")
        r = pfq_sum(rec.lhs_pfq.spec(bindings), ctx, bindings)
        value = r.value
        if rec.prefactor is not None:
            value = nk.lift(value, ctx) * evaluate(rec.prefactor, bindings, ctx)
        return value, r.achieved_digits, None
    if strategy == "series":
        if rec.lhs_series is None:
            raise UsageError(f"{rec.id} has no series representation")
        r = series_sum(rec.lhs_series, bindings, ctx)
        return r.value, r.achieved_digits, None
    if strategy == "chain":
        derived = derived_series(rec, index)
        start = rec.lhs_series.start
        rel = compare_termwise(derived, rec.lhs_series, range(start, start + CHAIN_TERMS),
                               [dict(bindings)], ctx)
        termwise = digits_of(rel, ctx)
        r = series_sum(derived, bindings, ctx)
        return r.value, min(r.achieved_digits, max(termwise, 0)), termwise
    raise UsageError(f"unknown strategy {strategy!r}")


def derived_series(rec: IdentityRecord, index: Mapping[str, IdentityRecord] | None) -> SeriesSpec:
    if not rec.chain:
        raise UsageError(f"{rec.id} has no derivation chain")
    if index is None or rec.seed not in index:
        raise UsageError(f"{rec.id}: chain seed {rec.seed!r} not available")
    seed = index[rec.seed]
    return derive_chain(seed.lhs_series, rec.rules, bindings=rec.chain_bind)


# verification ---------------------------------------------------------------

def _one_strategy(rec, strategy, ctx, index) -> VerifyReport:
    threshold = match_threshold(rec, ctx)
    results = []
    status = "match"
    message = ""
    for b in rec.bindings():
        try:
            lhs, achieved_l, _ = lhs_value(rec, strategy, b, ctx, index)
            rhs, achieved_r = rhs_value(rec, b, ctx)
        except (ConvergenceError, DomainError, RuleError, ZeroDivisionError) as exc:
            results.append(SampleResult(b, 0, 0, error=str(exc)))
            status = "error"
            message = str(exc)
            continue
        raw = agreement_digits(lhs, rhs, ctx)
        achieved = min(achieved_l, achieved_r)
        digits = min(raw, achieved)
        results.append(SampleResult(b, digits, raw, lhs, rhs, achieved))
        if digits >= threshold:
            continue
        if raw < achieved:
            # the sides disagree by more than either side's uncertainty
            if status != "error":
                status = "mismatch"
        elif status == "match":
            status = "error"
            message = f"only {achieved} digits reached (need {threshold})"
    digits = min((r.digits for r in results), default=0)
    return VerifyReport(rec.id, status, digits, strategy, samples=results, message=message,
                        required=rec.required, expected_status=rec.expected_status)


def verify_identity(rec: IdentityRecord, strategy: str, ctx: EvalContext,
                    index: Mapping[str, IdentityRecord] | None = None) -> VerifyReport:
    """Verify one record with the given strategy ("auto" tries each in turn)."""
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    t0 = time.perf_counter()
    available = rec.representations()
    if strategy == "auto":
        order = [s for s in AUTO_ORDER if s in available]
        best = None
        for s in order:
            try:
                rep = _one_strategy(rec, s, ctx, index)
            except UsageError as exc:
                rep = VerifyReport(rec.id, "error", 0, s, message=str(exc),
                                   required=rec.required, expected_status=rec.expected_status)
            if rep.status != "error":
                best = rep
                break
            if best is None or rep.digits_matched > best.digits_matched:
                best = rep
        rep = best
    elif strategy not in available:
        rep = VerifyReport(rec.id, "error", 0, strategy,
                           message=f"no {strategy} representation",
                           required=rec.required, expected_status=rec.expected_status)
    else:
        rep = _one_strategy(rec, strategy, ctx, index)
    rep.wall_ms = int(round((time.perf_counter() - t0) * 1000))
    return rep


def cross_check(rec: IdentityRecord, ctx: EvalContext,
                index: Mapping[str, IdentityRecord] | None = None) -> list[tuple]:
    """Pairwise LHS agreement between representations at every sample.

    Returns (strategy_a, strategy_b, bindings, digits agreed, min achieved).
    """
    reps = rec.representations()
    out = []
    for b in rec.bindings():
        vals = {}
        for s in reps:
            try:
                v, d, _ = lhs_value(rec, s, b, ctx, index)
            except (ConvergenceError, DomainError):
                continue
            vals[s] = (nk.lift(v, ctx), d)
        names = sorted(vals)
        for i, a in enumerate(names):
            for c in names[i + 1:]:
                agreed = agreement_digits(vals[a][0], vals[c][0], ctx)
                out.append((a, c, b, agreed, min(vals[a][1], vals[c][1])))
    return out


# reporting ------------------------------------------------------------------

def emit_report(reports: Sequence[VerifyReport], fmt: str = "lines") -> str:
    reports = sorted(reports, key=lambda r: r.id)
    if fmt == "lines":
        return "".join(r.line() + "\n" for r in reports)
    if fmt == "table":
        head = ("id", "status", "digits", "strategy", "time")
        rows = [(r.id, r.status, str(r.digits_matched), r.strategy, f"{r.wall_ms}ms") for r in reports]
        widths = [max(len(x) for x in col) for col in zip(head, *rows)]
        fmt_row = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
        lines = [fmt_row(head), fmt_row(tuple("-" * w for w in widths))]
        lines += [fmt_row(r) for r in rows]
        return "\n".join(lines) + "\n"
    raise UsageError(f"unknown report format {fmt!r}")


def exit_code(reports: Sequence[VerifyReport]) -> int:
    """0 if every required entry matched, 1 on a required mismatch, 3 on a required error."""
    req = [r for r in reports if r.required]
    if any(r.status == "mismatch" for r in req):
        return 1
    if any(r.status == "error" for r in req):
        return 3
    return 0
