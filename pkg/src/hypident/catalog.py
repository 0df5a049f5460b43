"""Identity catalog files: loading, validation and the record type.

A catalog is a sequence of blocks::

    # comment
    [identity thm5]
    paper_anchor = "pi family, first member"
    lhs_pfq = [[1/2, 2/3, 4/3], [3/2, 2], "1"]
    rhs = "3*sqrt(3)*(3-ln(4))/(2*pi)"
    expected_status = verified
    required = true

A blank line ends a block.  A line ending in ``\\`` continues on the next
line, and so does any value whose brackets are still open.  Adjacent quoted
strings are concatenated.  See ``docs/grammar.md`` for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .errors import CatalogError, ParseError, UsageError
from .exprdsl import Expr, free_vars, is_exact_rational, num, parse
from .hjengine import TransformRule
from .hyper import PFQSpec, SeriesSpec

KEYS = {
    "paper_anchor", "kind", "params", "samples", "lhs_series", "lhs_pfq",
    "lhs_integral", "rhs", "prefactor", "expected_status", "required", "chain",
    "chain_bind", "match_digits", "note",
}
STATUSES = ("verified", "audit")
KINDS = ("constant", "parametric")

_HEADER = re.compile(r"^\[identity\s+([A-Za-z0-9_.\-]+)\s*\]$")
_KEYLINE = re.compile(r"^([a-z_]+)\s*=\s*(.*)$")
_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class IntegralSpec:
    var: str
    a: Expr
    b: Expr
    integrand: Expr
    breakpoints: tuple = ()


@dataclass(frozen=True)
class PFQTemplate:
    """pFq parameters as expressions, resolved to exact rationals per sample."""
    tops: tuple
    bottoms: tuple
    z: Expr

    def spec(self, bindings=None) -> PFQSpec:
        vals = []
        for group in (self.tops, self.bottoms):
            out = []
            for e in group:
                q = is_exact_rational(e, bindings)
                if q is None:
                    raise UsageError(f"pFq parameter {e} is not an exact rational at {bindings}")
                out.append(q)
            vals.append(tuple(out))
        return PFQSpec(vals[0], vals[1], self.z)

    def expressions(self) -> list:
        return [*self.tops, *self.bottoms, self.z]


@dataclass
class IdentityRecord:
    id: str
    rhs: Expr
    paper_anchor: str = ""
    kind: str = "constant"
    params: tuple = ()
    samples: tuple = ()
    lhs_series: SeriesSpec | None = None
    lhs_pfq: PFQTemplate | None = None
    lhs_integral: IntegralSpec | None = None
    prefactor: Expr | None = None
    expected_status: str = "verified"
    required: bool = False
    chain: tuple = ()
    chain_bind: dict = field(default_factory=dict)
    match_digits: int | None = None
    note: str = ""
    line: int = 0

    @property
    def seed(self) -> str | None:
        return self.chain[0] if self.chain else None

    @property
    def rules(self) -> tuple:
        return tuple(self.chain[1:])

    def representations(self) -> list[str]:
        out = []
        if self.lhs_integral is not None:
            out.append("integral")
        if self.lhs_pfq is not None:
            out.append("pfq")
        if self.lhs_series is not None:
            out.append("series")
        if self.chain:
            out.append("chain")
        return out

    def bindings(self) -> list[dict]:
        """One dict per sample point ({} for constant entries)."""
        if not self.params:
            return [{}]
        return [dict(zip(self.params, s)) for s in self.samples]

    def expressions(self) -> list[Expr]:
        out = [self.rhs]
        if self.prefactor is not None:
            out.append(self.prefactor)
        if self.lhs_series is not None:
            out.append(self.lhs_series.term)
        if self.lhs_pfq is not None:
            out += self.lhs_pfq.expressions()
        if self.lhs_integral is not None:
            li = self.lhs_integral
            out += [li.a, li.b, li.integrand, *li.breakpoints]
        return out


# value syntax ---------------------------------------------------------------

def _parse_value(text: str, line: int):
    """Parse a value: quoted string, bracketed list, or bare word."""
    pos = 0
    n = len(text)

    def err(msg):
        raise CatalogError(f"{msg} (column {pos + 1})", line)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def string():
        nonlocal pos
        parts = []
        while True:
            skip_ws()
            if pos >= n or text[pos] != '"':
                break
            end = text.find('"', pos + 1)
            if end < 0:
                err("unterminated string")
            parts.append(text[pos + 1:end])
            pos = end + 1
        return _Str("".join(parts))

    def value():
        nonlocal pos
        skip_ws()
        if pos >= n:
            err("missing value")
        ch = text[pos]
        if ch == '"':
            return string()
        if ch == "[":
            pos += 1
            items = []
            skip_ws()
            if pos < n and text[pos] == "]":
                pos += 1
                return items
            while True:
                items.append(value())
                skip_ws()
                if pos < n and text[pos] == ",":
                    pos += 1
                    continue
                if pos < n and text[pos] == "]":
                    pos += 1
                    return items
                err("expected ',' or ']'")
        m = re.compile(r"[^\s,\[\]\"]+").match(text, pos)
        if not m:
            err(f"unexpected {ch!r}")
        pos = m.end()
        return m.group(0)

    v = value()
    skip_ws()
    if pos != n:
        err("trailing characters after value")
    return v


class _Str(str):
    """A quoted string (as opposed to a bare word)."""


def _balance(text: str) -> int:
    depth = 0
    in_str = False
    for ch in text:
        if ch == '"':
            in_str = not in_str
        elif not in_str:
            depth += ch == "["
            depth -= ch == "]"
    return depth if not in_str else depth + 1


def _strip_comment(line: str) -> str:
    in_str = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def _blocks(text: str):
    """Yield (id, header line, {key: (raw value, line)})."""
    current = None
    pending = None  # (key, accumulated text, start line)
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = _strip_comment(raw).rstrip()
        if pending is not None:
            key, acc, start = pending
            cont = line.strip()
            joined = acc + " " + cont
            if joined.endswith("\\"):
                pending = (key, joined[:-1], start)
                continue
            if _balance(joined) > 0 and cont:
                pending = (key, joined, start)
                continue
            if _balance(joined) > 0:
                raise CatalogError(f"unclosed bracket or string in {key!r}", start)
            current[2][key] = (joined, start)
            pending = None
            continue
        if not line.strip():
            if current is not None:
                yield current
                current = None
            continue
        stripped = line.strip()
        m = _HEADER.match(stripped)
        if m:
            if current is not None:
                raise CatalogError("new block without a blank line before it", lineno)
            current = (m.group(1), lineno, {})
            continue
        if stripped.startswith("["):
            raise CatalogError(f"bad block header {stripped!r}", lineno)
        if current is None:
            raise CatalogError("key outside of an [identity ...] block", lineno)
        km = _KEYLINE.match(stripped)
        if not km:
            raise CatalogError(f"expected 'key = value', got {stripped!r}", lineno)
        key, val = km.group(1), km.group(2)
        if key not in KEYS:
            raise CatalogError(f"unknown key {key!r}", lineno)
        if key in current[2]:
            raise CatalogError(f"duplicate key {key!r}", lineno)
        if val.endswith("\\"):
            pending = (key, val[:-1], lineno)
            continue
        if _balance(val) > 0:
            pending = (key, val, lineno)
            continue
        current[2][key] = (val, lineno)
    if pending is not None:
        raise CatalogError(f"unterminated value for {pending[0]!r}", pending[2])
    if current is not None:
        yield current


# conversion -----------------------------------------------------------------

def _expr(v, line, what) -> Expr:
    if not isinstance(v, str):
        raise CatalogError(f"{what}: expected an expression", line)
    try:
        return parse(str(v))
    except ParseError as exc:
        raise CatalogError(f"{what}: {exc}", line) from None


def _rational(v, line, what) -> Fraction:
    if isinstance(v, list):
        raise CatalogError(f"{what}: expected a rational, got a list", line)
    try:
        return Fraction(str(v).replace(" ", ""))
    except (ValueError, ZeroDivisionError):
        raise CatalogError(f"{what}: expected a rational, got {v!r}", line) from None


def _param(v, line, what) -> Expr:
    """A pFq parameter: bare rational or quoted expression."""
    if isinstance(v, _Str):
        return _expr(v, line, what)
    return num(_rational(v, line, what))


def _name(v, line, what) -> str:
    if isinstance(v, list) or not _ID.match(str(v)):
        raise CatalogError(f"{what}: expected a name, got {v!r}", line)
    return str(v)


def _bool(v, line, what) -> bool:
    if v in ("true", "false"):
        return v == "true"
    raise CatalogError(f"{what}: expected true or false", line)


_RANGE = re.compile(r"^(-?\d+)\.\.(-?\d+)$")


def _sample_values(items, line) -> list:
    out = []
    for it in items:
        if isinstance(it, str) and not isinstance(it, _Str) and _RANGE.match(it):
            lo, hi = map(int, _RANGE.match(it).groups())
            if hi < lo:
                raise CatalogError(f"empty range {it}", line)
            out.extend(Fraction(k) for k in range(lo, hi + 1))
        else:
            out.append(_rational(it, line, "samples"))
    return out


def _record(rid: str, hline: int, fields: dict) -> IdentityRecord:
    vals = {}
    for key, (raw, line) in fields.items():
        vals[key] = (_parse_value(raw, line), line)

    def get(key, default=None):
        return vals[key] if key in vals else (default, hline)

    if "rhs" not in vals:
        raise CatalogError(f"identity {rid}: missing rhs", hline)
    rhs = _expr(*vals["rhs"], "rhs")
    rec = IdentityRecord(id=rid, rhs=rhs, line=hline)

    v, line = get("paper_anchor", "")
    rec.paper_anchor = str(v)
    v, line = get("note", "")
    rec.note = str(v)
    v, line = get("kind", "constant")
    if v not in KINDS:
        raise CatalogError(f"kind must be one of {', '.join(KINDS)}", line)
    rec.kind = v
    v, line = get("expected_status", "verified")
    if v not in STATUSES:
        raise CatalogError(f"expected_status must be one of {', '.join(STATUSES)}", line)
    rec.expected_status = v
    v, line = get("required", "false")
    rec.required = _bool(v, line, "required")
    v, line = get("match_digits")
    if v is not None:
        try:
            rec.match_digits = int(v)
        except (TypeError, ValueError):
            raise CatalogError("match_digits must be an integer", line) from None

    v, line = get("params", [])
    if not isinstance(v, list):
        raise CatalogError("params must be a list", line)
    rec.params = tuple(_name(p, line, "params") for p in v)

    v, line = get("samples", [])
    if not isinstance(v, list):
        raise CatalogError("samples must be a list", line)
    if rec.params:
        if len(rec.params) == 1 and all(not isinstance(s, list) for s in v):
            samples = [(s,) for s in _sample_values(v, line)]
        else:
            samples = []
            for s in v:
                if not isinstance(s, list) or len(s) != len(rec.params):
                    raise CatalogError(f"each sample needs {len(rec.params)} values", line)
                samples.append(tuple(_rational(x, line, "samples") for x in s))
        rec.samples = tuple(samples)
    elif v:
        raise CatalogError("samples given without params", line)

    v, line = get("lhs_series")
    if v is not None:
        if not isinstance(v, list) or len(v) != 3:
            raise CatalogError("lhs_series = [index, start, \"term\"]", line)
        var = _name(v[0], line, "lhs_series index")
        start = _rational(v[1], line, "lhs_series start")
        if start.denominator != 1:
            raise CatalogError("lhs_series start must be an integer", line)
        rec.lhs_series = SeriesSpec(int(start), _expr(v[2], line, "lhs_series term"), var)

    v, line = get("lhs_pfq")
    if v is not None:
        if not isinstance(v, list) or len(v) != 3 or not isinstance(v[0], list) or not isinstance(v[1], list):
            raise CatalogError("lhs_pfq = [[tops], [bottoms], \"z\"]", line)
        tops = tuple(_param(a, line, "lhs_pfq top") for a in v[0])
        bottoms = tuple(_param(b, line, "lhs_pfq bottom") for b in v[1])
        z = _expr(v[2], line, "lhs_pfq argument")
        rec.lhs_pfq = PFQTemplate(tops, bottoms, z)
        if not any(free_vars(e) for e in tops + bottoms):
            try:
                rec.lhs_pfq.spec()
            except ArithmeticError as exc:
                raise CatalogError(f"lhs_pfq: {exc}", line) from None

    v, line = get("lhs_integral")
    if v is not None:
        if not isinstance(v, list) or len(v) not in (4, 5):
            raise CatalogError("lhs_integral = [var, \"a\", \"b\", \"integrand\", [breakpoints]]", line)
        brk = v[4] if len(v) == 5 else []
        if not isinstance(brk, list):
            raise CatalogError("breakpoints must be a list", line)
        rec.lhs_integral = IntegralSpec(
            _name(v[0], line, "integration variable"),
            _expr(v[1], line, "lower bound"),
            _expr(v[2], line, "upper bound"),
            _expr(v[3], line, "integrand"),
            tuple(_expr(b, line, "breakpoint") for b in brk),
        )

    v, line = get("prefactor")
    if v is not None:
        rec.prefactor = _expr(v, line, "prefactor")

    v, line = get("chain", [])
    if v:
        if not isinstance(v, list) or len(v) < 2:
            raise CatalogError("chain = [seed_id, rule, ...]", line)
        seed = _name(v[0], line, "chain seed")
        rules = []
        for i, r in enumerate(v[1:], start=1):
            try:
                TransformRule.parse(str(r))
            except UsageError as exc:
                raise CatalogError(f"chain step {i}: {exc}", line) from None
            rules.append(str(r))
        rec.chain = (seed, *rules)
    v, line = get("chain_bind", [])
    if v:
        bind = {}
        for pair in v:
            if not isinstance(pair, list) or len(pair) != 2:
                raise CatalogError("chain_bind = [[name, value], ...]", line)
            bind[_name(pair[0], line, "chain_bind name")] = _rational(pair[1], line, "chain_bind value")
        rec.chain_bind = bind

    _validate(rec)
    return rec


def _validate(rec: IdentityRecord):
    line = rec.line
    if not rec.representations():
        raise CatalogError(f"identity {rec.id}: no lhs representation", line)
    if rec.required and rec.expected_status != "verified":
        raise CatalogError(f"identity {rec.id}: required entries must be verified", line)
    if rec.kind == "parametric" and (not rec.params or not rec.samples):
        raise CatalogError(f"identity {rec.id}: parametric entries need params and samples", line)
    if rec.kind == "constant" and rec.params:
        raise CatalogError(f"identity {rec.id}: constant entries take no params", line)
    if rec.prefactor is not None and rec.lhs_pfq is None:
        raise CatalogError(f"identity {rec.id}: prefactor only applies to lhs_pfq", line)
    allowed = set(rec.params)
    checks = [("rhs", rec.rhs, allowed)]
    if rec.prefactor is not None:
        checks.append(("prefactor", rec.prefactor, allowed))
    if rec.lhs_series is not None:
        checks.append(("lhs_series", rec.lhs_series.term, allowed | {rec.lhs_series.var}))
    if rec.lhs_pfq is not None:
        for e in rec.lhs_pfq.expressions():
            checks.append(("lhs_pfq", e, allowed))
    if rec.lhs_integral is not None:
        li = rec.lhs_integral
        checks.append(("lhs_integral", li.integrand, allowed | {li.var}))
        for b in (li.a, li.b, *li.breakpoints):
            checks.append(("lhs_integral bound", b, allowed))
    for what, e, ok in checks:
        extra = free_vars(e) - ok
        if extra:
            raise CatalogError(
                f"identity {rec.id}: {what} uses undeclared variable(s) {', '.join(sorted(extra))}", line)


def loads(text: str) -> list[IdentityRecord]:
    records = []
    seen: dict[str, int] = {}
    for rid, hline, fields in _blocks(text):
        if rid in seen:
            raise CatalogError(f"duplicate identity id {rid!r} (first defined on line {seen[rid]})", hline)
        seen[rid] = hline
        records.append(_record(rid, hline, fields))
    index = {r.id: r for r in records}
    for r in records:
        if r.seed is not None:
            seed = index.get(r.seed)
            if seed is None:
                raise CatalogError(f"identity {r.id}: chain seed {r.seed!r} not in catalog", r.line)
            if seed.lhs_series is None:
                raise CatalogError(f"identity {r.id}: chain seed {r.seed!r} has no lhs_series", r.line)
            if r.lhs_series is None:
                raise CatalogError(f"identity {r.id}: chain entries need a hand-entered lhs_series", r.line)
    return records


def load_catalog(path: str | Path | None = None) -> list[IdentityRecord]:
    """Load and validate a catalog file (the bundled one when ``path`` is None)."""
    if path is None:
        text = resources.files("hypident").joinpath("data/main.cat").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CatalogError(f"cannot read {path}: {exc.strerror}", 0) from None
    return loads(text)


def default_catalog_path() -> Path:
    return Path(str(resources.files("hypident").joinpath("data/main.cat")))
