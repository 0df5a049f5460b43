"""Arbitrary-precision scalar kernel.

Values are plain mpmath numbers (``mpf`` while real, ``mpc`` otherwise)
produced by a private ``MPContext`` owned by an :class:`EvalContext`, so no
global mpmath state is ever touched.  Elementary functions follow the C99 /
``cmath`` principal-branch conventions, including real arguments lying on a
branch cut (``acos(2) = -1.3169...i``).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import mpmath
from mpmath.libmp import from_rational

from .errors import DomainError, UsageError

MIN_TARGET_DIGITS = 5
MIN_GUARD_DIGITS = 5
DEFAULT_GUARD_DIGITS = 15

CONSTANTS = ("pi", "euler_gamma", "catalan", "i")


@dataclass(frozen=True)
class EvalContext:
    """Precision policy: ``target_digits`` requested, ``guard_digits`` extra."""

    target_digits: int
    guard_digits: int = DEFAULT_GUARD_DIGITS
    _local: threading.local = field(
        default_factory=threading.local, init=False, repr=False, compare=False
    )
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("target_digits", "guard_digits"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise UsageError(f"{name} must be an integer, got {v!r}")
        if self.target_digits < MIN_TARGET_DIGITS:
            raise UsageError(
                f"target_digits must be >= {MIN_TARGET_DIGITS}, got {self.target_digits}"
            )
        if self.guard_digits < MIN_GUARD_DIGITS:
            raise UsageError(
                f"guard_digits must be >= {MIN_GUARD_DIGITS}, got {self.guard_digits}"
            )

    def __reduce__(self):
        return (EvalContext, (self.target_digits, self.guard_digits))

    @property
    def working_digits(self) -> int:
        return self.target_digits + self.guard_digits

    @property
    def mp(self) -> mpmath.ctx_mp.MPContext:
        # one mpmath context per thread: mpmath adjusts ctx.prec internally
        # while evaluating, so sharing one across threads would race
        m = getattr(self._local, "mp", None)
        if m is None:
            m = mpmath.MPContext()
            m.dps = self.working_digits
            self._local.mp = m
        return m

    @property
    def prec(self) -> int:
        return self.mp.prec

    @property
    def eps(self):
        """Relative tolerance corresponding to ``target_digits``."""
        return self.mp.mpf(10) ** (-self.target_digits)

    def raised(self, extra_digits: int) -> EvalContext:
        """Same target, ``extra_digits`` more guard digits."""
        return EvalContext(self.target_digits, self.guard_digits + extra_digits)

    def with_guard(self, guard_digits: int) -> EvalContext:
        return EvalContext(self.target_digits, guard_digits)

    def with_target(self, target_digits: int) -> EvalContext:
        return EvalContext(target_digits, self.guard_digits)

    def cached(self, key, compute):
        try:
            return self._cache[key]
        except KeyError:
            value = self._cache[key] = compute()
            return value


def ctx_new(target_digits: int) -> EvalContext:
    """Context with the default guard digits."""
    return EvalContext(target_digits)


def lift(v, ctx: EvalContext):
    """Embed an exact or foreign numeric value into ``ctx``'s number types."""
    mp = ctx.mp
    if isinstance(v, (mp.mpf, mp.mpc)):
        return v
    if isinstance(v, int) and not isinstance(v, bool):
        return mp.mpf(v)
    if isinstance(v, Rational):
        if v.denominator == 1:
            return mp.mpf(int(v.numerator))
        return mp.make_mpf(from_rational(int(v.numerator), int(v.denominator), mp.prec, "n"))
    return mp.convert(v)


def is_real(v) -> bool:
    if isinstance(v, (int, Rational)):
        return True
    if hasattr(v, "_mpf_"):
        return True
    if hasattr(v, "_mpc_"):
        return v.imag == 0
    return False


def realify(v, ctx: EvalContext):
    """Lift and drop an exactly-zero imaginary part."""
    v = lift(v, ctx)
    if isinstance(v, ctx.mp.mpc) and v.imag == 0:
        return v.real
    return v


def check_finite(v, ctx: EvalContext, what: str = "value"):
    mp = ctx.mp
    if isinstance(v, mp.mpc):
        ok = mp.isfinite(v.real) and mp.isfinite(v.imag)
    else:
        ok = mp.isfinite(v)
    if not ok:
        raise DomainError(f"non-finite {what}")
    return v


def const_value(name: str, ctx: EvalContext):
    mp = ctx.mp
    if name == "pi":
        return ctx.cached("pi", lambda: +mp.pi)
    if name == "euler_gamma":
        return ctx.cached("euler_gamma", lambda: +mp.euler)
    if name == "catalan":
        return ctx.cached("catalan", lambda: +mp.catalan)
    if name == "i":
        return mp.mpc(0, 1)
    raise UsageError(f"unknown constant {name!r}")


def _is_int_valued(v) -> bool:
    if isinstance(v, Rational):
        return v.denominator == 1
    if hasattr(v, "_mpf_"):
        return v == int(v) if abs(v) < 10**15 else False
    return False


def complex_pow(z, w, ctx: EvalContext):
    """Principal power ``exp(w * Log z)`` with ``Im(Log z)`` in (-pi, pi]."""
    mp = ctx.mp
    z = realify(z, ctx)
    w = realify(w, ctx)
    if z == 0:
        re_w = w.real if isinstance(w, mp.mpc) else w
        if re_w > 0:
            return mp.mpf(0)
        raise DomainError("0 raised to a power with non-positive real part")
    if not isinstance(w, mp.mpc) and _is_int_valued(w) and abs(w) < 10**6:
        return check_finite(z ** int(w), ctx, "power")
    if isinstance(z, mp.mpc):
        r = mp.power(z, w)
    elif z > 0:
        r = mp.power(z, w)
    else:
        # negative real base: |z|^w * e^{i pi w}
        r = mp.power(-z, w) * mp.expjpi(w)
    return check_finite(r, ctx, "power")


def _ln(mp, z):
    if isinstance(z, mp.mpc):
        return mp.ln(z)
    if z > 0:
        return mp.ln(z)
    if z < 0:
        return mp.mpc(mp.ln(-z), mp.pi)
    raise ZeroDivisionError


def _sqrt(mp, z):
    if isinstance(z, mp.mpc) or z >= 0:
        return mp.sqrt(z)
    return mp.mpc(0, mp.sqrt(-z))


def _recip(mp, z):
    if z == 0:
        raise ZeroDivisionError
    return 1 / z


def _asin(mp, z):
    if isinstance(z, mp.mpc) or abs(z) <= 1:
        return mp.asin(z)
    half_pi = mp.pi / 2
    return mp.mpc(half_pi if z > 0 else -half_pi, mp.acosh(abs(z)))


def _acos(mp, z):
    if isinstance(z, mp.mpc) or abs(z) <= 1:
        return mp.acos(z)
    return mp.pi / 2 - _asin(mp, z)


def _atan(mp, z):
    if isinstance(z, mp.mpc) and z.real == 0 and abs(z.imag) == 1:
        raise ZeroDivisionError
    return mp.atan(z)


def _acot(mp, z):
    if z == 0:
        return mp.pi / 2
    return _atan(mp, 1 / z)


def _acosh(mp, z):
    if isinstance(z, mp.mpc) or z >= 1:
        return mp.acosh(z)
    if z >= -1:
        return mp.mpc(0, mp.acos(z))
    return mp.mpc(mp.acosh(-z), mp.pi)


def _atanh(mp, z):
    if isinstance(z, mp.mpc):
        if z.imag == 0 and abs(z.real) == 1:
            raise ZeroDivisionError
        return mp.atanh(z)
    if abs(z) < 1:
        return mp.atanh(z)
    if abs(z) == 1:
        raise ZeroDivisionError
    return mp.mpc(mp.ln(abs((1 + z) / (1 - z))) / 2, mp.pi / 2)


def _pos_recip(fn):
    def g(mp, z):
        return fn(mp, _recip(mp, z))
    return g


_ELEMENTARY = {
    "exp": lambda mp, z: mp.exp(z),
    "ln": _ln,
    "sqrt": _sqrt,
    "sin": lambda mp, z: mp.sin(z),
    "cos": lambda mp, z: mp.cos(z),
    "tan": lambda mp, z: mp.tan(z),
    "cot": lambda mp, z: _recip(mp, mp.tan(z)),
    "sec": lambda mp, z: _recip(mp, mp.cos(z)),
    "csc": lambda mp, z: _recip(mp, mp.sin(z)),
    "sinh": lambda mp, z: mp.sinh(z),
    "cosh": lambda mp, z: mp.cosh(z),
    "tanh": lambda mp, z: mp.tanh(z),
    "coth": lambda mp, z: _recip(mp, mp.tanh(z)),
    "sech": lambda mp, z: _recip(mp, mp.cosh(z)),
    "csch": lambda mp, z: _recip(mp, mp.sinh(z)),
    "asin": _asin,
    "acos": _acos,
    "atan": _atan,
    "acot": _acot,
    "asec": _pos_recip(_acos),
    "acsc": _pos_recip(_asin),
    "asinh": lambda mp, z: mp.asinh(z),
    "acosh": _acosh,
    "atanh": _atanh,
    "acoth": _pos_recip(_atanh),
}

ELEMENTARY_NAMES = frozenset(_ELEMENTARY)


def elementary(fn: str, z, ctx: EvalContext):
    impl = _ELEMENTARY.get(fn)
    if impl is None:
        raise UsageError(f"unknown elementary function {fn!r}")
    mp = ctx.mp
    z = realify(z, ctx)
    try:
        r = impl(mp, z)
    except (ZeroDivisionError, ValueError) as exc:
        raise DomainError(f"{fn} undefined at {mp.nstr(z, 10)}") from exc
    return check_finite(r, ctx, fn)


def _check_not_pole(z, mp, what):
    if not isinstance(z, mp.mpc) and z <= 0 and z == int(z):
        raise DomainError(f"{what} has a pole at {int(z)}")
    if isinstance(z, mp.mpc) and z.imag == 0 and z.real <= 0 and z.real == int(z.real):
        raise DomainError(f"{what} has a pole at {int(z.real)}")


def gamma(z, ctx: EvalContext):
    mp = ctx.mp
    z = realify(z, ctx)
    _check_not_pole(z, mp, "gamma")
    return check_finite(mp.gamma(z), ctx, "gamma")


def digamma(z, ctx: EvalContext):
    mp = ctx.mp
    z = realify(z, ctx)
    _check_not_pole(z, mp, "digamma")
    return check_finite(mp.digamma(z), ctx, "digamma")


def zeta_int(s: int, ctx: EvalContext):
    if isinstance(s, Rational) and s.denominator == 1:
        s = int(s)
    if not isinstance(s, int) or s < 2:
        raise DomainError(f"zeta_int needs an integer s >= 2, got {s!r}")
    return ctx.cached(("zeta", s), lambda: ctx.mp.zeta(s))


def polylog(s: int, z, ctx: EvalContext):
    if isinstance(s, Rational) and s.denominator == 1:
        s = int(s)
    if s not in (2, 3):
        raise DomainError(f"polylog order must be 2 or 3, got {s!r}")
    mp = ctx.mp
    z = realify(z, ctx)
    if abs(z) > 1:
        raise DomainError("polylog argument outside the unit disk")
    return check_finite(mp.polylog(s, z), ctx, "polylog")


LERCH_MAX_TERMS = 10**6


def lerch_phi(z, s: int, a, ctx: EvalContext):
    """Sum of z^k / (k+a)^s over k >= 0, for |z| <= 1 - 1e-3 and integer s."""
    if isinstance(s, Rational) and s.denominator == 1:
        s = int(s)
    if not isinstance(s, int):
        raise DomainError(f"lerch_phi needs an integer order, got {s!r}")
    mp = ctx.mp
    z = realify(z, ctx)
    a = realify(a, ctx)
    az = abs(z)
    if az > 1 - mp.mpf(10) ** -3:
        raise DomainError("lerch_phi argument too close to the unit circle")
    if s > 0:
        _check_not_pole(a, mp, "lerch_phi")
    if z == 0:
        return complex_pow(a, -s, ctx)
    tol = mp.mpf(10) ** (-ctx.working_digits)
    total = mp.mpf(0)
    zk = mp.mpf(1)
    for k in range(LERCH_MAX_TERMS):
        base = k + a
        term = zk * (base ** (-s) if base != 0 else 0)
        total += term
        zk *= z
        nxt_base = base + 1
        if s <= 0:
            # ratio |z| ((k+1+a)/(k+a))^|s| decreases towards |z|
            shrink = abs((nxt_base + 1) / nxt_base) ** (-s) if nxt_base != 0 else mp.inf
            r = az * shrink
        else:
            r = az
        if r < 1 and k > 2 * abs(a):
            nxt = abs(zk * nxt_base ** (-s))
            if nxt / (1 - r) <= tol * abs(total):
                return check_finite(total, ctx, "lerch_phi")
    raise DomainError("lerch_phi did not converge")
