"""Double-double ("wide") floating point arithmetic.

A WideReal is an unevaluated sum hi + lo of two doubles with |lo| <= ulp(hi)/2.
The components may be Python floats or numpy arrays of equal shape, in which
case every operation is applied elementwise.  All arithmetic is built on the
error-free transformations two_sum and two_prod, so results are bit
reproducible on any IEEE-754 platform.
"""
import math
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import DomainError, WideOverflowError

Number = Union[float, np.ndarray]

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    """Return (s, e) with s = fl(a + b) and s + e == a + b exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    """two_sum for |a| >= |b|."""
    s = a + b
    err = b - (s - a)
    return s, err


def split(a):
    """Dekker split of a double into two 26-bit halves."""
    t = _SPLITTER * a
    hi = t - (t - a)
    lo = a - hi
    return hi, lo


def two_prod(a, b):
    """Return (p, e) with p = fl(a * b) and p + e == a * b exactly."""
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


class WideReal:
    """Double-double value (or array of values)."""

    __slots__ = ("hi", "lo")

    def __init__(self, hi: Number = 0.0, lo: Number = 0.0):
        if isinstance(hi, np.ndarray) or isinstance(lo, np.ndarray):
            hi, lo = np.broadcast_arrays(np.asarray(hi, dtype=np.float64),
                                         np.asarray(lo, dtype=np.float64))
        else:
            hi, lo = float(hi), float(lo)
        self.hi = hi
        self.lo = lo

    # construction -----------------------------------------------------

    @classmethod
    def from_int(cls, n: int) -> "WideReal":
        hi = float(n)
        lo = float(n - int(hi))
        return cls(hi, lo)

    @classmethod
    def from_fraction(cls, value: Fraction) -> "WideReal":
        value = Fraction(value)
        hi = float(value)
        lo = float(value - Fraction(hi))
        return cls(hi, lo)

    @classmethod
    def from_fractions(cls, values) -> "WideReal":
        """Array form of from_fraction for a flat sequence of rationals."""
        his = []
        los = []
        for value in values:
            value = Fraction(value)
            hi = float(value)
            his.append(hi)
            los.append(float(value - Fraction(hi)))
        return cls(np.array(his, dtype=np.float64), np.array(los, dtype=np.float64))

    @classmethod
    def zeros(cls, shape) -> "WideReal":
        return cls(np.zeros(shape), np.zeros(shape))

    # inspection -------------------------------------------------------

    @property
    def shape(self):
        return np.shape(self.hi)

    @property
    def is_array(self) -> bool:
        return isinstance(self.hi, np.ndarray)

    def overflowed(self) -> bool:
        """True when any component saturated to a non-finite value."""
        if self.is_array:
            return bool(np.any(~np.isfinite(self.hi)))
        return not math.isfinite(self.hi)

    def to_float(self) -> Number:
        return self.hi

    def to_fraction(self) -> Fraction:
        return Fraction(self.hi) + Fraction(self.lo)

    def __getitem__(self, index) -> "WideReal":
        return WideReal(self.hi[index], self.lo[index])

    def __len__(self):
        return len(self.hi)

    def __repr__(self):
        return f"WideReal(hi={self.hi!r}, lo={self.lo!r})"

    # operators --------------------------------------------------------

    def __add__(self, other):
        return wide_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return wide_sub(self, _coerce(other))

    def __rsub__(self, other):
        return wide_sub(_coerce(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)) and not isinstance(other, bool) and float(other) == other:
            return mul_float(self, float(other))
        return wide_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return wide_div(self, _coerce(other))

    def __rtruediv__(self, other):
        return wide_div(_coerce(other), self)

    def __neg__(self):
        return WideReal(-self.hi, -self.lo)

    def __abs__(self):
        if self.is_array:
            neg = self.hi < 0
            return WideReal(np.where(neg, -self.hi, self.hi), np.where(neg, -self.lo, self.lo))
        if self.hi < 0:
            return -self
        return self


def _coerce(value) -> WideReal:
    if isinstance(value, WideReal):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return WideReal.from_int(value)
    if isinstance(value, Fraction):
        return WideReal.from_fraction(value)
    return WideReal(value, 0.0)


def _pack(hi, lo, naive) -> WideReal:
    """Build a result, saturating non-finite components to the naive value."""
    if np.ndim(hi) == 0 and not isinstance(hi, np.ndarray):
        hi = float(hi)
        if not math.isfinite(hi):
            return WideReal(float(naive), 0.0)
        return WideReal(hi, float(lo))
    bad = ~np.isfinite(hi)
    if bad.any():
        hi = np.where(bad, naive, hi)
        lo = np.where(bad, 0.0, lo)
    return WideReal(hi, lo)


def wide_add(a: WideReal, b: WideReal) -> WideReal:
    """Accurate double-double addition."""
    with np.errstate(over="ignore", invalid="ignore"):
        s1, s2 = two_sum(a.hi, b.hi)
        t1, t2 = two_sum(a.lo, b.lo)
        s2 = s2 + t1
        s1, s2 = quick_two_sum(s1, s2)
        s2 = s2 + t2
        s1, s2 = quick_two_sum(s1, s2)
        return _pack(s1, s2, a.hi + b.hi)


def wide_sub(a: WideReal, b: WideReal) -> WideReal:
    return wide_add(a, WideReal(-b.hi, -b.lo))


def mul_float(a: WideReal, b: Number) -> WideReal:
    """Multiply a wide value by a plain double."""
    with np.errstate(over="ignore", invalid="ignore"):
        p, e = two_prod(a.hi, b)
        e = e + a.lo * b
        p, e = quick_two_sum(p, e)
        return _pack(p, e, a.hi * b)


def wide_mul(a: WideReal, b: WideReal) -> WideReal:
    with np.errstate(over="ignore", invalid="ignore"):
        p, e = two_prod(a.hi, b.hi)
        e = e + (a.hi * b.lo + a.lo * b.hi)
        p, e = quick_two_sum(p, e)
        return _pack(p, e, a.hi * b.hi)


def wide_div(a: WideReal, b: WideReal) -> WideReal:
    """Long division with three correction steps."""
    if not b.is_array and b.hi == 0.0:
        raise ZeroDivisionError("wide division by zero")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        q1 = a.hi / b.hi
        r = wide_sub(a, mul_float(b, q1))
        q2 = r.hi / b.hi
        r = wide_sub(r, mul_float(b, q2))
        q3 = r.hi / b.hi
        q1, q2 = quick_two_sum(q1, q2)
        result = wide_add(WideReal(q1, q2), WideReal(q3, 0.0 * q3))
        return _pack(result.hi, result.lo, a.hi / b.hi)


def wide_sqrt(a: WideReal) -> WideReal:
    """Square root by one Newton step on the double approximation."""
    if not a.is_array:
        if a.hi < 0.0:
            raise DomainError(f"wide_sqrt of negative value {a.hi!r}")
        if a.hi == 0.0:
            return WideReal(0.0, 0.0)
        x = 1.0 / math.sqrt(a.hi)
        ax = a.hi * x
        sq = WideReal(*two_prod(ax, ax))
        diff = wide_sub(a, sq).hi
        s, e = two_sum(ax, diff * (x * 0.5))
        return _pack(s, e, math.sqrt(a.hi))
    if np.any(a.hi < 0.0):
        raise DomainError("wide_sqrt of negative value")
    positive = a.hi > 0.0
    safe = np.where(positive, a.hi, 1.0)
    x = 1.0 / np.sqrt(safe)
    ax = safe * x
    sq = WideReal(*two_prod(ax, ax))
    diff = wide_sub(WideReal(safe, np.where(positive, a.lo, 0.0)), sq).hi
    s, e = two_sum(ax, diff * (x * 0.5))
    return WideReal(np.where(positive, s, 0.0), np.where(positive, e, 0.0))


def wide_pow(a: WideReal, n: int) -> WideReal:
    """Integer power by repeated squaring."""
    if n < 0:
        return wide_div(WideReal(1.0), wide_pow(a, -n))
    result = WideReal(1.0) if not a.is_array else WideReal(np.ones(a.shape), np.zeros(a.shape))
    base = a
    while n:
        if n & 1:
            result = wide_mul(result, base)
        n >>= 1
        if n:
            base = wide_mul(base, base)
    return result


def wide_where(mask, a: WideReal, b: WideReal) -> WideReal:
    return WideReal(np.where(mask, a.hi, b.hi), np.where(mask, a.lo, b.lo))


def wide_sum(values: WideReal, axis: int = 0) -> WideReal:
    """Pairwise reduction along one axis.

    The first half is added to the second half until one slice remains, so the
    association order depends only on the length of the axis.
    """
    hi = np.moveaxis(np.asarray(values.hi, dtype=np.float64), axis, 0)
    lo = np.moveaxis(np.broadcast_to(np.asarray(values.lo, dtype=np.float64), np.shape(values.hi)), axis, 0)
    n = hi.shape[0]
    if n == 0:
        return WideReal.zeros(hi.shape[1:])
    while n > 1:
        half = n // 2
        s = wide_add(WideReal(hi[:half], lo[:half]), WideReal(hi[half:2 * half], lo[half:2 * half]))
        if n % 2:
            hi = np.concatenate([s.hi, hi[2 * half:]])
            lo = np.concatenate([s.lo, lo[2 * half:]])
        else:
            hi, lo = s.hi, s.lo
        n = hi.shape[0]
    return WideReal(hi[0], lo[0])


def require_finite(value: WideReal, what: str) -> WideReal:
    if value.overflowed():
        raise WideOverflowError(f"{what} overflowed the double-double range")
    return value


PI = WideReal(3.141592653589793, 1.2246467991473532e-16)
SQRT2 = wide_sqrt(WideReal(2.0))
