"""Bit-exact binary floating-point formats.

Values of a format are handled in two ways:

* as plain Python floats, which hold every value of the supported formats
  exactly (the hot path used by the solver), and
* as :class:`FloatValue` objects carrying the raw bit pattern, which is the
  authoritative external representation.

Only round-to-nearest-even is modelled.  The supported formats are limited to
``exponent_bits <= 8`` and ``mantissa_bits <= 23`` so that the product of a
format value with a rounding midpoint is always exact in a binary64 double;
the projection code relies on this.
"""

from __future__ import annotations

import math
import struct
from decimal import Decimal
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Union

Rational = Union[Fraction, int, float]

_pack_f = struct.Struct("<f").pack
_unpack_f = struct.Struct("<f").unpack
_pack_I = struct.Struct("<I").pack
_unpack_I = struct.Struct("<I").unpack


class FloatError(Exception):
    """Base class for float-core errors."""


class DomainError(FloatError, ValueError):
    """Operation applied to a non-finite value or to one outside the format."""


class OverflowBoundary(FloatError):
    """No successor (predecessor) exists inside the finite range."""


@dataclass(frozen=True)
class FloatFormat:
    exponent_bits: int
    mantissa_bits: int
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not 2 <= self.exponent_bits <= 8:
            raise ValueError(f"exponent_bits must be in [2, 8], got {self.exponent_bits}")
        if not 1 <= self.mantissa_bits <= 23:
            raise ValueError(f"mantissa_bits must be in [1, 23], got {self.mantissa_bits}")

    def __str__(self) -> str:
        return self.name or f"fp({self.exponent_bits},{self.mantissa_bits})"

    # -- derived constants -------------------------------------------------

    @cached_property
    def is_binary32(self) -> bool:
        return self.exponent_bits == 8 and self.mantissa_bits == 23

    @cached_property
    def width(self) -> int:
        return 1 + self.exponent_bits + self.mantissa_bits

    @cached_property
    def bias(self) -> int:
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def emax(self) -> int:
        return self.bias

    @cached_property
    def emin(self) -> int:
        return 1 - self.bias

    @cached_property
    def min_subnormal(self) -> float:
        return math.ldexp(1.0, self.emin - self.mantissa_bits)

    @cached_property
    def min_normal(self) -> float:
        return math.ldexp(1.0, self.emin)

    @cached_property
    def max_finite(self) -> float:
        return math.ldexp(2.0 - math.ldexp(1.0, -self.mantissa_bits), self.emax)

    @cached_property
    def overflow_edge(self) -> float:
        """2**(emax+1): the virtual successor of the largest finite value."""
        return math.ldexp(1.0, self.emax + 1)

    @cached_property
    def max_ordinal(self) -> int:
        return ((1 << self.exponent_bits) - 1 << self.mantissa_bits) - 1

    @cached_property
    def finite_count(self) -> int:
        return 2 * self.max_ordinal + 1

    @cached_property
    def _mask(self) -> int:
        return (1 << self.mantissa_bits) - 1

    # -- fast path on Python floats ---------------------------------------

    def round(self, x: float) -> float:
        """Round a double to this format (nearest-even); overflow gives +-inf.

        Rounding an exactly computed double result of ``+ - * / sqrt`` on
        format values reproduces the correctly rounded format operation, since
        53 >= 2p + 2 for every supported precision p.
        """
        if self.is_binary32:
            try:
                return _unpack_f(_pack_f(x))[0]
            except OverflowError:
                return math.copysign(math.inf, x)
        if x == 0.0 or not math.isfinite(x):
            return x
        e = math.frexp(x)[1] - 1
        q = max(e, self.emin) - self.mantissa_bits
        n = round(math.ldexp(x, -q))
        if n == 0:
            return math.copysign(0.0, x)
        r = math.ldexp(float(n), q)
        if abs(r) > self.max_finite:
            return math.copysign(math.inf, x)
        return r

    def contains(self, x: float) -> bool:
        """True iff ``x`` is a finite value of this format."""
        return math.isfinite(x) and self.round(x) == x and abs(x) <= self.max_finite

    def ordinal(self, x: float) -> int:
        """Rank of a finite format value; -0 and +0 share rank 0."""
        if self.is_binary32:
            b = _unpack_I(_pack_f(x))[0]
            k = b & 0x7FFFFFFF
            return -k if b >> 31 else k
        a = abs(x)
        if a < self.min_normal:
            k = int(a / self.min_subnormal)
        else:
            m, e = math.frexp(a)
            mb = self.mantissa_bits
            k = ((e - 1 + self.bias) << mb) + int(math.ldexp(m, mb + 1)) - (1 << mb)
        return -k if x < 0 else k

    def from_ordinal(self, k: int) -> float:
        if self.is_binary32:
            if k >= 0:
                return _unpack_f(_pack_I(k))[0]
            return _unpack_f(_pack_I(-k | 0x80000000))[0]
        a = -k if k < 0 else k
        mb = self.mantissa_bits
        be = a >> mb
        f = a & self._mask
        if be == 0:
            v = math.ldexp(float(f), self.emin - mb)
        else:
            v = math.ldexp(float((1 << mb) | f), be - self.bias - mb)
        return -v if k < 0 else v

    def next_up(self, x: float) -> float:
        """Successor of a finite value; raises OverflowBoundary at max."""
        k = self.ordinal(x)
        if k >= self.max_ordinal:
            raise OverflowBoundary(f"no finite successor of {x!r} in {self}")
        return self.from_ordinal(k + 1)

    def next_down(self, x: float) -> float:
        k = self.ordinal(x)
        if k <= -self.max_ordinal:
            raise OverflowBoundary(f"no finite predecessor of {x!r} in {self}")
        return self.from_ordinal(k - 1)

    def is_even(self, x: float) -> bool:
        return not self.ordinal(x) & 1

    def ceil(self, x: float) -> float | None:
        """Smallest format value >= the double ``x``; None if x > max."""
        if x > self.max_finite:
            return None
        if x <= -self.max_finite:
            return -self.max_finite
        c = self.round(x)
        if c < x:
            c = self.from_ordinal(self.ordinal(c) + 1)
        return c + 0.0

    def floor(self, x: float) -> float | None:
        if x < -self.max_finite:
            return None
        if x >= self.max_finite:
            return self.max_finite
        c = self.round(x)
        if c > x:
            c = self.from_ordinal(self.ordinal(c) - 1)
        return c + 0.0

    # -- conversions -------------------------------------------------------

    def bits_of(self, x: float) -> int:
        """Bit pattern of a format value (or +-inf / NaN)."""
        sign = 1 if math.copysign(1.0, x) < 0 else 0
        top = sign << (self.width - 1)
        mb = self.mantissa_bits
        if math.isnan(x):
            return top | ((1 << self.exponent_bits) - 1) << mb | 1 << (mb - 1)
        if math.isinf(x):
            return top | ((1 << self.exponent_bits) - 1) << mb
        return top | abs(self.ordinal(x))

    def value_of(self, bits: int) -> float:
        if not 0 <= bits < 1 << self.width:
            raise ValueError(f"bit pattern 0x{bits:x} out of range for {self}")
        mb = self.mantissa_bits
        sign = bits >> (self.width - 1)
        mag = bits & ((1 << (self.width - 1)) - 1)
        if mag >> mb == (1 << self.exponent_bits) - 1:
            v = math.nan if mag & self._mask else math.inf
        else:
            v = self.from_ordinal(mag)
        return -v if sign else v


BINARY32 = FloatFormat(8, 23, "binary32")
MINI43 = FloatFormat(4, 3, "fp(4,3)")


@dataclass(frozen=True, eq=False)
class FloatValue:
    """A bit pattern interpreted in a given format."""

    bits: int
    fmt: FloatFormat = BINARY32

    @classmethod
    def from_float(cls, x: float, fmt: FloatFormat = BINARY32) -> FloatValue:
        if not math.isnan(x) and not math.isinf(x) and not fmt.contains(x):
            raise DomainError(f"{x!r} is not a value of {fmt}")
        return cls(fmt.bits_of(x), fmt)

    @classmethod
    def parse(cls, text: str, fmt: FloatFormat = BINARY32) -> FloatValue:
        """Nearest-even conversion of a decimal string."""
        return round_nearest_even(Fraction(text), fmt)

    def to_float(self) -> float:
        return self.fmt.value_of(self.bits)

    def to_fraction(self) -> Fraction:
        if not self.is_finite():
            raise DomainError(f"{self} has no exact rational value")
        return Fraction(self.to_float())

    # -- classification ---------------------------------------------------

    @property
    def _exp_field(self) -> int:
        return (self.bits >> self.fmt.mantissa_bits) & ((1 << self.fmt.exponent_bits) - 1)

    @property
    def _frac_field(self) -> int:
        return self.bits & self.fmt._mask

    @property
    def sign(self) -> int:
        return self.bits >> (self.fmt.width - 1)

    def is_nan(self) -> bool:
        return self._exp_field == (1 << self.fmt.exponent_bits) - 1 and self._frac_field != 0

    def is_infinite(self) -> bool:
        return self._exp_field == (1 << self.fmt.exponent_bits) - 1 and self._frac_field == 0

    def is_finite(self) -> bool:
        return self._exp_field != (1 << self.fmt.exponent_bits) - 1

    def is_zero(self) -> bool:
        return self._exp_field == 0 and self._frac_field == 0

    def is_subnormal(self) -> bool:
        return self._exp_field == 0 and self._frac_field != 0

    def is_normal(self) -> bool:
        return 0 < self._exp_field < (1 << self.fmt.exponent_bits) - 1

    def classify(self) -> str:
        for kind in ("nan", "infinite", "zero", "subnormal", "normal"):
            if getattr(self, f"is_{kind}")():
                return kind
        raise AssertionError("unreachable")

    # -- comparison -------------------------------------------------------

    def _key(self) -> tuple:
        if self.is_zero():
            return (self.fmt, 0)
        return (self.fmt, self.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FloatValue):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def hex(self) -> str:
        digits = (self.fmt.width + 3) // 4
        return f"0x{self.bits:0{digits}X}"

    def decimal(self) -> str:
        return shortest_decimal(self.to_float(), self.fmt)

    def __str__(self) -> str:
        return f"{self.decimal()} / {self.hex()}"

    def __repr__(self) -> str:
        return f"FloatValue({self.decimal()}, {self.hex()}, {self.fmt})"


def _finite(x: FloatValue) -> float:
    if not x.is_finite():
        raise DomainError(f"{x!r} is not finite")
    return x.to_float()


def succ(x: FloatValue) -> FloatValue:
    """Smallest finite value strictly greater than ``x``."""
    v = _finite(x)
    return FloatValue.from_float(x.fmt.next_up(v), x.fmt)


def pred(x: FloatValue) -> FloatValue:
    v = _finite(x)
    return FloatValue.from_float(x.fmt.next_down(v), x.fmt)


def ordinal(x: FloatValue) -> int:
    return x.fmt.ordinal(_finite(x))


def from_ordinal(k: int, fmt: FloatFormat = BINARY32) -> FloatValue:
    if abs(k) > fmt.max_ordinal:
        raise OverflowBoundary(f"ordinal {k} outside the finite range of {fmt}")
    return FloatValue.from_float(fmt.from_ordinal(k), fmt)


def round_nearest_even(r: Rational, fmt: FloatFormat = BINARY32) -> FloatValue:
    """Round an exact rational to ``fmt``; overflow yields a signed infinity."""
    r = Fraction(r)
    if r == 0:
        return FloatValue(0, fmt)
    negative = r < 0
    n, d = abs(r.numerator), r.denominator
    e = n.bit_length() - d.bit_length()
    # normalise so that 2**e <= n/d < 2**(e+1)
    if (n << max(0, -e)) < (d << max(0, e)):
        e -= 1
    q = max(e, fmt.emin) - fmt.mantissa_bits
    if q >= 0:
        k, rem = divmod(n, d << q)
        den = d << q
    else:
        k, rem = divmod(n << -q, d)
        den = d
    if 2 * rem > den or (2 * rem == den and k & 1):
        k += 1
    value = math.ldexp(float(k), q) if k else 0.0
    if value > fmt.max_finite:
        value = math.inf
    return FloatValue.from_float(-value if negative else value, fmt)


def shortest_decimal(x: float, fmt: FloatFormat = BINARY32) -> str:
    """Shortest decimal string that parses back (nearest-even) to ``x``."""
    if not math.isfinite(x):
        return repr(x)
    if x == 0.0:
        return "-0.0" if math.copysign(1.0, x) < 0 else "0.0"
    target = fmt.bits_of(x)
    for digits in range(1, 18):
        text = f"{x:.{digits}g}"
        if round_nearest_even(Fraction(text), fmt).bits == target:
            break
    if "e" in text and 1e-5 <= abs(x) < 1e16:
        text = format(Decimal(text), "f")
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def parse_float(text: str, fmt: FloatFormat = BINARY32) -> float:
    """Decimal string to the nearest format value, as a Python float."""
    v = round_nearest_even(Fraction(text), fmt)
    if not v.is_finite():
        raise DomainError(f"literal {text!r} overflows {fmt}")
    return v.to_float()


def ceil_value(r: Rational, fmt: FloatFormat = BINARY32, strict: bool = False) -> float | None:
    """Smallest finite value >= r (> r when strict); None when none exists."""
    r = Fraction(r)
    c = round_nearest_even(r, fmt)
    v = fmt.max_finite if c.is_infinite() and c.sign == 0 else (
        -fmt.max_finite if c.is_infinite() else c.to_float())
    k = fmt.ordinal(v)
    while Fraction(fmt.from_ordinal(k)) < r or (strict and Fraction(fmt.from_ordinal(k)) == r):
        k += 1
        if k > fmt.max_ordinal:
            return None
    while k > -fmt.max_ordinal:
        below = Fraction(fmt.from_ordinal(k - 1))
        if below > r or (not strict and below == r):
            k -= 1
        else:
            break
    return fmt.from_ordinal(k) + 0.0


def floor_value(r: Rational, fmt: FloatFormat = BINARY32, strict: bool = False) -> float | None:
    """Largest finite value <= r (< r when strict); None when none exists."""
    c = ceil_value(-Fraction(r), fmt, strict)
    return None if c is None else -c + 0.0
