"""Closed intervals of finite floats and rounded forward evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .floats import BINARY32, DomainError, FloatFormat, FloatValue, shortest_decimal

#: above this many values in the smaller operand domain, overflow boundaries
#: are approximated by +-max instead of being computed by enumeration
ENUMERATION_LIMIT = 4096

OPS = ("+", "-", "*", "/")


@dataclass(frozen=True)
class FpInterval:
    lo: float
    hi: float
    fmt: FloatFormat = BINARY32

    def __post_init__(self) -> None:
        if not (self.fmt.contains(self.lo) and self.fmt.contains(self.hi)):
            raise DomainError(f"bounds [{self.lo!r}, {self.hi!r}] are not finite {self.fmt} values")
        if self.lo > self.hi:
            raise DomainError(f"lo > hi in [{self.lo!r}, {self.hi!r}]; use EMPTY for the empty set")
        # -0 and +0 are one domain point
        object.__setattr__(self, "lo", self.lo + 0.0)
        object.__setattr__(self, "hi", self.hi + 0.0)

    is_empty = False

    @classmethod
    def point(cls, x: float, fmt: FloatFormat = BINARY32) -> FpInterval:
        return cls(x, x, fmt)

    @classmethod
    def full(cls, fmt: FloatFormat = BINARY32) -> FpInterval:
        return cls(-fmt.max_finite, fmt.max_finite, fmt)

    @property
    def lo_value(self) -> FloatValue:
        return FloatValue.from_float(self.lo, self.fmt)

    @property
    def hi_value(self) -> FloatValue:
        return FloatValue.from_float(self.hi, self.fmt)

    def is_singleton(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def issubset(self, other: FpInterval | _Empty) -> bool:
        return not other.is_empty and other.lo <= self.lo and self.hi <= other.hi

    def values(self):
        """Iterate over every float of the interval in increasing order."""
        f = self.fmt
        for k in range(f.ordinal(self.lo), f.ordinal(self.hi) + 1):
            yield f.from_ordinal(k) + 0.0

    def __str__(self) -> str:
        return f"[{shortest_decimal(self.lo, self.fmt)}, {shortest_decimal(self.hi, self.fmt)}]"

    def exact_str(self) -> str:
        return f"{self} {{bits: {self.lo_value.hex()}, {self.hi_value.hex()}}}"


class _Empty:
    """The empty interval; a sentinel shared by all formats."""

    is_empty = True
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def issubset(self, other) -> bool:
        return True

    def __contains__(self, x) -> bool:
        return False

    def values(self):
        return iter(())

    def __repr__(self) -> str:
        return "EMPTY"

    __str__ = lambda self: "[]"  # noqa: E731


EMPTY = _Empty()


def make(lo: float, hi: float, fmt: FloatFormat) -> FpInterval | _Empty:
    return EMPTY if lo > hi else FpInterval(lo, hi, fmt)


def intersect(x: FpInterval | _Empty, y: FpInterval | _Empty) -> FpInterval | _Empty:
    if x.is_empty or y.is_empty:
        return EMPTY
    if x.fmt != y.fmt:
        raise DomainError("intersecting intervals of different formats")
    return make(max(x.lo, y.lo), min(x.hi, y.hi), x.fmt)


def hull(x: FpInterval | _Empty, y: FpInterval | _Empty) -> FpInterval | _Empty:
    if x.is_empty:
        return y
    if y.is_empty:
        return x
    return FpInterval(min(x.lo, y.lo), max(x.hi, y.hi), x.fmt)


def width(x: FpInterval | _Empty) -> Fraction:
    if x.is_empty:
        return Fraction(0)
    return Fraction(x.hi) - Fraction(x.lo)


def count(x: FpInterval | _Empty) -> int:
    if x.is_empty:
        return 0
    return x.fmt.ordinal(x.hi) - x.fmt.ordinal(x.lo) + 1


# -- float-level kernels (shared with the constraint store) --------------------


def _apply(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    return a / b


def _corners(fmt: FloatFormat, op: str, xl, xh, yl, yh) -> tuple[float, float]:
    """Rounded image bounds of a monotone-per-argument op over a box.

    May return infinite bounds when a corner overflows.
    """
    r = fmt.round
    if op == "+":
        return r(xl + yl), r(xh + yh)
    if op == "-":
        return r(xl - yh), r(xh - yl)
    if op == "*":
        a, b, c, d = xl * yl, xl * yh, xh * yl, xh * yh
    else:
        a, b, c, d = xl / yl, xl / yh, xh / yl, xh / yh
    return r(min(a, b, c, d)), r(max(a, b, c, d))


def _y_pieces(fmt: FloatFormat, yl: float, yh: float) -> list[tuple[float, float]]:
    """Split a divisor domain into its nonzero sign pieces."""
    pieces = []
    if yl < 0:
        pieces.append((yl, min(yh, -fmt.min_subnormal)))
    if yh > 0:
        pieces.append((max(yl, fmt.min_subnormal), yh))
    return pieces


def forward_bounds(fmt: FloatFormat, op: str, xl: float, xh: float, yl: float, yh: float):
    """Hull of the finite rounded image of ``x op y`` over the box, or None."""
    if op == "/" and yl <= 0.0 <= yh:
        lo = hi = None
        for a, b in _y_pieces(fmt, yl, yh):
            got = forward_bounds(fmt, op, xl, xh, a, b)
            if got is not None:
                lo = got[0] if lo is None else min(lo, got[0])
                hi = got[1] if hi is None else max(hi, got[1])
        return None if lo is None else (lo, hi)
    lo, hi = _corners(fmt, op, xl, xh, yl, yh)
    if -math.inf < lo and hi < math.inf:
        return lo + 0.0, hi + 0.0
    return _overflowing_bounds(fmt, op, xl, xh, yl, yh)


def _overflowing_bounds(fmt, op, xl, xh, yl, yh):
    from .store import finite_operand_range

    nx = fmt.ordinal(xh) - fmt.ordinal(xl)
    ny = fmt.ordinal(yh) - fmt.ordinal(yl)
    if min(nx, ny) + 1 > ENUMERATION_LIMIT:
        lo, hi = _corners(fmt, op, xl, xh, yl, yh)
        lo = max(lo, -fmt.max_finite)
        hi = min(hi, fmt.max_finite)
        # a clamped bound is sound but possibly not attained; check feasibility
        if lo > hi:
            return None
        return lo + 0.0, hi + 0.0
    lo = hi = None
    # enumerate the smaller domain; for each fixed value the image is monotone
    if nx <= ny:
        for x in FpInterval(xl, xh, fmt).values():
            for a, b in finite_operand_range(fmt, op, x, yl, yh, side="y"):
                vals = (fmt.round(_apply(op, x, a)), fmt.round(_apply(op, x, b)))
                lo = min(vals) if lo is None else min(lo, *vals)
                hi = max(vals) if hi is None else max(hi, *vals)
    else:
        for y in FpInterval(yl, yh, fmt).values():
            if op == "/" and y == 0.0:
                continue
            for a, b in finite_operand_range(fmt, op, y, xl, xh, side="x"):
                vals = (fmt.round(_apply(op, a, y)), fmt.round(_apply(op, b, y)))
                lo = min(vals) if lo is None else min(lo, *vals)
                hi = max(vals) if hi is None else max(hi, *vals)
    return None if lo is None else (lo + 0.0, hi + 0.0)


def sqrt_bounds(fmt: FloatFormat, xl: float, xh: float):
    if xh < 0:
        return None
    lo = fmt.round(math.sqrt(max(xl, 0.0)))
    return lo + 0.0, fmt.round(math.sqrt(xh))


# -- interval-level operations --------------------------------------------------


def forward_eval(op: str, x: FpInterval | _Empty, y: FpInterval | _Empty) -> FpInterval | _Empty:
    """Smallest interval containing every finite ``round(x op y)``."""
    if op not in OPS:
        raise ValueError(f"unknown operator {op!r}")
    if x.is_empty or y.is_empty:
        return EMPTY
    if x.fmt != y.fmt:
        raise DomainError("operands of different formats")
    got = forward_bounds(x.fmt, op, x.lo, x.hi, y.lo, y.hi)
    return EMPTY if got is None else FpInterval(got[0], got[1], x.fmt)


def forward_sqrt(x: FpInterval | _Empty) -> FpInterval | _Empty:
    """Image of correctly rounded sqrt over the non-negative part of ``x``."""
    if x.is_empty:
        return EMPTY
    got = sqrt_bounds(x.fmt, x.lo, x.hi)
    return EMPTY if got is None else FpInterval(got[0], got[1], x.fmt)
