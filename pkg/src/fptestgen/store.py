"""Float constraints with rounding-aware projections and consistency filtering.

Domains are closed float intervals held as two parallel lists of Python
floats.  Projections reason on the exact real preimage of a rounded result:
``round(r)`` lies in ``[zl, zh]`` iff ``r`` lies between the midpoints to the
neighbouring floats, each midpoint included when the bound it belongs to has
an even mantissa.  All exact comparisons are done in binary64 where the
format restrictions guarantee exactness (sums through ``math.fsum``, products
of a format value by a midpoint directly).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Union

from .floats import BINARY32, FloatFormat, shortest_decimal
from .interval import EMPTY, FpInterval, _corners, _y_pieces, forward_bounds, sqrt_bounds

Operand = Union[str, float]

_fsum = math.fsum


# -- constraint types ---------------------------------------------------------


def _fmt_operand(o: Operand) -> str:
    return o if isinstance(o, str) else repr(o)


@dataclass(frozen=True)
class Ternary:
    """``z = round(x op y)``."""

    op: str
    z: Operand
    x: Operand
    y: Operand

    def operands(self) -> tuple:
        return (self.z, self.x, self.y)

    def __str__(self) -> str:
        return f"{_fmt_operand(self.z)} = {_fmt_operand(self.x)} {self.op} {_fmt_operand(self.y)}"


@dataclass(frozen=True)
class Unary:
    """``z = round(sqrt(x))`` or ``z = -x``."""

    op: str
    z: Operand
    x: Operand

    def operands(self) -> tuple:
        return (self.z, self.x)

    def __str__(self) -> str:
        if self.op == "neg":
            return f"{_fmt_operand(self.z)} = -{_fmt_operand(self.x)}"
        return f"{_fmt_operand(self.z)} = sqrt({_fmt_operand(self.x)})"


@dataclass(frozen=True)
class Compare:
    rel: str
    x: Operand
    y: Operand

    def operands(self) -> tuple:
        return (self.x, self.y)

    def __str__(self) -> str:
        return f"{_fmt_operand(self.x)} {self.rel} {_fmt_operand(self.y)}"


@dataclass(frozen=True)
class Assign:
    z: Operand
    x: Operand

    def operands(self) -> tuple:
        return (self.z, self.x)

    def __str__(self) -> str:
        return f"{_fmt_operand(self.z)} = {_fmt_operand(self.x)}"


Constraint = Union[Ternary, Unary, Compare, Assign]

NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


@dataclass(frozen=True)
class SuspectSpec:
    """Where the suspicious value is observed, and the interval it must hit."""

    target_var: str
    location: object
    interval: FpInterval
    tolerance: Optional[str] = None


@dataclass(frozen=True)
class RealInterval:
    lo: Fraction
    lo_closed: bool
    hi: Fraction
    hi_closed: bool

    def __contains__(self, r) -> bool:
        r = Fraction(r)
        above = r > self.lo or (self.lo_closed and r == self.lo)
        below = r < self.hi or (self.hi_closed and r == self.hi)
        return above and below


# -- float-level projection kernels --------------------------------------------


def preimage_bounds(fmt: FloatFormat, zl: float, zh: float):
    """``(L, L_open, H, H_open)``: reals rounding into ``[zl, zh]``."""
    kl = fmt.ordinal(zl)
    below = -fmt.overflow_edge if kl <= -fmt.max_ordinal else fmt.from_ordinal(kl - 1)
    kh = fmt.ordinal(zh)
    above = fmt.overflow_edge if kh >= fmt.max_ordinal else fmt.from_ordinal(kh + 1)
    return (zl + below) / 2, bool(kl & 1), (zh + above) / 2, bool(kh & 1)


def _lowest(fmt: FloatFormat, ok: Callable[[float], bool], lo: float, hi: float, guess: float):
    """Smallest float c in [lo, hi] with ok(c), for ok monotone False..True."""
    if ok(lo):
        return lo
    if not ok(hi):
        return None
    a, b = fmt.ordinal(lo), fmt.ordinal(hi)  # ok(a) false, ok(b) true
    if math.isfinite(guess):
        g = fmt.round(guess)
        k = fmt.ordinal(g) if math.isfinite(g) else (b if g > 0 else a)
        if a < k < b:
            if ok(fmt.from_ordinal(k)):
                b = k
                if not ok(fmt.from_ordinal(k - 1)):
                    return fmt.from_ordinal(k) + 0.0
                b = k - 1
            else:
                a = k
                if ok(fmt.from_ordinal(k + 1)):
                    return fmt.from_ordinal(k + 1) + 0.0
                a = k + 1
    while b - a > 1:
        m = (a + b) >> 1
        if ok(fmt.from_ordinal(m)):
            b = m
        else:
            a = m
    return fmt.from_ordinal(b) + 0.0


def _highest(fmt: FloatFormat, ok: Callable[[float], bool], lo: float, hi: float, guess: float):
    """Largest float c in [lo, hi] with ok(c), for ok monotone True..False."""
    if ok(hi):
        return hi
    if not ok(lo):
        return None
    a, b = fmt.ordinal(lo), fmt.ordinal(hi)  # ok(a) true, ok(b) false
    if math.isfinite(guess):
        g = fmt.round(guess)
        k = fmt.ordinal(g) if math.isfinite(g) else (b if g > 0 else a)
        if a < k < b:
            if ok(fmt.from_ordinal(k)):
                a = k
                if not ok(fmt.from_ordinal(k + 1)):
                    return fmt.from_ordinal(k) + 0.0
                a = k + 1
            else:
                b = k
                if ok(fmt.from_ordinal(k - 1)):
                    return fmt.from_ordinal(k - 1) + 0.0
                b = k - 1
    while b - a > 1:
        m = (a + b) >> 1
        if ok(fmt.from_ordinal(m)):
            a = m
        else:
            b = m
    return fmt.from_ordinal(a) + 0.0


def _linear(fmt, a_sign, b_sign, P, ul, uh, vl, vh):
    """Bounds of v = a*z + b*u over z in P, u in [ul, uh], restricted to [vl, vh]."""
    L, Ls, H, Hs = P
    if a_sign > 0:
        A, As, A2, A2s = L, Ls, H, Hs
    else:
        A, As, A2, A2s = -H, Hs, -L, Ls
    B, B2 = (ul, uh) if b_sign > 0 else (-uh, -ul)
    if As:
        lo = _lowest(fmt, lambda c: _fsum((c, -A, -B)) > 0, vl, vh, A + B)
    else:
        lo = _lowest(fmt, lambda c: _fsum((c, -A, -B)) >= 0, vl, vh, A + B)
    if lo is None:
        return None
    if A2s:
        hi = _highest(fmt, lambda c: _fsum((c, -A2, -B2)) < 0, lo, vh, A2 + B2)
    else:
        hi = _highest(fmt, lambda c: _fsum((c, -A2, -B2)) <= 0, lo, vh, A2 + B2)
    if hi is None:
        return None
    return [(lo, hi)]


def _ge(v: float, strict: bool):
    return (lambda c: c > v) if strict else (lambda c: c >= v)


def _le(v: float, strict: bool):
    return (lambda c: c < v) if strict else (lambda c: c <= v)


def _has_zero(L, Ls, H, Hs) -> bool:
    return (L < 0 or (L == 0 and not Ls)) and (H > 0 or (H == 0 and not Hs))


def _neg_p(P):
    L, Ls, H, Hs = P
    return (-H, Hs, -L, Ls)


def _mul_pos(fmt, P, a, b, vl, vh):
    """x with x*y in P for some y in [a, b], 0 < a <= b."""
    L, Ls, H, Hs = P
    d = b if L >= 0 else a
    if Ls:
        lo = _lowest(fmt, lambda c: c * d > L, vl, vh, L / d)
    else:
        lo = _lowest(fmt, lambda c: c * d >= L, vl, vh, L / d)
    if lo is None:
        return None
    e = a if H >= 0 else b
    if Hs:
        hi = _highest(fmt, lambda c: c * e < H, lo, vh, H / e)
    else:
        hi = _highest(fmt, lambda c: c * e <= H, lo, vh, H / e)
    return None if hi is None else (lo, hi)


def _div_x_pos(fmt, P, a, b, vl, vh):
    """x with x/y in P for some y in [a, b], 0 < a <= b."""
    L, Ls, H, Hs = P
    v = L * a if L >= 0 else L * b
    w = H * b if H >= 0 else H * a
    lo = _lowest(fmt, _ge(v, Ls), vl, vh, v)
    if lo is None:
        return None
    hi = _highest(fmt, _le(w, Hs), lo, vh, w)
    return None if hi is None else (lo, hi)


def _div_y_pos(fmt, P, xl, xh, a, b):
    """y in [a, b] (0 < a) with x/y in P for some x in [xl, xh]."""
    L, Ls, H, Hs = P
    lower, upper = [], []
    # lower end of the admissible x range must not exceed xh
    if L == 0:
        if not (0 < xh if Ls else 0 <= xh):
            return None
    else:
        c1 = (lambda y: L * y < xh) if Ls else (lambda y: L * y <= xh)
        (upper if L > 0 else lower).append((c1, xh / L))
    # upper end of the admissible x range must reach xl
    if H == 0:
        if not (0 > xl if Hs else 0 >= xl):
            return None
    else:
        c2 = (lambda y: H * y > xl) if Hs else (lambda y: H * y >= xl)
        (lower if H > 0 else upper).append((c2, xl / H))
    lo = a
    for ok, guess in lower:
        lo = _lowest(fmt, ok, lo, b, guess)
        if lo is None:
            return None
    hi = b
    for ok, guess in upper:
        hi = _highest(fmt, ok, lo, hi, guess)
        if hi is None:
            return None
    # a later lower predicate may have been satisfied only above an earlier one
    for ok, _ in lower:
        if not ok(lo):
            return None
    return lo, hi


def project(fmt: FloatFormat, op: str, side: str, P, xl, xh, yl, yh):
    """Pieces of the projection of ``z = x op y`` onto one operand.

    ``side`` is ``"x"`` or ``"y"``; ``P`` is the preimage of z.  Returns a list
    of disjoint ``(lo, hi)`` float ranges inside the operand's current domain
    (empty list when nothing survives).
    """
    if op == "+":
        if side == "x":
            return _linear(fmt, 1, -1, P, yl, yh, xl, xh) or []
        return _linear(fmt, 1, -1, P, xl, xh, yl, yh) or []
    if op == "-":
        if side == "x":
            return _linear(fmt, 1, 1, P, yl, yh, xl, xh) or []
        return _linear(fmt, -1, 1, P, xl, xh, yl, yh) or []
    pieces = []
    if op == "*":
        if side == "x":
            vl, vh, ol, oh = xl, xh, yl, yh
        else:
            vl, vh, ol, oh = yl, yh, xl, xh
        if ol <= 0.0 <= oh and _has_zero(*P):
            return [(vl, vh)]
        for a, b in _y_pieces(fmt, ol, oh):
            if a > 0:
                r = _mul_pos(fmt, P, a, b, vl, vh)
            else:
                r = _mul_pos(fmt, _neg_p(P), -b, -a, vl, vh)
            if r is not None:
                pieces.append(r)
        return pieces
    if side == "x":
        for a, b in _y_pieces(fmt, yl, yh):
            if a > 0:
                r = _div_x_pos(fmt, P, a, b, xl, xh)
            else:
                r = _div_x_pos(fmt, _neg_p(P), -b, -a, xl, xh)
            if r is not None:
                pieces.append(r)
        return pieces
    for a, b in _y_pieces(fmt, yl, yh):
        if a > 0:
            r = _div_y_pos(fmt, P, xl, xh, a, b)
        else:
            r = _div_y_pos(fmt, _neg_p(P), xl, xh, -b, -a)
            r = None if r is None else (-r[1], -r[0])
        if r is not None:
            pieces.append(r)
    return pieces


def finite_operand_range(fmt: FloatFormat, op: str, fixed: float, ol: float, oh: float, side: str):
    """Monotone pieces of operand values in [ol, oh] giving a finite result.

    ``side`` names the varying operand; the other one is ``fixed``.
    """
    P = preimage_bounds(fmt, -fmt.max_finite, fmt.max_finite)
    if side == "y":
        return project(fmt, op, "y", P, fixed, fixed, ol, oh)
    return project(fmt, op, "x", P, ol, oh, fixed, fixed)


# -- compiled constraints ---------------------------------------------------------


class _TernaryC:
    __slots__ = ("op", "z", "x", "y", "vars")

    def __init__(self, op, z, x, y):
        self.op, self.z, self.x, self.y = op, z, x, y
        self.vars = (z, x, y)

    def revise(self, lo, hi, fmt):
        op, z, x, y = self.op, self.z, self.x, self.y
        clean = False
        if op != "/" or lo[y] > 0.0 or hi[y] < 0.0:
            f = _corners(fmt, op, lo[x], hi[x], lo[y], hi[y])
            clean = -math.inf < f[0] and f[1] < math.inf
        if clean:
            f = (f[0] + 0.0, f[1] + 0.0)
        else:
            f = forward_bounds(fmt, op, lo[x], hi[x], lo[y], hi[y])
            if f is None:
                return None
        # every operand value has support when the whole image fits in z
        supported = clean and lo[z] <= f[0] and f[1] <= hi[z]
        zl = lo[z] if lo[z] > f[0] else f[0]
        zh = hi[z] if hi[z] < f[1] else f[1]
        if zl > zh:
            return None
        changed = []
        if zl != lo[z] or zh != hi[z]:
            lo[z], hi[z] = zl, zh
            changed.append(z)
        if supported:
            return changed
        P = preimage_bounds(fmt, zl, zh)
        for side, v in (("x", x), ("y", y)):
            pieces = project(fmt, op, side, P, lo[x], hi[x], lo[y], hi[y])
            if not pieces:
                return None
            if len(pieces) == 1:
                nl, nh = pieces[0]
            else:
                nl = min(p[0] for p in pieces)
                nh = max(p[1] for p in pieces)
            if nl != lo[v] or nh != hi[v]:
                lo[v], hi[v] = nl, nh
                changed.append(v)
        return changed


class _SqrtC:
    __slots__ = ("z", "x", "vars")

    def __init__(self, z, x):
        self.z, self.x = z, x
        self.vars = (z, x)

    def revise(self, lo, hi, fmt):
        z, x = self.z, self.x
        f = sqrt_bounds(fmt, lo[x], hi[x])
        if f is None:
            return None
        zl, zh = max(lo[z], f[0]), min(hi[z], f[1])
        if zl > zh:
            return None
        changed = []
        if zl != lo[z] or zh != hi[z]:
            lo[z], hi[z] = zl, zh
            changed.append(z)
        L, Ls, H, Hs = preimage_bounds(fmt, zl, zh)
        xl = max(lo[x], 0.0)
        if L > 0:
            xl = _lowest(fmt, _ge(L * L, Ls), xl, hi[x], L * L)
            if xl is None:
                return None
        xh = _highest(fmt, _le(H * H, Hs), xl, hi[x], H * H)
        if xh is None:
            return None
        if xl != lo[x] or xh != hi[x]:
            lo[x], hi[x] = xl, xh
            changed.append(x)
        return changed


class _NegC:
    __slots__ = ("z", "x", "vars")

    def __init__(self, z, x):
        self.z, self.x = z, x
        self.vars = (z, x)

    def revise(self, lo, hi, fmt):
        z, x = self.z, self.x
        zl, zh = max(lo[z], -hi[x]), min(hi[z], -lo[x])
        if zl > zh:
            return None
        changed = []
        if zl != lo[z] or zh != hi[z]:
            lo[z], hi[z] = zl + 0.0, zh + 0.0
            changed.append(z)
        xl, xh = -hi[z] + 0.0, -lo[z] + 0.0
        if xl != lo[x] or xh != hi[x]:
            lo[x], hi[x] = xl, xh
            changed.append(x)
        return changed


class _AssignC:
    __slots__ = ("z", "x", "vars")

    def __init__(self, z, x):
        self.z, self.x = z, x
        self.vars = (z, x)

    def revise(self, lo, hi, fmt):
        z, x = self.z, self.x
        nl, nh = max(lo[z], lo[x]), min(hi[z], hi[x])
        if nl > nh:
            return None
        changed = []
        for v in (z, x):
            if lo[v] != nl or hi[v] != nh:
                lo[v], hi[v] = nl, nh
                changed.append(v)
        return changed


class _CompareC:
    __slots__ = ("rel", "x", "y", "vars")

    def __init__(self, rel, x, y):
        self.rel, self.x, self.y = rel, x, y
        self.vars = (x, y)

    def revise(self, lo, hi, fmt):
        rel, x, y = self.rel, self.x, self.y
        if rel in (">", ">="):
            rel = "<" if rel == ">" else "<="
            x, y = y, x
        xl, xh, yl, yh = lo[x], hi[x], lo[y], hi[y]
        if rel == "<=":
            xh, yl = min(xh, yh), max(yl, xl)
        elif rel == "<":
            if yh <= -fmt.max_finite or xl >= fmt.max_finite:
                return None
            xh = min(xh, fmt.from_ordinal(fmt.ordinal(yh) - 1) + 0.0)
            yl = max(yl, fmt.from_ordinal(fmt.ordinal(xl) + 1) + 0.0)
        elif rel == "==":
            xl = yl = max(xl, yl)
            xh = yh = min(xh, yh)
        else:  # !=
            if xl == xh:
                yl, yh = _remove_end(fmt, xl, yl, yh)
            elif yl == yh:
                xl, xh = _remove_end(fmt, yl, xl, xh)
        if xl > xh or yl > yh:
            return None
        changed = []
        if xl != lo[x] or xh != hi[x]:
            lo[x], hi[x] = xl, xh
            changed.append(x)
        if yl != lo[y] or yh != hi[y]:
            lo[y], hi[y] = yl, yh
            changed.append(y)
        return changed


def _remove_end(fmt, v, lo, hi):
    if lo == hi == v:
        return 1.0, 0.0
    if lo == v:
        lo = fmt.from_ordinal(fmt.ordinal(lo) + 1) + 0.0
    elif hi == v:
        hi = fmt.from_ordinal(fmt.ordinal(hi) - 1) + 0.0
    return lo, hi


# -- the store -------------------------------------------------------------------


class Counter:
    __slots__ = ("revisions",)

    def __init__(self) -> None:
        self.revisions = 0


class ConstraintStore:
    """Variable domains plus the constraints that propagation revises over them.

    The structure (variables, constraints) is shared between copies; only the
    domains are duplicated, so constraints must all be added before the first
    copy is taken.
    """

    def __init__(self, fmt: FloatFormat = BINARY32) -> None:
        self.fmt = fmt
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.constraints: list[Constraint] = []
        self._compiled: list = []
        self.adjacency: list[list[int]] = []
        self.inputs: list[str] = []
        self.constants: set[int] = set()
        self.failed = False
        self.counter = Counter()
        self.ratio = DEFAULT_RATIO

    # -- construction ---------------------------------------------------

    def add_variable(self, name: str, domain: FpInterval | None = None, is_input: bool = False) -> int:
        if name in self.index:
            raise ValueError(f"variable {name!r} already declared")
        if domain is None:
            domain = FpInterval.full(self.fmt)
        if domain.fmt != self.fmt:
            raise ValueError(f"domain of {name!r} is not in {self.fmt}")
        i = len(self.names)
        self.names.append(name)
        self.index[name] = i
        self.lo.append(domain.lo)
        self.hi.append(domain.hi)
        self.adjacency.append([])
        if is_input:
            self.inputs.append(name)
        return i

    def _operand(self, o: Operand) -> int:
        if isinstance(o, str):
            try:
                return self.index[o]
            except KeyError:
                raise KeyError(f"constraint mentions undeclared variable {o!r}") from None
        o = float(o) + 0.0
        if not self.fmt.contains(o):
            raise ValueError(f"constant {o!r} is not a {self.fmt} value")
        key = f"#{o!r}"
        if key not in self.index:
            i = self.add_variable(key, FpInterval.point(o, self.fmt))
            self.constants.add(i)
        return self.index[key]

    def add_constraint(self, c: Constraint) -> None:
        if isinstance(c, Ternary):
            if c.op not in "+-*/" or len(c.op) != 1:
                raise ValueError(f"unknown operator {c.op!r}")
            compiled = _TernaryC(c.op, self._operand(c.z), self._operand(c.x), self._operand(c.y))
        elif isinstance(c, Unary):
            cls = {"sqrt": _SqrtC, "neg": _NegC}[c.op]
            compiled = cls(self._operand(c.z), self._operand(c.x))
        elif isinstance(c, Compare):
            if c.rel not in NEGATED:
                raise ValueError(f"unknown relation {c.rel!r}")
            compiled = _CompareC(c.rel, self._operand(c.x), self._operand(c.y))
        elif isinstance(c, Assign):
            compiled = _AssignC(self._operand(c.z), self._operand(c.x))
        else:
            raise TypeError(f"not a constraint: {c!r}")
        ci = len(self.constraints)
        self.constraints.append(c)
        self._compiled.append(compiled)
        for v in set(compiled.vars):
            self.adjacency[v].append(ci)

    # -- domains ----------------------------------------------------------

    def domain(self, name: str) -> FpInterval:
        i = self.index[name]
        if self.failed or self.lo[i] > self.hi[i]:
            return EMPTY
        return FpInterval(self.lo[i], self.hi[i], self.fmt)

    def domains(self) -> dict[str, FpInterval]:
        return {n: self.domain(n) for n in self.names if not n.startswith("#")}

    def restrict(self, name: str, interval) -> bool:
        """Intersect a domain in place; returns False when the store fails."""
        i = self.index[name]
        if interval.is_empty:
            self.failed = True
            return False
        lo, hi = max(self.lo[i], interval.lo), min(self.hi[i], interval.hi)
        if lo > hi:
            self.failed = True
            return False
        self.lo[i], self.hi[i] = lo, hi
        return True

    def set_bounds(self, i: int, lo: float, hi: float) -> None:
        self.lo[i], self.hi[i] = lo, hi

    def count(self, i: int) -> int:
        return self.fmt.ordinal(self.hi[i]) - self.fmt.ordinal(self.lo[i]) + 1

    def decision_vars(self) -> list[int]:
        """Input variables that occur in some constraint."""
        return [self.index[n] for n in self.inputs if self.adjacency[self.index[n]]]

    def copy(self) -> ConstraintStore:
        new = object.__new__(ConstraintStore)
        new.__dict__.update(self.__dict__)
        new.lo = self.lo[:]
        new.hi = self.hi[:]
        return new

    def compiled(self, c: Constraint):
        for orig, comp in zip(self.constraints, self._compiled):
            if orig is c:
                return comp
        raise ValueError(f"constraint {c} is not in this store")

    def dump(self) -> str:
        lines = []
        for i, name in enumerate(self.names):
            if i in self.constants:
                continue
            if self.failed:
                lines.append(f"{name} ∈ ∅ (count=0)")
                continue
            lo = shortest_decimal(self.lo[i], self.fmt)
            hi = shortest_decimal(self.hi[i], self.fmt)
            lines.append(f"{name} ∈ [{lo}, {hi}] (count={self.count(i)})")
        lines.extend(str(c) for c in self.constraints)
        return "\n".join(lines)


# -- public operations ------------------------------------------------------------


def rounding_preimage(z: FpInterval) -> RealInterval:
    """Exact set of reals whose nearest-even rounding falls in ``z``."""
    if z.is_empty:
        raise ValueError("preimage of the empty interval")
    L, Ls, H, Hs = preimage_bounds(z.fmt, z.lo, z.hi)
    return RealInterval(Fraction(L), not Ls, Fraction(H), not Hs)


def backward_project(c: Constraint, store: ConstraintStore) -> dict[str, FpInterval]:
    """Apply the projections of one constraint; marks the store failed if empty."""
    comp = store.compiled(c)
    store.counter.revisions += 1
    if store.failed or comp.revise(store.lo, store.hi, store.fmt) is None:
        store.failed = True
    return {store.names[v]: store.domain(store.names[v]) for v in comp.vars}


#: default minimal relative narrowing that re-queues dependent constraints
DEFAULT_RATIO = 0.05


def _significant(fmt: FloatFormat, ol: float, oh: float, nl: float, nh: float, ratio: float) -> bool:
    if ratio <= 0.0 or nl == nh:
        return True
    if (oh - ol) - (nh - nl) >= ratio * (oh - ol):
        return True
    # narrowing around zero removes many floats for little width
    before = fmt.ordinal(oh) - fmt.ordinal(ol)
    after = fmt.ordinal(nh) - fmt.ordinal(nl)
    return before - after >= ratio * before


def propagate_2b(store: ConstraintStore, seeds: Optional[Iterable[int]] = None,
                 ratio: Optional[float] = None) -> bool:
    """Run projections to a fixpoint; False when a domain empties.

    ``seeds`` restricts the initial worklist to constraints on the given
    variable indices (the store must otherwise already be at fixpoint).

    Every narrowing is kept, but only a narrowing that removes at least
    ``ratio`` of a domain's width or of its float count wakes the other
    constraints on that variable.  This stops the one-float-at-a-time
    convergence of cyclic systems.  ``ratio=0`` computes the exact 2B
    fixpoint, which is independent of the processing order.
    """
    if store.failed:
        return False
    if ratio is None:
        ratio = store.ratio
    compiled = store._compiled
    adjacency = store.adjacency
    lo, hi, fmt = store.lo, store.hi, store.fmt
    inq = bytearray(len(compiled))
    if seeds is None:
        queue = deque(range(len(compiled)))
        for i in queue:
            inq[i] = 1
    else:
        queue = deque()
        for v in seeds:
            for ci in adjacency[v]:
                if not inq[ci]:
                    inq[ci] = 1
                    queue.append(ci)
    counter = store.counter
    exact = ratio <= 0.0
    while queue:
        ci = queue.popleft()
        inq[ci] = 0
        counter.revisions += 1
        comp = compiled[ci]
        if not exact:
            old = {v: (lo[v], hi[v]) for v in comp.vars}
        changed = comp.revise(lo, hi, fmt)
        if changed is None:
            store.failed = True
            return False
        for v in changed:
            if not exact:
                ol, oh = old[v]
                if not _significant(fmt, ol, oh, lo[v], hi[v], ratio):
                    continue
            for cj in adjacency[v]:
                if not inq[cj]:
                    inq[cj] = 1
                    queue.append(cj)
    return True


def _slice_end(fmt: FloatFormat, lo: float, hi: float, fraction: float, from_low: bool) -> float:
    span = (hi - lo) * fraction
    if from_low:
        s = fmt.floor(lo + span)
        if s is None or s < lo:
            s = lo
        if s >= hi:
            s = fmt.from_ordinal(fmt.ordinal(hi) - 1) + 0.0
    else:
        s = fmt.ceil(hi - span)
        if s is None or s > hi:
            s = hi
        if s <= lo:
            s = fmt.from_ordinal(fmt.ordinal(lo) + 1) + 0.0
    return s


def filter_3b(store: ConstraintStore, slice_fraction: float = 0.05,
              variables: Optional[Iterable[int]] = None,
              should_stop: Optional[Callable[[], bool]] = None,
              max_passes: Optional[int] = None) -> bool:
    """Shave boundary slices whose 2B fixpoint fails; False when the store fails.

    The store must be at a 2B fixpoint.  Each bound of each variable is tried
    with a slice of ``slice_fraction`` of the domain width (at least one
    float); refuted slices are removed and the shaving of that bound repeats.
    Passes over all variables repeat until nothing changes, or at most
    ``max_passes`` times.
    """
    if store.failed:
        return False
    fmt = store.fmt
    if variables is None:
        variables = [i for i in range(len(store.names)) if i not in store.constants]
    variables = list(variables)
    lo, hi = store.lo, store.hi
    progress = True
    passes = 0
    while progress and (max_passes is None or passes < max_passes):
        progress = False
        passes += 1
        for v in variables:
            for from_low in (True, False):
                while lo[v] < hi[v]:
                    if should_stop is not None and should_stop():
                        return True
                    s = _slice_end(fmt, lo[v], hi[v], slice_fraction, from_low)
                    trial = store.copy()
                    if from_low:
                        trial.hi[v] = s
                    else:
                        trial.lo[v] = s
                    if propagate_2b(trial, (v,)):
                        break
                    if from_low:
                        lo[v] = fmt.from_ordinal(fmt.ordinal(s) + 1) + 0.0
                    else:
                        hi[v] = fmt.from_ordinal(fmt.ordinal(s) - 1) + 0.0
                    if not propagate_2b(store, (v,)):
                        return False
                    progress = True
    return True
