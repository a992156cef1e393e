from __future__ import annotations

import bisect
import functools
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from fptestgen.floats import MINI43

CORPUS = Path(__file__).resolve().parent.parent / "src" / "fptestgen" / "corpus"


def decode43(bits: int) -> Fraction | float:
    """Independent decoder for the (4,3) format: sign, 4-bit exponent (bias 7), 3-bit fraction."""
    sign = -1 if bits & 0x80 else 1
    e = (bits >> 3) & 0xF
    m = bits & 0x7
    if e == 0xF:
        return math.nan if m else sign * math.inf
    if e == 0:
        return sign * Fraction(m, 2 ** 9)
    return sign * Fraction(8 + m, 8) * Fraction(2) ** (e - 7)


def all_finite43() -> list[Fraction]:
    vals = set()
    for b in range(256):
        v = decode43(b)
        if isinstance(v, Fraction):
            vals.add(v)
    return sorted(vals)


FINITE43 = all_finite43()
MAX43 = FINITE43[-1]


def round43(r: Fraction) -> float:
    """Nearest-even rounding oracle for (4,3) by comparison with neighbours."""
    if r >= MAX43 + 8:  # half an ulp above the largest value
        return math.inf
    if r <= -(MAX43 + 8):
        return -math.inf
    i = bisect.bisect_left(FINITE43, r)
    cands = [FINITE43[k] for k in (i - 1, i) if 0 <= k < len(FINITE43)]
    best = min(abs(v - r) for v in cands)
    near = [v for v in cands if abs(v - r) == best]
    if len(near) == 2:
        near = [v for v in near if MINI43.ordinal(float(v)) % 2 == 0]
    return float(near[0])


OPS = ("+", "-", "*", "/")


def exact_op(op: str, x: Fraction, y: Fraction):
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    return x / y if y else None


@functools.lru_cache(maxsize=None)
def op_table43(op: str) -> np.ndarray:
    """T[i, j] = round(v_i op v_j) over the sorted finite (4,3) values; NaN if undefined."""
    n = len(FINITE43)
    t = np.full((n, n), np.nan)
    for i, x in enumerate(FINITE43):
        for j, y in enumerate(FINITE43):
            r = exact_op(op, x, y)
            if r is not None:
                t[i, j] = round43(r)
    t.setflags(write=False)
    return t


VALS43 = np.array([float(v) for v in FINITE43])


@pytest.fixture(scope="session")
def finite43() -> list[float]:
    return [float(v) for v in FINITE43]


@pytest.fixture(scope="session")
def corpus() -> Path:
    return CORPUS


def sqrt43(x: Fraction) -> float:
    """Correctly rounded sqrt in (4,3) by exact midpoint squaring."""
    if x < 0:
        return math.nan
    pos = [v for v in FINITE43 if v >= 0]
    for i, v in enumerate(pos):
        lo = (v + pos[i - 1]) / 2 if i else Fraction(0)
        hi = (v + pos[i + 1]) / 2 if i + 1 < len(pos) else MAX43 + 8
        if lo * lo <= x <= hi * hi:
            # an exact tie needs sqrt(x) rational and equal to a midpoint
            if x == hi * hi and MINI43.ordinal(float(v)) % 2:
                continue
            return float(v)
    return math.inf


# -- random straight-line / branching programs on (4,3) --------------------------------

INDEX43 = {float(v): i for i, v in enumerate(FINITE43)}
SQRT43 = {float(v): sqrt43(v) for v in FINITE43 if v >= 0}
RELS = ("<", "<=", ">", ">=")


def _fmt_num(x: float) -> str:
    return repr(float(x))


class RandomProgram:
    """A small random program over (4,3) with an independent evaluator.

    ``stmts`` holds ``("op", target, op, a, b)``, ``("sqrt", target, a)`` and
    ``("if", (rel, a, b), then, orelse)`` items; operands are names or floats.
    The annotation sits on ``target`` after the body.
    """

    def __init__(self, rng, max_inputs: int = 3, max_ops: int = 6, max_width: int = 10):
        n_in = int(rng.integers(1, max_inputs + 1))
        self.inputs = []
        for k in range(n_in):
            width = int(rng.integers(0, max_width))
            i = int(rng.integers(0, len(FINITE43) - width))
            self.inputs.append((f"x{k}", float(FINITE43[i]), float(FINITE43[i + width])))
        names = [n for n, _, _ in self.inputs]
        self.rng = rng
        self.ops_left = int(rng.integers(1, max_ops + 1))
        self.counter = 0
        self.stmts = self._block(names, allow_if=True)
        self.target = self._last
        self.interval = (0.0, 0.0)

    def _operand(self, names):
        if self.rng.random() < 0.2:
            return float(FINITE43[int(self.rng.integers(0, len(FINITE43)))])
        return names[int(self.rng.integers(0, len(names)))]

    def _block(self, names, allow_if):
        out = []
        names = list(names)
        self._last = names[-1]
        while self.ops_left > 0:
            if allow_if and self.ops_left >= 3 and self.rng.random() < 0.3:
                rel = RELS[int(self.rng.integers(0, len(RELS)))]
                cond = (rel, names[int(self.rng.integers(0, len(names)))], self._operand(names))
                t = f"t{self.counter}"
                self.counter += 1
                budget = self.ops_left - 1
                self.ops_left = budget // 2 or 1
                then = self._block(names, False) + [("copy", t, self._last)]
                self.ops_left = max(budget - budget // 2, 1)
                orelse = self._block(names, False) + [("copy", t, self._last)]
                out.append(("if", cond, then, orelse))
                names.append(t)
                self._last = t
                self.ops_left = 0
                continue
            self.ops_left -= 1
            target = f"v{self.counter}"
            self.counter += 1
            if self.rng.random() < 0.1:
                out.append(("sqrt", target, names[int(self.rng.integers(0, len(names)))]))
            else:
                op = OPS[int(self.rng.integers(0, 4))]
                a = names[int(self.rng.integers(0, len(names)))]
                out.append(("op", target, op, a, self._operand(names)))
            names.append(target)
            self._last = target
        return out

    # -- evaluation oracle ---------------------------------------------------------

    def run(self, values: dict) -> tuple[bool, float]:
        """(clean, target value) of one execution, using exact tables."""
        env = dict(values)
        clean = [True]

        def val(o):
            return o if isinstance(o, float) else env[o]

        def execute(stmts):
            for s in stmts:
                if not clean[0]:
                    return
                if s[0] == "op":
                    _, t, op, a, b = s
                    x, y = val(a), val(b)
                    r = op_table43(op)[INDEX43[x + 0.0], INDEX43[y + 0.0]]
                    if not math.isfinite(r):
                        clean[0] = False
                        return
                    env[t] = float(r)
                elif s[0] == "sqrt":
                    _, t, a = s
                    x = val(a)
                    if x < 0:
                        clean[0] = False
                        return
                    env[t] = SQRT43[x + 0.0]
                elif s[0] == "copy":
                    env[s[1]] = env[s[2]]
                else:
                    _, (rel, a, b), then, orelse = s
                    x, y = val(a), val(b)
                    taken = {"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[rel]
                    execute(then if taken else orelse)

        execute(self.stmts)
        if not clean[0]:
            return False, math.nan
        return True, env[self.target]

    def tuples(self):
        import itertools

        ranges = []
        for _, lo, hi in self.inputs:
            i, j = INDEX43[lo + 0.0], INDEX43[hi + 0.0]
            ranges.append([float(v) for v in FINITE43[i:j + 1]])
        names = [n for n, _, _ in self.inputs]
        for combo in itertools.product(*ranges):
            yield dict(zip(names, combo))

    def outcomes(self) -> list[tuple[dict, float]]:
        """Every input tuple with a clean run, with its target value."""
        out = []
        for t in self.tuples():
            ok, v = self.run(t)
            if ok:
                out.append((t, v))
        return out

    def choose_interval(self, outcomes) -> None:
        values = sorted({v + 0.0 for _, v in outcomes})
        if values and self.rng.random() < 0.6:
            a = values[int(self.rng.integers(0, len(values)))]
            b = values[int(self.rng.integers(0, len(values)))]
            lo, hi = min(a, b), max(a, b)
        else:
            i, j = sorted(int(k) for k in self.rng.integers(0, len(FINITE43), 2))
            lo, hi = float(FINITE43[i]), float(FINITE43[j])
        self.interval = (lo, hi)

    def hits(self, outcomes) -> list[dict]:
        lo, hi = self.interval
        return [t for t, v in outcomes if lo <= v <= hi]

    # -- rendering -------------------------------------------------------------------

    def source(self) -> str:
        lines = [f"input {n} in [{_fmt_num(lo)}, {_fmt_num(hi)}];" for n, lo, hi in self.inputs]

        def opnd(o):
            if isinstance(o, str):
                return o
            return f"({_fmt_num(o)})" if o < 0 or (o == 0 and math.copysign(1, o) < 0) else _fmt_num(o)

        def emit(stmts, indent):
            pad = "  " * indent
            for s in stmts:
                if s[0] == "op":
                    lines.append(f"{pad}{s[1]} = {opnd(s[3])} {s[2]} {opnd(s[4])};")
                elif s[0] == "sqrt":
                    lines.append(f"{pad}{s[1]} = sqrt({opnd(s[2])});")
                elif s[0] == "copy":
                    lines.append(f"{pad}{s[1]} = {s[2]};")
                else:
                    _, (rel, a, b), then, orelse = s
                    lines.append(f"{pad}if ({opnd(a)} {rel} {opnd(b)}) {{")
                    emit(then, indent + 1)
                    lines.append(f"{pad}}} else {{")
                    emit(orelse, indent + 1)
                    lines.append(f"{pad}}}")

        emit(self.stmts, 0)
        lo, hi = self.interval
        lines.append(f"@suspect {self.target} in [{_fmt_num(lo)}, {_fmt_num(hi)}];")
        return "\n".join(lines) + "\n"


# -- acceptance report ---------------------------------------------------------------------

#: criterion number -> (passed, title, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
