"""Annotated mini-language: parsing, loop unrolling, DSA, paths, evaluation.

Grammar::

    program   = { decl } , { stmt } ;
    decl      = "input" ident "in" interval ";" ;
    interval  = ("["|"(") number "," number ("]"|")") ;
    stmt      = ident "=" expr ";"
              | "if" "(" cond ")" block [ "else" block ]
              | "while" "(" cond ")" block
              | "@suspect" ident "in" interval [ "tolerance" number ] ";" ;
    cond      = expr relop expr ;
    expr      = term { ("+"|"-") term } ;
    term      = factor { ("*"|"/") factor } ;
    factor    = number | ident | "(" expr ")" | "sqrt" "(" expr ")" | "-" factor ;

``//`` and ``/* */`` comments are allowed.  Every literal is converted to the
program format by exact nearest-even parsing; interval endpoints denote the
real bounds of the set, so ``[a, b)`` keeps exactly the floats ``f`` with
``a <= f < b``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Optional, Union

from .floats import BINARY32, FloatFormat, ceil_value, floor_value, parse_float
from .interval import FpInterval
from .store import NEGATED, Assign, Compare, ConstraintStore, SuspectSpec, Ternary, Unary


class FrontendError(Exception):
    """Syntax or semantic error in a program text."""

    def __init__(self, message: str, line: int = 0, col: int = 0) -> None:
        self.line, self.col = line, col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


class NoPathToTarget(Exception):
    """No control path reaches the suspect annotation."""


# -- AST -------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    text: str
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class Var:
    name: str
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class Sqrt:
    operand: "Expr"
    pos: tuple = (0, 0)


Expr = Union[Num, Var, BinOp, Neg, Sqrt]


@dataclass(frozen=True)
class Cond:
    rel: str
    left: Expr
    right: Expr
    pos: tuple = (0, 0)

    def negate(self) -> Cond:
        return replace(self, rel=NEGATED[self.rel])


@dataclass(frozen=True)
class AssignStmt:
    target: str
    expr: Expr
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class If:
    cond: Cond
    then: tuple
    orelse: tuple = ()
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class While:
    cond: Cond
    body: tuple
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class Suspect:
    var: str
    interval: FpInterval
    text: str
    tolerance: Optional[str] = None
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class Residual:
    """Loop guard left after unrolling; reaching it with the guard true means
    the unrolling bound was too small."""

    cond: Cond
    pos: tuple = (0, 0)


Stmt = Union[AssignStmt, If, While, Suspect, Residual]


@dataclass(frozen=True)
class Program:
    inputs: tuple  # of (name, FpInterval)
    body: tuple
    fmt: FloatFormat = BINARY32
    source: str = ""

    @property
    def input_names(self) -> list[str]:
        return [n for n, _ in self.inputs]

    def input_domain(self, name: str) -> FpInterval:
        return dict(self.inputs)[name]

    def suspects(self) -> list[Suspect]:
        return [s for s in walk(self.body) if isinstance(s, Suspect)]

    def suspect_spec(self) -> SuspectSpec:
        found = self.suspects()
        if not found:
            raise FrontendError("program has no @suspect annotation")
        first = found[0]
        if any(s.pos != first.pos for s in found):
            raise FrontendError("program has more than one @suspect annotation")
        return SuspectSpec(first.var, first.pos, first.interval, first.tolerance)

    def with_suspect(self, interval: FpInterval, text: str = "", tolerance: Optional[str] = None) -> Program:
        """Copy of the program with the suspicious interval replaced."""

        def rewrite(stmts):
            out = []
            for s in stmts:
                if isinstance(s, Suspect):
                    s = replace(s, interval=interval, text=text or str(interval),
                                tolerance=tolerance if tolerance is not None else s.tolerance)
                elif isinstance(s, If):
                    s = replace(s, then=rewrite(s.then), orelse=rewrite(s.orelse))
                elif isinstance(s, While):
                    s = replace(s, body=rewrite(s.body))
                out.append(s)
            return tuple(out)

        return replace(self, body=rewrite(self.body))


def walk(stmts) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk(s.then)
            yield from walk(s.orelse)
        elif isinstance(s, While):
            yield from walk(s.body)


def expr_vars(e: Expr) -> Iterator[str]:
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, BinOp):
        yield from expr_vars(e.left)
        yield from expr_vars(e.right)
    elif isinstance(e, (Neg, Sqrt)):
        yield from expr_vars(e.operand)


def expr_str(e: Expr) -> str:
    if isinstance(e, Num):
        return e.text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, BinOp):
        return f"({expr_str(e.left)} {e.op} {expr_str(e.right)})"
    if isinstance(e, Neg):
        return f"-{expr_str(e.operand)}"
    return f"sqrt({expr_str(e.operand)})"


def cond_str(c: Cond) -> str:
    return f"{expr_str(c.left)} {c.rel} {expr_str(c.right)}"


# -- lexer / parser -------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>@?[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/()<>{}\[\],;=])
    """,
    re.VERBOSE | re.DOTALL,
)

KEYWORDS = {"input", "in", "if", "else", "while", "sqrt", "@suspect", "tolerance"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FrontendError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = pos + m.group().rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


def parse_interval_bounds(lo_text: str, hi_text: str, lo_open: bool, hi_open: bool,
                          fmt: FloatFormat) -> FpInterval:
    """Floats of a real interval with decimal endpoints; raises when empty."""
    lo = ceil_value(Fraction(lo_text), fmt, strict=lo_open)
    hi = floor_value(Fraction(hi_text), fmt, strict=hi_open)
    if lo is None or hi is None or lo > hi:
        raise ValueError("interval contains no finite float")
    return FpInterval(lo, hi, fmt)


def parse_interval(text: str, fmt: FloatFormat = BINARY32) -> FpInterval:
    """Parse ``[a, b)``-style interval text into its float set."""
    m = re.fullmatch(r"\s*([\[(])\s*([-+]?[\d.eE+-]+)\s*,\s*([-+]?[\d.eE+-]+)\s*([\])])\s*", text)
    if m is None:
        raise ValueError(f"malformed interval {text!r}")
    return parse_interval_bounds(m.group(2), m.group(3), m.group(1) == "(", m.group(4) == ")", fmt)


class _Parser:
    def __init__(self, text: str, fmt: FloatFormat) -> None:
        self.toks = _tokenize(text)
        self.i = 0
        self.fmt = fmt

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: Optional[_Tok] = None):
        tok = tok or self.tok
        raise FrontendError(message, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind != "num":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if not self.accept(text):
            shown = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {shown!r}")
        return self.toks[self.i - 1]

    def ident(self) -> _Tok:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS or t.text.startswith("@"):
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def signed_number(self) -> str:
        sign = ""
        if self.tok.text in "+-" and self.tok.kind == "op":
            sign = self.tok.text
            self.i += 1
        if self.tok.kind != "num":
            self.error(f"expected number, found {self.tok.text or 'end of input'!r}")
        text = self.tok.text
        self.i += 1
        return sign + text

    def interval(self) -> tuple[FpInterval, str]:
        start = self.tok
        if self.accept("["):
            lo_open = False
        elif self.accept("("):
            lo_open = True
        else:
            self.error("expected '[' or '(' to open an interval")
        lo = self.signed_number()
        self.expect(",")
        hi = self.signed_number()
        if self.accept("]"):
            hi_open = False
        elif self.accept(")"):
            hi_open = True
        else:
            self.error("expected ']' or ')' to close an interval")
        text = f"{'(' if lo_open else '['}{lo}, {hi}{')' if hi_open else ']'}"
        try:
            iv = parse_interval_bounds(lo, hi, lo_open, hi_open, self.fmt)
        except ValueError as exc:
            self.error(f"bad interval {text}: {exc}", start)
        return iv, text

    # -- program structure --

    def program(self) -> tuple:
        inputs = []
        while self.tok.text == "input":
            self.i += 1
            name = self.ident()
            self.expect("in")
            iv, _ = self.interval()
            self.expect(";")
            if name.text in dict(inputs):
                self.error(f"input {name.text!r} declared twice", name)
            inputs.append((name.text, iv))
        body = []
        while self.tok.kind != "eof":
            body.append(self.stmt())
        if not inputs and not body:
            self.error("empty program")
        return tuple(inputs), tuple(body)

    def block(self) -> tuple:
        self.expect("{")
        out = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                self.error("unterminated block")
            out.append(self.stmt())
        return tuple(out)

    def stmt(self) -> Stmt:
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("if"):
            self.expect("(")
            c = self.cond()
            self.expect(")")
            then = self.block()
            orelse = self.block() if self.accept("else") else ()
            return If(c, then, orelse, pos)
        if self.accept("while"):
            self.expect("(")
            c = self.cond()
            self.expect(")")
            return While(c, self.block(), pos)
        if self.accept("@suspect"):
            name = self.ident().text
            self.expect("in")
            iv, text = self.interval()
            tol = None
            if self.accept("tolerance"):
                tol = self.signed_number()
            self.expect(";")
            return Suspect(name, iv, text, tol, pos)
        if t.kind == "ident" and t.text.startswith("@"):
            self.error(f"unknown annotation {t.text!r}")
        name = self.ident().text
        self.expect("=")
        e = self.expr()
        self.expect(";")
        return AssignStmt(name, e, pos)

    def cond(self) -> Cond:
        t = self.tok
        left = self.expr()
        rel = self.tok.text
        if rel not in NEGATED or self.tok.kind != "op":
            self.error(f"expected comparison operator, found {rel or 'end of input'!r}")
        self.i += 1
        return Cond(rel, left, self.expr(), (t.line, t.col))

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            t = self.tok
            self.i += 1
            e = BinOp(t.text, e, self.term(), (t.line, t.col))
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            t = self.tok
            self.i += 1
            e = BinOp(t.text, e, self.factor(), (t.line, t.col))
        return e

    def factor(self) -> Expr:
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "num":
            self.i += 1
            try:
                v = parse_float(t.text, self.fmt)
            except ValueError as exc:
                self.error(str(exc), t)
            return Num(v, t.text, pos)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("sqrt"):
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return Sqrt(e, pos)
        if t.kind == "op" and t.text == "-":
            self.i += 1
            return Neg(self.factor(), pos)
        return Var(self.ident().text, pos)


def _check_defined(inputs, body) -> None:
    """Definite-assignment check: every use is preceded by an assignment."""

    def use(e_or_c, defined):
        exprs = (e_or_c.left, e_or_c.right) if isinstance(e_or_c, Cond) else (e_or_c,)
        for e in exprs:
            for node in _expr_nodes(e):
                if isinstance(node, Var) and node.name not in defined:
                    raise FrontendError(f"variable {node.name!r} used before assignment", *node.pos)

    def run(stmts, defined: frozenset) -> frozenset:
        for s in stmts:
            if isinstance(s, AssignStmt):
                use(s.expr, defined)
                defined = defined | {s.target}
            elif isinstance(s, If):
                use(s.cond, defined)
                defined = run(s.then, defined) & run(s.orelse, defined)
            elif isinstance(s, While):
                use(s.cond, defined)
                run(s.body, defined)
            elif isinstance(s, Suspect):
                if s.var not in defined:
                    raise FrontendError(f"suspect variable {s.var!r} is not assigned here", *s.pos)
        return defined

    run(body, frozenset(n for n, _ in inputs))


def _expr_nodes(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, BinOp):
        yield from _expr_nodes(e.left)
        yield from _expr_nodes(e.right)
    elif isinstance(e, (Neg, Sqrt)):
        yield from _expr_nodes(e.operand)


def parse_program(text: str, fmt: FloatFormat = BINARY32) -> Program:
    parser = _Parser(text, fmt)
    inputs, body = parser.program()
    _check_defined(inputs, body)
    suspects = [s for s in walk(body) if isinstance(s, Suspect)]
    if len(suspects) > 1:
        raise FrontendError("more than one @suspect annotation", *suspects[1].pos)
    return Program(inputs, body, fmt, text)


# -- loop unrolling and DSA --------------------------------------------------------


def unroll_loops(p: Program, k: int) -> Program:
    """Replace each loop by ``k`` nested guarded copies and a residual guard."""
    if k < 0:
        raise ValueError("unrolling bound must be >= 0")

    def unroll_stmts(stmts) -> tuple:
        out = []
        for s in stmts:
            if isinstance(s, While):
                body = unroll_stmts(s.body)
                nested: tuple = (Residual(s.cond, s.pos),)
                for _ in range(k):
                    nested = (If(s.cond, body + nested, (), s.pos),)
                out.extend(nested)
            elif isinstance(s, If):
                out.append(replace(s, then=unroll_stmts(s.then), orelse=unroll_stmts(s.orelse)))
            else:
                out.append(s)
        return tuple(out)

    return replace(p, body=unroll_stmts(p.body))


def _rename_expr(e: Expr, env: dict) -> Expr:
    if isinstance(e, Var):
        return replace(e, name=env[e.name])
    if isinstance(e, BinOp):
        return replace(e, left=_rename_expr(e.left, env), right=_rename_expr(e.right, env))
    if isinstance(e, (Neg, Sqrt)):
        return replace(e, operand=_rename_expr(e.operand, env))
    return e


def dsa_base(name: str) -> str:
    return name.split("#", 1)[0]


def to_dsa(p: Program) -> Program:
    """Single-assignment form: each assignment targets a fresh ``name#n``.

    Statements following a conditional are copied into both of its arms so
    that every path carries its own versions and no merge is needed.
    """
    if any(isinstance(s, While) for s in walk(p.body)):
        raise ValueError("to_dsa needs a loop-free program; unroll first")
    counters: dict[str, int] = {}

    def fresh(name: str) -> str:
        counters[name] = counters.get(name, 0) + 1
        return f"{name}#{counters[name]}"

    def convert(stmts: tuple, env: dict) -> tuple:
        out = []
        for idx, s in enumerate(stmts):
            if isinstance(s, AssignStmt):
                e = _rename_expr(s.expr, env)
                env = dict(env)
                env[s.target] = fresh(s.target)
                out.append(replace(s, target=env[s.target], expr=e))
            elif isinstance(s, If):
                rest = stmts[idx + 1:]
                c = replace(s.cond, left=_rename_expr(s.cond.left, env),
                            right=_rename_expr(s.cond.right, env))
                then = convert(s.then + rest, env)
                orelse = convert(s.orelse + rest, env)
                out.append(replace(s, cond=c, then=then, orelse=orelse))
                return tuple(out)
            elif isinstance(s, Suspect):
                out.append(replace(s, var=env[s.var]))
            elif isinstance(s, Residual):
                c = replace(s.cond, left=_rename_expr(s.cond.left, env),
                            right=_rename_expr(s.cond.right, env))
                # the code after the loop runs when the guard is false
                out.append(replace(s, cond=c))
        return tuple(out)

    env = {n: n for n, _ in p.inputs}
    return replace(p, body=convert(p.body, env))


# -- path enumeration ----------------------------------------------------------------


@dataclass
class PathSystem:
    """Constraints of one control path, ready for the solver."""

    decisions: list  # of (pos, condition text, taken)
    constraints: list
    inputs: dict  # DSA name -> declared domain
    variables: list  # every DSA variable and temporary
    target: Optional[str]  # DSA name of the suspect variable (None for residual paths)
    interval: Optional[FpInterval]
    residual: bool = False
    infeasible: bool = False
    fmt: FloatFormat = BINARY32

    def build_store(self) -> ConstraintStore:
        store = ConstraintStore(self.fmt)
        for name in self.variables:
            store.add_variable(name, self.inputs.get(name), is_input=name in self.inputs)
        for c in self.constraints:
            store.add_constraint(c)
        if self.infeasible:
            store.failed = True
        if self.target is not None and self.interval is not None:
            store.restrict(self.target, self.interval)
        return store

    def describe(self) -> list[str]:
        return [f"{'T' if taken else 'F'} {text} @{pos[0]}:{pos[1]}" for pos, text, taken in self.decisions]


class _Flattener:
    def __init__(self, fmt: FloatFormat, inputs: dict) -> None:
        self.fmt = fmt
        self.constraints: list = []
        self.variables: list = list(inputs)
        self.temps = 0
        self.infeasible = False

    def temp(self) -> str:
        self.temps += 1
        name = f"%{self.temps}"
        self.variables.append(name)
        return name

    def operand(self, e: Expr, target: Optional[str] = None):
        """Flatten ``e``; returns a variable name or a float constant."""
        if isinstance(e, Num):
            return self._emit_const(e.value, target)
        if isinstance(e, Var):
            if target is None:
                return e.name
            self.constraints.append(Assign(target, e.name))
            return target
        if isinstance(e, Neg):
            x = self.operand(e.operand)
            if not isinstance(x, str):
                return self._emit_const(-x, target)
            z = target or self.temp()
            self.constraints.append(Unary("neg", z, x))
            return z
        if isinstance(e, Sqrt):
            x = self.operand(e.operand)
            if not isinstance(x, str):
                return self._emit_const(self._fold(math.sqrt, x), target)
            z = target or self.temp()
            self.constraints.append(Unary("sqrt", z, x))
            return z
        x = self.operand(e.left)
        y = self.operand(e.right)
        if not isinstance(x, str) and not isinstance(y, str):
            return self._emit_const(self._fold(lambda a: _arith(e.op, a, y), x), target)
        z = target or self.temp()
        self.constraints.append(Ternary(e.op, z, x, y))
        return z

    def _fold(self, fn, x: float) -> float:
        try:
            v = self.fmt.round(fn(x))
        except (ValueError, ZeroDivisionError):
            v = math.nan
        if not math.isfinite(v):
            self.infeasible = True
            return 0.0
        return v + 0.0

    def _emit_const(self, v: float, target: Optional[str]):
        if target is None:
            return v + 0.0
        self.constraints.append(Assign(target, v + 0.0))
        return target


def _arith(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    return a / b


def enumerate_paths(p: Program, spec: Optional[SuspectSpec] = None) -> list[PathSystem]:
    """All control paths of a DSA program ending at the suspect annotation.

    Paths cut by a residual loop guard are returned too, flagged ``residual``;
    they carry the guard as their last constraint and no target.
    """
    if spec is None:
        spec = p.suspect_spec()
    inputs = dict(p.inputs)
    systems: list[PathSystem] = []

    def visit(stmts: tuple, prefix: list, decisions: list) -> None:
        for s in stmts:
            if isinstance(s, AssignStmt):
                prefix = prefix + [s]
            elif isinstance(s, Suspect):
                if s.pos == spec.location:
                    systems.append(_build(p, prefix, decisions, s.var, spec.interval, False))
            elif isinstance(s, Residual):
                # guard true: the bound was too small; guard false: the loop ends here
                systems.append(_build(p, prefix + [s.cond], decisions + [(s.pos, cond_str(s.cond), True)],
                                      None, None, True))
                prefix = prefix + [s.cond.negate()]
                decisions = decisions + [(s.pos, cond_str(s.cond), False)]
            elif isinstance(s, If):
                c = s.cond
                visit(s.then, prefix + [c], decisions + [(s.pos, cond_str(c), True)])
                visit(s.orelse, prefix + [c.negate()], decisions + [(s.pos, cond_str(c), False)])
                return
            elif isinstance(s, While):
                raise ValueError("enumerate_paths needs a loop-free program")

    visit(p.body, [], [])
    if not systems:
        raise NoPathToTarget(f"no path reaches the annotation on {spec.target_var!r}")
    return systems


def _build(p: Program, prefix: list, decisions: list, target, interval, residual: bool) -> PathSystem:
    fl = _Flattener(p.fmt, dict(p.inputs))
    for item in prefix:
        if isinstance(item, AssignStmt):
            fl.variables.append(item.target)
            fl.operand(item.expr, target=item.target)
        else:
            x = fl.operand(item.left)
            y = fl.operand(item.right)
            if isinstance(x, str) or isinstance(y, str):
                fl.constraints.append(Compare(item.rel, x, y))
            elif not _compare(item.rel, x, y):
                fl.infeasible = True
    if target is not None and target not in fl.variables:
        raise FrontendError(f"suspect variable {target!r} is undefined on this path")
    return PathSystem(decisions, fl.constraints, dict(p.inputs), fl.variables, target, interval,
                      residual, fl.infeasible, p.fmt)


def _compare(rel: str, a: float, b: float) -> bool:
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "==": a == b, "!=": a != b}[rel]


# -- concrete interpreter --------------------------------------------------------------


@dataclass
class Trace:
    """Result of one concrete execution."""

    values: dict = field(default_factory=dict)  # final value of every variable
    hits: list = field(default_factory=list)  # (value, clean) at each suspect visit
    decisions: list = field(default_factory=list)  # (pos, taken)
    flags: list = field(default_factory=list)  # diagnostics: non-finite results, bounds
    exceeded_bound: bool = False

    @property
    def clean(self) -> bool:
        return not any(f.startswith("nonfinite") for f in self.flags)

    @property
    def target(self) -> Optional[float]:
        return self.hits[-1][0] if self.hits else None

    def hit_in(self, interval: FpInterval) -> bool:
        """True when some visit of the annotation saw a value in ``interval``
        without any non-finite intermediate before it."""
        return any(clean and interval.lo <= v <= interval.hi for v, clean in self.hits)


class _Stop(Exception):
    pass


def concrete_eval(p: Program, inputs: dict, max_iterations: int = 100_000) -> Trace:
    """Execute ``p`` bit-exactly in its format, rounding every operation."""
    fmt = p.fmt
    rnd = fmt.round
    trace = Trace()
    env: dict[str, float] = {}
    for name, dom in p.inputs:
        if name not in inputs:
            raise ValueError(f"missing value for input {name!r}")
        v = float(inputs[name])
        if not fmt.contains(v):
            raise ValueError(f"input {name}={v!r} is not a {fmt} value")
        if not dom.lo <= v <= dom.hi:
            trace.flags.append(f"input {name} outside declared range {dom}")
        env[name] = v

    def note(v: float, where) -> float:
        if not math.isfinite(v):
            trace.flags.append(f"nonfinite {v!r} at {where[0]}:{where[1]}")
        return v

    def ev(e: Expr) -> float:
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, BinOp):
            a = ev(e.left)
            b = ev(e.right)
            if e.op == "/" and b == 0.0:
                if a == 0.0 or math.isnan(a):
                    r = math.nan
                else:
                    r = math.copysign(math.inf, a) * math.copysign(1.0, b)
            else:
                r = rnd(_arith(e.op, a, b))
            return note(r, e.pos)
        if isinstance(e, Neg):
            return -ev(e.operand)
        x = ev(e.operand)
        return note(rnd(math.sqrt(x)) if x >= 0 or math.isnan(x) else math.nan, e.pos)

    def test(c: Cond) -> bool:
        return _compare(c.rel, ev(c.left), ev(c.right))

    iterations = [0]

    def run(stmts) -> None:
        for s in stmts:
            if isinstance(s, AssignStmt):
                env[s.target] = ev(s.expr)
            elif isinstance(s, If):
                taken = test(s.cond)
                trace.decisions.append((s.pos, taken))
                run(s.then if taken else s.orelse)
            elif isinstance(s, While):
                while True:
                    taken = test(s.cond)
                    trace.decisions.append((s.pos, taken))
                    if not taken:
                        break
                    iterations[0] += 1
                    if iterations[0] > max_iterations:
                        trace.flags.append("iteration cap reached")
                        raise _Stop
                    run(s.body)
            elif isinstance(s, Suspect):
                trace.hits.append((env[s.var], trace.clean))
            elif isinstance(s, Residual):
                if test(s.cond):
                    trace.exceeded_bound = True
                    trace.flags.append(f"unrolling bound exceeded at {s.pos[0]}:{s.pos[1]}")
                    raise _Stop

    try:
        run(p.body)
    except _Stop:
        pass
    trace.values = dict(env)
    return trace


def real_eval(p: Program, inputs: dict, max_iterations: int = 100_000) -> Optional[dict]:
    """Reference run of ``p`` in exact rational arithmetic.

    Literals keep their decimal value and branches follow the real results.
    ``sqrt`` is taken in binary64 and so is only approximate.  Returns the
    final value of every variable, or None when a division by zero, the
    square root of a negative number or the iteration cap is met.
    """
    env: dict[str, Fraction] = {n: Fraction(float(inputs[n])) for n in p.input_names}

    class _Undefined(Exception):
        pass

    def ev(e: Expr) -> Fraction:
        if isinstance(e, Num):
            return Fraction(e.text)
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, BinOp):
            a, b = ev(e.left), ev(e.right)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if b == 0:
                raise _Undefined
            return a / b
        if isinstance(e, Neg):
            return -ev(e.operand)
        x = ev(e.operand)
        if x < 0:
            raise _Undefined
        return Fraction(math.sqrt(x))

    def test(c: Cond) -> bool:
        return _compare(c.rel, ev(c.left), ev(c.right))

    count = [0]

    def run(stmts) -> None:
        for s in stmts:
            if isinstance(s, AssignStmt):
                env[s.target] = ev(s.expr)
            elif isinstance(s, If):
                run(s.then if test(s.cond) else s.orelse)
            elif isinstance(s, While):
                while test(s.cond):
                    count[0] += 1
                    if count[0] > max_iterations:
                        raise _Undefined
                    run(s.body)

    try:
        run(p.body)
    except _Undefined:
        return None
    return env
