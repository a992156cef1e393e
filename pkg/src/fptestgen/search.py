"""Branch-and-prune search over the input domains of a constraint store."""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .floats import FloatFormat, FloatValue
from .interval import FpInterval
from .store import (
    Assign,
    Compare,
    ConstraintStore,
    SuspectSpec,
    Ternary,
    Unary,
    filter_3b,
    propagate_2b,
)

log = logging.getLogger(__name__)

STRATEGIES = ("std", "fpc", "fp3s")
ORDERS = ("descending", "singletons-first", "listed")
SAT, UNSAT, NOT_FOUND, UNKNOWN = "Sat", "Unsat", "NotFound", "Unknown"


class NoSplittable(Exception):
    """Every decision variable is a singleton."""


class SplitDegenerate(ValueError):
    """Attempt to split a singleton domain."""


class InconsistencyError(RuntimeError):
    """Propagation accepted a fully instantiated point the interpreter rejects."""


@dataclass
class SolverConfig:
    strategy: str = "fpc"
    unroll_k: int = 10
    timeout: float = 180.0  # seconds
    node_limit: Optional[int] = None
    shave: str = "nodes"  # root | nodes | off
    slice_fraction: float = 0.05
    midpoint: str = "arithmetic"  # std only: arithmetic | ordinal
    order: str = "descending"  # see ORDERS
    seed: Optional[int] = None  # reserved; the search has no random choices

    def __post_init__(self) -> None:
        if self.strategy == "fpc3s":
            self.strategy = "fp3s"
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.unroll_k < 0:
            raise ValueError("unroll_k must be >= 0")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.shave not in ("root", "nodes", "off"):
            raise ValueError(f"unknown shave mode {self.shave!r}")
        if self.order not in ORDERS:
            raise ValueError(f"unknown exploration order {self.order!r}")
        if self.midpoint not in ("arithmetic", "ordinal"):
            raise ValueError(f"unknown midpoint mode {self.midpoint!r}")

    @property
    def shave_at_nodes(self) -> bool:
        return self.shave == "nodes"

    @property
    def complete(self) -> bool:
        return self.strategy in ("std", "fpc")


@dataclass
class Stats:
    nodes: int = 0
    propagations: int = 0
    max_depth: int = 0
    time_ms: float = 0.0

    def add(self, other: Stats) -> None:
        self.nodes += other.nodes
        self.propagations += other.propagations
        self.max_depth = max(self.max_depth, other.max_depth)
        self.time_ms += other.time_ms

    def as_dict(self) -> dict:
        return {"nodes": self.nodes, "propagations": self.propagations,
                "max_depth": self.max_depth, "time_ms": round(self.time_ms, 3)}


@dataclass
class SolveResult:
    status: str
    witness: Optional[dict] = None  # input name -> FloatValue
    reason: str = ""
    stats: Stats = field(default_factory=Stats)
    verified: bool = False
    target: Optional[float] = None
    path: list = field(default_factory=list)

    @property
    def is_sat(self) -> bool:
        return self.status == SAT

    def witness_floats(self) -> dict[str, float]:
        return {k: v.to_float() for k, v in (self.witness or {}).items()}


# -- variable selection and splitting ---------------------------------------------


def _width(store: ConstraintStore, i: int) -> Fraction:
    return Fraction(store.hi[i]) - Fraction(store.lo[i])


def select_variable(store: ConstraintStore, candidates: Optional[list[int]] = None) -> int:
    """Decision variable of largest exact width, ties to the smallest name."""
    if candidates is None:
        candidates = store.decision_vars()
    best = None
    best_key = None
    for i in candidates:
        if store.lo[i] == store.hi[i]:
            continue
        w = _width(store, i)
        if best is None or w > best_key or (w == best_key and store.names[i] < store.names[best]):
            best, best_key = i, w
    if best is None:
        raise NoSplittable("all decision variables are instantiated")
    return best


def midpoint(x: FpInterval, ordinal: bool = False) -> float:
    """Split point strictly inside ``x`` when possible, else its lower bound.

    The arithmetic midpoint is the format rounding of ``(lo + hi) / 2``
    (halving is exact in binary64 and the sum is rounded once more, which
    is harmless for these formats); if it lands on a bound, the ordinal
    midpoint is used instead.
    """
    f = x.fmt
    kl, kh = f.ordinal(x.lo), f.ordinal(x.hi)
    if not ordinal:
        m = f.round(x.lo * 0.5 + x.hi * 0.5) + 0.0
        if x.lo < m < x.hi:
            return m
    return f.from_ordinal((kl + kh) // 2) + 0.0


def split(x: FpInterval, strategy: str, ordinal_midpoint: bool = False) -> list[FpInterval]:
    """Ordered sub-domains explored by the search for one split of ``x``."""
    f = x.fmt
    kl, kh = f.ordinal(x.lo), f.ordinal(x.hi)
    if kl == kh:
        raise SplitDegenerate(f"cannot split singleton {x}")
    if strategy == "fpc3s":
        strategy = "fp3s"
    if strategy == "std":
        m = midpoint(x, ordinal_midpoint)
        return [FpInterval(x.lo, m, f), FpInterval(f.from_ordinal(f.ordinal(m) + 1) + 0.0, x.hi, f)]
    if strategy not in ("fpc", "fp3s"):
        raise ValueError(f"unknown strategy {strategy!r}")
    lo, hi = FpInterval.point(x.lo, f), FpInterval.point(x.hi, f)
    if kh - kl == 1:
        return [lo, hi]
    m = midpoint(x)
    km = f.ordinal(m)
    mid = FpInterval.point(m, f)
    if strategy == "fp3s":
        return [lo, mid, hi]
    out = [lo]
    if km - kl > 1:
        out.append(FpInterval(f.from_ordinal(kl + 1) + 0.0, f.from_ordinal(km - 1) + 0.0, f))
    out.append(mid)
    if kh - km > 1:
        out.append(FpInterval(f.from_ordinal(km + 1) + 0.0, f.from_ordinal(kh - 1) + 0.0, f))
    out.append(hi)
    return out


def order_pieces(pieces: list[FpInterval], order: str) -> list[FpInterval]:
    """Exploration order of the pieces returned by :func:`split`.

    ``listed`` keeps the ascending split order.  ``singletons-first`` tries
    the degenerate pieces before the open ones.  ``descending`` does the
    same from the upper end: singletons from right to left, then the open
    pieces from right to left.
    """
    if order == "listed":
        return list(pieces)
    points = [q for q in pieces if q.is_singleton()]
    spans = [q for q in pieces if not q.is_singleton()]
    if order == "singletons-first":
        return points + spans
    if order == "descending":
        return points[::-1] + spans[::-1]
    raise ValueError(f"unknown exploration order {order!r}")


# -- concrete check at the constraint level ------------------------------------------


def _arith(fmt: FloatFormat, op: str, a: float, b: float) -> float:
    if op == "+":
        return fmt.round(a + b)
    if op == "-":
        return fmt.round(a - b)
    if op == "*":
        return fmt.round(a * b)
    if b == 0.0:
        return math.nan
    return fmt.round(a / b)


_REL = {
    "<": lambda a, b: a < b, "<=": lambda a, b: a <= b, ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b, "==": lambda a, b: a == b, "!=": lambda a, b: a != b,
}


def evaluate_store(store: ConstraintStore, inputs: dict[str, float]) -> Optional[dict[str, float]]:
    """Run the constraints of a DSA store as straight-line code.

    Constraints are taken in insertion order; each defining constraint must
    come after those defining its operands.  Returns every variable's value
    when all constraints hold with finite values, else None.
    """
    fmt = store.fmt
    env = dict(inputs)
    for i in store.constants:
        env[store.names[i]] = store.lo[i]

    def val(o):
        return env[o] if isinstance(o, str) else float(o)

    for c in store.constraints:
        if isinstance(c, Compare):
            if not _REL[c.rel](val(c.x), val(c.y)):
                return None
            continue
        if isinstance(c, Ternary):
            v = _arith(fmt, c.op, val(c.x), val(c.y))
        elif isinstance(c, Unary):
            x = val(c.x)
            v = -x if c.op == "neg" else (fmt.round(math.sqrt(x)) if x >= 0 else math.nan)
        elif isinstance(c, Assign):
            v = val(c.x)
        else:
            raise TypeError(c)
        if not math.isfinite(v):
            return None
        z = c.z
        if not isinstance(z, str):
            if v != z:
                return None
        elif z in env:
            if env[z] != v:
                return None
        else:
            env[z] = v + 0.0
    for name in store.names:
        if name not in env:
            return None
        i = store.index[name]
        if not store.lo[i] <= env[name] <= store.hi[i]:
            # the domain here is the restriction posted by the caller
            return None
    return env


# -- the solve loop ---------------------------------------------------------------------

Check = Callable[[dict], "tuple[bool, Optional[float]]"]


class _Limit(Exception):
    pass


def solve(store: ConstraintStore, spec: Optional[SuspectSpec] = None,
          cfg: Optional[SolverConfig] = None, check: Optional[Check] = None,
          deadline: Optional[float] = None) -> SolveResult:
    """Depth-first branch and prune on the decision variables of ``store``.

    ``check`` receives a full input assignment at each leaf and returns
    ``(accepted, target_value)``; by default the store's constraints are
    executed directly.  ``spec`` only serves to report the target value.
    """
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    if deadline is None:
        deadline = start + cfg.timeout
    stats = Stats()
    base_revisions = store.counter.revisions
    store_root = store.copy()
    root_domains = (store.lo[:], store.hi[:])
    target = spec.target_var if spec is not None else None

    if check is None:
        def check(inputs):
            env = evaluate_store(_with_domains(store, root_domains), inputs)
            if env is None:
                return False, None
            return True, env.get(target) if target else None

    decision = store_root.decision_vars()
    decision_set = set(decision)
    fmt = store.fmt
    # inputs that no constraint mentions take their lowest value
    for name in store_root.inputs:
        i = store_root.index[name]
        if i not in decision_set:
            store_root.hi[i] = store_root.lo[i]

    def finish(status: str, reason: str = "", witness=None, verified=False, value=None) -> SolveResult:
        stats.propagations = store.counter.revisions - base_revisions
        stats.time_ms = (time.perf_counter() - start) * 1000.0
        return SolveResult(status, witness, reason, stats, verified, value)

    def over_limit() -> bool:
        return time.perf_counter() > deadline or (cfg.node_limit is not None and stats.nodes >= cfg.node_limit)

    ordinal_mid = cfg.midpoint == "ordinal"
    tracing = log.isEnabledFor(logging.DEBUG)
    stack: list = [(store_root, 0, None)]
    limit_reason = ""
    while stack:
        if over_limit():
            limit_reason = "timeout" if time.perf_counter() > deadline else "node limit"
            break
        node, depth, seed = stack.pop()
        stats.nodes += 1
        stats.max_depth = max(stats.max_depth, depth)
        if not propagate_2b(node, None if seed is None else (seed,)):
            continue
        if depth == 0 and cfg.shave != "off" or depth > 0 and cfg.shave_at_nodes:
            # full 3B fixpoint at the root, one shaving pass below it
            passes = None if depth == 0 else 1
            if not filter_3b(node, cfg.slice_fraction, should_stop=over_limit, max_passes=passes):
                continue
        try:
            v = select_variable(node, decision)
        except NoSplittable:
            inputs = {n: node.lo[node.index[n]] for n in node.inputs}
            ok, value = check(inputs)
            if ok:
                witness = {n: FloatValue.from_float(x, fmt) for n, x in inputs.items()}
                log.info("witness after %d nodes: %s", stats.nodes, inputs)
                return finish(SAT, witness=witness, verified=True, value=value)
            if all(node.lo[i] == node.hi[i] for i in range(len(node.names))):
                raise InconsistencyError(
                    f"propagation accepts {inputs} but concrete execution rejects it")
            continue
        x = FpInterval(node.lo[v], node.hi[v], fmt)
        if tracing:
            log.debug("node %d depth %d: split %s in %s", stats.nodes, depth, node.names[v], x)
        pieces = order_pieces(split(x, cfg.strategy, ordinal_mid), cfg.order)
        for piece in reversed(pieces):
            child = node.copy()
            child.lo[v], child.hi[v] = piece.lo, piece.hi
            stack.append((child, depth + 1, v))
    if limit_reason:
        return finish(UNKNOWN, limit_reason)
    if cfg.complete:
        return finish(UNSAT, "search space exhausted")
    return finish(NOT_FOUND, "3-singleton tree exhausted")


def _with_domains(store: ConstraintStore, domains) -> ConstraintStore:
    s = store.copy()
    s.lo, s.hi = domains[0][:], domains[1][:]
    return s


# -- whole programs -------------------------------------------------------------------


def solve_program(program, cfg: Optional[SolverConfig] = None, spec: Optional[SuspectSpec] = None) -> SolveResult:
    """Solve every path to the annotation of ``program`` and combine results.

    Sat on any path wins.  Otherwise a resource limit or a reachable
    residual loop guard gives Unknown; exhausting every path gives Unsat for
    the complete strategies and NotFound for fp3s.
    """
    from .frontend import NoPathToTarget, concrete_eval, enumerate_paths, to_dsa, unroll_loops

    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    deadline = start + cfg.timeout
    spec = spec or program.suspect_spec()
    unrolled = unroll_loops(program, cfg.unroll_k)
    try:
        systems = enumerate_paths(to_dsa(unrolled), spec)
    except NoPathToTarget as exc:
        if cfg.complete:
            return SolveResult(UNSAT, reason=str(exc))
        return SolveResult(NOT_FOUND, reason=str(exc))
    total = Stats()
    unknown = []

    def hit_check(inputs):
        trace = concrete_eval(unrolled, inputs)
        return trace.hit_in(spec.interval), trace.target

    def residual_check(inputs):
        trace = concrete_eval(unrolled, inputs)
        return trace.exceeded_bound, None

    ordered = [s for s in systems if not s.residual] + [s for s in systems if s.residual]
    for idx, system in enumerate(ordered):
        if time.perf_counter() > deadline:
            unknown.append("timeout")
            break
        store = system.build_store()
        res = solve(store, spec, cfg, residual_check if system.residual else hit_check, deadline)
        total.add(res.stats)
        log.info("path %d/%d (%s): %s", idx + 1, len(ordered),
                 "residual" if system.residual else "target", res.status)
        if res.status == UNKNOWN:
            unknown.append(res.reason)
        elif res.status == SAT:
            if system.residual:
                unknown.append(f"unrolling bound {cfg.unroll_k} too small")
                continue
            res.stats = total
            res.stats.time_ms = (time.perf_counter() - start) * 1000.0
            res.path = system.describe()
            return res
    total.time_ms = (time.perf_counter() - start) * 1000.0
    if unknown:
        return SolveResult(UNKNOWN, reason="; ".join(dict.fromkeys(unknown)), stats=total)
    if cfg.complete:
        return SolveResult(UNSAT, reason="every path exhausted", stats=total)
    return SolveResult(NOT_FOUND, reason="no witness in the 3-singleton trees", stats=total)


# -- generate and test baseline ---------------------------------------------------------


def generate_and_test(program, trials: int = 100_000, seed: Optional[int] = 0,
                      timeout: float = 180.0, spec: Optional[SuspectSpec] = None) -> SolveResult:
    """Run ``program`` on random inputs until one hits the suspicious interval.

    Each input is drawn uniformly over the ordinal ranks of its declared
    domain, so every float has the same chance.  The draws depend only on
    ``seed``.  Gives Sat on the first hit and NotFound once ``trials`` runs or
    ``timeout`` seconds are used up.
    """
    from .frontend import concrete_eval

    spec = spec or program.suspect_spec()
    fmt = program.fmt
    rng = random.Random(seed)
    ranges = []
    for name in program.input_names:
        d = program.input_domain(name)
        ranges.append((name, fmt.ordinal(d.lo), fmt.ordinal(d.hi)))
    # a box of one point needs a single run
    if all(kl == kh for _, kl, kh in ranges):
        trials = min(trials, 1)
    start = time.perf_counter()
    stats = Stats()
    found = None
    for _ in range(trials):
        if time.perf_counter() - start > timeout:
            break
        inputs = {name: fmt.from_ordinal(rng.randint(kl, kh)) + 0.0 for name, kl, kh in ranges}
        stats.nodes += 1
        trace = concrete_eval(program, inputs)
        if trace.hit_in(spec.interval):
            found = (inputs, trace)
            break
    stats.time_ms = (time.perf_counter() - start) * 1000.0
    if found is None:
        return SolveResult(NOT_FOUND, reason=f"no hit in {stats.nodes} trials", stats=stats)
    inputs, trace = found
    witness = {n: FloatValue.from_float(x, fmt) for n, x in inputs.items()}
    return SolveResult(SAT, witness, "", stats, True, trace.target,
                       [f"{'T' if taken else 'F'} @{pos[0]}:{pos[1]}" for pos, taken in trace.decisions])
