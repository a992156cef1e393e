from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fptestgen.floats import (
    BINARY32,
    MINI43,
    DomainError,
    FloatFormat,
    FloatValue,
    OverflowBoundary,
    ceil_value,
    floor_value,
    from_ordinal,
    ordinal,
    parse_float,
    pred,
    round_nearest_even,
    shortest_decimal,
    succ,
)

from conftest import FINITE43, decode43, round43, sqrt43

F32 = np.float32


def fv(x: float, fmt: FloatFormat = BINARY32) -> FloatValue:
    return FloatValue.from_float(x, fmt)


def random_finite32(rng: np.random.Generator, n: int) -> np.ndarray:
    bits = rng.integers(0, 2**32, n, dtype=np.uint64).astype(np.uint32)
    vals = bits.view(np.float32)
    return vals[np.isfinite(vals)]


# -- format parameters ---------------------------------------------------------


def test_finite_count_formula():
    for e, m in [(2, 1), (3, 2), (4, 3), (5, 10), (8, 23)]:
        f = FloatFormat(e, m)
        assert f.finite_count == 2 * (2**e - 1) * 2**m - 1


def test_binary32_parameters():
    assert BINARY32.max_finite == float(np.finfo(np.float32).max)
    assert BINARY32.min_subnormal == 2.0**-149
    assert BINARY32.min_normal == 2.0**-126
    assert BINARY32.width == 32


def test_format_validation():
    with pytest.raises(ValueError):
        FloatFormat(1, 3)
    with pytest.raises(ValueError):
        FloatFormat(4, 0)


def test_mini_format_matches_bit_decoder():
    # every finite bit pattern of (4,3) decodes to the same value both ways
    for b in range(256):
        expect = decode43(b)
        got = MINI43.value_of(b)
        if isinstance(expect, float):
            assert math.isnan(got) if math.isnan(expect) else got == expect
        else:
            assert Fraction(got) == expect
    assert MINI43.max_finite == 240.0
    assert MINI43.min_subnormal == 2.0**-9


# -- succ / pred / ordinal ------------------------------------------------------


def test_succ_examples():
    assert succ(fv(0.0)).bits == 0x00000001
    assert succ(fv(1.0)).to_float() == 1 + 2.0**-23
    with pytest.raises(OverflowBoundary):
        succ(fv(BINARY32.max_finite))


def test_pred_examples():
    assert pred(fv(1.0)).to_float() == 1 - 2.0**-24
    assert pred(fv(BINARY32.min_subnormal)).to_float() == 0.0
    with pytest.raises(OverflowBoundary):
        pred(fv(-BINARY32.max_finite))


def test_non_finite_rejected():
    for x in (math.inf, -math.inf, math.nan):
        with pytest.raises(DomainError):
            succ(fv(x))
        with pytest.raises(DomainError):
            pred(fv(x))


def test_zero_collapses():
    assert ordinal(fv(0.0)) == ordinal(fv(-0.0)) == 0
    assert fv(0.0) == fv(-0.0)
    assert fv(0.0).bits != fv(-0.0).bits
    assert succ(fv(-0.0)) == succ(fv(0.0))


def test_next_up_matches_hardware_nextafter():
    rng = np.random.default_rng(7)
    xs = random_finite32(rng, 1_000_000)
    xs = xs[np.abs(xs) < np.finfo(np.float32).max]
    up = np.nextafter(xs, F32(np.inf))
    down = np.nextafter(xs, F32(-np.inf))
    nu, nd = BINARY32.next_up, BINARY32.next_down
    bad = 0
    for x, u, d in zip(xs.tolist(), up.tolist(), down.tolist()):
        a, b = nu(x), nd(x)
        # hardware nextafter steps from -0 to +0; the collapsed order does not
        if x == 0.0:
            continue
        if a != u or b != d or nd(a) != x or nu(b) != x:
            bad += 1
    assert bad == 0


def test_ordinal_contiguous_on_mini_format():
    ords = sorted(MINI43.ordinal(float(v)) for v in FINITE43)
    assert ords == list(range(-MINI43.max_ordinal, MINI43.max_ordinal + 1))
    assert len(ords) == MINI43.finite_count == 239


@given(st.integers(0, 2**32 - 1))
def test_ordinal_round_trip(bits):
    x = BINARY32.value_of(bits)
    if not math.isfinite(x):
        return
    k = BINARY32.ordinal(x)
    assert BINARY32.from_ordinal(k) == x
    assert from_ordinal(k) == fv(x)


@given(st.floats(width=32, allow_nan=False, allow_infinity=False),
       st.floats(width=32, allow_nan=False, allow_infinity=False))
def test_ordinal_monotone(x, y):
    kx, ky = BINARY32.ordinal(x), BINARY32.ordinal(y)
    assert (x < y) == (kx < ky)
    assert (x == y) == (kx == ky)


# -- rounding ----------------------------------------------------------------------


def test_round_tie_to_even():
    assert round_nearest_even(1 + Fraction(1, 2**24)).to_float() == 1.0
    # next tie rounds up to the even neighbour
    assert round_nearest_even(1 + Fraction(3, 2**24)).to_float() == 1 + 2.0**-22


def test_round_one_tenth():
    assert round_nearest_even(Fraction(1, 10)).bits == 0x3DCCCCCD
    assert fv(parse_float("0.1")).hex() == "0x3DCCCCCD"


def test_round_overflow():
    top = Fraction(BINARY32.max_finite)
    half_ulp = Fraction(2) ** 103
    assert round_nearest_even(top + half_ulp - 1).to_float() == BINARY32.max_finite
    assert round_nearest_even(top + half_ulp).is_infinite()
    assert round_nearest_even(-top - half_ulp).to_float() == -math.inf


def test_round_matches_exhaustive_table_mini():
    # every exact pairwise result of the (4,3) format against the oracle table
    vals = [float(v) for v in FINITE43]
    fracs = FINITE43
    for i, x in enumerate(vals):
        for j, y in enumerate(vals):
            rx, ry = fracs[i], fracs[j]
            exact = {"+": rx + ry, "-": rx - ry, "*": rx * ry}
            if ry != 0:
                exact["/"] = rx / ry
            for op, r in exact.items():
                want = round43(r)
                assert round_nearest_even(r, MINI43).to_float() == want, (x, op, y)
                hw = {"+": x + y, "-": x - y, "*": x * y, "/": x / y if y else 0.0}[op]
                assert MINI43.round(hw) == want, (x, op, y)
    for x, r in zip(vals, fracs):
        if x >= 0:
            assert MINI43.round(math.sqrt(x)) == sqrt43(r), x


def test_software_rounding_matches_hardware_add():
    rng = np.random.default_rng(11)
    xs = random_finite32(rng, 1_100_000)
    ys = random_finite32(rng, 1_100_000)
    n = min(len(xs), len(ys), 1_000_000)
    xs, ys = xs[:n], ys[:n]
    with np.errstate(over="ignore", invalid="ignore"):
        hw = (xs + ys).tolist()
    mism = 0
    for x, y, h in zip(xs.tolist(), ys.tolist(), hw):
        got = round_nearest_even(Fraction(x) + Fraction(y)).to_float()
        if not (got == h or (got == 0.0 and h == 0.0)):
            mism += 1
    assert n >= 999_000 and mism == 0


@given(st.floats(width=32, allow_nan=False, allow_infinity=False),
       st.floats(width=32, allow_nan=False, allow_infinity=False))
@settings(max_examples=3000)
def test_fast_rounding_matches_hardware_ops(x, y):
    fx, fy = F32(x), F32(y)
    with np.errstate(all="ignore"):
        hw = {"+": fx + fy, "-": fx - fy, "*": fx * fy}
        if y != 0:
            hw["/"] = fx / fy
    for op, h in hw.items():
        d = {"+": x + y, "-": x - y, "*": x * y, "/": x / y if y else 0.0}[op]
        got = BINARY32.round(d)
        assert got == float(h) or (math.isnan(got) and math.isnan(h)), (x, op, y)


# -- decimal conversion --------------------------------------------------------------


def test_serialization_examples():
    v = fv(parse_float("5.517474"))
    assert v.hex() == "0x40B08F26"
    assert str(v) == "5.517474 / 0x40B08F26"
    assert FloatValue.parse("-1.0000001e-05").decimal() == "-0.000010000001"
    assert shortest_decimal(240.0, MINI43) == "240.0"


@given(st.integers(0, 2**32 - 1))
def test_shortest_decimal_round_trip(bits):
    x = BINARY32.value_of(bits)
    if not math.isfinite(x):
        return
    text = shortest_decimal(x)
    assert BINARY32.bits_of(parse_float(text)) == bits


def test_shortest_decimal_round_trip_mini():
    for v in FINITE43:
        x = float(v)
        assert parse_float(shortest_decimal(x, MINI43), MINI43) == x


def test_parse_overflow():
    with pytest.raises(DomainError):
        parse_float("1e39")
    assert parse_float("3.4028235e38") == BINARY32.max_finite


@given(st.fractions(min_value=-300, max_value=300, max_denominator=10**6), st.booleans())
def test_ceil_floor_value_mini(r, strict):
    c = ceil_value(r, MINI43, strict)
    f = floor_value(r, MINI43, strict)
    above = [v for v in FINITE43 if v > r or (not strict and v == r)]
    below = [v for v in FINITE43 if v < r or (not strict and v == r)]
    assert c == (float(above[0]) if above else None)
    assert f == (float(below[-1]) if below else None)
