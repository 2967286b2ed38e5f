from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from rippler.amounts import (
    XRP, Amount, Currency, MalformedTx, amount_mul, ceil_drops, floor_drops, issued, make_amount, render_value,
)

USD = issued("USD", "G1")


def test_make_amount_zero_and_units():
    assert make_amount("0", XRP).drops == 0
    assert make_amount("1.5", XRP).drops == 1_500_000


def test_make_amount_is_exact_rational():
    a = make_amount("0.1", USD)
    assert a.value == Fraction(1, 10)
    assert a.value != Fraction(0.1)


@pytest.mark.parametrize("text", ["-1", "abc", "", "1e", "0.0000001", "1234567890123456"])
def test_make_amount_rejects(text):
    cur = XRP if text == "0.0000001" else USD
    with pytest.raises(MalformedTx):
        make_amount(text, cur)


def test_amount_mul_examples():
    hundred = make_amount("100", USD)
    assert amount_mul(hundred, 1) == hundred
    assert amount_mul(hundred, Fraction(1, 3)).value == Fraction(100, 3)
    assert amount_mul(Amount.from_drops(1), Fraction(1, 2)).drops == 0


def test_xrp_must_be_whole_drops():
    with pytest.raises(MalformedTx):
        Amount(Fraction(1, 10**7), XRP)


def test_currency_identity():
    assert issued("USD", "G1") == issued("USD", "G1")
    assert issued("USD", "G1") != issued("USD", "G2")
    assert Currency() == XRP and XRP.issuer is None
    with pytest.raises(MalformedTx):
        Currency("XRP", "G1")
    with pytest.raises(MalformedTx):
        issued("US", "G1")


def test_currency_parse_round_trip():
    assert Currency.parse("XRP") == XRP
    assert Currency.parse("USD@G1") == USD
    assert Currency.parse(str(USD)) == USD


def test_mixed_currency_arithmetic_rejected():
    with pytest.raises(ValueError):
        make_amount("1", USD) + make_amount("1", XRP)


def test_drop_rounding_helpers():
    v = Fraction(15, 10**7)  # 1.5 drops
    assert floor_drops(v) == Fraction(1, 10**6)
    assert ceil_drops(v) == Fraction(2, 10**6)


def test_json_round_trip():
    for a in (make_amount("12.345678", XRP), make_amount("0.000000000000001", USD)):
        assert Amount.from_json(a.to_json()) == a


decimals = st.decimals(min_value=Decimal("0"), max_value=Decimal("1e12"), places=6, allow_nan=False,
                       allow_infinity=False)


@given(decimals)
def test_render_round_trips_within_fifteen_digits(d):
    text = format(d, "f")
    if len(Decimal(text).normalize().as_tuple().digits) > 15:
        return
    a = make_amount(text, USD)
    assert Fraction(Decimal(render_value(a.value))) == a.value
    sig = render_value(a.value).replace(".", "").lstrip("0")
    assert len(sig.rstrip("0") or "0") <= 15


@given(st.fractions(min_value=0, max_value=10**9, max_denominator=10**6),
       st.fractions(min_value=0, max_value=10**9, max_denominator=10**6))
def test_exact_addition_is_associative_and_commutative(a, b):
    x, y = Amount(a, USD), Amount(b, USD)
    assert (x + y).value == a + b == (y + x).value
    assert (x + y - y) == x


@given(st.integers(min_value=0, max_value=10**15), st.fractions(min_value=0, max_value=10, max_denominator=1000))
def test_xrp_mul_floors_to_drops(drops, r):
    out = amount_mul(Amount.from_drops(drops), r)
    exact = Fraction(drops, 10**6) * r
    assert out.value <= exact < out.value + Fraction(1, 10**6)
