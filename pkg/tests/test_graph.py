import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from oracles import random_mutations
from rippler.amounts import XRP, Amount, issued
from rippler.book import Offer, OrderBook
from rippler.graph import OutOfOrderDelta, RateGraph, build, edge_weight

USD = issued("USD", "G1")
EUR = issued("EUR", "G1")


def put(b, owner, seq, pay_cur, pay, get_cur, get):
    o = Offer(owner, seq, Amount(Fraction(pay), pay_cur), Amount(Fraction(get), get_cur))
    b.apply_offer_create(o)
    return o


def test_empty_build():
    g = build(OrderBook())
    assert not g.edges and not g.vertices


def test_single_edge_sign():
    b = OrderBook()
    put(b, "M", 1, USD, 2, XRP, 1)
    g = build(b)
    e = g.edges[(USD, XRP)]
    assert e.rate == Fraction(1, 2)
    assert e.weight == pytest.approx(math.log(2), abs=1e-15)
    put(b, "M", 2, EUR, 1, USD, 2)
    assert build(b).edges[(EUR, USD)].weight < 0


def test_edge_weight_examples():
    assert edge_weight(Fraction(1)) == 0
    e = Fraction(math.e)
    assert abs(edge_weight(e) + 1) < 1e-12
    for r in (Fraction(3, 7), Fraction(1000001, 1000000), Fraction(10**9, 3)):
        assert abs(edge_weight(r) + edge_weight(1 / r)) < 1e-12


@given(st.fractions(min_value=Fraction(1, 10**6), max_value=10**6))
def test_edge_weight_matches_log(r):
    assert edge_weight(r) == pytest.approx(-math.log(r), abs=1e-12)


def test_empty_delta_is_noop():
    b = OrderBook()
    put(b, "M", 1, USD, 2, XRP, 1)
    g = build(b)
    before = g.snapshot()
    assert not g.update(b.close_delta(1), b)
    assert g == before


def test_update_after_head_cancel():
    b = OrderBook()
    put(b, "M", 1, USD, 2, XRP, 1)
    put(b, "M", 2, USD, 3, XRP, 1)
    g = build(b, version=1)
    b.close_delta(1)
    b.apply_offer_cancel("M", 1)
    assert g.update(b.close_delta(2), b)
    assert g.edges[(USD, XRP)].rate == Fraction(1, 3)
    assert g == build(b)


def test_update_removes_empty_side_keeps_shared_vertex():
    b = OrderBook()
    put(b, "M", 1, USD, 2, XRP, 1)
    put(b, "M", 2, EUR, 1, USD, 1)
    g = build(b, version=1)
    b.close_delta(1)
    b.apply_offer_cancel("M", 1)
    g.update(b.close_delta(2), b)
    assert (USD, XRP) not in g.edges
    assert USD in g.vertices and XRP not in g.vertices
    assert g == build(b)


def test_out_of_order_delta_rejected():
    b = OrderBook()
    put(b, "M", 1, USD, 2, XRP, 1)
    g = RateGraph()
    g.update(b.close_delta(1), b)
    with pytest.raises(OutOfOrderDelta):
        g.update(b.close_delta(1), b)
    with pytest.raises(OutOfOrderDelta):
        g.update(b.close_delta(5), b)


def test_incremental_equals_rebuild_randomized():
    rng = random.Random(11)
    currencies = [XRP, USD, EUR, issued("BTC", "G2")]
    for trial in range(50):
        g = RateGraph()
        ledger = 0
        for b in random_mutations(rng, 60, currencies):
            if rng.random() < 0.5:
                ledger += 1
                g.update(b.close_delta(ledger), b)
        ledger += 1
        g.update(b.close_delta(ledger), b)
        assert g == build(b)
