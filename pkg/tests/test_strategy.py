from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from scenarios import EUR, USD, uncontested_fixture
from rippler.amounts import XRP, Amount, issued
from rippler.cli import run_round_trip
from rippler.cycles import detect, evaluate
from rippler.feed import LedgerEvent, ReplayConfig, Replayer, read_events
from rippler.graph import build
from rippler.ledger import TF_NO_DIRECT_RIPPLE, TF_PARTIAL_PAYMENT, offer_cancel, offer_create, payment
from rippler.strategy import Outcome, parse_allowlist, plan_cycle, plan_round_trip, settle

FEE = Amount.from_drops(10)


def triangle_ledger():
    """Replay the uncontested fixture up to the ledger where the triangle appears."""
    r = Replayer(ReplayConfig())
    events = read_events(uncontested_fixture())
    for n in (1, 2):
        r.step([e for e in events if e.ledger_index == n])
    return r


def opportunity(r):
    books = r.ledger.books
    return evaluate(detect(build(books)), books, FEE, tx_count=1)


def test_plan_cycle_builds_one_payment():
    r = triangle_ledger()
    opp = opportunity(r)
    assert opp.cycle.start_currency == XRP and len(opp.cycle) == 3
    plan = plan_cycle(opp, r.ledger.trusted("JACK"), None, r.ledger.books,
                      account="JACK", fee_per_tx=FEE, deadline_ledger=3)
    (tx,) = plan.transactions
    assert tx.sender == tx.destination == "JACK"
    assert len(tx.paths) == 3
    assert tx.flags == {TF_PARTIAL_PAYMENT, TF_NO_DIRECT_RIPPLE}
    assert tx.signature == "stamp:JACK"
    assert plan.expected_net.value > 0
    r.ledger.submit(tx)
    (out,) = r.ledger.close().outcomes
    rec = settle(plan, [out], 3)
    assert rec.outcome is Outcome.COMPLETED
    assert rec.realized == plan.expected_net


def test_plan_cycle_gated_by_allowlist():
    r = triangle_ledger()
    opp = opportunity(r)
    args = dict(account="JACK", fee_per_tx=FEE, deadline_ledger=3)
    only_usd = frozenset({USD})
    assert plan_cycle(opp, r.ledger.trusted("JACK"), only_usd, r.ledger.books, **args) is None
    both = frozenset({USD, EUR})
    assert plan_cycle(opp, r.ledger.trusted("JACK"), both, r.ledger.books, **args) is not None


def test_plan_cycle_needs_trustlines():
    r = triangle_ledger()
    opp = opportunity(r)
    plan = plan_cycle(opp, frozenset({USD}), None, r.ledger.books, account="JACK", fee_per_tx=FEE,
                      deadline_ledger=3)
    assert plan is None


def test_allowlist_parsing():
    allow = parse_allowlist("# featured\nUSD GW\n\nEUR GW  # trailing\n")
    assert allow == {USD, EUR}
    with pytest.raises(ValueError):
        parse_allowlist("USD")


A_CUR = issued("CUR", "A")


def x(v):
    return Amount(Fraction(v), XRP)


def test_round_trip_gain_example():
    plan = plan_round_trip("A", "B", A_CUR, x(100), x(101), FEE)
    assert plan.accepted
    assert plan.gain.value == Fraction(99998, 100000)
    assert len(plan.transactions) == 2


def test_round_trip_rejects_non_positive_gain():
    assert not plan_round_trip("A", "B", A_CUR, x(100), x(100), FEE).accepted
    assert plan_round_trip("A", "B", A_CUR, x(100), x(100), FEE).gain.value == -Fraction(2, 10**5)
    edge = plan_round_trip("A", "B", A_CUR, x(100), x(100) + Amount.from_drops(20), FEE)
    assert not edge.accepted and edge.gain.value == 0


def test_round_trip_requires_own_currency_and_partner_trust():
    assert not plan_round_trip("A", "B", issued("CUR", "Z"), x(1), x(2), FEE).accepted
    assert not plan_round_trip("A", "B", A_CUR, x(1), x(2), FEE, trustlines=[]).accepted


def test_round_trip_simulated():
    plan, gain, _ = run_round_trip(Fraction(100), Fraction(101), 10)
    assert gain == Fraction(99998, 100000) == plan.gain.value


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10**9), st.integers(1, 10**8), st.integers(1, 1000))
def test_round_trip_arithmetic_property(x_drops, extra_drops, fee):
    x_val = Fraction(x_drops, 10**6)
    xp = x_val + Fraction(2 * fee + extra_drops, 10**6)
    plan, gain, _ = run_round_trip(x_val, xp, fee)
    assert gain == xp - x_val - Fraction(2 * fee, 10**6)


def test_settle_rejected_plan():
    rec = settle(None, (), 4)
    assert rec.outcome is Outcome.REJECTED
    assert rec.realized.value == 0 and rec.fees_paid.value == 0


# competitor actions submitted ahead of the bot in the ledger it executes
adversary = st.lists(
    st.tuples(st.sampled_from(["take", "cancel", "reprice"]), st.integers(1, 3), st.integers(1, 400)),
    max_size=4,
)


@settings(max_examples=80, deadline=None)
@given(adversary)
def test_loss_bounded_by_fees(actions):
    r = triangle_ledger()
    assert r.pending_plan is not None
    paths = [[(USD, EUR), (EUR, XRP), (XRP, USD)], [(EUR, XRP), (XRP, USD), (USD, EUR)]]
    evs = []
    for kind, k, v in actions:
        if kind == "take":
            src = paths[k % 2][0][0]
            tx = payment("COMP", "COMP", Amount(Fraction(v), src), send_max=Amount(Fraction(v), src),
                         flags=[TF_PARTIAL_PAYMENT], paths=paths[k % 2])
        elif kind == "cancel":
            tx = offer_cancel("MM", k)
        else:
            tx = offer_create("MM", Amount(Fraction(v), USD), Amount(Fraction(v), EUR))
        evs.append(LedgerEvent(3, tx.kind.value, tx.sender, tx=tx))
    r.step(evs)
    (rec,) = r.report.pnl
    assert rec.realized.value >= -rec.fees_paid.value
    r.ledger.check_conservation()
