"""Turning detected opportunities into signed transaction plans, and settling them."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Collection, Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

from .amounts import XRP, AccountId, Amount, Currency, floor_drops
from .book import OrderBook, Pair
from .cycles import Opportunity, evaluate
from .ledger import TF_NO_DIRECT_RIPPLE, TF_PARTIAL_PAYMENT, Transaction, TxOutcome, offer_create, payment

ARB_FLAGS = frozenset({TF_PARTIAL_PAYMENT, TF_NO_DIRECT_RIPPLE})


class Outcome(str, Enum):
    COMPLETED = "Completed"
    INCOMPLETE = "Incomplete"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class Plan:
    transactions: Tuple[Transaction, ...]
    expected_net: Amount
    deadline_ledger: int
    controlled: FrozenSet[AccountId]
    # what the last payment must deliver for the plan to count as completed
    target: Amount
    valuation: Dict[Currency, Fraction] = field(default_factory=dict, compare=False)
    kind: str = "cycle"


@dataclass(frozen=True)
class RoundTripPlan:
    account_a: AccountId
    account_b: AccountId
    cur: Currency
    x: Amount
    x_prime: Amount
    e: Amount
    transactions: Tuple[Transaction, ...] = ()
    rejected_reason: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.rejected_reason is None

    @property
    def gain(self) -> Amount:
        """Aggregate gain of both accounts: x' - x - e."""
        return self.x_prime - self.x - self.e

    def to_plan(self, deadline_ledger: int) -> Plan:
        return Plan(
            transactions=self.transactions,
            expected_net=self.gain,
            deadline_ledger=deadline_ledger,
            controlled=frozenset({self.account_a, self.account_b}),
            target=self.transactions[-1].amount if self.transactions else Amount.zero(self.cur),
            valuation={XRP: Fraction(1)},
            kind="round_trip",
        )


@dataclass(frozen=True)
class PnLRecord:
    ledger: int
    intended: Amount
    realized: Amount
    fees_paid: Amount
    outcome: Outcome

    def to_json(self) -> dict:
        return {
            "ledger": self.ledger,
            "intended": self.intended.to_json(),
            "realized": self.realized.to_json(),
            "fees_paid": self.fees_paid.to_json(),
            "outcome": self.outcome.value,
        }


def parse_allowlist(text: str) -> FrozenSet[Currency]:
    """Parse ``CODE issuer`` lines; blank lines and ``#`` comments are skipped."""
    out = set()
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"allow-list line {n}: expected 'CODE issuer', got {raw!r}")
        out.add(Currency(parts[0], parts[1]))
    return frozenset(out)


def load_allowlist(path) -> FrozenSet[Currency]:
    with open(path, encoding="utf-8") as fh:
        return parse_allowlist(fh.read())


def allowed(currency: Currency, allowlist: Optional[Collection[Currency]]) -> bool:
    return allowlist is None or currency.native or currency in allowlist


def plan_cycle(
    opportunity: Opportunity,
    trustlines: Collection[Currency],
    issuer_allowlist: Optional[Collection[Currency]],
    books: OrderBook,
    *,
    account: AccountId,
    fee_per_tx: Amount,
    deadline_ledger: int,
) -> Optional[Plan]:
    """One self-payment along the cycle, or None if it may not or should not be taken.

    A ledger payment cannot go from XRP to XRP, so a cycle starting at XRP is
    rotated to start at the currency after it and priced again.
    """
    cycle = opportunity.cycle
    for c in cycle.currencies:
        if not allowed(c, issuer_allowlist):
            return None
        if not c.native and c.issuer != account and c not in trustlines:
            return None
    if cycle.start_currency.native:
        cycle = cycle.rotate_to(cycle.currencies[1])
    opp = evaluate(cycle, books, fee_per_tx, tx_count=1)
    if opp is None or opp.net_profit.value <= 0:
        return None
    floors = tuple(books.head(p).quality for p in cycle.pairs)
    tx = payment(
        account,
        account,
        amount=opp.expected_receive,
        send_max=opp.notional_pay,
        flags=ARB_FLAGS,
        paths=tuple(cycle.pairs),
        min_qualities=floors,
    ).signed(account)
    return Plan(
        transactions=(tx,),
        expected_net=opp.net_profit,
        deadline_ledger=deadline_ledger,
        controlled=frozenset({account}),
        target=opp.expected_receive,
        valuation=opp.valuation,
    )


def plan_round_trip(
    a: AccountId,
    b: AccountId,
    cur: Currency,
    x: Amount,
    x_prime: Amount,
    fee_per_tx: Amount,
    *,
    loop: Sequence[Pair] = (),
    loop_rates: Optional[Sequence[Fraction]] = None,
    cur_amount: Optional[Amount] = None,
    trustlines: Optional[Iterable[Tuple[AccountId, Currency]]] = None,
) -> RoundTripPlan:
    """Two transactions turning x XRP into x' XRP across accounts A and B.

    A rests an offer buying ``x_prime`` XRP for its own ``cur``; A then pays
    ``x`` XRP along ``loop`` (an XRP-to-XRP route through the books) and on
    through that offer, so B receives ``cur``.
    """
    e = Amount(fee_per_tx.value * 2, XRP)
    base = dict(account_a=a, account_b=b, cur=cur, x=x, x_prime=x_prime, e=e)
    if cur.native or cur.issuer != a:
        return RoundTripPlan(**base, rejected_reason="cur must be issued by account A")
    if trustlines is not None and (b, cur) not in set(trustlines):
        return RoundTripPlan(**base, rejected_reason="B does not trust cur")
    if not x_prime.value > x.value + e.value:
        return RoundTripPlan(**base, rejected_reason="x' - x - e is not positive")
    c = cur_amount if cur_amount is not None else Amount(x_prime.value, cur)
    paths = tuple(loop) + ((XRP, cur),)
    floors = None
    if loop_rates is not None:
        floors = tuple(loop_rates) + (c.value / x_prime.value,)
    tx1 = offer_create(a, taker_pays=x_prime, taker_gets=c).signed(a)
    tx2 = payment(a, b, amount=c, send_max=x, flags=ARB_FLAGS, paths=paths, min_qualities=floors).signed(a)
    return RoundTripPlan(**base, transactions=(tx1, tx2))


def settle(plan: Optional[Plan], outcomes: Sequence[TxOutcome], ledger: int) -> PnLRecord:
    """Realized Native-equivalent profit of the controlled accounts, fees included.

    IOUs issued by a controlled account are internal debt and count as zero.
    """
    zero = Amount.zero()
    if plan is None or not plan.transactions or not outcomes:
        intended = plan.expected_net if plan is not None else zero
        return PnLRecord(ledger, intended, zero, zero, Outcome.REJECTED)
    if len(outcomes) != len(plan.transactions):
        raise ValueError("one outcome per planned transaction expected")
    fees = sum((o.fee_charged.value for o in outcomes), Fraction(0))
    total = Fraction(0)
    for o in outcomes:
        for acct, cur, v in o.balance_changes:
            if acct not in plan.controlled:
                continue
            if cur.native:
                total += v
            elif cur.issuer not in plan.controlled:
                total += v * plan.valuation.get(cur, Fraction(0))
    last = outcomes[-1]
    completed = all(o.ok for o in outcomes) and last.delivered is not None and last.delivered.value >= plan.target.value
    return PnLRecord(
        ledger=ledger,
        intended=plan.expected_net,
        realized=Amount(floor_drops(total), XRP),
        fees_paid=Amount(fees, XRP),
        outcome=Outcome.COMPLETED if completed else Outcome.INCOMPLETE,
    )
