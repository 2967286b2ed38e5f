"""A deterministic, single-writer ledger with an on-ledger exchange.

Transactions are queued with :meth:`Ledger.submit` and applied in submission
order by :meth:`Ledger.close`. Every admitted transaction burns the fee, even
when it then fails.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

from .amounts import (
    XRP,
    AccountId,
    Amount,
    Currency,
    InsufficientFee,
    MalformedTx,
    TxError,
    TxResult,
    ceil_drops,
)
from .book import BookDelta, Fill, Offer, OrderBook, Pair

TF_PARTIAL_PAYMENT = "tfPartialPayment"
TF_NO_DIRECT_RIPPLE = "tfNoDirectRipple"
KNOWN_FLAGS = frozenset({TF_PARTIAL_PAYMENT, TF_NO_DIRECT_RIPPLE})

DEFAULT_FEE = Amount.from_drops(10)
DEFAULT_INTERVAL_MS = 3500


class TxKind(str, Enum):
    OFFER_CREATE = "OfferCreate"
    OFFER_CANCEL = "OfferCancel"
    PAYMENT = "Payment"
    TRUST_SET = "TrustSet"


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    sender: AccountId
    # OfferCreate: the sender receives taker_pays and gives taker_gets
    taker_pays: Optional[Amount] = None
    taker_gets: Optional[Amount] = None
    sequence: Optional[int] = None
    # OfferCancel
    offer_sequence: Optional[int] = None
    # Payment
    destination: Optional[AccountId] = None
    amount: Optional[Amount] = None
    send_max: Optional[Amount] = None
    flags: FrozenSet[str] = frozenset()
    paths: Optional[Tuple[Pair, ...]] = None
    # per-hop minimum quality, aligned with paths
    min_qualities: Optional[Tuple[Optional[Fraction], ...]] = None
    # TrustSet: the currency to trust and the cap on the held balance
    limit: Optional[Amount] = None
    signature: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TxKind(self.kind))
        object.__setattr__(self, "flags", frozenset(self.flags))
        if self.paths is not None:
            object.__setattr__(self, "paths", tuple(tuple(p) for p in self.paths))
        if self.min_qualities is not None:
            object.__setattr__(self, "min_qualities", tuple(self.min_qualities))

    def signed(self, signer: str) -> "Transaction":
        # stand-in for real signing: a stamp naming who signed
        return replace(self, signature=f"stamp:{signer}")


def offer_create(sender, taker_pays: Amount, taker_gets: Amount, sequence: Optional[int] = None) -> Transaction:
    return Transaction(TxKind.OFFER_CREATE, sender, taker_pays=taker_pays, taker_gets=taker_gets, sequence=sequence)


def offer_cancel(sender, offer_sequence: int) -> Transaction:
    return Transaction(TxKind.OFFER_CANCEL, sender, offer_sequence=offer_sequence)


def payment(sender, destination, amount: Amount, send_max: Optional[Amount] = None, flags=(), paths=None,
            min_qualities=None) -> Transaction:
    return Transaction(TxKind.PAYMENT, sender, destination=destination, amount=amount, send_max=send_max,
                       flags=frozenset(flags), paths=paths, min_qualities=min_qualities)


def trust_set(sender, limit: Amount) -> Transaction:
    return Transaction(TxKind.TRUST_SET, sender, limit=limit)


@dataclass(frozen=True)
class TxOutcome:
    code: TxResult
    fee_charged: Amount
    delivered: Optional[Amount] = None
    spent: Optional[Amount] = None
    offers_consumed: Tuple[Fill, ...] = ()
    # (account, currency, signed change), fee included
    balance_changes: Tuple[Tuple[AccountId, Currency, Fraction], ...] = ()
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.code is TxResult.SUCCESS


@dataclass
class AccountState:
    xrp: Fraction
    next_sequence: int = 1


@dataclass
class TrustLine:
    balance: Fraction = Fraction(0)
    limit: Optional[Fraction] = None


@dataclass(frozen=True)
class LedgerClose:
    delta: BookDelta
    outcomes: Tuple[TxOutcome, ...]
    transactions: Tuple[Transaction, ...] = ()


class _Batch:
    """Pending balance changes of one transaction."""

    def __init__(self):
        self.d: Dict[Tuple[AccountId, Currency], Fraction] = defaultdict(Fraction)

    def move(self, src: AccountId, dst: AccountId, amt: Amount) -> None:
        if amt.value:
            self.d[(src, amt.currency)] -= amt.value
            self.d[(dst, amt.currency)] += amt.value

    def copy(self) -> "_Batch":
        b = _Batch()
        b.d.update(self.d)
        return b


class Ledger:
    def __init__(self, fee_per_tx: Amount = DEFAULT_FEE, interval_ms: int = DEFAULT_INTERVAL_MS, index: int = 1):
        if not fee_per_tx.currency.native:
            raise ValueError("fee must be XRP")
        self.fee_per_tx = fee_per_tx
        self.interval_ms = interval_ms
        self.index = index
        self.accounts: Dict[AccountId, AccountState] = {}
        self.trustlines: Dict[Tuple[AccountId, Currency], TrustLine] = {}
        self.books = OrderBook()
        self.issuance: Dict[Currency, Fraction] = defaultdict(Fraction)
        self.burned = Fraction(0)
        self.minted = Fraction(0)
        self.pending: List[Transaction] = []

    # -- state queries ---------------------------------------------------------

    def fund(self, account: AccountId, xrp: Amount) -> None:
        """Genesis allocation of XRP (creates the account if needed)."""
        if not account:
            raise MalformedTx("account id must be non-empty")
        if not xrp.currency.native or xrp.value < 0:
            raise MalformedTx("funding must be a non-negative XRP amount")
        state = self.accounts.setdefault(account, AccountState(Fraction(0)))
        state.xrp += xrp.value
        self.minted += xrp.value

    def balance(self, account: AccountId, currency: Currency) -> Fraction:
        if currency.native:
            st = self.accounts.get(account)
            return st.xrp if st else Fraction(0)
        if account == currency.issuer:
            return -self.issuance.get(currency, Fraction(0))
        line = self.trustlines.get((account, currency))
        return line.balance if line else Fraction(0)

    def trusted(self, holder: AccountId) -> FrozenSet[Currency]:
        return frozenset(c for (h, c) in self.trustlines if h == holder)

    def _avail(self, account: AccountId, currency: Currency, batch: Optional[_Batch] = None) -> Optional[Fraction]:
        """Spendable balance, or None when unlimited (issuer of ``currency``)."""
        if not currency.native and account == currency.issuer:
            return None
        bal = self.balance(account, currency)
        if batch is not None:
            bal += batch.d.get((account, currency), Fraction(0))
        return max(bal, Fraction(0))

    # -- submission and close --------------------------------------------------

    def submit(self, tx: Transaction) -> Transaction:
        """Queue ``tx`` for the next close; returns the queued transaction."""
        st = self.accounts.get(tx.sender)
        if st is None:
            raise MalformedTx(f"unknown sender {tx.sender!r}")
        queued = sum(1 for t in self.pending if t.sender == tx.sender)
        if st.xrp - queued * self.fee_per_tx.value < self.fee_per_tx.value:
            raise InsufficientFee(f"{tx.sender} cannot pay the fee")
        if tx.kind is TxKind.OFFER_CREATE:
            if tx.sequence is None:
                tx = replace(tx, sequence=st.next_sequence)
            st.next_sequence = max(st.next_sequence, tx.sequence + 1)
        self.pending.append(tx)
        return tx

    def close(self) -> LedgerClose:
        txs = tuple(self.pending)
        self.pending = []
        outcomes = tuple(self.apply(tx) for tx in txs)
        delta = self.books.close_delta(self.index)
        self.index += 1
        return LedgerClose(delta, outcomes, txs)

    def apply(self, tx: Transaction) -> TxOutcome:
        zero = Amount.zero()
        st = self.accounts.get(tx.sender)
        if st is None:
            return TxOutcome(TxResult.MALFORMED, zero, message="unknown sender")
        fee = self.fee_per_tx.value
        if st.xrp < fee:
            return TxOutcome(TxResult.INSUFFICIENT_FEE, zero, message="cannot pay fee")
        st.xrp -= fee
        self.burned += fee
        fee_change = ((tx.sender, XRP, -fee),)
        saved = self.books.save(self._pairs_of(tx))
        try:
            if tx.flags and tx.kind is not TxKind.PAYMENT:
                raise MalformedTx("flags are only valid on Payment")
            if (tx.paths or tx.min_qualities) and tx.kind is not TxKind.PAYMENT:
                raise MalformedTx("paths are only valid on Payment")
            if not tx.flags <= KNOWN_FLAGS:
                raise MalformedTx(f"unknown flags {sorted(tx.flags - KNOWN_FLAGS)}")
            handler = {
                TxKind.PAYMENT: self.execute_payment,
                TxKind.OFFER_CREATE: self.execute_offer_create,
                TxKind.OFFER_CANCEL: self.execute_offer_cancel,
                TxKind.TRUST_SET: self.set_trustline,
            }[tx.kind]
            result, batch, extra = handler(tx)
        except TxError as exc:
            self.books.restore(saved)
            return TxOutcome(exc.code, self.fee_per_tx, balance_changes=fee_change, message=str(exc))
        self._commit(batch)
        changes = self._merge_changes(fee_change, batch)
        return replace(result, fee_charged=self.fee_per_tx, balance_changes=changes, **extra)

    @staticmethod
    def _pairs_of(tx: Transaction) -> List[Pair]:
        if tx.kind is TxKind.PAYMENT:
            if tx.paths:
                return list(tx.paths)
            if tx.amount is not None:
                src = tx.send_max.currency if tx.send_max is not None else tx.amount.currency
                return [(src, tx.amount.currency)]
        if tx.kind is TxKind.OFFER_CREATE and tx.taker_pays and tx.taker_gets:
            a, b = tx.taker_pays.currency, tx.taker_gets.currency
            return [(a, b), (b, a)]
        return []

    @staticmethod
    def _merge_changes(fee_change, batch: Optional[_Batch]):
        merged: Dict[Tuple[AccountId, Currency], Fraction] = defaultdict(Fraction)
        for acct, cur, v in fee_change:
            merged[(acct, cur)] += v
        if batch is not None:
            for k, v in batch.d.items():
                merged[k] += v
        items = [(a, c, v) for (a, c), v in merged.items() if v]
        items.sort(key=lambda t: (t[0], t[1].sort_key()))
        return tuple(items)

    def _commit(self, batch: Optional[_Batch]) -> None:
        if batch is None:
            return
        for (acct, cur), v in sorted(batch.d.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key())):
            if not v:
                continue
            if cur.native:
                st = self.accounts.setdefault(acct, AccountState(Fraction(0)))
                st.xrp += v
                assert st.xrp >= 0, f"negative XRP balance for {acct}"
            elif acct == cur.issuer:
                self.issuance[cur] -= v
            else:
                line = self.trustlines.get((acct, cur))
                if line is None:
                    # offers implicitly open the line for what they receive
                    line = self.trustlines[(acct, cur)] = TrustLine()
                line.balance += v
                assert line.balance >= 0, f"negative {cur} balance for {acct}"

    # -- transaction handlers ----------------------------------------------

    def _funding(self, batch: _Batch):
        def funded(offer: Offer) -> Optional[Fraction]:
            return self._avail(offer.owner, offer.taker_gets.currency, batch)
        return funded

    @staticmethod
    def _on_fill(batch: _Batch, taker: Optional[AccountId] = None):
        """Settle each fill with its owner; a None taker is the payment flow itself."""
        def record(fill: Fill) -> None:
            if taker is None:
                batch.d[(fill.owner, fill.paid.currency)] += fill.paid.value
                batch.d[(fill.owner, fill.got.currency)] -= fill.got.value
            else:
                batch.move(taker, fill.owner, fill.paid)
                batch.move(fill.owner, taker, fill.got)
        return record

    def set_trustline(self, tx: Transaction):
        if tx.limit is None:
            raise MalformedTx("TrustSet needs a limit")
        cur = tx.limit.currency
        if cur.native:
            raise MalformedTx("XRP needs no trustline")
        if cur.issuer == tx.sender:
            raise MalformedTx("cannot trust yourself")
        if tx.limit.value < 0:
            raise MalformedTx("negative limit")
        line = self.trustlines.get((tx.sender, cur))
        if line is None:
            self.trustlines[(tx.sender, cur)] = TrustLine(limit=tx.limit.value)
        else:
            line.limit = tx.limit.value
        return TxOutcome(TxResult.SUCCESS, self.fee_per_tx), None, {}

    def execute_offer_cancel(self, tx: Transaction):
        if tx.offer_sequence is None:
            raise MalformedTx("OfferCancel needs offer_sequence")
        # cancelling a missing offer succeeds with no effect
        self.books.apply_offer_cancel(tx.sender, tx.offer_sequence)
        return TxOutcome(TxResult.SUCCESS, self.fee_per_tx), None, {}

    def execute_offer_create(self, tx: Transaction):
        pays, gets = tx.taker_pays, tx.taker_gets
        if pays is None or gets is None or tx.sequence is None:
            raise MalformedTx("OfferCreate needs taker_pays, taker_gets and sequence")
        if pays.value <= 0 or gets.value <= 0 or pays.currency == gets.currency:
            raise MalformedTx("offer amounts must be positive and in different currencies")
        if (tx.sender, tx.sequence) in self.books:
            raise MalformedTx(f"offer sequence {tx.sequence} already in use")
        funds = self._avail(tx.sender, gets.currency)
        if funds is not None and funds <= 0:
            raise TxError(f"{tx.sender} holds no {gets.currency}", TxResult.UNFUNDED)

        batch = _Batch()
        rate = pays.value / gets.value  # received per unit given, at least
        budget = gets.value if funds is None else min(gets.value, funds)
        paid, got, fills = self.books.consume(
            (gets.currency, pays.currency),
            Amount(budget, gets.currency),
            min_quality=rate,
            funded=self._funding(batch),
            on_fill=self._on_fill(batch, tx.sender),
        )
        rest_gets = gets.value - paid.value
        rest_pays = rest_gets * rate
        if pays.currency.native:
            rest_pays = ceil_drops(rest_pays)
        if rest_gets > 0 and rest_pays > 0 and got.value < pays.value:
            self.books.apply_offer_create(
                Offer(tx.sender, tx.sequence, Amount(rest_pays, pays.currency),
                      Amount(rest_gets, gets.currency), placed_at=self.index)
            )
        return TxOutcome(TxResult.SUCCESS, self.fee_per_tx, spent=paid, delivered=got), batch, {
            "offers_consumed": tuple(fills)}

    def execute_payment(self, tx: Transaction):
        amount = tx.amount
        if amount is None or tx.destination is None:
            raise MalformedTx("Payment needs destination and amount")
        if amount.value <= 0:
            raise MalformedTx("payment amount must be positive")
        if tx.destination not in self.accounts:
            raise MalformedTx(f"unknown destination {tx.destination!r}")
        dst_cur = amount.currency
        send_max = tx.send_max if tx.send_max is not None else amount
        src_cur = send_max.currency
        partial = TF_PARTIAL_PAYMENT in tx.flags
        cross = src_cur != dst_cur or bool(tx.paths)

        if cross and src_cur.native and dst_cur.native:
            raise MalformedTx("cross-currency payment from XRP to XRP is not allowed")

        target = amount.value
        if not dst_cur.native and tx.destination != dst_cur.issuer:
            line = self.trustlines.get((tx.destination, dst_cur))
            if line is None:
                raise TxError(f"{tx.destination} has no trustline for {dst_cur}", TxResult.PATH_DRY)
            if line.limit is not None:
                target = min(target, max(line.limit - line.balance, Fraction(0)))

        funds = self._avail(tx.sender, src_cur)
        budget = send_max.value if funds is None else min(send_max.value, funds)
        if budget <= 0:
            raise TxError(f"{tx.sender} holds no {src_cur}", TxResult.UNFUNDED)

        if not cross:
            send = min(target, budget)
            if send < amount.value and not partial:
                raise TxError("cannot deliver the full amount", TxResult.PARTIALITY_NOT_ALLOWED)
            batch = _Batch()
            sent = Amount(send, dst_cur)
            batch.move(tx.sender, tx.destination, sent)
            return TxOutcome(TxResult.SUCCESS, self.fee_per_tx, delivered=sent, spent=sent), batch, {}

        paths = tx.paths
        if not paths:
            if TF_NO_DIRECT_RIPPLE in tx.flags:
                raise MalformedTx("tfNoDirectRipple requires an explicit path")
            paths = ((src_cur, dst_cur),)
        self._check_path(paths, src_cur, dst_cur)
        floors = tx.min_qualities or (None,) * len(paths)
        if len(floors) != len(paths):
            raise MalformedTx("min_qualities must align with paths")

        # dry run for the best the path can deliver
        scratch = _Batch()
        a = budget
        for pair, floor in zip(paths, floors):
            _, got, _ = self.books.consume(pair, Amount(a, pair[0]), min_quality=floor,
                                           funded=self._funding(scratch), dry_run=True)
            a = got.value
        goal = min(target, a)
        if goal < amount.value and not partial:
            raise TxError("path cannot deliver the full amount", TxResult.PARTIALITY_NOT_ALLOWED)

        batch = _Batch()
        fills_all: List[Fill] = []
        if goal <= 0:
            # best effort delivered nothing; only the fee is lost
            nothing = Amount.zero(dst_cur)
            return TxOutcome(TxResult.SUCCESS, self.fee_per_tx, delivered=nothing,
                             spent=Amount.zero(src_cur)), batch, {}

        want = goal
        for pair, floor in reversed(list(zip(paths, floors))):
            want, _ = self.books.quote_input(pair, want, min_quality=floor, funded=self._funding(scratch))
        source = min(want, budget)

        batch.d[(tx.sender, src_cur)] -= source
        a = source
        spent = source
        for hop, (pair, floor) in enumerate(zip(paths, floors)):
            paid, got, fills = self.books.consume(
                pair, Amount(a, pair[0]), min_quality=floor,
                funded=self._funding(batch), on_fill=self._on_fill(batch),
            )
            fills_all.extend(fills)
            leftover = a - paid.value
            if leftover:
                # dust the hop could not use goes back to the sender
                batch.d[(tx.sender, pair[0])] += leftover
                if hop == 0:
                    spent -= leftover
            a = got.value
        batch.d[(tx.destination, dst_cur)] += a
        out = TxOutcome(TxResult.SUCCESS, self.fee_per_tx, delivered=Amount(a, dst_cur),
                        spent=Amount(spent, src_cur))
        return out, batch, {"offers_consumed": tuple(fills_all)}

    @staticmethod
    def _check_path(paths, src: Currency, dst: Currency) -> None:
        if paths[0][0] != src or paths[-1][1] != dst:
            raise MalformedTx("path does not run from the source to the destination currency")
        for (a, b), (c, _) in zip(paths, paths[1:]):
            if b != c:
                raise MalformedTx("path hops do not chain")
        if len(set(paths)) != len(paths):
            raise MalformedTx("path repeats a book")
        if any(a == b for a, b in paths):
            raise MalformedTx("path hop with identical currencies")

    # -- invariants and snapshots --------------------------------------------

    def check_conservation(self) -> None:
        """Raise AssertionError unless XRP and every IOU are conserved exactly."""
        total = sum((s.xrp for s in self.accounts.values()), Fraction(0))
        assert total + self.burned == self.minted, f"XRP: {total} + {self.burned} != {self.minted}"
        held: Dict[Currency, Fraction] = defaultdict(Fraction)
        for (holder, cur), line in self.trustlines.items():
            assert line.balance >= 0, f"negative balance {holder} {cur}"
            held[cur] += line.balance
        for cur in set(held) | set(self.issuance):
            assert held[cur] == self.issuance.get(cur, 0), f"{cur}: held {held[cur]} != issued {self.issuance.get(cur)}"

    def to_json(self) -> dict:
        def f(x):
            return f"{x.numerator}/{x.denominator}"
        return {
            "index": self.index,
            "burned": f(self.burned),
            "minted": f(self.minted),
            "accounts": {a: {"xrp": f(s.xrp), "next_sequence": s.next_sequence}
                         for a, s in sorted(self.accounts.items())},
            "trustlines": [[h, str(c), f(l.balance), None if l.limit is None else f(l.limit)]
                           for (h, c), l in sorted(self.trustlines.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key()))],
            "offers": [[o.owner, o.sequence, str(o.taker_pays), str(o.taker_gets), o.placed_at]
                       for o in self.books.offers()],
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()
