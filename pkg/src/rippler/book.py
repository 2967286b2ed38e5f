"""Per-pair sorted offer books with best-offer change tracking.

A book side is keyed by the directed pair ``(pay, get)`` seen from the taker:
the taker delivers ``pay`` to the offer owner and receives ``get``. Offers are
ranked by quality (``get`` received per unit of ``pay``), best first, with
FIFO tie-breaking.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .amounts import AccountId, Amount, Currency, MalformedTx, floor_drops

Pair = Tuple[Currency, Currency]
OfferKey = Tuple[AccountId, int]

# Given an offer, how much of its taker_gets currency the owner can deliver
# (None means unlimited, e.g. the owner issues that currency).
FundingFn = Callable[["Offer"], Optional[Fraction]]


@dataclass(frozen=True)
class Offer:
    owner: AccountId
    sequence: int
    taker_pays: Amount
    taker_gets: Amount
    placed_at: int = 0

    def __post_init__(self):
        if not self.owner:
            raise MalformedTx("offer owner must be non-empty")
        if self.taker_pays.value <= 0 or self.taker_gets.value <= 0:
            raise MalformedTx("offer amounts must be positive")
        if self.taker_pays.currency == self.taker_gets.currency:
            raise MalformedTx("offer must exchange two different currencies")

    @property
    def quality(self) -> Fraction:
        return self.taker_gets.value / self.taker_pays.value

    @property
    def pair(self) -> Pair:
        return (self.taker_pays.currency, self.taker_gets.currency)

    @property
    def key(self) -> OfferKey:
        return (self.owner, self.sequence)

    def sort_key(self) -> tuple:
        return (-self.quality, self.placed_at, self.sequence, self.owner)

    def shrink(self, pay: Fraction, get: Fraction) -> "Offer":
        """The remainder after a taker consumed ``pay``/``get`` of it."""
        return replace(
            self,
            taker_pays=Amount(self.taker_pays.value - pay, self.taker_pays.currency),
            taker_gets=Amount(self.taker_gets.value - get, self.taker_gets.currency),
        )


@dataclass(frozen=True)
class Fill:
    offer: OfferKey
    owner: AccountId
    paid: Amount  # delivered by the taker to the owner
    got: Amount  # delivered by the owner to the taker


@dataclass(frozen=True)
class BookDelta:
    ledger: int
    touched_pairs: frozenset
    best_changed: frozenset


class BookSide:
    """Offers for one directed pair, kept sorted best-first."""

    def __init__(self, pair: Pair):
        self.pair = pair
        self.offers: List[Offer] = []
        self._keys: List[tuple] = []

    def __len__(self) -> int:
        return len(self.offers)

    @property
    def head(self) -> Optional[Offer]:
        return self.offers[0] if self.offers else None

    def insert(self, offer: Offer) -> None:
        k = offer.sort_key()
        i = bisect.bisect_right(self._keys, k)
        self._keys.insert(i, k)
        self.offers.insert(i, offer)

    def index_of(self, key: OfferKey) -> int:
        for i, o in enumerate(self.offers):
            if o.key == key:
                return i
        raise KeyError(key)

    def pop(self, i: int) -> Offer:
        del self._keys[i]
        return self.offers.pop(i)

    def replace_at(self, i: int, offer: Offer) -> None:
        # quality is preserved by partial fills, so the position is unchanged
        self.offers[i] = offer

    def copy(self) -> "BookSide":
        other = BookSide(self.pair)
        other.offers = list(self.offers)
        other._keys = list(self._keys)
        return other


def _fill_one(offer: Offer, budget: Fraction, avail_get: Fraction) -> Tuple[Fraction, Fraction]:
    """How much of ``offer`` a taker with ``budget`` of the pay currency takes.

    Returns ``(pay, get)`` with ``get == quality * pay`` exactly. When the
    received currency is XRP a partial fill is floored to whole drops and the
    paid amount backed out from it, so the offer keeps its quality.
    """
    q = offer.quality
    get = min(budget * q, avail_get)
    if get == offer.taker_gets.value:
        return offer.taker_pays.value, get
    if offer.taker_gets.currency.native:
        get = floor_drops(get)
    pay = get / q
    if offer.taker_pays.currency.native and (pay * 10**6).denominator != 1:
        # both sides cannot be made exact; settle on whole drops paid
        pay = floor_drops(pay)
        get = pay * q
        if offer.taker_gets.currency.native:
            get = floor_drops(get)
    return pay, get


class OrderBook:
    """All book sides plus the per-ledger change accumulator."""

    def __init__(self):
        self.sides: Dict[Pair, BookSide] = {}
        self._where: Dict[OfferKey, Pair] = {}
        self._touched: set = set()
        self._best_changed: set = set()

    # -- reads ---------------------------------------------------------

    def __contains__(self, key: OfferKey) -> bool:
        return key in self._where

    def pairs(self) -> List[Pair]:
        return sorted(self.sides, key=lambda p: (p[0].sort_key(), p[1].sort_key()))

    def head(self, pair: Pair) -> Optional[Offer]:
        side = self.sides.get(pair)
        return side.head if side else None

    def snapshot(self, pair: Pair, depth: int) -> List[Offer]:
        if depth < 1:
            raise ValueError("depth must be >= 1")
        side = self.sides.get(pair)
        return list(side.offers[:depth]) if side else []

    def get(self, key: OfferKey) -> Optional[Offer]:
        pair = self._where.get(key)
        if pair is None:
            return None
        side = self.sides[pair]
        return side.offers[side.index_of(key)]

    def offers(self) -> Iterable[Offer]:
        for pair in self.pairs():
            yield from self.sides[pair].offers

    # -- mutations -------------------------------------------------------

    def _note(self, pair: Pair, before: Optional[Offer]) -> bool:
        self._touched.add(pair)
        side = self.sides.get(pair)
        after = side.head if side else None
        if side is not None and not side.offers:
            del self.sides[pair]
        changed = before != after
        if changed:
            self._best_changed.add(pair)
        return changed

    def apply_offer_create(self, offer: Offer) -> bool:
        """Insert a resting offer; True iff it became the head of its side."""
        if offer.key in self._where:
            raise MalformedTx(f"duplicate offer {offer.key}")
        pair = offer.pair
        side = self.sides.get(pair)
        if side is None:
            side = self.sides[pair] = BookSide(pair)
        before = side.head
        side.insert(offer)
        self._where[offer.key] = pair
        return self._note(pair, before)

    def apply_offer_cancel(self, owner: AccountId, sequence: int) -> bool:
        """Remove an offer if present; True iff the head was removed."""
        key = (owner, sequence)
        pair = self._where.pop(key, None)
        if pair is None:
            return False
        side = self.sides[pair]
        before = side.head
        side.pop(side.index_of(key))
        return self._note(pair, before)

    def consume(
        self,
        pair: Pair,
        budget: Amount,
        *,
        min_quality: Optional[Fraction] = None,
        funded: Optional[FundingFn] = None,
        on_fill: Optional[Callable[[Fill], None]] = None,
        dry_run: bool = False,
    ) -> Tuple[Amount, Amount, List[Fill]]:
        """Take liquidity best-first with up to ``budget`` of ``pair[0]``.

        Offers below ``min_quality`` are not touched. Offers whose owner
        cannot fund them are pruned (unless ``dry_run``).
        """
        pay_cur, get_cur = pair
        if budget.currency != pay_cur:
            raise ValueError(f"budget in {budget.currency}, book pays {pay_cur}")
        side = self.sides.get(pair)
        fills: List[Fill] = []
        total_pay = Fraction(0)
        total_get = Fraction(0)
        if side is None:
            return Amount.zero(pay_cur), Amount.zero(get_cur), fills
        before = side.head
        remaining = budget.value
        i = 0
        offers = side.offers
        while remaining > 0 and i < len(offers):
            offer = offers[i]
            if min_quality is not None and offer.quality < min_quality:
                break
            avail = offer.taker_gets.value
            if funded is not None:
                limit = funded(offer)
                if limit is not None and limit < avail:
                    avail = max(limit, Fraction(0))
            if avail <= 0:
                if dry_run:
                    i += 1
                else:
                    side.pop(i)
                    del self._where[offer.key]
                continue
            pay, get = _fill_one(offer, remaining, avail)
            if pay <= 0 or get <= 0:
                break
            fill = Fill(offer.key, offer.owner, Amount(pay, pay_cur), Amount(get, get_cur))
            fills.append(fill)
            if on_fill is not None and not dry_run:
                on_fill(fill)
            total_pay += pay
            total_get += get
            remaining -= pay
            full = pay == offer.taker_pays.value
            # owner ran out of funds: the unfunded remainder is dropped
            starved = not full and get == avail
            if dry_run:
                i += 1
                if not (full or starved):
                    break
                continue
            if full or starved:
                side.pop(i)
                del self._where[offer.key]
            else:
                side.replace_at(i, offer.shrink(pay, get))
                break
        if not dry_run and (fills or before != side.head):
            self._note(pair, before)
        return Amount(total_pay, pay_cur), Amount(total_get, get_cur), fills

    def quote_input(
        self,
        pair: Pair,
        want: Fraction,
        *,
        min_quality: Optional[Fraction] = None,
        funded: Optional[FundingFn] = None,
    ) -> Tuple[Fraction, Fraction]:
        """Pay needed to receive ``want`` of ``pair[1]``: ``(pay, got)``.

        ``got`` falls short of ``want`` when the acceptable liquidity runs
        out. Paying XRP is rounded up to whole drops.
        """
        side = self.sides.get(pair)
        pay = Fraction(0)
        got = Fraction(0)
        if side is None:
            return pay, got
        for offer in side.offers:
            if got >= want:
                break
            if min_quality is not None and offer.quality < min_quality:
                break
            avail = offer.taker_gets.value
            if funded is not None:
                limit = funded(offer)
                if limit is not None and limit < avail:
                    avail = max(limit, Fraction(0))
            take = min(want - got, avail)
            if take <= 0:
                continue
            got += take
            pay += take / offer.quality
        if pair[0].native:
            pay = -floor_drops(-pay)
        return pay, got

    def close_delta(self, ledger: int) -> BookDelta:
        delta = BookDelta(ledger, frozenset(self._touched), frozenset(self._best_changed))
        self._touched = set()
        self._best_changed = set()
        return delta

    # -- rollback support --------------------------------------------------

    def save(self, pairs: Iterable[Pair]) -> tuple:
        saved = {p: (self.sides[p].copy() if p in self.sides else None) for p in pairs}
        return saved, dict(self._where), set(self._touched), set(self._best_changed)

    def restore(self, state: tuple) -> None:
        saved, where, touched, best = state
        for pair, side in saved.items():
            if side is None:
                self.sides.pop(pair, None)
            else:
                self.sides[pair] = side
        self._where = where
        self._touched = touched
        self._best_changed = best
