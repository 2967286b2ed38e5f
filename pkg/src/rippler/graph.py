"""Best-offer exchange-rate graph with incremental maintenance.

Each non-empty book side contributes exactly one edge, built from its head
offer. Edge weights are ``-ln(rate)`` so that a cycle whose rates multiply to
more than one has negative total weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Optional, Tuple

from .amounts import Amount, Currency
from .book import BookDelta, Offer, OfferKey, OrderBook, Pair


class OutOfOrderDelta(ValueError):
    pass


def edge_weight(rate: Fraction) -> float:
    """``-ln(rate)`` in float64, safe for rationals too large for a float."""
    rate = Fraction(rate)
    if rate <= 0:
        raise ValueError("rate must be positive")
    x = rate - 1
    if abs(x) < Fraction(1, 2):
        # near 1: keep the tiny deviation accurate
        return -math.log1p(float(x))
    try:
        f = float(rate)
    except OverflowError:
        f = math.inf
    if 0.0 < f < math.inf:
        return -math.log(f)
    return math.log(rate.denominator) - math.log(rate.numerator)


@dataclass(frozen=True)
class RateEdge:
    src: Currency  # paid by the taker
    dst: Currency  # received by the taker
    rate: Fraction
    weight: float
    capacity_pay: Amount
    source_offer: OfferKey

    @classmethod
    def from_offer(cls, offer: Offer) -> "RateEdge":
        q = offer.quality
        return cls(
            src=offer.taker_pays.currency,
            dst=offer.taker_gets.currency,
            rate=q,
            weight=edge_weight(q),
            capacity_pay=offer.taker_pays,
            source_offer=offer.key,
        )

    @property
    def pair(self) -> Pair:
        return (self.src, self.dst)


class RateGraph:
    def __init__(self, version: int = 0):
        self.version = version
        self.edges: Dict[Pair, RateEdge] = {}
        self._refs: Dict[Currency, int] = {}

    @property
    def vertices(self) -> frozenset:
        return frozenset(self._refs)

    def sorted_vertices(self) -> list:
        return sorted(self._refs, key=Currency.sort_key)

    def sorted_edges(self) -> list:
        return [self.edges[p] for p in sorted(self.edges, key=lambda p: (p[0].sort_key(), p[1].sort_key()))]

    def _ref(self, c: Currency, n: int) -> None:
        left = self._refs.get(c, 0) + n
        if left:
            self._refs[c] = left
        else:
            del self._refs[c]

    def _set(self, pair: Pair, head: Optional[Offer]) -> bool:
        old = self.edges.get(pair)
        new = RateEdge.from_offer(head) if head is not None else None
        if old == new:
            return False
        if old is None:
            self._ref(pair[0], 1)
            self._ref(pair[1], 1)
        if new is None:
            del self.edges[pair]
            self._ref(pair[0], -1)
            self._ref(pair[1], -1)
        else:
            self.edges[pair] = new
        return True

    def update(self, delta: BookDelta, books: OrderBook) -> bool:
        """Swap in the edges of pairs whose best offer changed.

        Returns False (and leaves every edge untouched) when no best offer
        moved, in which case cycle detection need not be re-run.
        """
        if delta.ledger != self.version + 1:
            raise OutOfOrderDelta(f"graph at version {self.version}, got delta for ledger {delta.ledger}")
        self.version = delta.ledger
        changed = False
        for pair in delta.best_changed:
            changed |= self._set(pair, books.head(pair))
        return changed

    def snapshot(self) -> "RateGraph":
        other = RateGraph(self.version)
        other.edges = dict(self.edges)
        other._refs = dict(self._refs)
        return other

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RateGraph):
            return NotImplemented
        return self.edges == other.edges and self._refs.keys() == other._refs.keys()

    def __repr__(self) -> str:
        return f"RateGraph(version={self.version}, |V|={len(self._refs)}, |E|={len(self.edges)})"

    @classmethod
    def from_edges(cls, edges: Iterable[RateEdge], version: int = 0) -> "RateGraph":
        g = cls(version)
        for e in edges:
            if e.src == e.dst:
                raise ValueError("self-loop edge")
            if e.pair in g.edges:
                raise ValueError(f"duplicate edge {e.pair}")
            g.edges[e.pair] = e
            g._ref(e.src, 1)
            g._ref(e.dst, 1)
        return g


def build(books: OrderBook, version: int = 0) -> RateGraph:
    """Full rebuild from the current head of every book side."""
    g = RateGraph(version)
    for pair in books.pairs():
        g._set(pair, books.head(pair))
    return g


def update(graph: RateGraph, delta: BookDelta, books: OrderBook) -> bool:
    return graph.update(delta, books)


def make_edge(src: Currency, dst: Currency, rate, capacity=None, source_offer: Tuple[str, int] = ("", 0)) -> RateEdge:
    """Convenience constructor for graphs not backed by a book."""
    rate = Fraction(rate)
    cap = Amount(Fraction(capacity if capacity is not None else 10**9), src)
    return RateEdge(src, dst, rate, edge_weight(rate), cap, source_offer)
