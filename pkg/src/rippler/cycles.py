"""Bellman-Ford negative-cycle detection and exact opportunity evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from .amounts import XRP, Amount, Currency, floor_drops
from .book import OrderBook
from .graph import RateGraph

# strict-improvement tolerance for float relaxation
EPS = 1e-12


class ExtractionFailed(RuntimeError):
    """The predecessor chain does not close into a cycle."""


@dataclass
class BellmanState:
    distance: Dict[Currency, float]
    predecessor: Dict[Currency, Optional[Currency]]
    witness: Optional[Currency] = None
    rounds: int = 0


@dataclass(frozen=True)
class Cycle:
    edges: tuple

    def __post_init__(self):
        edges = tuple(self.edges)
        object.__setattr__(self, "edges", edges)
        if not edges:
            raise ValueError("empty cycle")
        for a, b in zip(edges, edges[1:] + edges[:1]):
            if a.dst != b.src:
                raise ValueError(f"edges do not chain: {a.dst} -> {b.src}")
        if len({e.src for e in edges}) != len(edges):
            raise ValueError("cycle repeats a vertex")

    @property
    def start_currency(self) -> Currency:
        return self.edges[0].src

    @property
    def currencies(self) -> List[Currency]:
        return [e.src for e in self.edges]

    @property
    def pairs(self) -> list:
        return [e.pair for e in self.edges]

    @property
    def product(self) -> Fraction:
        p = Fraction(1)
        for e in self.edges:
            p *= e.rate
        return p

    def __len__(self) -> int:
        return len(self.edges)

    def rotate_to(self, currency: Currency) -> "Cycle":
        i = self.currencies.index(currency)
        return Cycle(self.edges[i:] + self.edges[:i])

    def canonical(self) -> "Cycle":
        """Rotation starting at XRP when present, else at the smallest currency."""
        cur = self.currencies
        return self.rotate_to(XRP if XRP in cur else min(cur, key=Currency.sort_key))

    def describe(self) -> str:
        return " -> ".join(str(c) for c in self.currencies + [self.start_currency])


@dataclass(frozen=True)
class Opportunity:
    cycle: Cycle
    gross_multiplier: Fraction
    notional_pay: Amount
    expected_receive: Amount
    fee_total: Amount
    net_profit: Amount
    valuation: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "cycle": [str(c) for c in self.cycle.currencies],
            "gross_multiplier": f"{self.gross_multiplier.numerator}/{self.gross_multiplier.denominator}",
            "notional_pay": self.notional_pay.to_json(),
            "expected_receive": self.expected_receive.to_json(),
            "fee_total": self.fee_total.to_json(),
            "net_profit": self.net_profit.to_json(),
        }


def bellman_ford(graph: RateGraph, source: Optional[Currency] = None) -> BellmanState:
    """Relax every edge repeatedly, then look for an edge that still relaxes.

    With ``source=None`` a virtual source joined to every vertex by a
    zero-weight edge is used, so cycles in every component are found.
    """
    verts = graph.sorted_vertices()
    edges = graph.sorted_edges()
    n = len(verts)
    idx = {v: i for i, v in enumerate(verts)}
    el = [(idx[e.src], idx[e.dst], e.weight) for e in edges]
    pred: List[Optional[int]] = [None] * n
    if source is None:
        dist = [0.0] * n
        rounds = n  # |V| + 1 vertices including the virtual one
    else:
        if source not in idx:
            raise KeyError(f"source {source} not in graph")
        dist = [math.inf] * n
        dist[idx[source]] = 0.0
        rounds = n - 1

    done = 0
    for _ in range(rounds):
        done += 1
        changed = False
        for u, v, w in el:
            nd = dist[u] + w
            if nd < dist[v] - EPS:
                dist[v] = nd
                pred[v] = u
                changed = True
        if not changed:
            break

    witness = None
    for u, v, w in el:
        if dist[u] + w < dist[v] - EPS:
            pred[v] = u
            witness = verts[v]
            break

    return BellmanState(
        distance={verts[i]: dist[i] for i in range(n)},
        predecessor={verts[i]: (verts[p] if p is not None else None) for i, p in enumerate(pred)},
        witness=witness,
        rounds=done,
    )


def extract_cycle(state: BellmanState, graph: RateGraph) -> Cycle:
    if state.witness is None:
        raise ValueError("no witness: the graph has no negative cycle")
    pred = state.predecessor
    n = len(pred)
    v = state.witness
    for _ in range(n):
        v = pred.get(v)
        if v is None:
            raise ExtractionFailed(f"predecessor chain from {state.witness} ends before reaching a cycle")
    loop = [v]
    u = pred.get(v)
    while u != v:
        if u is None or len(loop) > n:
            raise ExtractionFailed("predecessor chain does not close")
        loop.append(u)
        u = pred.get(u)
    loop.reverse()
    edges = []
    for a, b in zip(loop, loop[1:] + loop[:1]):
        e = graph.edges.get((a, b))
        if e is None:
            raise ExtractionFailed(f"no edge {a} -> {b}")
        edges.append(e)
    return Cycle(tuple(edges))


def detect(graph: RateGraph) -> Optional[Cycle]:
    """One profitable cycle (exactly confirmed), canonically rotated, or None."""
    state = bellman_ford(graph)
    if state.witness is None:
        return None
    cycle = extract_cycle(state, graph)
    if cycle.product <= 1:
        return None
    return cycle.canonical()


def cycle_valuation(cycle: Cycle, books: Optional[OrderBook] = None) -> Optional[Dict[Currency, Fraction]]:
    """XRP value of one unit of each cycle currency.

    Uses the cycle's own rates onward to XRP when XRP is on the cycle;
    otherwise the start currency is priced from its direct XRP book.
    """
    cur = cycle.currencies
    rates = [e.rate for e in cycle.edges]
    k = len(cur)
    out: Dict[Currency, Fraction] = {}
    if XRP in cur:
        x = cur.index(XRP)
        for i, c in enumerate(cur):
            v = Fraction(1)
            j = i
            while j != x:
                v *= rates[j]
                j = (j + 1) % k
            out[c] = v
        return out
    head = books.head((cur[0], XRP)) if books is not None else None
    if head is None:
        return None
    v = head.quality
    for i, c in enumerate(cur):
        out[c] = v
        v /= rates[i]
    return out


def propagate(cycle: Cycle, start: Fraction, rates: Sequence[Fraction]) -> List[Fraction]:
    """Amounts entering each edge, then the final receipt (XRP floored to drops)."""
    amounts = [start]
    a = start
    for e, q in zip(cycle.edges, rates):
        a = a * q
        if e.dst.native:
            a = floor_drops(a)
        amounts.append(a)
    return amounts


def evaluate(cycle: Cycle, books: OrderBook, fee_per_tx: Amount, tx_count: int = 1) -> Optional[Opportunity]:
    """Size and price ``cycle`` against the current head offers.

    Returns None when a head offer is gone, the exact rate product is not
    above one, or the net profit after ``tx_count`` fees is not positive.
    """
    if not fee_per_tx.currency.native:
        raise ValueError("fees are paid in XRP")
    rates = []
    caps = []
    for e in cycle.edges:
        head = books.head(e.pair)
        if head is None:
            return None
        rates.append(head.quality)
        caps.append(head.taker_pays.value)
    gross = Fraction(1)
    for q in rates:
        gross *= q
    if gross <= 1:
        return None

    bound = None
    through = Fraction(1)
    for q, cap in zip(rates, caps):
        b = cap / through
        bound = b if bound is None or b < bound else bound
        through *= q
    start_cur = cycle.start_currency
    if start_cur.native:
        bound = floor_drops(bound)
    if bound <= 0:
        return None

    amounts = propagate(cycle, bound, rates)
    receive = amounts[-1]
    valuation = cycle_valuation(cycle, books)
    if valuation is None:
        return None
    gain_xrp = floor_drops((receive - bound) * valuation[start_cur])
    fees = fee_per_tx.value * tx_count
    net = gain_xrp - fees
    if net <= 0:
        return None
    return Opportunity(
        cycle=cycle,
        gross_multiplier=gross,
        notional_pay=Amount(bound, start_cur),
        expected_receive=Amount(receive, start_cur),
        fee_total=Amount(fees, XRP),
        net_profit=Amount(net, XRP),
        valuation=valuation,
    )
