"""Fixture format, scenario generation and the detect-and-take replay loop.

A fixture is a text file with one JSON object per line. Each record names the
ledger it belongs to and a transaction kind::

    {"ledger_index": 2, "tx_kind": "OfferCreate", "sender": "MM1", "sequence": 4,
     "taker_pays": {"currency": "USD", "issuer": "GW1", "value": "100"},
     "taker_gets": {"currency": "XRP", "value": "50"}}

Besides the four ledger transactions a ``Fund`` record credits genesis XRP to
an account. Blank lines and lines starting with ``#`` are ignored, as are
unknown fields.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .amounts import XRP, AccountId, Amount, Currency, MalformedTx, TxError, issued, make_amount, render_value
from .book import OrderBook
from .cycles import Cycle, detect, evaluate
from .graph import RateGraph
from .ledger import DEFAULT_FEE, KNOWN_FLAGS, Ledger, Transaction, TxKind
from .strategy import Outcome, PnLRecord, Plan, plan_cycle, plan_round_trip, settle

FUND = "Fund"
EVENT_KINDS = {FUND} | {k.value for k in TxKind}


class FixtureError(Exception):
    def __init__(self, reason: str, line: int = 0, offset: int = 0):
        super().__init__(f"line {line} (byte {offset}): {reason}")
        self.reason = reason
        self.line = line
        self.offset = offset


@dataclass(frozen=True)
class LedgerEvent:
    ledger_index: int
    kind: str
    sender: AccountId
    tx: Optional[Transaction] = None
    fund: Optional[Amount] = None
    line: int = 0


# -- parsing ---------------------------------------------------------------


def _amount(obj: dict, name: str) -> Amount:
    if name not in obj:
        raise ValueError(f"missing field {name!r}")
    raw = obj[name]
    if not isinstance(raw, dict):
        raise ValueError(f"field {name!r}: expected an amount object")
    value = raw.get("value")
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise ValueError(f"field {name!r}: value must be a decimal string")
    try:
        cur = Currency(raw.get("currency", ""), raw.get("issuer"))
        return make_amount(str(value), cur)
    except MalformedTx as exc:
        raise ValueError(f"field {name!r}: {exc}") from None


def _int(obj: dict, name: str, required: bool = True) -> Optional[int]:
    v = obj.get(name)
    if v is None:
        if required:
            raise ValueError(f"missing field {name!r}")
        return None
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ValueError(f"field {name!r}: expected a non-negative integer")
    return v


def _str(obj: dict, name: str) -> str:
    v = obj.get(name)
    if not isinstance(v, str) or not v:
        raise ValueError(f"field {name!r}: expected a non-empty string")
    return v


def _paths(obj: dict):
    raw = obj.get("paths")
    if raw is None:
        return None
    try:
        return tuple((Currency.parse(a), Currency.parse(b)) for a, b in raw)
    except (TypeError, ValueError, MalformedTx) as exc:
        raise ValueError(f"field 'paths': {exc}") from None


def parse_event(line: str, lineno: int = 0, offset: int = 0) -> Optional[LedgerEvent]:
    """Parse one fixture line; blank and comment lines give None."""
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"invalid JSON: {exc.msg}", lineno, offset + exc.pos) from None
    if not isinstance(obj, dict):
        raise FixtureError("record must be a JSON object", lineno, offset)
    try:
        ledger_index = _int(obj, "ledger_index")
        kind = obj.get("tx_kind")
        if kind not in EVENT_KINDS:
            raise ValueError(f"field 'tx_kind': unknown kind {kind!r}")
        sender = _str(obj, "sender")
        if kind == FUND:
            amt = _amount(obj, "amount")
            if not amt.currency.native:
                raise ValueError("field 'amount': Fund credits XRP only")
            return LedgerEvent(ledger_index, kind, sender, fund=amt, line=lineno)
        flags = obj.get("flags", [])
        if not isinstance(flags, list) or not all(isinstance(f, str) for f in flags):
            raise ValueError("field 'flags': expected a list of strings")
        unknown = set(flags) - KNOWN_FLAGS
        if unknown:
            raise ValueError(f"field 'flags': unknown flags {sorted(unknown)}")
        if kind == TxKind.OFFER_CREATE.value:
            tx = Transaction(kind, sender, taker_pays=_amount(obj, "taker_pays"),
                             taker_gets=_amount(obj, "taker_gets"), sequence=_int(obj, "sequence", False))
        elif kind == TxKind.OFFER_CANCEL.value:
            tx = Transaction(kind, sender, offer_sequence=_int(obj, "offer_sequence"))
        elif kind == TxKind.PAYMENT.value:
            tx = Transaction(
                kind, sender,
                destination=_str(obj, "destination"),
                amount=_amount(obj, "amount"),
                send_max=_amount(obj, "send_max") if "send_max" in obj else None,
                flags=frozenset(flags),
                paths=_paths(obj),
            )
        else:
            tx = Transaction(kind, sender, limit=_amount(obj, "limit_amount"))
        if flags and kind != TxKind.PAYMENT.value:
            raise ValueError("field 'flags': only valid on Payment")
    except ValueError as exc:
        raise FixtureError(str(exc), lineno, offset) from None
    return LedgerEvent(ledger_index, kind, sender, tx=tx, line=lineno)


def read_events(stream: Union[IO[str], Iterable[str]], strict: bool = True,
                errors: Optional[List[FixtureError]] = None) -> List[LedgerEvent]:
    """Parse a fixture; bad lines abort when ``strict`` and are collected otherwise.

    Ledger indexes must not decrease; that is always fatal.
    """
    events: List[LedgerEvent] = []
    offset = 0
    last = None
    for n, line in enumerate(stream, 1):
        try:
            ev = parse_event(line, n, offset)
        except FixtureError as exc:
            if strict:
                raise
            if errors is not None:
                errors.append(exc)
            ev = None
        start = offset
        offset += len(line.encode("utf-8"))
        if ev is None:
            continue
        if last is not None and ev.ledger_index < last:
            raise FixtureError(f"ledger_index {ev.ledger_index} after {last}", n, start)
        last = ev.ledger_index
        events.append(ev)
    return events


def tx_to_json(ledger_index: int, tx: Transaction) -> dict:
    out: dict = {"ledger_index": ledger_index, "tx_kind": tx.kind.value, "sender": tx.sender}
    if tx.kind is TxKind.OFFER_CREATE:
        out["taker_pays"] = tx.taker_pays.to_json()
        out["taker_gets"] = tx.taker_gets.to_json()
        if tx.sequence is not None:
            out["sequence"] = tx.sequence
    elif tx.kind is TxKind.OFFER_CANCEL:
        out["offer_sequence"] = tx.offer_sequence
    elif tx.kind is TxKind.PAYMENT:
        out["destination"] = tx.destination
        out["amount"] = tx.amount.to_json()
        if tx.send_max is not None:
            out["send_max"] = tx.send_max.to_json()
        if tx.flags:
            out["flags"] = sorted(tx.flags)
        if tx.paths:
            out["paths"] = [[str(a), str(b)] for a, b in tx.paths]
    else:
        out["limit_amount"] = tx.limit.to_json()
    return out


def fund_to_json(ledger_index: int, account: AccountId, xrp: Amount) -> dict:
    return {"ledger_index": ledger_index, "tx_kind": FUND, "sender": account, "amount": xrp.to_json()}


def dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


# -- replay --------------------------------------------------------------


@dataclass
class ReplayConfig:
    fee_per_tx: Amount = DEFAULT_FEE
    account: AccountId = "JACK"
    # second controlled account for the two-transaction XRP round trip
    partner: Optional[AccountId] = None
    round_trip_code: str = "CUR"
    allowlist: Optional[frozenset] = None
    timed: bool = False
    interval_ms: int = 3500
    record_latency: bool = False
    seed: int = 0


def _fmt(x: Fraction) -> str:
    return render_value(x)


@dataclass
class RunReport:
    ledgers: List[dict] = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    pnl: List[PnLRecord] = field(default_factory=list)
    final_state: str = ""

    def to_json(self) -> dict:
        return {"ledgers": self.ledgers, "totals": self.totals, "final_state": self.final_state}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"


def _group(events: Sequence[LedgerEvent]) -> Dict[int, List[LedgerEvent]]:
    out: Dict[int, List[LedgerEvent]] = {}
    for ev in events:
        out.setdefault(ev.ledger_index, []).append(ev)
    return out


class Replayer:
    """Runs the per-ledger loop: apply, close, update graph, detect, plan, settle."""

    def __init__(self, config: ReplayConfig, first_ledger: int = 1):
        self.config = config
        self.ledger = Ledger(config.fee_per_tx, config.interval_ms, index=first_ledger)
        self.graph = RateGraph(version=first_ledger - 1)
        self.report = RunReport()
        self.pending_plan: Optional[Plan] = None
        self._last_cycle = None
        self._last_opps: list = []

    def _plan(self, cycle: Cycle, books: OrderBook, deadline: int):
        cfg = self.config
        if cfg.partner is not None and cycle.start_currency.native:
            opp = evaluate(cycle, books, cfg.fee_per_tx, tx_count=2)
            if opp is None:
                return None, None
            cur = issued(cfg.round_trip_code, cfg.account)
            rt = plan_round_trip(
                cfg.account, cfg.partner, cur, opp.notional_pay, opp.expected_receive, cfg.fee_per_tx,
                loop=cycle.pairs, loop_rates=[books.head(p).quality for p in cycle.pairs],
                trustlines=[(cfg.partner, c) for c in self.ledger.trusted(cfg.partner)],
            )
            return opp, (rt.to_plan(deadline) if rt.accepted else None)
        opp = evaluate(cycle, books, cfg.fee_per_tx, tx_count=1)
        if opp is None:
            return None, None
        plan = plan_cycle(opp, self.ledger.trusted(cfg.account), cfg.allowlist, books,
                          account=cfg.account, fee_per_tx=cfg.fee_per_tx, deadline_ledger=deadline)
        return opp, plan

    def step(self, events: Sequence[LedgerEvent]) -> dict:
        led = self.ledger
        n = led.index
        rec: dict = {"ledger": n}
        rejected = 0
        for ev in events:
            if ev.kind == FUND:
                led.fund(ev.sender, ev.fund)
                continue
            try:
                led.submit(ev.tx)
            except TxError:
                rejected += 1
        plan = self.pending_plan
        self.pending_plan = None
        plan_slots: List[int] = []
        if plan is not None:
            try:
                for tx in plan.transactions:
                    led.submit(tx)
                    plan_slots.append(len(led.pending) - 1)
            except TxError:
                # drop whatever part of the plan was queued
                for i in reversed(plan_slots):
                    led.pending.pop(i)
                plan_slots = []
        closed = led.close()
        rec["submit_rejected"] = rejected
        rec["tx_count"] = len(closed.outcomes)
        rec["best_changed"] = len(closed.delta.best_changed)

        pnl = None
        if plan is not None:
            outs = [closed.outcomes[i] for i in plan_slots]
            pnl = settle(plan, outs, n) if outs else settle(None, (), n)
            self.report.pnl.append(pnl)
        rec["plans_submitted"] = 1 if plan_slots else 0
        rec["pnl"] = pnl.to_json() if pnl else None

        graph_changed = self.graph.update(closed.delta, led.books)
        rec["graph_changed"] = graph_changed
        if not closed.delta.best_changed:
            rec["detection_ran"] = False
            rec["detection_skipped_reason"] = "no best offer changed"
            rec["cycle"] = self._last_cycle
            rec["opportunities"] = self._last_opps
        else:
            rec["detection_ran"] = True
            rec["detection_skipped_reason"] = None
            snap = self.graph.snapshot()
            t0 = time.perf_counter()
            cycle = detect(snap)
            opp, new_plan = (None, None) if cycle is None else self._plan(cycle, led.books, n + 1)
            elapsed = time.perf_counter() - t0
            if self.config.record_latency:
                rec["detect_latency_us"] = int(elapsed * 1e6)
            self._last_cycle = None if cycle is None else {
                "currencies": [str(c) for c in cycle.currencies],
                "product": f"{cycle.product.numerator}/{cycle.product.denominator}",
            }
            self._last_opps = [opp.to_json()] if opp is not None else []
            rec["cycle"] = self._last_cycle
            rec["opportunities"] = self._last_opps
            if opp is not None and new_plan is None:
                rej = settle(None, (), n)
                self.report.pnl.append(rej)
                rec["plan_rejected"] = True
            self.pending_plan = new_plan
        self.report.ledgers.append(rec)
        return rec

    def finish(self) -> RunReport:
        pnl = self.report.pnl
        net = sum((p.realized.value for p in pnl), Fraction(0))
        fees = sum((p.fees_paid.value for p in pnl), Fraction(0))
        self.report.totals = {
            "ledgers": len(self.report.ledgers),
            "detections_run": sum(1 for r in self.report.ledgers if r["detection_ran"]),
            "detections_skipped": sum(1 for r in self.report.ledgers if not r["detection_ran"]),
            "net_pnl": _fmt(net),
            "fees": _fmt(fees),
            "completed": sum(1 for p in pnl if p.outcome is Outcome.COMPLETED),
            "incomplete": sum(1 for p in pnl if p.outcome is Outcome.INCOMPLETE),
            "rejected": sum(1 for p in pnl if p.outcome is Outcome.REJECTED),
        }
        self.report.final_state = self.ledger.digest()
        return self.report


def replay(events: Sequence[LedgerEvent], config: Optional[ReplayConfig] = None) -> RunReport:
    config = config or ReplayConfig()
    if not events:
        return Replayer(config).finish()
    groups = _group(events)
    first = min(groups)
    last = max(groups)
    if first < 1:
        raise FixtureError("ledger_index must be >= 1", events[0].line)
    r = Replayer(config, first)
    start = time.monotonic()
    for k, n in enumerate(range(first, last + 1)):
        if config.timed:
            wait = start + k * config.interval_ms / 1000 - time.monotonic()
            if wait > 0:
                time.sleep(wait)
        r.step(groups.get(n, ()))
    if r.pending_plan is not None:
        r.step(())
    return r.finish()


# -- scenario generation ---------------------------------------------------


@dataclass(frozen=True)
class Planted:
    pi: Fraction
    length: int


GATEWAYS = ("GW1", "GW2")
MAKERS = ("MM1", "MM2", "MM3", "MM4")
PLANTER = "PLANT"
BOT = "JACK"


def generate_scenario(
    seed: int,
    n_currencies: int,
    n_offers: int,
    n_ledgers: int,
    planted: Optional[Planted] = None,
    cancel_rate: float = 0.2,
) -> Tuple[List[str], dict]:
    """A seed-determined fixture and its truth record.

    Random offers are priced off hidden reference prices with a spread, so
    no cycle among them is profitable. ``planted`` embeds exactly one cycle
    through XRP with rate product ``pi`` on a ledger midway through the run.
    """
    if n_currencies < 2:
        raise ValueError("need at least two currencies")
    if n_ledgers < 3:
        raise ValueError("need at least three ledgers")
    if planted is not None and not 3 <= planted.length <= n_currencies:
        # two offers forming a profitable loop would simply cross each other
        raise ValueError("planted cycle length must be between 3 and the number of currencies")
    if planted is not None and planted.pi <= 1:
        raise ValueError("planted rate product must exceed 1")
    rng = random.Random(seed)
    ious = [issued(f"C{i:02d}", GATEWAYS[i % 2]) for i in range(1, n_currencies)]
    currencies = [XRP] + ious
    # reference price in hundredths of an XRP
    price = {XRP: 100}
    for c in ious:
        price[c] = rng.randint(20, 500)

    lines: List[str] = []
    big = Fraction(10**7)

    def emit(rec: dict) -> None:
        lines.append(dump_line(rec))

    holders = list(MAKERS) + [BOT] + ([PLANTER] if planted else [])
    for g in GATEWAYS:
        emit(fund_to_json(1, g, Amount(Fraction(10**6))))
    for h in holders:
        emit(fund_to_json(1, h, Amount(big)))
    for h in holders:
        for c in ious:
            emit(tx_to_json(1, Transaction(TxKind.TRUST_SET, h, limit=Amount(Fraction(10**12), c))))
    for h in holders:
        for c in ious:
            emit(tx_to_json(1, Transaction(TxKind.PAYMENT, c.issuer, destination=h, amount=Amount(big, c))))

    plant_ledger = None
    plant_cycle: List[Currency] = []
    banned = set()
    if planted is not None:
        plant_ledger = max(3, n_ledgers // 2)
        plant_cycle = [XRP] + rng.sample(ious, planted.length - 1)
        for a, b in zip(plant_cycle, plant_cycle[1:] + plant_cycle[:1]):
            banned.add((b, a))  # keep the reverse books empty so nothing crosses

    seq: Dict[str, int] = {m: 1 for m in holders}
    live: List[Tuple[str, int]] = []

    def random_offer(ledger: int) -> None:
        while True:
            a, b = rng.sample(currencies, 2)
            if (a, b) not in banned:
                break
        m = rng.choice(MAKERS)
        spread = Fraction(rng.randint(10, 60), 1000)
        rate = Fraction(price[a], price[b]) * (1 - spread)
        pays = Fraction(rng.randint(10, 1000))
        gets = Fraction(int(pays * rate * 10**6), 10**6)
        if gets <= 0:
            return
        s = seq[m]
        seq[m] += 1
        tx = Transaction(TxKind.OFFER_CREATE, m, taker_pays=Amount(pays, a), taker_gets=Amount(gets, b), sequence=s)
        emit(tx_to_json(ledger, tx))
        live.append((m, s))

    initial = n_offers // 2
    for _ in range(initial):
        random_offer(2)
    rest = n_offers - initial
    spots = sorted(rng.randrange(3, n_ledgers + 1) for _ in range(rest))
    if spots:
        spots[-1] = n_ledgers  # so a replay spans every generated ledger
    by_ledger: Dict[int, int] = {}
    for s in spots:
        by_ledger[s] = by_ledger.get(s, 0) + 1

    truth: dict = {"seed": seed, "planted": None}
    for n in range(3, n_ledgers + 1):
        if n == plant_ledger:
            k = Fraction(1000)
            offers = []
            for i, (a, b) in enumerate(zip(plant_cycle, plant_cycle[1:] + plant_cycle[:1])):
                m = planted.pi if i == 0 else Fraction(1)
                pays = price[b] * k / 100
                gets = price[a] * k * m / 100
                s = seq[PLANTER]
                seq[PLANTER] += 1
                emit(tx_to_json(n, Transaction(TxKind.OFFER_CREATE, PLANTER, taker_pays=Amount(pays, a),
                                               taker_gets=Amount(gets, b), sequence=s)))
                offers.append([PLANTER, s])
            truth["planted"] = {
                "ledger": n,
                "pi": f"{planted.pi.numerator}/{planted.pi.denominator}",
                "length": planted.length,
                "currencies": [str(c) for c in plant_cycle],
                "offers": offers,
            }
        for _ in range(by_ledger.get(n, 0)):
            random_offer(n)
        if live and rng.random() < cancel_rate:
            owner, s = live.pop(rng.randrange(len(live)))
            emit(tx_to_json(n, Transaction(TxKind.OFFER_CANCEL, owner, offer_sequence=s)))
    truth["ledgers"] = n_ledgers
    truth["currencies"] = [str(c) for c in currencies]
    return lines, truth
