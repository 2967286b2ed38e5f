"""Command-line entry point: ``rippler replay | gen | roundtrip``."""

from __future__ import annotations

import argparse
import json
import sys
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import List, Optional

from .amounts import XRP, Amount, MalformedTx, issued, render_value
from .feed import FixtureError, Planted, ReplayConfig, generate_scenario, read_events, replay
from .ledger import Ledger, offer_create, payment, trust_set
from .strategy import plan_round_trip

EXIT_OK, EXIT_USAGE, EXIT_FIXTURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(Decimal(text))
    except (InvalidOperation, ValueError):
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rippler", description="Arbitrage detection on a simulated XRPL-style exchange.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("replay", help="replay a fixture through the detect-and-take loop")
    r.add_argument("--fixtures", required=True, help="fixture path, or - for stdin")
    r.add_argument("--fee-drops", type=int, default=10)
    r.add_argument("--allowlist", help="file of 'CODE issuer' lines")
    r.add_argument("--report", help="write the report here instead of stdout")
    r.add_argument("--strict", action="store_true", help="abort on the first malformed line")
    r.add_argument("--timed", action="store_true", help="pace ledger closes at the ledger interval")
    r.add_argument("--account", default="JACK")
    r.add_argument("--partner", help="second account for the two-transaction XRP round trip")
    r.add_argument("--latency", action="store_true", help="include detection latency (not reproducible)")
    r.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen", help="generate a scenario fixture")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--currencies", type=int, required=True)
    g.add_argument("--offers", type=int, required=True)
    g.add_argument("--ledgers", type=int, required=True)
    g.add_argument("--plant", nargs=2, metavar=("PI", "LENGTH"))
    g.add_argument("--out", required=True, help="fixture path, or - for stdout")

    t = sub.add_parser("roundtrip", help="run the two-account XRP round trip in the simulator")
    t.add_argument("--x", type=_fraction, required=True, help="XRP paid by A")
    t.add_argument("--x-prime", type=_fraction, required=True, help="XRP bought through A's offer")
    t.add_argument("--fee-drops", type=int, default=10)
    return p


def run_round_trip(x: Fraction, x_prime: Fraction, fee_drops: int = 10):
    """Set up a mispriced three-book loop and take it with the A/B scheme.

    Returns ``(plan, realized_gain, ledger)``.
    """
    fee = Amount.from_drops(fee_drops)
    led = Ledger(fee)
    for acct in ("GW", "MM", "A", "B"):
        led.fund(acct, Amount(Fraction(10**6) + x_prime * 2))
    usd, eur = issued("USD", "GW"), issued("EUR", "GW")
    cur = issued("CUR", "A")
    for c in (usd, eur):
        led.submit(trust_set("MM", Amount(Fraction(10**12), c)))
        led.submit(payment("GW", "MM", Amount(Fraction(10**6), c)))
    led.submit(trust_set("B", Amount(Fraction(10**12), cur)))
    led.close()
    # XRP -> USD -> EUR -> XRP turns x into x'
    x_amt, xp_amt = Amount(x), Amount(x_prime)
    led.submit(offer_create("MM", x_amt, Amount(x / 2, usd)))
    led.submit(offer_create("MM", Amount(x / 2, usd), Amount(x / 4, eur)))
    led.submit(offer_create("MM", Amount(x / 4, eur), xp_amt))
    led.close()
    loop = [(XRP, usd), (usd, eur), (eur, XRP)]
    plan = plan_round_trip("A", "B", cur, x_amt, xp_amt, fee, loop=loop,
                           loop_rates=[led.books.head(p).quality for p in loop],
                           trustlines=led.trustlines.keys())
    if not plan.accepted:
        return plan, None, led
    before = led.balance("A", XRP) + led.balance("B", XRP)
    for tx in plan.transactions:
        led.submit(tx)
    led.close()
    after = led.balance("A", XRP) + led.balance("B", XRP)
    # B's CUR is A's own debt, so it nets to zero across the two accounts
    assert led.balance("A", cur) + led.balance("B", cur) == 0
    return plan, after - before, led


def _cmd_replay(args, out, err) -> int:
    allow = None
    if args.allowlist:
        from .strategy import load_allowlist
        try:
            allow = load_allowlist(args.allowlist)
        except (OSError, ValueError, MalformedTx) as exc:
            err.write(f"allow-list error: {exc}\n")
            return EXIT_FIXTURE
    cfg = ReplayConfig(fee_per_tx=Amount.from_drops(args.fee_drops), account=args.account, partner=args.partner,
                       allowlist=allow, timed=args.timed, record_latency=args.latency, seed=args.seed)
    errors: List[FixtureError] = []
    try:
        if args.fixtures == "-":
            events = read_events(sys.stdin, strict=args.strict, errors=errors)
        else:
            with open(args.fixtures, encoding="utf-8") as fh:
                events = read_events(fh, strict=args.strict, errors=errors)
        report = replay(events, cfg)
    except OSError as exc:
        err.write(f"fixture error: {exc}\n")
        return EXIT_FIXTURE
    except FixtureError as exc:
        err.write(f"fixture error: {exc}\n")
        return EXIT_FIXTURE
    for e in errors:
        err.write(f"skipped {e}\n")
    text = report.dumps()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def _cmd_gen(args, out, err) -> int:
    planted = None
    if args.plant:
        try:
            pi = Fraction(Decimal(args.plant[0]))
            length = int(args.plant[1])
        except (InvalidOperation, ValueError):
            raise UsageError("--plant takes PI (decimal) and LENGTH (integer)")
        planted = Planted(pi, length)
    try:
        lines, truth = generate_scenario(args.seed, args.currencies, args.offers, args.ledgers, planted)
    except ValueError as exc:
        raise UsageError(str(exc))
    text = "".join(l + "\n" for l in lines)
    if args.out == "-":
        out.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(args.out + ".truth.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(truth, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def _cmd_roundtrip(args, out, err) -> int:
    for v in (args.x, args.x_prime):
        if v <= 0 or (v * 10**6).denominator != 1:
            raise UsageError("--x and --x-prime must be positive XRP amounts in whole drops")
    plan, gain, _ = run_round_trip(args.x, args.x_prime, args.fee_drops)
    if gain is None:
        out.write(f"rejected: {plan.rejected_reason} (x' - x - e = {render_value(plan.gain.value)} XRP)\n")
        return EXIT_OK
    out.write(f"aggregate gain: {render_value(gain)} XRP\n")
    out.write(f"x' - x - e: {render_value(plan.gain.value)} XRP\n")
    return EXIT_OK


def main(argv: Optional[List[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        handler = {"replay": _cmd_replay, "gen": _cmd_gen, "roundtrip": _cmd_roundtrip}[args.command]
        return handler(args, out, err)
    except UsageError as exc:
        err.write(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
