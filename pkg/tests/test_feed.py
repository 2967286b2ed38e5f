import io
import json
from fractions import Fraction

import pytest

from scenarios import competitor_fixture, quiet_fixture, round_trip_fixture, uncontested_fixture
from rippler.cli import main
from rippler.feed import FixtureError, Planted, ReplayConfig, generate_scenario, parse_event, read_events, replay
from rippler.ledger import TxKind

OFFER_LINE = ('{"ledger_index": 2, "tx_kind": "OfferCreate", "sender": "MM", "sequence": 4, '
              '"taker_pays": {"currency": "USD", "issuer": "GW", "value": "100"}, '
              '"taker_gets": {"currency": "XRP", "value": "50"}, "memo": "ignored"}')


def test_parse_offer_create():
    ev = parse_event(OFFER_LINE)
    assert ev.ledger_index == 2 and ev.tx.kind is TxKind.OFFER_CREATE
    assert ev.tx.taker_gets.drops == 50_000_000


@pytest.mark.parametrize("line", ["", "   ", "# comment"])
def test_blank_lines_skipped(line):
    assert parse_event(line) is None


def test_negative_amount_names_field():
    bad = OFFER_LINE.replace('"100"', '"-100"')
    with pytest.raises(FixtureError) as exc:
        parse_event(bad, 7, 120)
    assert "taker_pays" in exc.value.reason
    assert (exc.value.line, exc.value.offset) == (7, 120)


@pytest.mark.parametrize("line", ["{", "[]", '{"ledger_index": 1, "tx_kind": "Mint", "sender": "A"}',
                                  '{"ledger_index": -1, "tx_kind": "OfferCancel", "sender": "A", "offer_sequence": 1}'])
def test_malformed_lines(line):
    with pytest.raises(FixtureError):
        parse_event(line)


def test_lenient_mode_collects_errors():
    errors = []
    events = read_events(["{bad\n", OFFER_LINE + "\n"], strict=False, errors=errors)
    assert len(events) == 1 and len(errors) == 1 and errors[0].line == 1
    with pytest.raises(FixtureError):
        read_events(["{bad\n", OFFER_LINE + "\n"])


def test_decreasing_ledger_index_is_fatal():
    later = OFFER_LINE.replace('"ledger_index": 2', '"ledger_index": 3')
    with pytest.raises(FixtureError) as exc:
        read_events([later + "\n", OFFER_LINE + "\n"], strict=False)
    assert exc.value.line == 2 and exc.value.offset == len(later) + 1


def test_quiet_fixture_has_no_plans():
    report = replay(read_events(quiet_fixture()))
    assert report.pnl == []
    assert report.totals["net_pnl"] == "0"


def test_round_trip_fixture_nets_gain_formula():
    report = replay(read_events(round_trip_fixture()), ReplayConfig(partner="PARTNER"))
    assert report.totals["net_pnl"] == "0.99998"
    assert report.totals["completed"] == 1


def test_competitor_fixture_yields_one_incomplete():
    report = replay(read_events(competitor_fixture()))
    (rec,) = report.pnl
    assert rec.outcome.value == "Incomplete"
    assert rec.realized.value == -rec.fees_paid.value
    assert report.totals["incomplete"] == 1


def test_uncontested_cycle_completes_as_planned():
    report = replay(read_events(uncontested_fixture()))
    (rec,) = report.pnl
    assert rec.outcome.value == "Completed"
    assert rec.realized == rec.intended


def test_allowlist_blocks_plan():
    report = replay(read_events(uncontested_fixture()), ReplayConfig(allowlist=frozenset()))
    assert report.totals["completed"] == 0 and report.totals["rejected"] == 1


def test_skipped_ledgers_repeat_previous_results():
    lines, _ = generate_scenario(3, 5, 120, 40, Planted(Fraction(11, 10), 3))
    report = replay(read_events(lines))
    prev = {"cycle": None, "opportunities": []}
    for rec in report.ledgers:
        if not rec["detection_ran"]:
            assert rec["best_changed"] == 0
            assert (rec["cycle"], rec["opportunities"]) == (prev["cycle"], prev["opportunities"])
        prev = rec


def test_generator_is_deterministic():
    a = generate_scenario(7, 6, 200, 30, Planted(Fraction(11, 10), 3))
    b = generate_scenario(7, 6, 200, 30, Planted(Fraction(11, 10), 3))
    assert a == b
    assert generate_scenario(8, 6, 200, 30)[0] != a[0]


def test_unplanted_scenario_never_detects():
    for seed in range(5):
        lines, _ = generate_scenario(seed, 6, 300, 30)
        report = replay(read_events(lines))
        assert all(r["cycle"] is None for r in report.ledgers)


@pytest.mark.parametrize("pi", [Fraction(101, 100), Fraction(11, 10)])
@pytest.mark.parametrize("length", [3, 4, 5])
def test_planted_cycle_recall(pi, length):
    for seed in range(5):
        lines, truth = generate_scenario(seed, 6, 150, 20, Planted(pi, length))
        report = replay(read_events(lines))
        at = truth["planted"]["ledger"]
        rec = next(r for r in report.ledgers if r["ledger"] == at)
        assert rec["detection_ran"] and rec["opportunities"], (seed, pi, length)


def test_two_currency_plant_rejected():
    # a profitable two-offer loop is a crossed book and cannot rest
    with pytest.raises(ValueError):
        generate_scenario(0, 6, 10, 10, Planted(Fraction(11, 10), 2))


# -- CLI ---------------------------------------------------------------------


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_cli_roundtrip():
    code, out, _ = cli("roundtrip", "--x", "100", "--x-prime", "101", "--fee-drops", "10")
    assert code == 0
    assert "aggregate gain: 0.99998 XRP" in out


def test_cli_roundtrip_rejected():
    code, out, _ = cli("roundtrip", "--x", "100", "--x-prime", "100")
    assert code == 0 and out.startswith("rejected")


def test_cli_missing_fixture(tmp_path):
    code, _, err = cli("replay", "--fixtures", str(tmp_path / "missing.jsonl"))
    assert code == 2 and "fixture error" in err


def test_cli_unknown_flag():
    code, _, err = cli("replay", "--fixtures", "x", "--bogus")
    assert code == 1 and "usage" in err


def test_cli_bad_fixture_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("{oops\n")
    assert cli("replay", "--fixtures", str(p), "--strict")[0] == 2
    assert cli("replay", "--fixtures", str(p))[0] == 0


def test_cli_gen_then_replay(tmp_path, monkeypatch):
    fx = tmp_path / "f.jsonl"
    code, _, _ = cli("gen", "--seed", "7", "--currencies", "5", "--offers", "100", "--ledgers", "20",
                     "--plant", "1.1", "3", "--out", str(fx))
    assert code == 0
    truth = json.loads((tmp_path / "f.jsonl.truth.json").read_text())
    assert truth["planted"]["length"] == 3
    monkeypatch.setattr("sys.stdin", io.StringIO(fx.read_text()))
    code, out, _ = cli("replay", "--fixtures", "-")
    assert code == 0
    report = json.loads(out)
    assert report["totals"]["ledgers"] >= 20


def test_cli_report_file_and_allowlist(tmp_path):
    fx = tmp_path / "f.jsonl"
    fx.write_text("".join(l + "\n" for l in uncontested_fixture()))
    allow = tmp_path / "allow.txt"
    allow.write_text("USD GW\n")
    rep = tmp_path / "r.json"
    code, out, _ = cli("replay", "--fixtures", str(fx), "--allowlist", str(allow), "--report", str(rep))
    assert code == 0 and out == ""
    assert json.loads(rep.read_text())["totals"]["completed"] == 0
