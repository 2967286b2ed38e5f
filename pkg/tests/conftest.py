import weakref

import pytest

from rippler import ledger as ledger_mod
from rippler.amounts import XRP, Amount, issued, make_amount

_live = weakref.WeakSet()
_orig_init = ledger_mod.Ledger.__init__


def _tracking_init(self, *args, **kwargs):
    _orig_init(self, *args, **kwargs)
    _live.add(self)


ledger_mod.Ledger.__init__ = _tracking_init


@pytest.fixture(autouse=True)
def conservation_guard():
    """Every ledger a test touches must conserve XRP (minus burn) and every IOU."""
    _live.clear()
    yield
    for led in list(_live):
        led.check_conservation()


USD = issued("USD", "G1")
EUR = issued("EUR", "G1")
BTC = issued("BTC", "G2")


def xrp(v) -> Amount:
    return make_amount(str(v), XRP)


def amt(v, cur) -> Amount:
    return make_amount(str(v), cur)


@pytest.fixture
def funded_ledger():
    """Gateways G1/G2, market maker MM and holders A, B with balances and trustlines."""
    from rippler.ledger import Ledger, payment, trust_set

    led = Ledger()
    for acct in ("G1", "G2", "MM", "A", "B", "C"):
        led.fund(acct, xrp(10_000))
    for holder in ("MM", "A"):
        for cur in (USD, EUR, BTC):
            led.submit(trust_set(holder, amt(1_000_000, cur)))
            led.submit(payment(cur.issuer, holder, amt(5_000, cur)))
    led.close()
    return led
