"""Exact amounts, currency identities and transaction result codes.

Every value is held as a :class:`fractions.Fraction`. XRP amounts are kept in
XRP units but must land on whole drops (1 XRP = 10**6 drops).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

DROPS_PER_XRP = 10**6
MAX_SIG_DIGITS = 15

_CODE_RE = re.compile(r"^[A-Za-z0-9?!@#$%^&*<>(){}\[\]|]{3,20}$")

AccountId = str


class TxResult(str, Enum):
    SUCCESS = "tesSUCCESS"
    PATH_DRY = "tecPATH_DRY"
    PARTIALITY_NOT_ALLOWED = "tecPATH_PARTIAL"
    UNFUNDED = "tecUNFUNDED"
    NO_SUCH_OFFER = "tecNO_ENTRY"
    INSUFFICIENT_FEE = "telINSUF_FEE_P"
    MALFORMED = "temMALFORMED"


class TxError(Exception):
    """A transaction-level failure carrying a :class:`TxResult` code."""

    code = TxResult.MALFORMED

    def __init__(self, message: str, code: Optional[TxResult] = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class MalformedTx(TxError):
    code = TxResult.MALFORMED


class InsufficientFee(TxError):
    code = TxResult.INSUFFICIENT_FEE


@dataclass(frozen=True)
class Currency:
    """XRP when ``issuer`` is None, otherwise an IOU identified by (code, issuer)."""

    code: str = "XRP"
    issuer: Optional[AccountId] = None

    def __post_init__(self):
        if self.issuer is None:
            if self.code != "XRP":
                raise MalformedTx(f"issued currency {self.code!r} needs an issuer")
            return
        if not self.issuer:
            raise MalformedTx("issuer must be a non-empty account id")
        if self.code.upper() == "XRP":
            raise MalformedTx("XRP cannot be issued")
        if not _CODE_RE.match(self.code):
            raise MalformedTx(f"bad currency code {self.code!r}")

    @property
    def native(self) -> bool:
        return self.issuer is None

    def sort_key(self) -> tuple:
        return (0, "", "") if self.issuer is None else (1, self.code, self.issuer)

    def __lt__(self, other: "Currency") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return "XRP" if self.issuer is None else f"{self.code}@{self.issuer}"

    @classmethod
    def parse(cls, text: str) -> "Currency":
        """Parse ``XRP`` or ``CODE@issuer``."""
        if text == "XRP":
            return XRP
        code, sep, issuer = text.partition("@")
        if not sep:
            raise MalformedTx(f"currency {text!r} must be XRP or CODE@issuer")
        return cls(code, issuer)


XRP = Currency()


def issued(code: str, issuer: AccountId) -> Currency:
    return Currency(code, issuer)


def _check_drops(value: Fraction, currency: Currency) -> None:
    if currency.native and (value * DROPS_PER_XRP).denominator != 1:
        raise MalformedTx(f"{value} XRP is not a whole number of drops")


@dataclass(frozen=True)
class Amount:
    """An exact quantity of one currency.

    Values parsed from the outside world are non-negative; internally derived
    amounts (profit and loss) may be signed.
    """

    value: Fraction
    currency: Currency = XRP

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))
        _check_drops(self.value, self.currency)

    @classmethod
    def zero(cls, currency: Currency = XRP) -> "Amount":
        return cls(Fraction(0), currency)

    @classmethod
    def from_drops(cls, drops: int) -> "Amount":
        return cls(Fraction(drops, DROPS_PER_XRP), XRP)

    @property
    def drops(self) -> int:
        if not self.currency.native:
            raise TypeError(f"{self.currency} has no drops")
        return int(self.value * DROPS_PER_XRP)

    def _same(self, other: "Amount") -> None:
        if other.currency != self.currency:
            raise ValueError(f"currency mismatch: {self.currency} vs {other.currency}")

    def __add__(self, other: "Amount") -> "Amount":
        self._same(other)
        return Amount(self.value + other.value, self.currency)

    def __sub__(self, other: "Amount") -> "Amount":
        self._same(other)
        return Amount(self.value - other.value, self.currency)

    def __neg__(self) -> "Amount":
        return Amount(-self.value, self.currency)

    def __lt__(self, other: "Amount") -> bool:
        self._same(other)
        return self.value < other.value

    def __le__(self, other: "Amount") -> bool:
        self._same(other)
        return self.value <= other.value

    def __bool__(self) -> bool:
        return self.value != 0

    def __str__(self) -> str:
        return f"{render_value(self.value)} {self.currency}"

    def to_json(self) -> dict:
        out = {"currency": self.currency.code, "value": render_value(self.value)}
        if self.currency.issuer is not None:
            out["issuer"] = self.currency.issuer
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Amount":
        try:
            currency = Currency(obj["currency"], obj.get("issuer"))
            return make_amount(str(obj["value"]), currency)
        except (KeyError, TypeError) as exc:
            raise MalformedTx(f"bad amount object {obj!r}") from exc


def floor_drops(value: Fraction) -> Fraction:
    """Round an XRP quantity down to a whole drop."""
    return Fraction(math.floor(value * DROPS_PER_XRP), DROPS_PER_XRP)


def ceil_drops(value: Fraction) -> Fraction:
    return Fraction(math.ceil(value * DROPS_PER_XRP), DROPS_PER_XRP)


def make_amount(value: str, currency: Currency) -> Amount:
    """Parse a decimal string into an exact amount.

    Rejects negatives, non-numeric input, more than 15 significant digits and
    fractional drops.
    """
    text = value.strip()
    try:
        dec = Decimal(text)
    except InvalidOperation:
        raise MalformedTx(f"not a decimal number: {value!r}") from None
    if not dec.is_finite():
        raise MalformedTx(f"not a finite number: {value!r}")
    if dec.is_signed() and dec != 0:
        raise MalformedTx(f"negative amount: {value!r}")
    if dec != 0 and len(dec.normalize().as_tuple().digits) > MAX_SIG_DIGITS:
        raise MalformedTx(f"more than {MAX_SIG_DIGITS} significant digits: {value!r}")
    frac = Fraction(abs(dec))
    _check_drops(frac, currency)
    return Amount(frac, currency)


def amount_mul(a: Amount, r: Union[Fraction, int]) -> Amount:
    """Multiply exactly; XRP results are floored to whole drops."""
    r = Fraction(r)
    if r < 0:
        raise ValueError("multiplier must be non-negative")
    value = a.value * r
    if a.currency.native:
        value = floor_drops(value)
    return Amount(value, a.currency)


def render_value(value: Fraction) -> str:
    """Decimal rendering with at most 15 significant digits.

    Exact whenever the value has a terminating expansion that fits; otherwise
    rounded half-even to 15 significant digits.
    """
    if value == 0:
        return "0"
    sign = "-" if value < 0 else ""
    value = abs(value)
    num, den = value.numerator, value.denominator
    # exact path: den = 2^a 5^b
    d, twos, fives = den, 0, 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d == 1:
        scale = max(twos, fives)
        dec = Decimal(num * (10**scale // den)).scaleb(-scale)
        if len(dec.normalize().as_tuple().digits) <= MAX_SIG_DIGITS:
            return sign + _plain(dec)
    # lossy path
    exp10 = len(str(num // den)) if num >= den else -_leading_zeros(num, den)
    shift = MAX_SIG_DIGITS - exp10
    scaled = value * Fraction(10) ** shift
    q = round(scaled)  # Fraction.__round__ is half-even
    dec = Decimal(q).scaleb(-shift)
    return sign + _plain(dec)


def _leading_zeros(num: int, den: int) -> int:
    n = 0
    while num * 10 < den:
        num *= 10
        n += 1
    return n


def _plain(dec: Decimal) -> str:
    text = format(dec.normalize(), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text
