"""Arbitrage detection and execution on a simulated XRPL-style exchange."""

from .amounts import XRP, Amount, Currency, MalformedTx, TxError, TxResult, amount_mul, issued, make_amount
from .book import BookDelta, Offer, OrderBook
from .cycles import Cycle, Opportunity, bellman_ford, detect, evaluate, extract_cycle
from .graph import RateEdge, RateGraph, build, edge_weight
from .ledger import Ledger, Transaction, TxKind, TxOutcome

__all__ = [
    "XRP", "Amount", "Currency", "MalformedTx", "TxError", "TxResult", "amount_mul", "issued", "make_amount",
    "BookDelta", "Offer", "OrderBook",
    "Cycle", "Opportunity", "bellman_ford", "detect", "evaluate", "extract_cycle",
    "RateEdge", "RateGraph", "build", "edge_weight",
    "Ledger", "Transaction", "TxKind", "TxOutcome",
]

__version__ = "0.1.0"
