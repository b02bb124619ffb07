"""Uniform-price call auction and per-agent order validation.

All prices and quantities are integers. Clearing is a pure function of the
book: candidate prices are the quoted limits, the clearing price maximizes
executable volume, and ties break toward the previous price (then toward the
lower price). When no trade is possible the posted price falls back to the
integer midpoint of best bid and best ask, or carries the previous price if
either side is absent.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterable, Sequence


class Side(str, Enum):
    BUY = "BUY"
    SELL = "SELL"


class RejectReason(str, Enum):
    OVERSELL = "OVERSELL"
    OVERSPEND = "OVERSPEND"
    OUT_OF_BAND = "OUT_OF_BAND"
    SPREAD_CROSS_SELF = "SPREAD_CROSS_SELF"
    TOO_MANY_ORDERS = "TOO_MANY_ORDERS"
    NON_INTEGER = "NON_INTEGER"


@dataclass(frozen=True)
class Order:
    """One limit order. Construction is permissive; validate_orders is the gate."""

    agent_id: str
    side: Side
    quantity: int
    limit_price: int


@dataclass(frozen=True)
class Fill:
    agent_id: str
    side: Side
    quantity: int
    price: int


@dataclass(frozen=True)
class ClearingOutcome:
    price: int
    volume: int
    fills: tuple[Fill, ...]
    crossed: bool


@dataclass(frozen=True)
class ValidationVerdict:
    accepted: list[Order]
    rejected: list[tuple[Order, RejectReason]]


@dataclass(frozen=True)
class OrderBook:
    """All validated orders of one round, split by side."""

    bids: list[Order]
    asks: list[Order]
    previous_price: int

    def __post_init__(self):
        if any(o.side is not Side.BUY for o in self.bids):
            raise ValueError("bids must contain only BUY orders")
        if any(o.side is not Side.SELL for o in self.asks):
            raise ValueError("asks must contain only SELL orders")

    @classmethod
    def from_orders(cls, orders: Iterable[Order], previous_price: int) -> "OrderBook":
        bids = [o for o in orders if o.side is Side.BUY]
        asks = [o for o in orders if o.side is Side.SELL]
        return cls(bids=bids, asks=asks, previous_price=previous_price)


def cumulative_buy(book: OrderBook, price: int) -> int:
    """Total bid quantity willing to trade at ``price`` or better."""
    return sum(o.quantity for o in book.bids if o.limit_price >= price)


def cumulative_sell(book: OrderBook, price: int) -> int:
    """Total ask quantity willing to trade at ``price`` or better."""
    return sum(o.quantity for o in book.asks if o.limit_price <= price)


def _ration(orders: Sequence[Order], volume: int, best_first_levels: Sequence[int],
            eligible) -> dict[str, int]:
    """Allocate ``volume`` shares across one side with strict price priority.

    Whole levels fill while they fit. The first level that does not fit is
    split one share at a time, cycling agents in ascending agent_id order;
    within an agent, orders count in submission order (only totals matter).
    """
    filled: dict[str, int] = defaultdict(int)
    remaining = volume
    for level in best_first_levels:
        level_orders = [o for o in orders if o.limit_price == level and eligible(o)]
        level_qty = sum(o.quantity for o in level_orders)
        if level_qty <= remaining:
            for o in level_orders:
                filled[o.agent_id] += o.quantity
            remaining -= level_qty
            if remaining == 0:
                break
        else:
            want = defaultdict(int)
            for o in level_orders:
                want[o.agent_id] += o.quantity
            agents = sorted(want)
            while remaining > 0:
                for agent in agents:
                    if remaining == 0:
                        break
                    if want[agent] > 0:
                        filled[agent] += 1
                        want[agent] -= 1
                        remaining -= 1
            break
    return filled


def clear(book: OrderBook) -> ClearingOutcome:
    """Run the auction. Pure: same book, same outcome."""
    if not book.bids or not book.asks:
        return ClearingOutcome(price=book.previous_price, volume=0, fills=(), crossed=False)

    candidates = sorted({o.limit_price for o in book.bids}
                        | {o.limit_price for o in book.asks})
    best_key = None
    price = book.previous_price
    volume = 0
    for p in candidates:
        v = min(cumulative_buy(book, p), cumulative_sell(book, p))
        key = (-v, abs(p - book.previous_price), p)
        if best_key is None or key < best_key:
            best_key, price, volume = key, p, v

    if volume == 0:
        max_bid = max(o.limit_price for o in book.bids)
        min_ask = min(o.limit_price for o in book.asks)
        return ClearingOutcome(price=(max_bid + min_ask) // 2, volume=0,
                               fills=(), crossed=False)

    bid_levels = sorted({o.limit_price for o in book.bids if o.limit_price >= price},
                        reverse=True)
    ask_levels = sorted({o.limit_price for o in book.asks if o.limit_price <= price})
    bought = _ration(book.bids, volume, bid_levels, lambda o: o.limit_price >= price)
    sold = _ration(book.asks, volume, ask_levels, lambda o: o.limit_price <= price)

    fills = tuple(
        [Fill(agent, Side.BUY, qty, price) for agent, qty in sorted(bought.items()) if qty]
        + [Fill(agent, Side.SELL, qty, price) for agent, qty in sorted(sold.items()) if qty]
    )
    return ClearingOutcome(price=price, volume=volume, fills=fills, crossed=True)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_orders(orders: Sequence[Order], *, shares_owned: int, cash: Decimal,
                    band: tuple[int, int], max_per_round: int = 3) -> ValidationVerdict:
    """Screen a submission in sequence against joint feasibility constraints.

    Each order is checked against the state implied by the orders already
    accepted, so an early rejection does not doom later compatible orders.
    Check order per order: NON_INTEGER (malformed quantity or limit),
    OUT_OF_BAND, TOO_MANY_ORDERS, OVERSELL (total sell quantity would exceed
    holdings), OVERSPEND (total buy cost would exceed cash),
    SPREAD_CROSS_SELF (a sell limit not strictly above every accepted buy
    limit, or vice versa).
    """
    accepted: list[Order] = []
    rejected: list[tuple[Order, RejectReason]] = []
    sell_qty = 0
    buy_cost = Decimal(0)
    max_buy: int | None = None
    min_sell: int | None = None

    for o in orders:
        reason = None
        if not _is_int(o.quantity) or not _is_int(o.limit_price) \
                or o.quantity < 1 or o.limit_price < 0:
            reason = RejectReason.NON_INTEGER
        elif not band[0] <= o.limit_price <= band[1]:
            reason = RejectReason.OUT_OF_BAND
        elif len(accepted) >= max_per_round:
            reason = RejectReason.TOO_MANY_ORDERS
        elif o.side is Side.SELL and sell_qty + o.quantity > shares_owned:
            reason = RejectReason.OVERSELL
        elif o.side is Side.BUY and buy_cost + o.quantity * o.limit_price > cash:
            reason = RejectReason.OVERSPEND
        elif o.side is Side.SELL and max_buy is not None and o.limit_price <= max_buy:
            reason = RejectReason.SPREAD_CROSS_SELF
        elif o.side is Side.BUY and min_sell is not None and o.limit_price >= min_sell:
            reason = RejectReason.SPREAD_CROSS_SELF

        if reason is not None:
            rejected.append((o, reason))
            continue
        accepted.append(o)
        if o.side is Side.SELL:
            sell_qty += o.quantity
            min_sell = o.limit_price if min_sell is None else min(min_sell, o.limit_price)
        else:
            buy_cost += o.quantity * o.limit_price
            max_buy = o.limit_price if max_buy is None else max(max_buy, o.limit_price)

    return ValidationVerdict(accepted=accepted, rejected=rejected)
