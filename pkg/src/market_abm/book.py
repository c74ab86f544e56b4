"""Continuous double-auction order book with price-time priority.

All resting orders are one-unit limit orders on an integer tick grid; a
submission whose reservation crosses the opposite best quote executes
immediately against the oldest resting order at that quote, at the resting
order's price. Resting orders expire after the submitting agent's horizon.
"""

from __future__ import annotations

import bisect
import heapq
from collections import deque
from dataclasses import dataclass
from enum import IntEnum


class Side(IntEnum):
    BUY = 0
    SELL = 1


@dataclass(frozen=True)
class OrderIntent:
    agent_id: int
    side: Side
    ticks: int  # reservation price in tick units, > 0
    price: float  # ticks * tick_size, carried for reporting
    horizon: int  # lifetime in steps once resting


@dataclass
class LimitOrder:
    order_id: int
    agent_id: int
    side: Side
    ticks: int
    submitted_at: int
    expires_at: int

    def price(self, tick_size: float) -> float:
        return self.ticks * tick_size


@dataclass(frozen=True)
class Trade:
    step: int
    ticks: int
    price: float
    buyer_id: int
    seller_id: int
    aggressor: Side


@dataclass(frozen=True)
class BookStats:
    spread: float | None
    bid_gap: float | None
    ask_gap: float | None
    depth: int


class OrderBook:
    def __init__(self, tick_size: float, allow_self_trades: bool = False):
        if tick_size <= 0.0:
            raise ValueError("tick_size must be > 0")
        self.tick_size = float(tick_size)
        self.allow_self_trades = bool(allow_self_trades)
        self._orders: dict[int, LimitOrder] = {}
        self._levels = {Side.BUY: {}, Side.SELL: {}}  # ticks -> deque of order ids
        self._ticks = {Side.BUY: [], Side.SELL: []}  # sorted ascending distinct ticks
        self._expiry: list[tuple[int, int]] = []  # (expires_at, order_id) min-heap
        self._next_id = 0
        self.self_trade_rejections = 0

    # -- quotes ------------------------------------------------------------

    def best_bid_ticks(self) -> int | None:
        ticks = self._ticks[Side.BUY]
        return ticks[-1] if ticks else None

    def best_ask_ticks(self) -> int | None:
        ticks = self._ticks[Side.SELL]
        return ticks[0] if ticks else None

    def best_bid(self) -> float | None:
        t = self.best_bid_ticks()
        return None if t is None else t * self.tick_size

    def best_ask(self) -> float | None:
        t = self.best_ask_ticks()
        return None if t is None else t * self.tick_size

    @property
    def depth(self) -> int:
        return len(self._orders)

    def orders(self) -> list[LimitOrder]:
        return [self._orders[oid] for oid in sorted(self._orders)]

    # -- mutation ----------------------------------------------------------

    def submit(self, intent: OrderIntent, t: int) -> tuple[Trade | None, LimitOrder | None]:
        """Match or rest one intent. Returns (trade, rested_order).

        (None, None) means the intent was dropped because the only match
        candidate was the submitter's own resting order.
        """
        if intent.ticks <= 0:
            raise ValueError("reservation price must be positive")
        if intent.side == Side.BUY:
            best = self.best_ask_ticks()
            crossing = best is not None and intent.ticks >= best
        else:
            best = self.best_bid_ticks()
            crossing = best is not None and intent.ticks <= best

        if crossing:
            opposite = Side.SELL if intent.side == Side.BUY else Side.BUY
            queue = self._levels[opposite][best]
            resting = self._orders[queue[0]]
            if resting.agent_id == intent.agent_id and not self.allow_self_trades:
                self.self_trade_rejections += 1
                return None, None
            self._remove(resting.order_id)
            if intent.side == Side.BUY:
                buyer, seller = intent.agent_id, resting.agent_id
            else:
                buyer, seller = resting.agent_id, intent.agent_id
            trade = Trade(
                step=t,
                ticks=resting.ticks,
                price=resting.ticks * self.tick_size,
                buyer_id=buyer,
                seller_id=seller,
                aggressor=intent.side,
            )
            return trade, None

        order = LimitOrder(
            order_id=self._next_id,
            agent_id=intent.agent_id,
            side=intent.side,
            ticks=intent.ticks,
            submitted_at=t,
            expires_at=t + intent.horizon,
        )
        self._next_id += 1
        self._orders[order.order_id] = order
        level = self._levels[intent.side].setdefault(intent.ticks, deque())
        if not level:
            bisect.insort(self._ticks[intent.side], intent.ticks)
        level.append(order.order_id)
        heapq.heappush(self._expiry, (order.expires_at, order.order_id))
        return None, order

    def expire(self, t: int) -> list[LimitOrder]:
        """Remove every resting order with expires_at <= t."""
        removed = []
        while self._expiry and self._expiry[0][0] <= t:
            _, oid = heapq.heappop(self._expiry)
            order = self._orders.get(oid)
            if order is not None:
                self._remove(oid)
                removed.append(order)
        return removed

    def purge_outside(self, lo: float, hi: float) -> list[LimitOrder]:
        """Remove resting orders priced outside [lo, hi] (currency units)."""
        removed = []
        for side in (Side.BUY, Side.SELL):
            bad = [
                ticks
                for ticks in self._ticks[side]
                if ticks * self.tick_size < lo or ticks * self.tick_size > hi
            ]
            for ticks in bad:
                for oid in list(self._levels[side][ticks]):
                    removed.append(self._orders[oid])
                    self._remove(oid)
        return removed

    def _remove(self, order_id: int) -> None:
        order = self._orders.pop(order_id)
        level = self._levels[order.side][order.ticks]
        level.remove(order_id)
        if not level:
            del self._levels[order.side][order.ticks]
            idx = bisect.bisect_left(self._ticks[order.side], order.ticks)
            self._ticks[order.side].pop(idx)

    # -- statistics ----------------------------------------------------------

    def spread_and_gaps(self) -> BookStats:
        """Best-quote spread, first gap behind each best level, total depth."""
        bid_ticks = self._ticks[Side.BUY]
        ask_ticks = self._ticks[Side.SELL]
        spread = None
        if bid_ticks and ask_ticks:
            spread = (ask_ticks[0] - bid_ticks[-1]) * self.tick_size
        bid_gap = (bid_ticks[-1] - bid_ticks[-2]) * self.tick_size if len(bid_ticks) >= 2 else None
        ask_gap = (ask_ticks[1] - ask_ticks[0]) * self.tick_size if len(ask_ticks) >= 2 else None
        return BookStats(spread=spread, bid_gap=bid_gap, ask_gap=ask_gap, depth=self.depth)

    def snapshot_levels(self) -> list[tuple[float, int]]:
        """(price, signed volume) rows, ask volumes negative, ascending price."""
        rows = [
            (ticks * self.tick_size, len(self._levels[Side.BUY][ticks]))
            for ticks in self._ticks[Side.BUY]
        ]
        rows.extend(
            (ticks * self.tick_size, -len(self._levels[Side.SELL][ticks]))
            for ticks in self._ticks[Side.SELL]
        )
        rows.sort(key=lambda r: r[0])
        return rows


def current_price(book: OrderBook, last_trade: Trade | None, previous_price: float) -> float:
    """Price proxy for one step: trade price, else mid-quote, else last price.

    The mid-quote needs both sides; a one-sided or empty book keeps the
    previously traded or quoted price.
    """
    if previous_price <= 0.0:
        raise ValueError("previous_price must be > 0")
    if last_trade is not None:
        return last_trade.price
    bid = book.best_bid_ticks()
    ask = book.best_ask_ticks()
    if bid is not None and ask is not None:
        return (bid + ask) * book.tick_size / 2.0
    return previous_price
