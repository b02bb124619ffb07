"""Agent contract, scripted strategies, and per-agent memory.

Scripted agents are deterministic given (observation, construction seed):
any randomness is drawn from an RNG keyed on the observation's phase and
round, so repeating a call reproduces the action. Their orders are feasible
by construction and always pass order validation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

from .market import Order, Side


@dataclass(frozen=True)
class HistoryEntry:
    """One past round as seen by one agent; portfolio fields are post-round."""

    phase: str
    round: int
    price: int
    volume: int
    orders: tuple[Order, ...]
    fills: tuple
    shares: int
    cash: Decimal
    stock_value: Decimal
    interest_earned: Decimal
    dividend_earned: Decimal
    forecasts: dict[int, int]


@dataclass(frozen=True)
class AgentObservation:
    agent_id: str
    phase: str
    round: int
    rounds_remaining: int
    practice_rounds_total: int
    main_rounds_total: int
    market_history: tuple[HistoryEntry, ...]
    cash: Decimal
    shares: int
    previous_price: int
    price_band: tuple[int, int]
    forecast_upper_bound: int
    forecast_horizons: tuple[int, ...]
    max_orders: int
    redemption_value: Decimal
    plans: str
    insights: str
    practice_reflection: str
    prior_history: Optional[str] = None
    news: Optional[str] = None

    @property
    def stock_value(self) -> Decimal:
        return Decimal(self.shares * self.previous_price)


@dataclass(frozen=True)
class AgentAction:
    orders: tuple[Order, ...]
    forecasts: dict[int, int]
    # None means "leave the stored text unchanged"; scripted agents never write.
    plans: Optional[str] = None
    insights: Optional[str] = None
    observations_and_thoughts: str = ""


@dataclass
class MemoryView:
    plans: str = ""
    insights: str = ""
    practice_reflection: str = ""


class MemoryStore:
    """Per-agent persistent texts, last-writer-wins per field."""

    def __init__(self):
        self._views: dict[str, MemoryView] = {}

    def read(self, agent_id: str) -> MemoryView:
        view = self._views.get(agent_id, MemoryView())
        return MemoryView(plans=view.plans, insights=view.insights,
                          practice_reflection=view.practice_reflection)

    def write(self, agent_id: str, plans: Optional[str] = None,
              insights: Optional[str] = None,
              practice_reflection: Optional[str] = None) -> None:
        view = self._views.setdefault(agent_id, MemoryView())
        if plans is not None:
            view.plans = plans
        if insights is not None:
            view.insights = insights
        if practice_reflection is not None:
            view.practice_reflection = practice_reflection


class Agent:
    """Interface: one action exchange per round, optional reflection/lottery."""

    def __init__(self, agent_id: str):
        self.agent_id = agent_id

    def act(self, obs: AgentObservation) -> AgentAction:
        raise NotImplementedError

    def reflect(self, obs: AgentObservation) -> str:
        return ""

    def choose_lottery(self, pair) -> str:
        return "ABSTAIN"


def _clamped_forecasts(value, obs: AgentObservation) -> dict[int, int]:
    v = min(max(int(round(value)), 0), obs.forecast_upper_bound)
    return {h: v for h in obs.forecast_horizons}


def _phase_prices(obs: AgentObservation) -> list[int]:
    return [h.price for h in obs.market_history if h.phase == obs.phase]


class FundamentalistAgent(Agent):
    """Trades toward a value anchor: buy under it, sell over it, sit at it.

    The anchor starts at the default economy's fundamental value and rescales
    when a news text announces doubled or halved payouts (the rescale is
    idempotent, so replaying an observation reproduces the action).
    """

    def __init__(self, agent_id: str, margin: int = 1, anchor: float = 14.0):
        super().__init__(agent_id)
        self.margin = margin
        self.base_anchor = anchor
        self.anchor = anchor

    def _update_anchor(self, obs: AgentObservation) -> None:
        if not obs.news:
            return
        text = obs.news.lower()
        if "doubled" in text:
            self.anchor = self.base_anchor * 2
        elif "halved" in text:
            self.anchor = self.base_anchor * 0.5

    def act(self, obs: AgentObservation) -> AgentAction:
        self._update_anchor(obs)
        lo, hi = obs.price_band
        value = int(round(self.anchor))
        last = obs.previous_price
        orders: tuple[Order, ...] = ()
        if last < value:
            limit = min(hi, value - self.margin)
            if limit >= 1 and obs.cash >= limit:
                qty = int(obs.cash // limit)
                orders = (Order(self.agent_id, Side.BUY, qty, limit),)
        elif last > value and obs.shares > 0:
            limit = max(lo, value + self.margin)
            orders = (Order(self.agent_id, Side.SELL, obs.shares, limit),)
        return AgentAction(orders=orders, forecasts=_clamped_forecasts(value, obs))


class MomentumAgent(Agent):
    """Chases the recent price trend, scaled by an aggressiveness knob.

    trend > 0: buy at the band ceiling with an aggressiveness-scaled budget;
    when that budget cannot afford one share, panic and dump the whole
    position at the band floor. While holding shares, a seeded coin may take
    scaled profit at the ceiling. trend < 0: stock-heavy agents dump the
    whole position at the band floor while cash-heavy agents bid an
    aggressiveness-scaled budget at the floor to catch the fall. Zero trend
    sits out. Before two same-phase prices exist, a seeded coin ignites
    either a one-share ask just above the previous price or a ceiling bid.

    Exits are all-or-nothing and dip-catching is deterministic on purpose:
    partial exits leave every trader stock-heavy through a downturn, nobody
    bids at the floor, and a uniform-price auction then carries the old
    price forever instead of printing the crash.
    """

    def __init__(self, agent_id: str, window: int = 3, aggressiveness: float = 0.5,
                 seed: int = 0):
        super().__init__(agent_id)
        if not 0 < aggressiveness <= 1:
            raise ValueError("aggressiveness must lie in (0, 1]")
        self.window = window
        self.aggressiveness = aggressiveness
        self.seed = seed

    def _rng(self, obs: AgentObservation) -> random.Random:
        return random.Random(f"{self.seed}:{self.agent_id}:{obs.phase}:{obs.round}:act")

    def _trend(self, prices: list[int]) -> Optional[float]:
        pts = prices[-(self.window + 1):]
        if len(pts) < 2:
            return None
        return (pts[-1] - pts[0]) / (len(pts) - 1)

    def act(self, obs: AgentObservation) -> AgentAction:
        a = self.aggressiveness
        lo, hi = obs.price_band
        prices = _phase_prices(obs)
        trend = self._trend(prices)
        rng = self._rng(obs)
        orders: tuple[Order, ...] = ()

        buy_qty = int(obs.cash * Decimal(str(a)) // hi) if hi >= 1 else 0
        profit_qty = math.ceil(a * obs.shares)

        if trend is None:
            if rng.random() < a and obs.shares >= 1:
                orders = (Order(self.agent_id, Side.SELL, 1, obs.previous_price + 1),)
            elif buy_qty >= 1:
                orders = (Order(self.agent_id, Side.BUY, buy_qty, hi),)
        elif trend > 0:
            if buy_qty < 1:
                if obs.shares > 0:
                    orders = (Order(self.agent_id, Side.SELL, obs.shares, lo),)
            elif obs.shares > 0 and rng.random() < a / 2:
                orders = (Order(self.agent_id, Side.SELL, profit_qty, hi),)
            else:
                orders = (Order(self.agent_id, Side.BUY, buy_qty, hi),)
        elif trend < 0:
            if obs.shares > 0 and obs.stock_value >= obs.cash:
                orders = (Order(self.agent_id, Side.SELL, obs.shares, lo),)
            elif lo >= 1:
                catch_qty = int(obs.cash * Decimal(str(a)) // lo)
                if catch_qty >= 1:
                    orders = (Order(self.agent_id, Side.BUY, catch_qty, lo),)

        extrapolation = trend or 0.0
        last = prices[-1] if prices else obs.previous_price
        forecasts = {}
        for h in obs.forecast_horizons:
            f = int(round(last + extrapolation * (h + 1)))
            forecasts[h] = min(max(f, 0), obs.forecast_upper_bound)
        return AgentAction(orders=orders, forecasts=forecasts)


class NoiseAgent(Agent):
    """Flips a coin each round; on heads quotes one share at a uniform band price."""

    def __init__(self, agent_id: str, seed: int = 0):
        super().__init__(agent_id)
        self.seed = seed

    def act(self, obs: AgentObservation) -> AgentAction:
        rng = random.Random(f"{self.seed}:{self.agent_id}:{obs.phase}:{obs.round}:act")
        lo, hi = obs.price_band
        orders: tuple[Order, ...] = ()
        if rng.random() < 0.5 and lo <= hi:
            side = Side.BUY if rng.random() < 0.5 else Side.SELL
            limit = rng.randint(lo, hi)
            feasible = obs.cash >= limit and limit >= 1 if side is Side.BUY \
                else obs.shares >= 1
            if feasible:
                orders = (Order(self.agent_id, side, 1, limit),)
        forecasts = {h: min(max(obs.previous_price, 0), obs.forecast_upper_bound)
                     for h in obs.forecast_horizons}
        return AgentAction(orders=orders, forecasts=forecasts)
