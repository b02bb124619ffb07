"""Session economy and the round-driving engine.

A session is practice rounds followed by main rounds on a fresh market.
Each round: collect actions, validate, clear, settle at the uniform price,
accrue interest then dividends, score matured forecasts, append a record.
After the last main round shares redeem at the effective redemption value
and forecast rewards (tallied outside tradable cash) pay out.

All cash arithmetic is fixed-point: Decimal, 4 fractional digits, round
half-up at each accrual step, so the accounting identity holds exactly and
logs replay bit-identically. Fundamental values are computed over exact
rationals and only converted to float at the boundary.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction
from typing import Optional, Sequence

from .market import (
    ClearingOutcome,
    Order,
    OrderBook,
    RejectReason,
    Side,
    clear,
    validate_orders,
)

Q4 = Decimal("0.0001")

PRACTICE = "PRACTICE"
MAIN = "MAIN"


def q4(x: Decimal) -> Decimal:
    return x.quantize(Q4, rounding=ROUND_HALF_UP)


def _dec(x) -> Decimal:
    return x if isinstance(x, Decimal) else Decimal(str(x))


@dataclass(frozen=True)
class PortfolioState:
    cash: Decimal
    shares: int

    def __post_init__(self):
        if self.cash < 0:
            raise ValueError("cash must be non-negative")
        if self.shares < 0:
            raise ValueError("shares must be non-negative")

    def stock_value(self, price: int) -> Decimal:
        return Decimal(self.shares * price)


@dataclass(frozen=True)
class ShockSpec:
    """Regime change applied from `round` on: dividends and redemption scale together."""

    round: int = 15
    factor: str = "DOUBLE"

    def __post_init__(self):
        if self.factor not in ("DOUBLE", "HALVE"):
            raise ValueError("factor must be DOUBLE or HALVE")


@dataclass(frozen=True)
class Lottery:
    outcome_high: Decimal
    outcome_low: Decimal
    p_high: float

    def __post_init__(self):
        if not 0.0 <= self.p_high <= 1.0:
            raise ValueError("p_high must lie in [0, 1]")


@dataclass(frozen=True)
class LotteryPair:
    left: Lottery
    right: Lottery
    payout_divisor: Decimal = Decimal(10)


@dataclass(frozen=True)
class EffectiveParams:
    dividend_values: tuple[Decimal, Decimal]
    redemption_value: Decimal


@dataclass(frozen=True)
class SessionConfig:
    n_agents: int
    main_rounds: int = 30
    practice_rounds: int = 3
    initial_shares: int = 4
    initial_cash: Decimal = Decimal(100)
    interest_rate: Decimal = Decimal("0.05")
    dividend_values: tuple[Decimal, Decimal] = (Decimal("0.4"), Decimal("1.0"))
    redemption_value: Decimal = Decimal(14)
    order_band_halfwidth: int = 3
    max_orders_per_round: int = 3
    forecast_horizons: tuple[int, ...] = (0, 2, 5, 10)
    forecast_tolerance: Decimal = Decimal("2.5")
    forecast_reward: Decimal = Decimal(5)
    forecast_upper_bound_rule: str = "double_anchor"
    shock: Optional[ShockSpec] = None
    risk_elicitation: Optional[tuple[tuple[int, LotteryPair], ...]] = None
    rng_seed: int = 0
    initial_reference_price: int = 14

    def __post_init__(self):
        if self.redemption_value <= 0 or self.interest_rate <= 0:
            raise ValueError("redemption_value and interest_rate must be positive")
        if any(v <= 0 for v in self.dividend_values):
            raise ValueError("dividend_values must be positive")
        if list(self.forecast_horizons) != sorted(set(self.forecast_horizons)):
            raise ValueError("forecast_horizons must be strictly ascending")
        if self.forecast_tolerance < 0:
            raise ValueError("forecast_tolerance must be non-negative")
        if self.main_rounds < 0 or self.practice_rounds < 0:
            raise ValueError("round counts must be non-negative")


def apply_shock(config: SessionConfig, round: int) -> EffectiveParams:
    """Parameters in force for a main round; practice rounds always use base."""
    base = EffectiveParams(dividend_values=tuple(config.dividend_values),
                           redemption_value=config.redemption_value)
    if config.shock is None or round < config.shock.round:
        return base
    factor = Decimal(2) if config.shock.factor == "DOUBLE" else Decimal("0.5")
    return EffectiveParams(
        dividend_values=tuple(v * factor for v in base.dividend_values),
        redemption_value=base.redemption_value * factor,
    )


def fundamental_value(*, dividend_values, redemption_value, rate, t: int, T: int) -> float:
    """Discounted redemption plus the remaining expected-dividend stream.

    Summed term by term over exact rationals; the default economy telescopes
    to the redemption value, and the float conversion preserves that exactly.
    """
    r = Fraction(_dec(rate))
    mean_dividend = Fraction(sum(Fraction(_dec(v)) for v in dividend_values),
                             len(dividend_values))
    growth = 1 + r
    n = T - t
    total = Fraction(_dec(redemption_value)) / growth ** n
    for k in range(1, n + 1):
        total += mean_dividend / growth ** k
    return float(total)


def accrual_parts(cash: Decimal, shares: int, dividend_draw: Decimal,
                  rate: Decimal) -> tuple[Decimal, Decimal]:
    """Interest on post-trade cash and the dividend payment, each at 4 digits."""
    return q4(cash * rate), q4(shares * dividend_draw)


def accrue(p: PortfolioState, dividend_draw: Decimal, rate: Decimal) -> PortfolioState:
    interest, dividend = accrual_parts(p.cash, p.shares, dividend_draw, rate)
    return PortfolioState(cash=q4(p.cash + interest + dividend), shares=p.shares)


def forecast_hit(forecast, realized_price, tolerance: Decimal) -> bool:
    """Inclusive tolerance: a gap of exactly `tolerance` still pays."""
    return abs(_dec(realized_price) - _dec(forecast)) <= tolerance


def redeem(p: PortfolioState, redemption_value: Decimal) -> PortfolioState:
    return PortfolioState(cash=q4(p.cash + p.shares * redemption_value), shares=0)


def forecast_upper_bound(previous_price: int, fundamental: float, rule: str) -> int:
    if rule == "double_anchor":
        return math.ceil(2 * max(previous_price, fundamental))
    if rule.startswith("fixed:"):
        return int(rule.split(":", 1)[1])
    raise ValueError(f"unknown forecast_upper_bound_rule: {rule!r}")


# --- engine ---------------------------------------------------------------


@dataclass(frozen=True)
class Forecast:
    made_round: int
    horizon: int
    value: int

    @property
    def target_round(self) -> int:
        return self.made_round + self.horizon


@dataclass(frozen=True)
class MaturedForecast:
    made_round: int
    horizon: int
    value: int
    hit: bool


@dataclass
class AgentRoundRecord:
    agent_id: str
    submitted: list[Order]
    accepted: list[Order]
    rejected: list[tuple[Order, RejectReason]]
    fills: list
    cash_before: Decimal
    cash_after: Decimal
    shares_before: int
    shares_after: int
    interest_earned: Decimal
    dividend_earned: Decimal
    forecasts: dict[int, int]
    matured: list[MaturedForecast]
    plans: str
    insights: str
    observations_and_thoughts: str
    lottery: Optional[str] = None
    incident: Optional[str] = None


@dataclass
class RoundRecord:
    phase: str
    round: int
    clearing: ClearingOutcome
    dividend_draw: Decimal
    effective: EffectiveParams
    fundamental: float
    band: tuple[int, int]
    forecast_bound: int
    agents: list[AgentRoundRecord]


@dataclass
class AgentFinal:
    agent_id: str
    redemption_cash: Decimal
    forecast_reward_cash: Decimal
    final_value: Decimal
    lottery_payout: Optional[Decimal] = None


@dataclass
class SessionLog:
    config: SessionConfig
    records: list[RoundRecord]
    final: list[AgentFinal]
    # Final per-agent memory texts (plans/insights/practice_reflection),
    # the seed for experienced follow-up sessions.
    memory: dict[str, dict[str, str]]
    provenance: dict


def _phase_rng(seed: int, phase: str, round: int, stream: str) -> random.Random:
    # String-keyed seeding keeps draws independent of agent completion order
    # and stable across platforms.
    return random.Random(f"{seed}:{phase}:{round}:{stream}")


def _fallback_action(config: SessionConfig, previous_price: int):
    from .agents import AgentAction

    forecasts = {h: previous_price for h in config.forecast_horizons}
    return AgentAction(orders=(), forecasts=forecasts)


def _normalize_forecasts(raw: dict, config: SessionConfig, previous_price: int,
                         bound: int) -> dict[int, int]:
    # Records must satisfy the forecast-set invariant even if an agent
    # misbehaves: missing or malformed entries fall back to the previous
    # price, out-of-range values clamp to [0, bound].
    out = {}
    for h in config.forecast_horizons:
        v = raw.get(h, previous_price)
        if not isinstance(v, int) or isinstance(v, bool):
            v = previous_price
        out[h] = min(max(v, 0), bound)
    return out


def run_session(config: SessionConfig, agents: Sequence, carryover: dict | None = None,
                ) -> SessionLog:
    """Run practice then main rounds and return the full log.

    ``carryover`` optionally maps agent_id to {"plans", "insights",
    "prior_history"} for sessions seeded with earlier experience.
    """
    from .agents import AgentObservation, HistoryEntry, MemoryStore
    from .prompts import news_alert

    if len(agents) != config.n_agents:
        raise ValueError(f"roster size {len(agents)} != n_agents {config.n_agents}")
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ValueError("agent ids must be unique")

    memory = MemoryStore()
    prior_history: dict[str, str] = {}
    if carryover:
        for agent_id, seed_mem in carryover.items():
            memory.write(agent_id, plans=seed_mem.get("plans", ""),
                         insights=seed_mem.get("insights", ""))
            if seed_mem.get("prior_history"):
                prior_history[agent_id] = seed_mem["prior_history"]

    records: list[RoundRecord] = []
    schedule = dict(config.risk_elicitation or ())
    lottery_log: dict[str, list[tuple[int, LotteryPair, str]]] = {i: [] for i in ids}

    def fresh_portfolios() -> dict[str, PortfolioState]:
        return {i: PortfolioState(cash=_dec(config.initial_cash),
                                  shares=config.initial_shares) for i in ids}

    def run_phase(phase: str, n_rounds: int, portfolios, histories, reward_tally,
                  pending):
        price_series = [config.initial_reference_price]
        for r in range(1, n_rounds + 1):
            if phase == MAIN:
                effective = apply_shock(config, r)
                t_for_fv = r
            else:
                effective = apply_shock(config, 0)
                t_for_fv = 1
            fv = fundamental_value(
                dividend_values=effective.dividend_values,
                redemption_value=effective.redemption_value,
                rate=config.interest_rate,
                t=min(t_for_fv, max(config.main_rounds, 1)),
                T=max(config.main_rounds, 1),
            )
            prev = price_series[-1]
            band = (max(0, prev - config.order_band_halfwidth),
                    prev + config.order_band_halfwidth)
            bound = forecast_upper_bound(prev, fv, config.forecast_upper_bound_rule)
            news = None
            if phase == MAIN and config.shock is not None and r == config.shock.round:
                news = news_alert(config.shock.factor, effective.dividend_values,
                                  effective.redemption_value)
            overall = r if phase == PRACTICE else config.practice_rounds + r
            remaining = config.practice_rounds + config.main_rounds - overall

            actions = {}
            incidents = {}
            observations = {}
            for agent in agents:
                mem = memory.read(agent.agent_id)
                obs = AgentObservation(
                    agent_id=agent.agent_id,
                    phase=phase,
                    round=r,
                    rounds_remaining=remaining,
                    practice_rounds_total=config.practice_rounds,
                    main_rounds_total=config.main_rounds,
                    market_history=tuple(histories[agent.agent_id]),
                    cash=portfolios[agent.agent_id].cash,
                    shares=portfolios[agent.agent_id].shares,
                    previous_price=prev,
                    price_band=band,
                    forecast_upper_bound=bound,
                    forecast_horizons=tuple(config.forecast_horizons),
                    max_orders=config.max_orders_per_round,
                    redemption_value=effective.redemption_value,
                    plans=mem.plans,
                    insights=mem.insights,
                    practice_reflection=mem.practice_reflection,
                    prior_history=prior_history.get(agent.agent_id),
                    news=news,
                )
                observations[agent.agent_id] = obs
                try:
                    actions[agent.agent_id] = agent.act(obs)
                except Exception as exc:  # engine never aborts on one agent
                    actions[agent.agent_id] = _fallback_action(config, prev)
                    incidents[agent.agent_id] = f"act failed: {exc!r}"

            verdicts = {}
            for agent_id, action in actions.items():
                verdicts[agent_id] = validate_orders(
                    list(action.orders),
                    shares_owned=portfolios[agent_id].shares,
                    cash=portfolios[agent_id].cash,
                    band=band,
                    max_per_round=config.max_orders_per_round,
                )

            book = OrderBook.from_orders(
                [o for agent_id in ids for o in verdicts[agent_id].accepted],
                previous_price=prev,
            )
            outcome = clear(book)
            price_series.append(outcome.price)

            fills_by_agent = {i: [] for i in ids}
            pre_trade = dict(portfolios)
            for f in outcome.fills:
                fills_by_agent[f.agent_id].append(f)
                p = portfolios[f.agent_id]
                cost = Decimal(f.quantity * f.price)
                if f.side is Side.BUY:
                    portfolios[f.agent_id] = PortfolioState(p.cash - cost,
                                                            p.shares + f.quantity)
                else:
                    portfolios[f.agent_id] = PortfolioState(p.cash + cost,
                                                            p.shares - f.quantity)

            draw = _phase_rng(config.rng_seed, phase, r, "dividend").choice(
                list(effective.dividend_values))
            agent_records = []
            for agent in agents:
                agent_id = agent.agent_id
                action = actions[agent_id]
                p_post_trade = portfolios[agent_id]
                interest, dividend = accrual_parts(p_post_trade.cash,
                                                   p_post_trade.shares, draw,
                                                   config.interest_rate)
                p_final = accrue(p_post_trade, draw, config.interest_rate)
                portfolios[agent_id] = p_final

                forecasts = _normalize_forecasts(dict(action.forecasts), config,
                                                 prev, bound)
                for h, v in forecasts.items():
                    pending[agent_id].append(Forecast(made_round=r, horizon=h, value=v))

                matured = []
                still_pending = []
                for fc in pending[agent_id]:
                    if fc.target_round == r:
                        hit = forecast_hit(fc.value, outcome.price,
                                           config.forecast_tolerance)
                        if hit:
                            reward_tally[agent_id] += config.forecast_reward
                        matured.append(MaturedForecast(fc.made_round, fc.horizon,
                                                       fc.value, hit))
                    elif fc.target_round > r:
                        still_pending.append(fc)
                pending[agent_id] = still_pending

                memory.write(agent_id, plans=action.plans, insights=action.insights)
                mem = memory.read(agent_id)

                lottery_choice = None
                if phase == MAIN and r in schedule:
                    pair = schedule[r]
                    try:
                        raw_choice = str(agent.choose_lottery(pair)).strip().upper()
                    except Exception:
                        raw_choice = "ABSTAIN"
                    lottery_choice = raw_choice if raw_choice in ("LEFT", "RIGHT") \
                        else "ABSTAIN"
                    lottery_log[agent_id].append((r, pair, lottery_choice))

                agent_records.append(AgentRoundRecord(
                    agent_id=agent_id,
                    submitted=list(action.orders),
                    accepted=list(verdicts[agent_id].accepted),
                    rejected=list(verdicts[agent_id].rejected),
                    fills=fills_by_agent[agent_id],
                    cash_before=pre_trade[agent_id].cash,
                    cash_after=p_final.cash,
                    shares_before=pre_trade[agent_id].shares,
                    shares_after=p_final.shares,
                    interest_earned=interest,
                    dividend_earned=dividend,
                    forecasts=forecasts,
                    matured=matured,
                    plans=mem.plans,
                    insights=mem.insights,
                    observations_and_thoughts=action.observations_and_thoughts,
                    lottery=lottery_choice,
                    incident=incidents.get(agent_id),
                ))

                histories[agent_id].append(HistoryEntry(
                    phase=phase,
                    round=r,
                    price=outcome.price,
                    volume=outcome.volume,
                    orders=tuple(action.orders),
                    fills=tuple(fills_by_agent[agent_id]),
                    shares=p_final.shares,
                    cash=p_final.cash,
                    stock_value=Decimal(p_final.shares * outcome.price),
                    interest_earned=interest,
                    dividend_earned=dividend,
                    forecasts=dict(forecasts),
                ))

            records.append(RoundRecord(
                phase=phase,
                round=r,
                clearing=outcome,
                dividend_draw=draw,
                effective=effective,
                fundamental=fv,
                band=band,
                forecast_bound=bound,
                agents=agent_records,
            ))
        return price_series

    # Practice: an isolated market of the same roster. Everything except
    # memory and the practice reflection resets before main rounds.
    histories: dict[str, list] = {i: [] for i in ids}
    if config.practice_rounds > 0:
        portfolios = fresh_portfolios()
        reward_tally = {i: Decimal(0) for i in ids}
        pending = {i: [] for i in ids}
        practice_prices = run_phase(PRACTICE, config.practice_rounds, portfolios,
                                    histories, reward_tally, pending)
        last_price = practice_prices[-1]
        for agent in agents:
            mem = memory.read(agent.agent_id)
            obs = AgentObservation(
                agent_id=agent.agent_id,
                phase=PRACTICE,
                round=config.practice_rounds,
                rounds_remaining=config.main_rounds,
                practice_rounds_total=config.practice_rounds,
                main_rounds_total=config.main_rounds,
                market_history=tuple(histories[agent.agent_id]),
                cash=portfolios[agent.agent_id].cash,
                shares=portfolios[agent.agent_id].shares,
                previous_price=last_price,
                price_band=(max(0, last_price - config.order_band_halfwidth),
                            last_price + config.order_band_halfwidth),
                forecast_upper_bound=forecast_upper_bound(
                    last_price,
                    float(config.redemption_value),
                    config.forecast_upper_bound_rule),
                forecast_horizons=tuple(config.forecast_horizons),
                max_orders=config.max_orders_per_round,
                redemption_value=config.redemption_value,
                plans=mem.plans,
                insights=mem.insights,
                practice_reflection=mem.practice_reflection,
                prior_history=prior_history.get(agent.agent_id),
                news=None,
            )
            try:
                reflection = str(agent.reflect(obs))
            except Exception:
                reflection = ""
            memory.write(agent.agent_id, practice_reflection=reflection)

    portfolios = fresh_portfolios()
    reward_tally = {i: Decimal(0) for i in ids}
    pending = {i: [] for i in ids}
    run_phase(MAIN, config.main_rounds, portfolios, histories, reward_tally, pending)

    effective_end = apply_shock(config, config.main_rounds) if config.main_rounds > 0 \
        else apply_shock(config, 0)
    finals = []
    for agent_id in ids:
        redeemed = redeem(portfolios[agent_id], effective_end.redemption_value)
        reward = q4(reward_tally[agent_id])
        payout = None
        choices = [(r, pair, c) for r, pair, c in lottery_log[agent_id]
                   if c != "ABSTAIN"]
        if choices:
            rng = random.Random(f"{config.rng_seed}:lottery:{agent_id}")
            _, pair, choice = rng.choice(choices)
            lot = pair.left if choice == "LEFT" else pair.right
            outcome_val = lot.outcome_high if rng.random() < lot.p_high \
                else lot.outcome_low
            payout = q4(outcome_val / pair.payout_divisor)
        finals.append(AgentFinal(
            agent_id=agent_id,
            redemption_cash=redeemed.cash,
            forecast_reward_cash=reward,
            final_value=q4(redeemed.cash + reward),
            lottery_payout=payout,
        ))

    memory_out = {}
    for agent_id in ids:
        view = memory.read(agent_id)
        memory_out[agent_id] = {"plans": view.plans, "insights": view.insights,
                                "practice_reflection": view.practice_reflection}

    provenance = {
        "seed": config.rng_seed,
        "roster": [f"{a.agent_id}:{type(a).__name__}" for a in agents],
        "cassettes": sorted({c for a in agents for c in getattr(a, "cassette_ids", ())}),
    }
    return SessionLog(config=config, records=records, final=finals,
                      memory=memory_out, provenance=provenance)
