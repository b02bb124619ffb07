"""Prompt rendering and response parsing for language-model traders.

The templates substitute the economy's parameters; whitespace quirks
(tab runs, trailing spaces, a missing comma in the JSON skeleton) are
load-bearing because rendered prompts are compared byte-for-byte in replay.
Renderers are pure functions of (observation, config).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from typing import TYPE_CHECKING, Union

from .agents import AgentAction, AgentObservation
from .market import Order, Side

if TYPE_CHECKING:
    from .session import SessionConfig

NO_PLANS = "No previous plans to show"
NO_INSIGHTS = "No previous insights to show"
NO_HISTORY = "No previous market history to show"

NO_JSON = "NO_JSON"
MISSING_FIELD = "MISSING_FIELD"
BAD_TYPE = "BAD_TYPE"
BAD_SIDE = "BAD_SIDE"
OUT_OF_BAND = "OUT_OF_BAND"
FORECAST_OUT_OF_RANGE = "FORECAST_OUT_OF_RANGE"
MISSING_FORECAST = "MISSING_FORECAST"


@dataclass(frozen=True)
class ParseFailure:
    reason: str
    detail: str = ""


def trim(value) -> str:
    """Decimal to text without trailing fractional zeros: 107.1000 -> 107.1."""
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    return format(d.normalize(), "f")


def _one_dp(value) -> str:
    return f"{float(value):.1f}"


def _two_dp(value) -> str:
    return f"{float(value):.2f}"


def news_alert(factor: str, dividend_values, redemption_value) -> str:
    word = "doubled" if factor == "DOUBLE" else "halved"
    lo, hi = sorted(dividend_values)
    return (
        f"[News Alert]: The company has recently announced it will now {word} "
        f"all dividends to {_one_dp(lo)}/{_one_dp(hi)}. "
        f"The asset redemption value has now {word} to ${_one_dp(redemption_value)}."
    )


def _horizon_phrase(horizons) -> str:
    parts = []
    for h in horizons:
        if h == 0:
            parts.append("this period")
        elif h == 2:
            parts.append("two periods in advance")
        else:
            parts.append(f"{h} periods in advance")
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + ", and " + parts[-1]


def render_stem(config: "SessionConfig") -> str:
    """The fixed instruction preamble describing the base economy."""
    p = config.practice_rounds
    t = config.main_rounds
    cash = trim(config.initial_cash)
    shares = config.initial_shares
    dlo, dhi = sorted(config.dividend_values)
    dlo_s, dhi_s = _one_dp(dlo), _one_dp(dhi)
    rate = trim(config.interest_rate * 100)
    v = trim(config.redemption_value)
    v3 = trim(3 * config.redemption_value)
    tol = trim(config.forecast_tolerance)
    reward = trim(config.forecast_reward)
    ex_interest = trim(Decimal(120) * config.interest_rate)
    ex_dividend = trim(5 * dlo)
    ex_total = trim(Decimal(120) + Decimal(120) * config.interest_rate + 5 * dlo)
    horizons = _horizon_phrase(config.forecast_horizons)

    return f"""
You are a subject participating in a trading experiment. The experiment will consist of a series of {p} practice trading periods followed by {t} trading periods in which you will have the opportunity to buy or sell shares of an asset that can yield payments in the future. Understanding instructions may help you earn money. If you make good decisions, you might earn a considerable amount of money that will be paid at the end of the experiment.

There are two assets in this experience: cash and stock. You begin with {cash} units of cash and {shares} shares of stock. Stock is traded in a market each period among all of the experimental subjects in units of cash. When you buy stock, the price you agreed to pay is deducted from your amount of cash. When you sell stock, the price you sold at is added to your amount of cash. The reward from holding stock is dividend. Each period, every unit of stock earns a low or high dividend of either {dlo_s} cash or {dhi_s} cash per unit with equal probability. These dividend payments are the same for everyone in all periods. The dividend in each period does not depend on whether the previous dividend was low or high. The reward from holding cash is given by a fixed interest rate of {rate}% each period.

At the end of the {t} periods of trading, each unit of STOCK is automatically converted to {v} CASH. If the market price for round {t} is 20 and you have 3 stocks, you’ll receive 3x{v}={v3} CASH, not 3x20=60 CASH. Then, your experimental CASH units are converted to US dollars at a rate of 200 CASH = $1 US, to determine how much the user will be paid at the end of the experiment. If you buy shares for more than {v} as you get near round {t}, it is possible those shares will be terminated at a value of {v} if you cannot sell them.

Let’s see an example. Suppose at the end of period 7, you have 120 units of CASH and 5 units of STOCK. The dividend that round is {_two_dp(dlo)} per unit of stock. Your new cash amount for period 8 is going to be:

CASH = 120 + (120 x {rate}%) + (5 x {_two_dp(dlo)})
           = 120 + {ex_interest} + {ex_dividend}
           = {ex_total}

Notice that keeping cash will earn a return of {rate}% per period and using cash to buy units of stock will also yield dividend earnings.

For each period, you will be provided with past market and portfolio history (prices, volumes, your filled orders) and you will simultaneously complete the following two tasks:

[ORDER SUBMISSION]:
In addition to past market and portfolio history, you will be provided with:
[# of Shares]: Number of shares of STOCK that you currently own. Each share that you own pays out a dividend at the end of each round. You CANNOT attempt to sell more shares than you own.
[Current Cash]: The amount of CASH that you currently have. Your CASH earns interest that is paid out at the end of each period. You CANNOT attempt to buy shares worth more than the cash you have.
[STOCK Value]: The value of your STOCK at the market price of the last round of play
[Market Price]: This is market clearing price from the last round of play

Using this information, you will submit orders to the market. All orders will be limit orders. For example, a limit order to BUY 1 STOCK @ 15 means that you would like to buy a STOCK at any price of 15 or less. Keep in mind the following points:
- Orders are NOT carried between periods
- SELL order prices must be greater than all BUY order prices + BUY order prices must be less than all SELL order prices
- You can only sell STOCK that you own and purchase STOCK with CASH you already have
- You are not required to submit orders every round and you may submit multiple orders each round
- Depending on market conditions, you may need to cross the spread to get fills on buy/sell orders

[PRICE FORECASTING]:
You will be asked to submit your predictions for the market price {horizons}. In addition to past market and portfolio history, you will be provided with the range in which your prediction should fall. Your prediction should be a non-negative, integer value. If your forecast is within {tol} units of the actual price for each of the forecasted periods, then you will receive {reward} units of cash at the end of the experiment as reward for each correct forecast.

For example, if you forecast the market price of period 1 to be 14 and the actual price is 15, then you will be rewarded for your forecast. However, if the actual price is 18, then you will not receive the reward.

Additionally, during the experiment, you will complete PRACTICE REFLECTION and EXPERIMENT REFLECTION:

[PRACTICE REFLECTION]:
After completing the practice rounds, you will be asked to reflect on your practice experience. This reflection will be accessible to future versions of yourself during the main experiment. This can be helpful in passing along lessons learned to future versions of yourself.

[EXPERIMENT REFLECTION]:
At the end of the experiment, you will be asked to reflect on your experience, including any insight and/or strategies that you may have developed.

To summarize, here are the key points:
- You will trade one STOCK for {t} trading periods using CASH
- You start with {cash} units of CASH and {shares} STOCKS
- Each period, STOCK provides a dividend of either {dlo_s} or {dhi_s}, while interest provides {rate}% reward
- You will complete each of the aforementioned tasks
- After the last trading round ({t}), all of your shares are converted to {v} CASH each. If you buy shares for more than {v} as you get near round {t}, it is possible those shares will be terminated at {v} if you cannot sell them. You will keep any CASH you have at the end of the experiment.
- You are trading against other subjects in the experiment who may be susceptible to the same influences as you and may not always make optimal decisions. They, however, are also trying to maximize their earnings.
- Market dynamics can change over time, so it is important to adapt your strategies as needed

"""


def render_market_history(obs: AgentObservation) -> str:
    text = ""
    seen_practice = False
    main_started = False
    for entry in obs.market_history:
        if entry.phase == "PRACTICE":
            seen_practice = True
            round_id = f"Practice Round {entry.round}"
        else:
            if not main_started and seen_practice:
                text += "\n        [Start Main Experiment Rounds]\n        "
            main_started = True
            round_id = f"Round {entry.round}"
        text += f"{round_id}:\n"
        text += f"""
        * Market + Portfolio Data:
            - Market price: {entry.price}
            - Market volume: {entry.volume}
            - # of shares owned: {entry.shares}
            - Current cash: {trim(entry.cash)}
            - Stock value: {trim(entry.stock_value)}
            - Dividend earned: {trim(entry.dividend_earned)}
            - Interest earned: {trim(entry.interest_earned)}
            - Submitted orders:
            """
        if not entry.orders:
            text += """
                * No submitted orders
                """
        for o in entry.orders:
            text += f"""
                * {o.side.value} {o.quantity} shares at {o.limit_price} per share
                """
        text += """
            - Executed trades:
            """
        if not entry.fills:
            text += """
                -* No executed trades
                """
        for f in entry.fills:
            text += f"""
                -* {f.side.value} {f.quantity} shares at {f.price} per share
                """
        text += """
        * Forecasts:"""
        targets = sorted((entry.round + h, v) for h, v in entry.forecasts.items())
        for target, value in targets:
            text += f"\n            - Round {target} price forecast: {value}"
        text += "\n"
    return text


def _round_label(obs: AgentObservation) -> str:
    if obs.phase == "PRACTICE":
        return f"Practice Round {obs.round}"
    return f"Round {obs.round}"


def render_portfolio(obs: AgentObservation) -> str:
    return f"""
        * Your Portfolio ({_round_label(obs)}):
            - Market price (Previous Round): {obs.previous_price}
            - Buyback price: {trim(obs.redemption_value)}
            - # of shares owned: {obs.shares}
            - Current cash: {trim(obs.cash)}
            - Stock value: {trim(obs.stock_value)}
        """


def render_forecast_options(obs: AgentObservation) -> str:
    parts = []
    for h in obs.forecast_horizons:
        parts.append(
            '{\n                "round": %d,\n'
            '                "min_value": 0,\n'
            '                "max_value": %d\n'
            '                "forecasted_price" : "<fill in here>"\n'
            "            }" % (obs.round + h, obs.forecast_upper_bound)
        )
    return "[" + ", ".join(parts) + "]"


def _memory_blocks(obs: AgentObservation) -> tuple[str, str]:
    plans = obs.plans if obs.plans else NO_PLANS
    insights = obs.insights if obs.insights else NO_INSIGHTS
    return plans, insights


def _history_block(obs: AgentObservation) -> str:
    history = render_market_history(obs)
    if obs.prior_history:
        history = obs.prior_history + history
    return history if history else NO_HISTORY


def render_prompt(obs: AgentObservation, config: "SessionConfig") -> str:
    """Full order-submission + forecasting prompt for one agent-round."""
    plans, insights = _memory_blocks(obs)
    history = _history_block(obs)
    portfolio = render_portfolio(obs)
    options = render_forecast_options(obs)
    lo, hi = obs.price_band
    tol = trim(config.forecast_tolerance)

    is_main = obs.phase == "MAIN"
    show_practice_blocks = is_main and obs.practice_rounds_total > 0
    if show_practice_blocks:
        reflection_block = (
            "\nHere is your practice round reflection:"
            "\nFilename: PRACTICE REFLECTION (read-only)"
            "\n+++++++++++++++++++++"
            f"\n{obs.practice_reflection}"
            "\n+++++++++++++++++++++\n"
        )
        disclaimer_block = (
            "\nPRACTICE ROUND HISTORY/REFLECTION SHOULD ONLY BE USED TO LEARN THE "
            "EXPERIMENT SETTING AND MAY NOT REFLECT MARKET CONDITIONS IN THE MAIN "
            "EXPERIMENT.\n"
        )
    else:
        reflection_block = ""
        disclaimer_block = ""
    news_block = f"\n{obs.news}\n" if obs.news else ""
    if is_main:
        rounds_left = str(obs.main_rounds_total - obs.round)
    else:
        rounds_left = f"{obs.practice_rounds_total - obs.round}practice"

    return render_stem(config) + f"""
You will now complete the ORDER SUBMISSION + PRICE FORECASTING task. 

Now let me tell you about the resources you have for this task. First, here are some files that you wrote the last time I came to you with a task. Here is a high-level description of what these files contain:
\t\t
   - PLANS.txt: File where you can write your plans for what
    strategies to test/use during the next few rounds.
    - INSIGHTS.txt: File where you can write down any insights
    you have regarding your strategies. Be detailed and precise
    but keep things succinct and don't repeat yourself.

These files are passed between stages and rounds so try to focus on general strategies/insights as opposed to only something stage-specific. Now, I will show you the current content of these files.\t\t\t\t
\t\t\t\t\t
Filename: PLANS.txt
+++++++++++++++++++++
{plans}
+++++++++++++++++++++

\t\t\t\t\t
Filename: INSIGHTS.txt
+++++++++++++++++++++
{insights}
+++++++++++++++++++++

Here is the game history that you have access to:
{reflection_block}
Filename: MARKET DATA (read-only)
+++++++++++++++++++++
{history}
+++++++++++++++++++++

Here is your current portfolio information:
Filename: CURRENT PORTFOLIO (read-only)
+++++++++++++++++++++
{portfolio}
+++++++++++++++++++++
{news_block}{disclaimer_block}
Here is some key information to consider during your price forecasting:
- Make sure to submit a forecast within the specified range for each forecast input
- Use your previous history access to make informed decisions
- Remember that accurate (within {tol} units) forecasts will earn you a reward at the end of the experiment

Here is some key information to consider during your order submission:
- You can only sell STOCK that you own and purchase STOCK with CASH you already have
- You are not required to submit orders every round and you may submit multiple orders each round for one or both sides
- Limit prices this round MUST be integer values between {lo} and {hi}. It is important that they are integer values within this range
- Make use of the provided history and your own strategies to make informed decisions
- Market dynamics can change over time, and so it might be necessary to adapt your strategies as needed
- Depending on market conditions, you may need to be aggressive or conservative in your trading strategies to maximize your earnings

Now you have all the necessary information to complete the task. Remember YOUR TOP PRIORITY is to maximize your total earnings at the END of the {obs.main_rounds_total} main experiment rounds. You have {rounds_left} rounds remaining.

First, carefully read through the information provided. Now, fill in the below JSON template to respond. YOU MUST respond in this exact JSON format.
\t\t\t\t\t
{{
    "observations_and_thoughts": "<fill in here>",
    "new_content": {{
        "PLANS.txt": "<fill in here>",
        "INSIGHTS.txt": "<fill in here>"
        "price_forecasts": {options}
    }},
    "submitted_orders": [
        {{
            "order_type": "<BUY or SELL>",
            "quantity": <# of STOCK units>,
            "limit_price": <LIMIT_PRICE>
        }},
        {{
            "order_type": "<BUY or SELL>",
            "quantity": <# of STOCK units>,
            "limit_price": <LIMIT_PRICE>
        }}
        // Add more or less orders as needed
    ]
}}
        """


def render_practice_reflection_prompt(obs: AgentObservation,
                                      config: "SessionConfig") -> str:
    plans, insights = _memory_blocks(obs)
    history = _history_block(obs)
    portfolio = render_portfolio(obs)
    trade_in = trim(obs.shares * config.redemption_value)

    return render_stem(config) + f"""
You will now complete the PRACTICE REFLECTION stage. 

Now let me tell you about the resources you have for this task. First, here are some files that you wrote the last time I came to you with a task. Here is a high-level description of what these files contain:

   - PLANS.txt: File where you can write your plans for what
    strategies to test/use during the next few rounds.
    - INSIGHTS.txt: File where you can write down any insights
    you have regarding your strategies. Be detailed and precise
    but keep things succinct and don't repeat yourself.

These files are passed between stages and rounds so try to focus on general strategies/insights as opposed to only something stage-specific. Now, I will show you the current content of these files.\t\t\t
\t\t\t\t\t
Filename: PLANS.txt
+++++++++++++++++++++
{plans}
+++++++++++++++++++++

\t\t\t\t\t
Filename: INSIGHTS.txt
+++++++++++++++++++++
{insights}
+++++++++++++++++++++

Here is the game history that you have access to:

Filename: MARKET DATA (read-only)
+++++++++++++++++++++
{history}
+++++++++++++++++++++

Here is your current portfolio information:
Filename: CURRENT PORTFOLIO (read-only)
+++++++++++++++++++++
{portfolio}
+++++++++++++++++++++

Here is some key information to consider during your reflection:
- STOCK Trade-in Value: {_two_dp(config.redemption_value)} per share
- The market price in the last round was {obs.previous_price} per share
- Number of Shares of STOCK You Own: {obs.shares}
- Tota Trade-in Amount: {trade_in}
- Consider whether you are willing to buy STOCK at this price considering the trade-in amount after the last round

Now you have all the necessary information to complete the task. Remember YOUR TOP PRIORITY is to maximize your total earnings (STOCK value @ buyback price + CASH earnings + forecast winnings + lottery winnings) at the END of the {obs.main_rounds_total} experiment rounds.
First, carefully read through the information provided. Then, fill in the below JSON template to respond. YOU MUST respond in this exact JSON format.
\t\t\t\t\t
{{
    "new_content": {{
        "practice_reflection": "<fill in here>"
    }}
}}
        """


def render_retry_prompt(previous_prompt: str, failure: ParseFailure) -> str:
    detail = f" ({failure.detail})" if failure.detail else ""
    return (
        previous_prompt
        + f"\n\nYour previous response was not usable: {failure.reason}{detail}."
        + "\nYou MUST respond with only the JSON object in the exact format"
        + " specified above, with integer limit prices inside the stated range"
        + " and integer forecasts inside the stated range.\n"
    )


def _extract_json(raw: str):
    """Best balanced JSON object in raw text, or None.

    Prefers the first candidate carrying a "new_content" key so stray
    braces in surrounding prose cannot shadow the actual payload.
    """
    fallback = None
    start = raw.find("{")
    while start != -1:
        depth = 0
        in_str = False
        esc = False
        for i in range(start, len(raw)):
            c = raw[i]
            if in_str:
                if esc:
                    esc = False
                elif c == "\\":
                    esc = True
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        data = json.loads(raw[start:i + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(data, dict) and "new_content" in data:
                        return data
                    if fallback is None:
                        fallback = data
                    break
        start = raw.find("{", start + 1)
    return fallback


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_response(raw: str, obs: AgentObservation) -> Union[AgentAction, ParseFailure]:
    """Extract and check the action JSON; failures carry a reason for the retry."""
    data = _extract_json(raw)
    if not isinstance(data, dict):
        return ParseFailure(NO_JSON, "no JSON object found in the response")

    thoughts = data.get("observations_and_thoughts")
    if thoughts is None:
        return ParseFailure(MISSING_FIELD, "observations_and_thoughts")
    if not isinstance(thoughts, str):
        return ParseFailure(BAD_TYPE, "observations_and_thoughts must be text")

    new_content = data.get("new_content")
    if not isinstance(new_content, dict):
        return ParseFailure(MISSING_FIELD, "new_content")
    plans = new_content.get("PLANS.txt")
    insights = new_content.get("INSIGHTS.txt")
    if plans is None or insights is None:
        return ParseFailure(MISSING_FIELD, "PLANS.txt and INSIGHTS.txt")
    if not isinstance(plans, str) or not isinstance(insights, str):
        return ParseFailure(BAD_TYPE, "PLANS.txt and INSIGHTS.txt must be text")

    raw_forecasts = new_content.get("price_forecasts")
    if not isinstance(raw_forecasts, list):
        return ParseFailure(MISSING_FIELD, "price_forecasts")
    by_target = {}
    for item in raw_forecasts:
        if not isinstance(item, dict) or not _is_int(item.get("round")):
            return ParseFailure(BAD_TYPE, "each price_forecasts entry needs an integer round")
        value = item.get("forecasted_price")
        if value is None:
            return ParseFailure(MISSING_FIELD, "forecasted_price")
        if not _is_int(value):
            return ParseFailure(BAD_TYPE, "forecasted_price must be an integer")
        by_target[item["round"]] = value
    forecasts = {}
    for h in obs.forecast_horizons:
        target = obs.round + h
        if target not in by_target:
            return ParseFailure(MISSING_FORECAST, f"no forecast for round {target}")
        value = by_target[target]
        if not 0 <= value <= obs.forecast_upper_bound:
            return ParseFailure(
                FORECAST_OUT_OF_RANGE,
                f"forecast {value} for round {target} outside [0, {obs.forecast_upper_bound}]")
        forecasts[h] = value

    raw_orders = data.get("submitted_orders")
    if not isinstance(raw_orders, list):
        return ParseFailure(MISSING_FIELD, "submitted_orders")
    lo, hi = obs.price_band
    orders = []
    for item in raw_orders:
        if not isinstance(item, dict):
            return ParseFailure(BAD_TYPE, "each submitted_orders entry must be an object")
        side = item.get("order_type")
        if side not in ("BUY", "SELL"):
            return ParseFailure(BAD_SIDE, f"order_type must be BUY or SELL, got {side!r}")
        qty = item.get("quantity")
        limit = item.get("limit_price")
        if not _is_int(qty) or not _is_int(limit):
            return ParseFailure(BAD_TYPE, "quantity and limit_price must be integers")
        if not lo <= limit <= hi:
            return ParseFailure(OUT_OF_BAND, f"limit_price {limit} outside [{lo}, {hi}]")
        orders.append(Order(obs.agent_id, Side(side), qty, limit))

    return AgentAction(orders=tuple(orders), forecasts=forecasts, plans=plans,
                       insights=insights, observations_and_thoughts=thoughts)


def parse_reflection(raw: str) -> Union[str, ParseFailure]:
    data = _extract_json(raw)
    if not isinstance(data, dict):
        return ParseFailure(NO_JSON, "no JSON object found in the response")
    new_content = data.get("new_content")
    if not isinstance(new_content, dict):
        return ParseFailure(MISSING_FIELD, "new_content")
    text = new_content.get("practice_reflection")
    if text is None:
        return ParseFailure(MISSING_FIELD, "practice_reflection")
    if not isinstance(text, str):
        return ParseFailure(BAD_TYPE, "practice_reflection must be text")
    return text


def synthetic_response(action: AgentAction, obs: AgentObservation) -> str:
    """A template-conformant response encoding the action (stub/test helper)."""
    payload = {
        "observations_and_thoughts": action.observations_and_thoughts,
        "new_content": {
            "PLANS.txt": action.plans if action.plans is not None else "",
            "INSIGHTS.txt": action.insights if action.insights is not None else "",
            "price_forecasts": [
                {
                    "round": obs.round + h,
                    "min_value": 0,
                    "max_value": obs.forecast_upper_bound,
                    "forecasted_price": action.forecasts[h],
                }
                for h in obs.forecast_horizons
            ],
        },
        "submitted_orders": [
            {"order_type": o.side.value, "quantity": o.quantity,
             "limit_price": o.limit_price}
            for o in action.orders
        ],
    }
    return json.dumps(payload, indent=2)
