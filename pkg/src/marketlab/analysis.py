"""Market metrics and the forecast-rationality test battery.

Inputs are session logs (in-memory objects); cash quantities convert to
float at this boundary. Three diagnostics run per agent and horizon on the
matured-forecast error panel (error = realized price minus forecast):

  unbiasedness          one-sample t of mean error = 0
  zero_autocorr         OLS of E_t on E_{t-1} over consecutive-round pairs
  error_forecast_corr   OLS of E on the forecast level

Each yields PASS (fail-to-reject at alpha = 0.05), REJECT, or NOT_EVALUATED
when the sample is too small or the regressor is degenerate; NOT_EVALUATED
agents leave the pass-proportion denominators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from statistics import fmean, median, pvariance
from typing import Mapping, Optional, Sequence

from .session import SessionLog
from .stats import OLSResult, one_sample_t, ols_slope_test

ALPHA = 0.05
MIN_MEAN_SAMPLES = 5
MIN_REGRESSION_PAIRS = 6

UNDEFINED = "UNDEFINED"

PASS = "PASS"
REJECT = "REJECT"
NOT_EVALUATED = "NOT_EVALUATED"

TEST_NAMES = ("unbiasedness", "zero_autocorr", "error_forecast_corr")


def mse_fundamental(prices: Sequence[float], fundamentals: Sequence[float]) -> float:
    if not prices or len(prices) != len(fundamentals):
        raise ValueError("need equal-length non-empty series")
    return fmean((float(p) - float(f)) ** 2 for p, f in zip(prices, fundamentals))


def mispricing(prices: Sequence[float], fundamentals: Sequence[float]) -> list[float]:
    if len(prices) != len(fundamentals):
        raise ValueError("need equal-length series")
    return [float(p) - float(f) for p, f in zip(prices, fundamentals)]


def pcc(a: Sequence[float], b: Sequence[float]):
    """Pearson correlation; UNDEFINED when either series is constant."""
    if len(a) != len(b) or len(a) < 2:
        raise ValueError("need equal-length series of at least 2 points")
    xs = [float(v) for v in a]
    ys = [float(v) for v in b]
    x_mean, y_mean = fmean(xs), fmean(ys)
    sxx = sum((v - x_mean) ** 2 for v in xs)
    syy = sum((v - y_mean) ** 2 for v in ys)
    if sxx == 0.0 or syy == 0.0:
        return UNDEFINED
    sxy = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


def _main_records(log: SessionLog):
    return [r for r in log.records if r.phase == "MAIN"]


def pv_variance(log: SessionLog) -> dict:
    """Cross-agent variance of portfolio value (cash + shares at round price)."""
    records = _main_records(log)
    if not records or len(records[0].agents) < 2:
        raise ValueError("need main rounds and at least 2 agents")
    per_round = []
    for record in records:
        values = [float(a.cash_after) + a.shares_after * record.clearing.price
                  for a in record.agents]
        per_round.append(pvariance(values))
    final_values = [float(f.final_value) for f in log.final]
    return {
        "per_round": per_round,
        "mean": fmean(per_round),
        "final": pvariance(final_values),
    }


@dataclass(frozen=True)
class ErrorEntry:
    agent_id: str
    made_round: int
    horizon: int
    forecast: int
    error: float  # realized price - forecast; positive = underprediction


def forecast_errors(log: SessionLog) -> list[ErrorEntry]:
    panel = []
    for record in _main_records(log):
        for agent_record in record.agents:
            for matured in agent_record.matured:
                panel.append(ErrorEntry(
                    agent_id=agent_record.agent_id,
                    made_round=matured.made_round,
                    horizon=matured.horizon,
                    forecast=matured.value,
                    error=float(record.clearing.price - matured.value),
                ))
    return panel


def panel_slice(panel: Sequence[ErrorEntry], agent_id: str,
                horizon: int) -> list[ErrorEntry]:
    return sorted((e for e in panel
                   if e.agent_id == agent_id and e.horizon == horizon),
                  key=lambda e: e.made_round)


@dataclass(frozen=True)
class TestOutcome:
    status: str
    coefficient: Optional[float] = None  # mean error, or the slope under test
    statistic: Optional[float] = None
    p_value: Optional[float] = None
    n: int = 0

    @property
    def evaluated(self) -> bool:
        return self.status != NOT_EVALUATED


def _verdict(p_value: float) -> str:
    return PASS if p_value > ALPHA else REJECT


def test_unbiasedness(errors: Sequence[float]) -> TestOutcome:
    if len(errors) < MIN_MEAN_SAMPLES:
        return TestOutcome(NOT_EVALUATED, n=len(errors))
    result = one_sample_t(list(errors))
    return TestOutcome(_verdict(result.p_value), coefficient=result.mean,
                       statistic=result.statistic, p_value=result.p_value,
                       n=len(errors))


def _slope_outcome(result: OLSResult, n_pairs: int) -> TestOutcome:
    return TestOutcome(_verdict(result.p_value), coefficient=result.slope,
                       statistic=result.t_statistic, p_value=result.p_value,
                       n=n_pairs)


def test_zero_autocorr(errors_by_round: Mapping[int, float]) -> TestOutcome:
    """Regress E_t on E_{t-1}; only consecutive made-rounds form pairs."""
    pairs = [(errors_by_round[r - 1], errors_by_round[r])
             for r in sorted(errors_by_round) if r - 1 in errors_by_round]
    if len(pairs) < MIN_REGRESSION_PAIRS:
        return TestOutcome(NOT_EVALUATED, n=len(pairs))
    lagged = [p[0] for p in pairs]
    current = [p[1] for p in pairs]
    try:
        result = ols_slope_test(lagged, current)
    except ValueError:  # constant regressor
        return TestOutcome(NOT_EVALUATED, n=len(pairs))
    return _slope_outcome(result, len(pairs))


def test_error_forecast_corr(pairs: Sequence[tuple[float, float]]) -> TestOutcome:
    """Regress the error on the forecast level it came from."""
    if len(pairs) < MIN_REGRESSION_PAIRS:
        return TestOutcome(NOT_EVALUATED, n=len(pairs))
    forecasts = [float(f) for f, _ in pairs]
    errors = [float(e) for _, e in pairs]
    try:
        result = ols_slope_test(forecasts, errors)
    except ValueError:
        return TestOutcome(NOT_EVALUATED, n=len(pairs))
    return _slope_outcome(result, len(pairs))


def evaluate_agent_horizon(panel: Sequence[ErrorEntry], agent_id: str,
                           horizon: int) -> dict[str, TestOutcome]:
    entries = panel_slice(panel, agent_id, horizon)
    errors = [e.error for e in entries]
    by_round = {e.made_round: e.error for e in entries}
    pairs = [(e.forecast, e.error) for e in entries]
    return {
        "unbiasedness": test_unbiasedness(errors),
        "zero_autocorr": test_zero_autocorr(by_round),
        "error_forecast_corr": test_error_forecast_corr(pairs),
    }


@dataclass
class RationalityReport:
    # agent -> horizon -> test -> outcome
    outcomes: dict[str, dict[int, dict[str, TestOutcome]]]
    # model -> test -> horizon -> {pass_fraction, n_pass, n_evaluated, n_not_evaluated}
    proportions: dict[str, dict[str, dict[int, dict]]]
    # model -> test -> mean pass fraction across horizons with any evaluated agent
    horizon_average: dict[str, dict[str, float]]


def aggregate_report(outcomes: Mapping[str, Mapping[int, Mapping[str, TestOutcome]]],
                     model_of: Optional[Mapping[str, str]] = None) -> RationalityReport:
    model_of = model_of or {}
    horizons = sorted({h for by_h in outcomes.values() for h in by_h})
    models = sorted({model_of.get(a, "ALL") for a in outcomes})

    proportions: dict = {}
    for model in models:
        agents = [a for a in outcomes if model_of.get(a, "ALL") == model]
        if not agents:
            continue
        proportions[model] = {}
        for test in TEST_NAMES:
            proportions[model][test] = {}
            for h in horizons:
                evaluated = [outcomes[a][h][test] for a in agents
                             if h in outcomes[a]
                             and outcomes[a][h][test].evaluated]
                skipped = sum(1 for a in agents
                              if h in outcomes[a]
                              and not outcomes[a][h][test].evaluated)
                n_pass = sum(1 for o in evaluated if o.status == PASS)
                proportions[model][test][h] = {
                    "pass_fraction": (n_pass / len(evaluated)) if evaluated
                    else None,
                    "n_pass": n_pass,
                    "n_evaluated": len(evaluated),
                    "n_not_evaluated": skipped,
                }

    horizon_average = {}
    for model, by_test in proportions.items():
        horizon_average[model] = {}
        for test, by_h in by_test.items():
            fractions = [row["pass_fraction"] for row in by_h.values()
                         if row["pass_fraction"] is not None]
            horizon_average[model][test] = fmean(fractions) if fractions else None

    return RationalityReport(outcomes=dict(outcomes), proportions=proportions,
                             horizon_average=horizon_average)


def rationality_battery(log: SessionLog,
                        model_of: Optional[Mapping[str, str]] = None
                        ) -> RationalityReport:
    panel = forecast_errors(log)
    agents = sorted({e.agent_id for e in panel})
    horizons = sorted({e.horizon for e in panel})
    outcomes = {a: {h: evaluate_agent_horizon(panel, a, h) for h in horizons}
                for a in agents}
    return aggregate_report(outcomes, model_of)


def report_rows(report: RationalityReport) -> list[dict]:
    """Flat rows (model, test, horizon, ...) for CSV export."""
    rows = []
    for model, by_test in report.proportions.items():
        for test, by_h in by_test.items():
            for h, cells in sorted(by_h.items()):
                rows.append({"model": model, "test": test, "horizon": h,
                             **cells})
    return rows


def mean_median_forecasts(log: SessionLog, made_round: int,
                          horizon: int) -> dict:
    values = []
    for record in _main_records(log):
        if record.round != made_round:
            continue
        for agent_record in record.agents:
            if horizon in agent_record.forecasts:
                values.append(agent_record.forecasts[horizon])
    if not values:
        raise ValueError(f"no forecasts at round {made_round} horizon {horizon}")
    return {"mean": fmean(values), "median": float(median(values))}


def bundled_reference_path() -> str:
    """Path of the packaged reference price series.

    A synthetic stand-in: the seed-2 majority-momentum session's main price
    path (boom to 31, bust to 13). Useful as the --reference argument when
    no external benchmark series is at hand.
    """
    return str(resources.files("marketlab").joinpath("data", "reference_prices.csv"))


def market_metrics(log: SessionLog,
                   reference_prices: Optional[Sequence[float]] = None) -> dict:
    """Scalar session summary (the session directory's summary.json body)."""
    records = _main_records(log)
    if not records:
        raise ValueError("no main rounds to summarize")
    prices = [r.clearing.price for r in records]
    fundamentals = [r.fundamental for r in records]
    metrics = {
        "rounds": len(records),
        "mean_price": fmean(prices),
        "peak_price": max(prices),
        "trough_price": min(prices),
        "total_volume": sum(r.clearing.volume for r in records),
        "mse_fundamental": mse_fundamental(prices, fundamentals),
        "mean_abs_mispricing": fmean(abs(m) for m in
                                     mispricing(prices, fundamentals)),
        "final_values": {f.agent_id: str(f.final_value) for f in log.final},
    }
    if len(log.final) >= 2:
        pv = pv_variance(log)
        metrics["pv_variance_mean"] = pv["mean"]
        metrics["pv_variance_final"] = pv["final"]
    if reference_prices is not None:
        n = min(len(prices), len(reference_prices))
        metrics["pcc_reference"] = pcc(prices[:n], list(reference_prices)[:n])
    return metrics
