"""Session directory serialization.

Layout (all content deterministic, no wall-clock anywhere):

    manifest.json       config + provenance + sampling parameters
    session_log.jsonl   one canonical-JSON line per round (RoundRecord fields)
    prices.csv          main-round price path: round,price,volume,fundamental_value
    summary.json        caller-computed metrics (final values, MSE, ...)
    memory/<agent>/     final PLANS.txt / INSIGHTS.txt / PRACTICE_REFLECTION.txt

Canonical JSON: sorted keys, compact separators, ascii-only, one trailing
newline. Decimals serialize as their exact digit strings, enums as values,
so a rerun of the same seed reproduces every byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from decimal import Decimal
from enum import Enum
from pathlib import Path

from . import __version__
from .market import ClearingOutcome, Fill, Order, RejectReason, Side
from .session import (
    AgentFinal,
    AgentRoundRecord,
    EffectiveParams,
    Lottery,
    LotteryPair,
    MaturedForecast,
    RoundRecord,
    SessionConfig,
    SessionLog,
    ShockSpec,
)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
SESSION_LOG_NAME = "session_log.jsonl"
PRICES_NAME = "prices.csv"
SUMMARY_NAME = "summary.json"
MEMORY_DIR = "memory"

MEMORY_FILENAMES = {"plans": "PLANS.txt", "insights": "INSIGHTS.txt",
                    "practice_reflection": "PRACTICE_REFLECTION.txt"}


def _default(obj):
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"not serializable: {type(obj).__name__}")


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True, default=_default) + "\n"


def session_log_text(log: SessionLog) -> str:
    return "".join(canonical_json(asdict(record)) for record in log.records)


def manifest_data(log: SessionLog, sampling: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "package": "marketlab",
        "package_version": __version__,
        "config": asdict(log.config),
        "provenance": log.provenance,
        "final": [asdict(f) for f in log.final],
        "sampling": sampling or {},
    }


def prices_csv_text(log: SessionLog) -> str:
    lines = ["round,price,volume,fundamental_value"]
    for record in log.records:
        if record.phase != "MAIN":
            continue
        lines.append(f"{record.round},{record.clearing.price},"
                     f"{record.clearing.volume},{record.fundamental!r}")
    return "\n".join(lines) + "\n"


def write_session(session_dir, log: SessionLog, summary: dict | None = None,
                  sampling: dict | None = None) -> Path:
    """Write the full directory; returns its path. Caller decides overwrite."""
    root = Path(session_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / MANIFEST_NAME).write_text(
        canonical_json(manifest_data(log, sampling)), encoding="utf-8")
    (root / SESSION_LOG_NAME).write_text(session_log_text(log), encoding="utf-8")
    (root / PRICES_NAME).write_text(prices_csv_text(log), encoding="utf-8")
    if summary is not None:
        (root / SUMMARY_NAME).write_text(canonical_json(summary),
                                         encoding="utf-8")
    for agent_id, texts in log.memory.items():
        agent_dir = root / MEMORY_DIR / agent_id
        agent_dir.mkdir(parents=True, exist_ok=True)
        for key, filename in MEMORY_FILENAMES.items():
            (agent_dir / filename).write_text(texts.get(key, ""),
                                              encoding="utf-8")
    return root


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def read_manifest(session_dir) -> dict:
    return json.loads((Path(session_dir) / MANIFEST_NAME).read_text(
        encoding="utf-8"))


def read_prices(session_dir) -> list[dict]:
    """Rows of the price CSV with numeric fields restored."""
    text = (Path(session_dir) / PRICES_NAME).read_text(encoding="utf-8")
    lines = text.strip().split("\n")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        row = dict(zip(header, parts))
        rows.append({
            "round": int(row["round"]),
            "price": int(row["price"]),
            "volume": int(row["volume"]),
            "fundamental_value": float(row["fundamental_value"]),
        })
    return rows


def _dec(value) -> Decimal:
    return Decimal(str(value))


def _lottery(data: dict) -> Lottery:
    return Lottery(outcome_high=_dec(data["outcome_high"]),
                   outcome_low=_dec(data["outcome_low"]),
                   p_high=float(data["p_high"]))


def config_from_dict(data: dict) -> SessionConfig:
    """Rebuild SessionConfig from its manifest / config-file representation."""
    shock = data.get("shock")
    risk = data.get("risk_elicitation")
    kwargs = {
        "n_agents": int(data["n_agents"]),
        "shock": ShockSpec(round=int(shock["round"]),
                           factor=shock["factor"]) if shock else None,
        "risk_elicitation": tuple(
            (int(rnd), LotteryPair(left=_lottery(pair["left"]),
                                   right=_lottery(pair["right"]),
                                   payout_divisor=_dec(pair["payout_divisor"])))
            for rnd, pair in risk) if risk else None,
    }
    for name in ("main_rounds", "practice_rounds", "initial_shares",
                 "order_band_halfwidth", "max_orders_per_round", "rng_seed",
                 "initial_reference_price"):
        if name in data:
            kwargs[name] = int(data[name])
    for name in ("initial_cash", "interest_rate", "redemption_value",
                 "forecast_tolerance", "forecast_reward"):
        if name in data:
            kwargs[name] = _dec(data[name])
    if "dividend_values" in data:
        kwargs["dividend_values"] = tuple(_dec(v)
                                          for v in data["dividend_values"])
    if "forecast_horizons" in data:
        kwargs["forecast_horizons"] = tuple(int(h)
                                            for h in data["forecast_horizons"])
    if "forecast_upper_bound_rule" in data:
        kwargs["forecast_upper_bound_rule"] = data["forecast_upper_bound_rule"]
    return SessionConfig(**kwargs)


def _order(data: dict) -> Order:
    return Order(agent_id=data["agent_id"], side=Side(data["side"]),
                 quantity=data["quantity"], limit_price=data["limit_price"])


def _fill(data: dict) -> Fill:
    return Fill(agent_id=data["agent_id"], side=Side(data["side"]),
                quantity=data["quantity"], price=data["price"])


def _agent_record(data: dict) -> AgentRoundRecord:
    return AgentRoundRecord(
        agent_id=data["agent_id"],
        submitted=[_order(o) for o in data["submitted"]],
        accepted=[_order(o) for o in data["accepted"]],
        rejected=[(_order(o), RejectReason(reason))
                  for o, reason in data["rejected"]],
        fills=[_fill(f) for f in data["fills"]],
        cash_before=_dec(data["cash_before"]),
        cash_after=_dec(data["cash_after"]),
        shares_before=data["shares_before"],
        shares_after=data["shares_after"],
        interest_earned=_dec(data["interest_earned"]),
        dividend_earned=_dec(data["dividend_earned"]),
        forecasts={int(h): v for h, v in data["forecasts"].items()},
        matured=[MaturedForecast(**m) for m in data["matured"]],
        plans=data["plans"],
        insights=data["insights"],
        observations_and_thoughts=data["observations_and_thoughts"],
        lottery=data.get("lottery"),
        incident=data.get("incident"))


def _round_record(data: dict) -> RoundRecord:
    clearing = data["clearing"]
    effective = data["effective"]
    return RoundRecord(
        phase=data["phase"],
        round=data["round"],
        clearing=ClearingOutcome(price=clearing["price"],
                                 volume=clearing["volume"],
                                 fills=tuple(_fill(f)
                                             for f in clearing["fills"]),
                                 crossed=clearing["crossed"]),
        dividend_draw=_dec(data["dividend_draw"]),
        effective=EffectiveParams(
            dividend_values=tuple(_dec(v)
                                  for v in effective["dividend_values"]),
            redemption_value=_dec(effective["redemption_value"])),
        fundamental=data["fundamental"],
        band=tuple(data["band"]),
        forecast_bound=data["forecast_bound"],
        agents=[_agent_record(a) for a in data["agents"]])


def _final(data: dict) -> AgentFinal:
    payout = data.get("lottery_payout")
    return AgentFinal(agent_id=data["agent_id"],
                      redemption_cash=_dec(data["redemption_cash"]),
                      forecast_reward_cash=_dec(data["forecast_reward_cash"]),
                      final_value=_dec(data["final_value"]),
                      lottery_payout=None if payout is None else _dec(payout))


def load_session(session_dir) -> SessionLog:
    """Rehydrate a written session directory into a SessionLog.

    Round-trips exactly: session_log_text(load_session(d)) matches the bytes
    on disk for any directory produced by write_session.
    """
    root = Path(session_dir)
    manifest = read_manifest(root)
    records = [_round_record(row) for row in
               read_jsonl(root / SESSION_LOG_NAME)]
    memory: dict[str, dict[str, str]] = {}
    memory_root = root / MEMORY_DIR
    if memory_root.is_dir():
        for agent_dir in sorted(memory_root.iterdir()):
            if not agent_dir.is_dir():
                continue
            memory[agent_dir.name] = {
                key: (agent_dir / filename).read_text(encoding="utf-8")
                if (agent_dir / filename).exists() else ""
                for key, filename in MEMORY_FILENAMES.items()}
    return SessionLog(config=config_from_dict(manifest["config"]),
                      records=records,
                      final=[_final(f) for f in manifest["final"]],
                      memory=memory,
                      provenance=manifest["provenance"])
