"""Operator entry point: run sessions, analyze them, export text, verify replays.

Subcommands:

    run            simulate one session (or a parallel batch) into an output
                   directory: manifest, round log, price CSV, summary, memory
    analyze        metrics + rationality CSVs for one or more session dirs
    export-text    plans/insights/reflection documents as one CSV
    replay-verify  re-run a recorded session offline and byte-compare the log

Exit codes: 0 success, 2 configuration error, 3 transport failure,
4 replay mismatch. Existing outputs are only touched with --overwrite.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from .agents import FundamentalistAgent, MomentumAgent, NoiseAgent
from .analysis import (
    UNDEFINED,
    aggregate_report,
    evaluate_agent_horizon,
    forecast_errors,
    market_metrics,
    rationality_battery,
    report_rows,
)
from .gateway import (
    Cassette,
    CassetteMismatch,
    CassetteMode,
    ProviderProfile,
    TransportError,
)
from .llm import LLMAgent
from .persist import (
    SESSION_LOG_NAME,
    canonical_json,
    config_from_dict,
    load_session,
    read_manifest,
    session_log_text,
    write_session,
)
from .session import run_session

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_REPLAY = 4

CASSETTE_NAME = "cassette.jsonl"
RUN_MANIFEST_NAME = "run_manifest.json"

STUB_PROFILES = {
    "stub-value": ProviderProfile(name="stub-value", endpoint="stub://value",
                                  model="stub-1"),
    "stub-hold": ProviderProfile(name="stub-hold", endpoint="stub://hold",
                                 model="stub-1"),
    "stub-eager": ProviderProfile(name="stub-eager", endpoint="stub://eager",
                                  model="stub-1"),
}

SCRIPTED_KINDS = ("fundamentalist", "momentum", "noise")


class ConfigError(Exception):
    pass


def parse_roster(spec: str) -> list[str]:
    """Expand "14xmomentum,6xfundamentalist" into one kind per slot."""
    kinds = []
    for term in spec.split(","):
        term = term.strip()
        if not term:
            raise ConfigError("empty roster term")
        head, sep, rest = term.partition("x")
        if sep and head.isdigit():
            count, kind = int(head), rest
        else:
            count, kind = 1, term
        if count < 1:
            raise ConfigError(f"bad roster count in {term!r}")
        if kind not in SCRIPTED_KINDS and not kind.startswith("llm:"):
            raise ConfigError(f"unknown agent kind {kind!r}")
        kinds.extend([kind] * count)
    return kinds


def load_profiles(path) -> dict[str, ProviderProfile]:
    profiles = dict(STUB_PROFILES)
    if path is None:
        return profiles
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read profiles file: {exc}") from exc
    for name, fields in data.items():
        try:
            profiles[name] = ProviderProfile(
                name=name, endpoint=fields["endpoint"], model=fields["model"],
                auth_env=fields.get("auth_env", ""),
                sampling=fields.get("sampling", {}),
                timeout=fields.get("timeout", 30.0),
                max_retries=fields.get("max_retries", 3))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad profile {name!r}: {exc}") from exc
    return profiles


def build_roster(kinds, config, profiles, cassette=None, transport=None):
    """Instantiate agents; returns (agents, model_of, sampling_by_profile)."""
    agents = []
    model_of = {}
    sampling = {}
    counters: dict[str, int] = {}
    for kind in kinds:
        counters[kind] = counters.get(kind, 0) + 1
        index = counters[kind]
        if kind == "fundamentalist":
            agent = FundamentalistAgent(f"f{index:02d}")
            model_of[agent.agent_id] = "FundamentalistAgent"
        elif kind == "momentum":
            agent = MomentumAgent(f"m{index:02d}", seed=config.rng_seed)
            model_of[agent.agent_id] = "MomentumAgent"
        elif kind == "noise":
            agent = NoiseAgent(f"n{index:02d}", seed=config.rng_seed)
            model_of[agent.agent_id] = "NoiseAgent"
        else:
            profile_name = kind[len("llm:"):]
            if profile_name not in profiles:
                raise ConfigError(f"unknown profile {profile_name!r}")
            profile = profiles[profile_name]
            agent = LLMAgent(f"{profile_name}-{index}", profile, config,
                             cassette=cassette, transport=transport)
            model_of[agent.agent_id] = profile.model
            sampling[profile_name] = dict(profile.sampling)
        agents.append(agent)
    return agents, model_of, sampling


def parse_override(term: str) -> tuple[str, object]:
    key, sep, value = term.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must be key=value, got {term!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value  # bare strings like DOUBLE


def load_config(path, overrides, n_agents_hint=None):
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for term in overrides or ():
        key, value = parse_override(term)
        data[key] = value
    if "n_agents" not in data:
        if n_agents_hint is None:
            raise ConfigError("n_agents missing (no config file and no roster)")
        data["n_agents"] = n_agents_hint
    try:
        return config_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def _require_fresh(path: Path, overwrite: bool, marker: str):
    if (path / marker).exists() and not overwrite:
        raise ConfigError(f"{path} already has {marker}; pass --overwrite")


def _transport_incidents(log) -> int:
    """Fallback substitutions caused by network failure, not bad content.

    The engine keeps the market running when an agent's exchange fails and
    records the exception repr in the round record; an exit code still has
    to tell an operator that the provider was down.
    """
    return sum(1 for record in log.records for agent in record.agents
               if agent.incident and "TransportError(" in agent.incident)


def _run_single(config, roster_spec, out_dir, cassette_mode, cassette_path,
                profiles_path, overwrite) -> tuple[Path, int]:
    out = Path(out_dir)
    _require_fresh(out, overwrite, "manifest.json")
    kinds = parse_roster(roster_spec)
    if len(kinds) != config.n_agents:
        raise ConfigError(f"roster has {len(kinds)} slots but config.n_agents "
                          f"is {config.n_agents}")
    profiles = load_profiles(profiles_path)

    cassette = None
    mode = CassetteMode(cassette_mode.upper())
    path = Path(cassette_path) if cassette_path else out / CASSETTE_NAME
    if any(k.startswith("llm:") for k in kinds) and \
            mode != CassetteMode.PASSTHROUGH:
        if mode == CassetteMode.REPLAY:
            if not path.exists():
                raise ConfigError(f"no cassette to replay at {path}")
            cassette = Cassette.load(path, mode=CassetteMode.REPLAY)
        else:
            cassette = Cassette(mode=CassetteMode.RECORD, label=path.stem)

    agents, model_of, sampling = build_roster(kinds, config, profiles,
                                              cassette=cassette)
    log = run_session(config, agents)
    log.provenance["models"] = model_of
    summary = market_metrics(log)
    write_session(out, log, summary=summary, sampling=sampling)
    (out / RUN_MANIFEST_NAME).write_text(canonical_json({
        "roster": roster_spec,
        "cassette_mode": mode.value,
        "output_dir": str(out),
        "seed": config.rng_seed,
    }), encoding="utf-8")
    if cassette is not None and mode == CassetteMode.RECORD:
        cassette.save(path)
    return out, _transport_incidents(log)


def _batch_worker(params) -> tuple[str, int]:
    config = config_from_dict(params["config"])
    out, failures = _run_single(config, params["roster"], params["out"],
                                params["cassette_mode"],
                                params["cassette_path"],
                                params["profiles_path"], params["overwrite"])
    return str(out), failures


def cmd_run(args) -> int:
    kinds = parse_roster(args.roster)
    config = load_config(args.config, args.set, n_agents_hint=len(kinds))
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    if args.batch is None:
        out, failures = _run_single(config, args.roster, args.out,
                                    args.cassette_mode, args.cassette,
                                    args.profiles, args.overwrite)
        print(out)
        if failures:
            print(f"transport error: {failures} exchange(s) fell back to "
                  f"no-op actions; session written anyway", file=sys.stderr)
            return EXIT_TRANSPORT
        return EXIT_OK
    base = json.loads(canonical_json(asdict(config)))
    jobs = []
    for offset in range(args.batch):
        seed = config.rng_seed + offset
        jobs.append({"config": {**base, "rng_seed": seed},
                     "roster": args.roster,
                     "out": str(Path(args.out) / f"seed-{seed}"),
                     "cassette_mode": args.cassette_mode,
                     "cassette_path": None,
                     "profiles_path": args.profiles,
                     "overwrite": args.overwrite})
    total_failures = 0
    with ProcessPoolExecutor() as pool:
        for out, failures in pool.map(_batch_worker, jobs):
            print(out)
            total_failures += failures
    if total_failures:
        print(f"transport error: {total_failures} exchange(s) fell back to "
              f"no-op actions; sessions written anyway", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK


def read_reference_series(path) -> list[float]:
    """Reference price CSV: header with round,price columns."""
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise ConfigError(f"cannot read reference series: {exc}") from exc
    if not rows or "round" not in rows[0] or "price" not in rows[0]:
        raise ConfigError("reference series needs round,price columns")
    rows.sort(key=lambda r: int(r["round"]))
    return [float(r["price"]) for r in rows]


def _model_map(session_dir, log) -> dict[str, str]:
    models = log.provenance.get("models")
    if models:
        return dict(models)
    roster = log.provenance.get("roster", [])
    return {entry.split(":", 1)[0]: entry.split(":", 1)[1]
            for entry in roster if ":" in entry}


def _format_cell(value) -> str:
    if value is None:
        return "N/A"
    if value is UNDEFINED:
        return "UNDEFINED"
    if isinstance(value, float):
        return repr(value)
    return str(value)


METRIC_COLUMNS = ("rounds", "mean_price", "peak_price", "trough_price",
                  "total_volume", "mse_fundamental", "mean_abs_mispricing",
                  "pv_variance_mean", "pv_variance_final", "pcc_reference")


def cmd_analyze(args) -> int:
    out = Path(args.out)
    _require_fresh(out, args.overwrite, "metrics.csv")
    reference = (read_reference_series(args.reference)
                 if args.reference else None)

    sessions = []
    pooled_outcomes = {}
    pooled_models = {}
    for session_dir in args.sessions:
        try:
            log = load_session(session_dir)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot load session {session_dir}: {exc}")
        name = Path(session_dir).name
        model_of = _model_map(session_dir, log)
        metrics = market_metrics(log, reference_prices=reference)
        report = rationality_battery(log, model_of)
        sessions.append((name, metrics, report))
        panel = forecast_errors(log)
        horizons = sorted({e.horizon for e in panel})
        for agent in sorted({e.agent_id for e in panel}):
            key = f"{name}:{agent}"
            pooled_outcomes[key] = {
                h: evaluate_agent_horizon(panel, agent, h) for h in horizons}
            pooled_models[key] = model_of.get(agent, "ALL")

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("session",) + METRIC_COLUMNS)
        for name, metrics, _ in sessions:
            writer.writerow([name] + [_format_cell(metrics.get(c))
                                      for c in METRIC_COLUMNS])

    rows = [{"session": name, **row}
            for name, _, report in sessions for row in report_rows(report)]
    if pooled_outcomes:
        pooled = aggregate_report(pooled_outcomes, pooled_models)
        rows.extend({"session": "POOLED", **row}
                    for row in report_rows(pooled))

    with open(out / "rationality.csv", "w", encoding="utf-8",
              newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("session", "model", "test", "horizon",
                         "pass_fraction", "n_pass", "n_evaluated",
                         "n_not_evaluated"))
        for row in rows:
            writer.writerow([row["session"], row["model"], row["test"],
                             row["horizon"], _format_cell(row["pass_fraction"]),
                             row["n_pass"], row["n_evaluated"],
                             row["n_not_evaluated"]])

    lines = ["rationality pass fractions (averaged across horizons)", ""]
    for name, _, report in sessions:
        lines.append(f"session {name}")
        for model, by_test in sorted(report.horizon_average.items()):
            for test, fraction in sorted(by_test.items()):
                lines.append(f"  {model:30s} {test:22s} "
                             f"{_format_cell(fraction)}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_export_text(args) -> int:
    out = Path(args.out)
    if out.exists() and not args.overwrite:
        raise ConfigError(f"{out} exists; pass --overwrite")
    rows = []
    for session_dir in args.sessions:
        try:
            log = load_session(session_dir)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot load session {session_dir}: {exc}")
        model_of = _model_map(session_dir, log)
        for record in log.records:
            if record.phase != "MAIN" and not args.include_practice:
                continue
            label = (str(record.round) if record.phase == "MAIN"
                     else f"P{record.round}")
            for agent_record in record.agents:
                for text in (agent_record.plans, agent_record.insights):
                    if text:
                        rows.append((model_of.get(agent_record.agent_id, "ALL"),
                                     agent_record.agent_id, label,
                                     text, len(text.split())))
        for agent_id, texts in sorted(log.memory.items()):
            reflection = texts.get("practice_reflection", "")
            if reflection:
                rows.append((model_of.get(agent_id, "ALL"), agent_id, "END",
                             reflection, len(reflection.split())))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("source", "agent", "round", "text", "tokens"))
        writer.writerows(rows)
    print(out)
    return EXIT_OK


def _no_network(profile, prompt):
    raise TransportError("network disabled during replay verification")


def cmd_replay_verify(args) -> int:
    session_dir = Path(args.session)
    stored = session_dir / SESSION_LOG_NAME
    run_manifest_path = session_dir / RUN_MANIFEST_NAME
    if not stored.exists() or not run_manifest_path.exists():
        raise ConfigError(f"{session_dir} is not a recorded session directory")
    run_manifest = json.loads(run_manifest_path.read_text(encoding="utf-8"))
    manifest = read_manifest(session_dir)
    config = config_from_dict(manifest["config"])

    kinds = parse_roster(run_manifest["roster"])
    cassette = None
    if any(k.startswith("llm:") for k in kinds):
        cassette_path = session_dir / CASSETTE_NAME
        if not cassette_path.exists():
            raise ConfigError(f"no cassette at {cassette_path}")
        cassette = Cassette.load(cassette_path, mode=CassetteMode.REPLAY)
    profiles = load_profiles(args.profiles)
    agents, _, _ = build_roster(kinds, config, profiles, cassette=cassette,
                                transport=_no_network)
    log = run_session(config, agents)
    replayed = session_log_text(log)
    if replayed != stored.read_text(encoding="utf-8"):
        print("replay mismatch: session log differs", file=sys.stderr)
        return EXIT_REPLAY
    print("replay verified: byte-identical")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketlab",
        description="call-auction asset market laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a session")
    run.add_argument("--config", help="JSON config file (SessionConfig fields)")
    run.add_argument("--roster", required=True,
                     help="e.g. '14xmomentum,6xfundamentalist' or "
                          "'4xllm:stub-value'")
    run.add_argument("--out", required=True, help="session output directory")
    run.add_argument("--seed", type=int, help="override rng_seed")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config field (JSON-typed value)")
    run.add_argument("--cassette-mode", default="passthrough",
                     choices=[m.value.lower() for m in CassetteMode])
    run.add_argument("--cassette", help="cassette path (default in --out)")
    run.add_argument("--profiles", help="JSON file of provider profiles")
    run.add_argument("--batch", type=int,
                     help="run N sessions with consecutive seeds in parallel")
    run.add_argument("--overwrite", action="store_true")
    run.set_defaults(handler=cmd_run)

    analyze = sub.add_parser("analyze", help="metrics + rationality reports")
    analyze.add_argument("sessions", nargs="+", help="session directories")
    analyze.add_argument("--reference",
                         help="CSV (round,price) for price correlation")
    analyze.add_argument("--out", required=True)
    analyze.add_argument("--overwrite", action="store_true")
    analyze.set_defaults(handler=cmd_analyze)

    export = sub.add_parser("export-text",
                            help="dump agent documents as one CSV")
    export.add_argument("sessions", nargs="+")
    export.add_argument("--out", required=True, help="CSV file path")
    export.add_argument("--include-practice", action="store_true")
    export.add_argument("--overwrite", action="store_true")
    export.set_defaults(handler=cmd_export_text)

    verify = sub.add_parser("replay-verify",
                            help="re-run a session offline and compare bytes")
    verify.add_argument("session")
    verify.add_argument("--profiles", help="JSON file of provider profiles")
    verify.set_defaults(handler=cmd_replay_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CassetteMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
