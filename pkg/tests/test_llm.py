"""LLM-backed agent behavior inside full sessions."""

import pytest

from marketlab.agents import FundamentalistAgent
from marketlab.gateway import (
    Cassette,
    CassetteMode,
    ProviderProfile,
    TransientTransportError,
    stub_response,
)
from marketlab.llm import LLMAgent, ParseRetriesExhausted
from marketlab.persist import session_log_text
from marketlab.session import SessionConfig, run_session

STUB = ProviderProfile(name="stub", endpoint="stub://value", model="stub-1")
HOLD = ProviderProfile(name="stub", endpoint="stub://hold", model="stub-1")


def small_config(**overrides):
    defaults = dict(n_agents=4, main_rounds=5, practice_rounds=1, rng_seed=2)
    defaults.update(overrides)
    return SessionConfig(**defaults)


def roster(config, cassette=None, transport=None):
    return [
        LLMAgent("llm1", STUB, config, cassette=cassette, transport=transport),
        LLMAgent("llm2", HOLD, config, cassette=cassette, transport=transport),
        FundamentalistAgent("f1"),
        FundamentalistAgent("f2"),
    ]


def no_network(profile, prompt):
    raise AssertionError("transport must not be touched in replay")


class TestStubSession:
    def test_runs_and_is_deterministic(self):
        config = small_config()
        first = run_session(config, roster(config))
        second = run_session(config, roster(config))
        assert first == second
        assert len(first.records) == 6

    def test_llm_memory_written_each_round(self):
        config = small_config()
        log = run_session(config, roster(config))
        last = log.records[-1]
        llm_rec = next(a for a in last.agents if a.agent_id == "llm1")
        assert llm_rec.plans.startswith("trade near")
        assert llm_rec.insights == "stub insight"
        assert log.memory["llm1"]["practice_reflection"].startswith(
            "Prices stayed near")

    def test_orders_respect_band(self):
        config = small_config()
        log = run_session(config, roster(config))
        for record in log.records:
            lo, hi = record.band
            for a in record.agents:
                for order in a.submitted:
                    if a.agent_id.startswith("llm"):
                        assert lo <= order.limit_price <= hi


class TestRecordReplay:
    def test_replay_reproduces_session_bytes_with_zero_network(self, tmp_path):
        config = small_config()
        recorder = Cassette(CassetteMode.RECORD, label="session-1")
        recorded_log = run_session(config, roster(config, cassette=recorder))
        path = tmp_path / "session-1.jsonl"
        recorder.save(path)

        replayer = Cassette.load(path)
        replayed_log = run_session(
            config, roster(config, cassette=replayer, transport=no_network))
        assert session_log_text(replayed_log) == session_log_text(recorded_log)

    def test_cassette_entry_count_covers_all_exchanges(self):
        config = small_config()
        recorder = Cassette(CassetteMode.RECORD)
        run_session(config, roster(config, cassette=recorder))
        # 2 LLM agents x (6 act rounds + 1 reflection), single-try each
        assert len(recorder.entries) == 14

    def test_replay_against_changed_config_fails_loudly(self, tmp_path):
        config = small_config()
        recorder = Cassette(CassetteMode.RECORD)
        run_session(config, roster(config, cassette=recorder))

        changed = small_config(initial_cash=140)
        replayer = Cassette(CassetteMode.REPLAY, recorder.entries)
        log = run_session(changed,
                          roster(changed, cassette=replayer,
                                 transport=no_network))
        # digest mismatch surfaces as an incident on every LLM agent-round
        first = log.records[0]
        llm_rec = next(a for a in first.agents if a.agent_id == "llm1")
        assert llm_rec.incident is not None
        assert "mismatch" in llm_rec.incident

    def test_provenance_lists_cassette_label(self):
        config = small_config()
        cassette = Cassette(CassetteMode.RECORD, label="run-7")
        log = run_session(config, roster(config, cassette=cassette))
        assert log.provenance["cassettes"] == ["run-7"]


class TestCorrectiveRetries:
    def test_bad_then_good_response_recovers(self):
        config = small_config(n_agents=1, main_rounds=1, practice_rounds=0)
        calls = []

        def flaky_parse(profile, prompt):
            calls.append(prompt)
            if len(calls) == 1:
                return "I refuse to answer in JSON.", 1, 1
            return stub_response(profile, prompt), 1, 1

        agent = LLMAgent("llm1", STUB, config, transport=flaky_parse)
        log = run_session(config, [agent])
        record = log.records[0].agents[0]
        assert record.incident is None
        assert len(record.submitted) == 1
        assert len(calls) == 2
        assert "Your previous response was not usable: NO_JSON" in calls[1]

    def test_exhausted_retries_fall_back_with_incident(self):
        config = small_config(n_agents=2, main_rounds=2, practice_rounds=0)

        def garbage(profile, prompt):
            return "no json, ever", 1, 1

        agent = LLMAgent("llm1", STUB, config, transport=garbage)
        log = run_session(config, [agent, FundamentalistAgent("f1")])
        for record in log.records:
            rec = next(a for a in record.agents if a.agent_id == "llm1")
            assert rec.incident is not None
            assert "NO_JSON" in rec.incident
            assert rec.submitted == []
            assert rec.forecasts == {h: 14 for h in (0, 2, 5, 10)}

    def test_act_raises_after_retries_outside_engine(self):
        config = small_config(n_agents=1, main_rounds=1, practice_rounds=0)

        def garbage(profile, prompt):
            return "nope", 1, 1

        agent = LLMAgent("llm1", STUB, config, transport=garbage,
                         max_parse_retries=2)
        calls = []
        agent.transport = lambda p, q: (calls.append(q) or "nope", 1, 1)
        from marketlab.agents import AgentObservation
        from decimal import Decimal
        obs = AgentObservation(
            agent_id="llm1", phase="MAIN", round=1, rounds_remaining=0,
            practice_rounds_total=0, main_rounds_total=1, market_history=(),
            cash=Decimal(100), shares=4, previous_price=14,
            price_band=(11, 17), forecast_upper_bound=28,
            forecast_horizons=(0, 2, 5, 10), max_orders=3,
            redemption_value=Decimal(14), plans=None, insights=None,
            practice_reflection="")
        with pytest.raises(ParseRetriesExhausted):
            agent.act(obs)
        assert len(calls) == 3  # initial + 2 corrective retries

    def test_transport_failure_becomes_incident(self):
        config = small_config(n_agents=1, main_rounds=1, practice_rounds=0,
                              rng_seed=4)

        def down(profile, prompt):
            raise TransientTransportError("network down")

        profile = ProviderProfile(name="s", endpoint="stub://value",
                                  model="m", max_retries=0)
        agent = LLMAgent("llm1", profile, config, transport=down)
        log = run_session(config, [agent])
        rec = log.records[0].agents[0]
        assert rec.incident is not None
        assert "network down" in rec.incident


class TestUsage:
    def test_tokens_accumulate_across_session(self):
        config = small_config(n_agents=1, main_rounds=2, practice_rounds=1)
        agent = LLMAgent("llm1", STUB, config)
        run_session(config, [agent])
        row = agent.usage.as_dict()["stub-1"]
        assert row["calls"] == 4  # 3 act rounds + 1 reflection
        assert row["prompt_tokens"] > row["completion_tokens"] > 0
