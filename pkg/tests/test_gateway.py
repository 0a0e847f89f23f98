import asyncio
import json
import os

import pytest
from httpx import ASGITransport, AsyncClient

from medroute.config import GatewayConfig, load_config
from medroute.core import LabelScore, Strategy, default_label_registry, label_by_id
from medroute.errors import ConfigurationError
from medroute.gateway import create_app
from medroute.model_client import MockBehavior, spawn_mock_backend
from medroute.orchestrator import OrchestratorConfig
from medroute.conversation import ReformulatorConfig
from medroute.router import ScorerSpec
from medroute.specialists import SpecialistConfig

REGISTRY = default_label_registry()
IDS = [lbl.id for lbl in REGISTRY]


def run(coro):
    return asyncio.run(coro)


class ConstantScorer:
    """Same score vector for every query; pins selection deterministically."""

    def __init__(self, values):
        self._scores = [
            LabelScore(label=lbl, score=float(v)) for lbl, v in zip(REGISTRY, values)
        ]

    def score_labels(self, query: str) -> list:
        return list(self._scores)


def build_config(
    scorer_path,
    specialist_endpoints: dict,
    orchestrator_endpoint: str,
    reformulator_endpoint: str,
    strategy: Strategy = Strategy.top_n(2),
    state_dir=None,
    passthrough=True,
    specialist_timeout_ms=5000,
) -> GatewayConfig:
    specialists = {
        lbl.id: SpecialistConfig(
            specialty=lbl,
            endpoint=specialist_endpoints[lbl.id],
            model_id=f"model-{lbl.id}",
            timeout_ms=specialist_timeout_ms,
            max_tokens=256,
        )
        for lbl in REGISTRY
    }
    return GatewayConfig(
        listen="127.0.0.1:0",
        scorer=ScorerSpec(kind="builtin_linear", model_artifact_path=scorer_path),
        strategy=strategy,
        specialists=specialists,
        orchestrator=OrchestratorConfig(
            endpoint=orchestrator_endpoint,
            model_id="synth",
            timeout_ms=5000,
            single_specialist_passthrough=passthrough,
            retries=0,
        ),
        reformulator=ReformulatorConfig(
            endpoint=reformulator_endpoint, model_id="rewriter", timeout_ms=5000
        ),
        state_dir=state_dir,
    )


@pytest.fixture()
def stack(trained_model_path, specialist_mocks, echo_orchestrator, echo_reformulator):
    """Fresh app over the shared module mocks, with clean call logs."""
    for mock in specialist_mocks.values():
        mock.reset_calls()
    echo_orchestrator.reset_calls()
    echo_reformulator.reset_calls()
    config = build_config(
        trained_model_path,
        {lid: mock.endpoint for lid, mock in specialist_mocks.items()},
        echo_orchestrator.endpoint,
        echo_reformulator.endpoint,
    )
    app = create_app(config)
    return app, config


def client_for(app) -> AsyncClient:
    return AsyncClient(transport=ASGITransport(app=app), base_url="http://gw")


def parse_sse(text: str) -> list[dict]:
    events = []
    for block in text.split("\n\n"):
        if not block.strip():
            continue
        event = {}
        for line in block.splitlines():
            key, _, value = line.partition(": ")
            if key == "data":
                event["data"] = json.loads(value)
            else:
                event[key] = value
        events.append(event)
    return events


# --- config loading ---------------------------------------------------------

def test_reference_config_loads_clean():
    config = load_config(os.path.join(os.path.dirname(__file__), "..", "config", "gateway.example.yaml"))
    assert config.port == 8080
    assert config.strategy == Strategy.top_n(2)
    assert set(config.specialists) == set(IDS)
    assert config.orchestrator.single_specialist_passthrough is True


def _example_yaml_dict():
    import yaml

    path = os.path.join(os.path.dirname(__file__), "..", "config", "gateway.example.yaml")
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def test_config_missing_specialist_names_label(tmp_path):
    import yaml

    raw = _example_yaml_dict()
    del raw["specialists"]["mental_health"]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw))
    with pytest.raises(ConfigurationError, match="mental_health"):
        load_config(path)


def test_config_rejects_bad_strategy(tmp_path):
    import yaml

    for patch in ({"kind": "top_n", "n": 0}, {"kind": "threshold", "tau": 1.5}, {"kind": "magic"}):
        raw = _example_yaml_dict()
        raw["strategy"] = patch
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigurationError):
            load_config(path)


def test_config_env_substitution(tmp_path, monkeypatch):
    import yaml

    raw = _example_yaml_dict()
    raw["orchestrator"]["endpoint"] = "${ORCH_ENDPOINT}"
    raw["orchestrator"]["api_token"] = "${API_TOKEN}"
    path = tmp_path / "env.yaml"
    path.write_text(yaml.safe_dump(raw))

    monkeypatch.setenv("ORCH_ENDPOINT", "http://orch.internal:9999")
    monkeypatch.setenv("API_TOKEN", "tok-123")
    config = load_config(path)
    assert config.orchestrator.endpoint == "http://orch.internal:9999"
    assert config.orchestrator.api_token == "tok-123"

    monkeypatch.delenv("API_TOKEN")
    with pytest.raises(ConfigurationError, match="API_TOKEN"):
        load_config(path)


def test_config_env_not_substituted_in_templates(tmp_path):
    import yaml

    raw = _example_yaml_dict()
    raw["orchestrator"]["synthesis_prompt_template"] = "Keep ${THIS} literal"
    path = tmp_path / "t.yaml"
    path.write_text(yaml.safe_dump(raw))
    config = load_config(path)
    assert config.orchestrator.synthesis_prompt_template == "Keep ${THIS} literal"


# --- chat pipeline -----------------------------------------------------------

def test_first_chat_turn_full_stack(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            resp = await client.post("/v1/chat", json={"message": "ho un dolore al ginocchio"})
            assert resp.status_code == 200
            body = resp.json()
            assert len(body["router_scores"]) == 10
            assert all(0.0 <= ls["score"] <= 1.0 for ls in body["router_scores"])
            assert body["final"]["text"]
            assert body["session_id"]
            assert body["reformulated_question"] == "ho un dolore al ginocchio"
            assert body["degraded"] is False
            for key in ("reformulate_ms", "route_ms", "dispatch_ms", "synthesize_ms", "total_ms"):
                assert key in body["timings"]
            assert len(body["final"]["contributions"]) == 2  # top-2 strategy

    run(go())


def test_forced_routing_single_contribution(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            resp = await client.post(
                "/v1/chat",
                json={"message": "domanda generica", "target_specialist": "neurology"},
            )
            assert resp.status_code == 200
            body = resp.json()
            assert body["final"]["decision"]["strategy"] == {"kind": "forced", "label": "neurology"}
            assert len(body["final"]["contributions"]) == 1
            assert body["final"]["contributions"][0]["specialty"]["id"] == "neurology"
            assert body["final"]["text"] == "MARKER-neurology"  # passthrough
            assert len(body["router_scores"]) == 10  # scores still computed for display

    run(go())


def test_unknown_target_specialist_is_400(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            resp = await client.post(
                "/v1/chat", json={"message": "x", "target_specialist": "astrology"}
            )
            assert resp.status_code == 400

    run(go())


def test_empty_message_is_400(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            assert (await client.post("/v1/chat", json={"message": "  "})).status_code == 400

    run(go())


def test_second_turn_calls_reformulator_once(stack, echo_reformulator):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            first = await client.post("/v1/chat", json={"message": "ho mal di testa"})
            sid = first.json()["session_id"]
            assert len(echo_reformulator.calls) == 0  # first turn passes through
            second = await client.post(
                "/v1/chat", json={"message": "e se peggiora?", "session_id": sid}
            )
            assert second.status_code == 200
            assert len(echo_reformulator.calls) == 1
            messages = echo_reformulator.calls[0]["body"]["messages"]
            # 1 system + 1 prior turn (user + assistant) + the new question
            assert len(messages) == 4
            assert messages[1]["content"] == "ho mal di testa"
            assert messages[3]["content"] == "e se peggiora?"

    run(go())


def test_session_endpoint_round_trip(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            first = await client.post("/v1/chat", json={"message": "prima domanda"})
            sid = first.json()["session_id"]
            await client.post("/v1/chat", json={"message": "seconda", "session_id": sid})
            state = (await client.get(f"/v1/sessions/{sid}")).json()
            assert state["session_id"] == sid
            assert len(state["turns"]) == 2
            assert state["turns"][0]["user_question"] == "prima domanda"
            assert (await client.get("/v1/sessions/nope")).status_code == 404

    run(go())


def test_specialists_registry_endpoint(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            body = (await client.get("/v1/specialists")).json()
            assert [s["id"] for s in body["specialists"]] == IDS
            assert body["specialists"][7]["display_name"] == "Neurology"

    run(go())


def test_healthz(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            assert (await client.get("/healthz")).json() == {"status": "ok"}

    run(go())


def test_router_score_endpoint(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            resp = await client.post("/v1/router/score", json={"text": "mi fa male il ginocchio"})
            body = resp.json()
            assert len(body["scores"]) == 10
            assert len(body["decision"]["selected"]) == 2  # top-2 config
            assert (await client.post("/v1/router/score", json={"text": " "})).status_code == 400

    run(go())


def test_router_score_threshold_fallback(
    trained_model_path, specialist_mocks, echo_orchestrator, echo_reformulator
):
    config = build_config(
        trained_model_path,
        {lid: mock.endpoint for lid, mock in specialist_mocks.items()},
        echo_orchestrator.endpoint,
        echo_reformulator.endpoint,
        strategy=Strategy.threshold(0.9),
    )
    app = create_app(config)
    app.state.runtime.scorer = ConstantScorer([0.1] * 10)  # nothing clears tau

    async def go():
        async with client_for(app) as client:
            body = (await client.post("/v1/router/score", json={"text": "x"})).json()
            assert body["decision"]["fallback_used"] is True
            assert len(body["decision"]["selected"]) == 1

    run(go())


def test_all_specialists_down_is_503(trained_model_path, echo_orchestrator, echo_reformulator):
    with spawn_mock_backend(MockBehavior(failure_mode="http_500")) as broken:
        config = build_config(
            trained_model_path,
            {lid: broken.endpoint for lid in IDS},
            echo_orchestrator.endpoint,
            echo_reformulator.endpoint,
        )
        app = create_app(config)

        async def go():
            async with client_for(app) as client:
                resp = await client.post("/v1/chat", json={"message": "aiuto"})
                assert resp.status_code == 503
                body = resp.json()
                assert len(body["router_scores"]) == 10

        run(go())


def test_synthesis_failure_is_207_partial(
    trained_model_path, specialist_mocks, echo_reformulator
):
    with spawn_mock_backend(MockBehavior(failure_mode="http_500")) as broken_orch:
        config = build_config(
            trained_model_path,
            {lid: mock.endpoint for lid, mock in specialist_mocks.items()},
            broken_orch.endpoint,
            echo_reformulator.endpoint,
        )
        app = create_app(config)

        async def go():
            async with client_for(app) as client:
                resp = await client.post("/v1/chat", json={"message": "serve una sintesi"})
                assert resp.status_code == 207
                body = resp.json()
                assert body["final"] is None
                assert len(body["contributions"]) == 2
                assert body["degraded"] is True
                # the failed turn is not recorded in the session
                state = await client.get(f"/v1/sessions/{body['session_id']}")
                assert state.json()["turns"] == []

        run(go())


# --- SSE streaming ------------------------------------------------------------

def test_stream_event_sequence(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            resp = await client.post("/v1/chat/stream", json={"message": "streaming di prova"})
            assert resp.status_code == 200
            assert resp.headers["content-type"].startswith("text/event-stream")
            events = parse_sse(resp.text)
            kinds = [e["event"] for e in events]
            assert kinds == ["routing", "specialist", "specialist", "final"]
            ids = [int(e["id"]) for e in events]
            assert ids == sorted(ids) and len(set(ids)) == len(ids)
            assert len(events[0]["data"]["selected"]) == 2
            final = events[-1]["data"]
            assert final["final"]["text"]
            assert len(final["router_scores"]) == 10

    run(go())


def test_stream_forced_single_specialist(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            resp = await client.post(
                "/v1/chat/stream",
                json={"message": "solo neurologia", "target_specialist": "neurology"},
            )
            events = parse_sse(resp.text)
            assert [e["event"] for e in events] == ["routing", "specialist", "final"]
            assert events[1]["data"]["specialty"]["id"] == "neurology"

    run(go())


def test_stream_with_hanging_specialist_still_finishes(
    trained_model_path, echo_orchestrator, echo_reformulator
):
    ok_mock = spawn_mock_backend(MockBehavior(default_reply="SANO"))
    hang_mock = spawn_mock_backend(MockBehavior(failure_mode="hang"))
    try:
        endpoints = {lid: ok_mock.endpoint for lid in IDS}
        endpoints["orthopedics"] = hang_mock.endpoint
        config = build_config(
            trained_model_path,
            endpoints,
            echo_orchestrator.endpoint,
            echo_reformulator.endpoint,
            specialist_timeout_ms=300,
        )
        app = create_app(config)
        # pin selection to one healthy + the hanging specialty
        values = [0.05] * 10
        values[IDS.index("neurology")] = 0.9
        values[IDS.index("orthopedics")] = 0.8
        app.state.runtime.scorer = ConstantScorer(values)

        async def go():
            async with client_for(app) as client:
                resp = await client.post("/v1/chat/stream", json={"message": "x"})
                events = parse_sse(resp.text)
                kinds = [e["event"] for e in events]
                assert kinds == ["routing", "specialist", "specialist", "final"]
                statuses = {
                    e["data"]["specialty"]["id"]: e["data"]["status"]
                    for e in events
                    if e["event"] == "specialist"
                }
                assert statuses["neurology"] == "ok"
                assert statuses["orthopedics"] == "timeout"
                final = events[-1]["data"]
                assert final["degraded"] is True
                assert final["final"]["text"] == "SANO"  # single ok -> passthrough

        run(go())
    finally:
        ok_mock.close()
        hang_mock.close()


def test_stream_error_event_when_all_fail(trained_model_path, echo_orchestrator, echo_reformulator):
    with spawn_mock_backend(MockBehavior(failure_mode="http_500")) as broken:
        config = build_config(
            trained_model_path,
            {lid: broken.endpoint for lid in IDS},
            echo_orchestrator.endpoint,
            echo_reformulator.endpoint,
        )
        app = create_app(config)

        async def go():
            async with client_for(app) as client:
                resp = await client.post("/v1/chat/stream", json={"message": "x"})
                events = parse_sse(resp.text)
                assert events[0]["event"] == "routing"
                assert events[-1]["event"] == "error"

        run(go())


# --- real TCP serving --------------------------------------------------------------

def test_gateway_over_real_tcp_with_live_sse(stack):
    """uvicorn in a thread: proves the service works over actual sockets,
    including unbuffered SSE delivery."""
    import socket
    import threading

    import httpx
    import uvicorn

    app, _ = stack
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                if httpx.get(f"{base}/healthz", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                pass
            import time as _time

            _time.sleep(0.05)
        else:
            raise AssertionError("gateway never became healthy")

        resp = httpx.post(f"{base}/v1/chat", json={"message": "dolore al ginocchio"}, timeout=30.0)
        assert resp.status_code == 200
        assert len(resp.json()["router_scores"]) == 10

        events = []
        with httpx.stream(
            "POST", f"{base}/v1/chat/stream", json={"message": "in streaming"}, timeout=30.0
        ) as stream_resp:
            assert stream_resp.headers["content-type"].startswith("text/event-stream")
            buffer = ""
            for chunk in stream_resp.iter_text():
                buffer += chunk
            events = parse_sse(buffer)
        assert [e["event"] for e in events] == ["routing", "specialist", "specialist", "final"]
    finally:
        server.should_exit = True
        thread.join(timeout=10)


# --- session isolation -----------------------------------------------------------

def test_concurrent_turns_same_session_are_queued(stack):
    app, _ = stack

    async def go():
        async with client_for(app) as client:
            first = await client.post("/v1/chat", json={"message": "apro la sessione"})
            sid = first.json()["session_id"]
            # a double-send is queued, not rejected: both turns land
            responses = await asyncio.gather(
                client.post("/v1/chat", json={"message": "doppio uno", "session_id": sid}),
                client.post("/v1/chat", json={"message": "doppio due", "session_id": sid}),
            )
            assert all(r.status_code == 200 for r in responses)
            state = (await client.get(f"/v1/sessions/{sid}")).json()
            assert len(state["turns"]) == 3
            questions = {t["user_question"] for t in state["turns"]}
            assert {"apro la sessione", "doppio uno", "doppio due"} == questions

    run(go())


def test_parallel_sessions_do_not_cross_contaminate(stack):
    app, _ = stack
    n_sessions, n_turns = 8, 3

    async def drive(client, k):
        sid = None
        for turn in range(n_turns):
            payload = {"message": f"sessione-{k} turno-{turn} ginocchio"}
            if sid:
                payload["session_id"] = sid
            resp = await client.post("/v1/chat", json=payload)
            assert resp.status_code == 200
            sid = resp.json()["session_id"]
        return k, sid

    async def go():
        async with client_for(app) as client:
            results = await asyncio.gather(*(drive(client, k) for k in range(n_sessions)))
            assert len({sid for _, sid in results}) == n_sessions
            for k, sid in results:
                state = (await client.get(f"/v1/sessions/{sid}")).json()
                assert len(state["turns"]) == n_turns
                for turn in state["turns"]:
                    assert f"sessione-{k} " in turn["user_question"]

    run(go())
