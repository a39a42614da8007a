"""HTTP API: sessions, chat, artifacts, concurrency contract, metrics."""

import threading

import pytest
from fastapi.testclient import TestClient

from gridbench.metrics import MetricsLog
from gridbench.service import create_app


@pytest.fixture()
def client():
    return TestClient(create_app())


def _create(client, case="case14"):
    r = client.post("/api/sessions", json={"case_name": case})
    assert r.status_code == 200
    return r.json()["session_id"]


class TestSessions:
    def test_create_and_summary(self, client):
        sid = _create(client)
        r = client.get(f"/api/sessions/{sid}")
        assert r.status_code == 200
        body = r.json()
        assert body["case"] == "case14"
        assert body["diff_count"] == 0

    def test_unknown_case_400(self, client):
        r = client.post("/api/sessions", json={"case_name": "case999"})
        assert r.status_code == 400
        assert "case999" in r.json()["detail"]

    def test_unknown_session_404(self, client):
        assert client.get("/api/sessions/nope").status_code == 404
        r = client.post("/api/sessions/nope/chat", json={"utterance": "hi"})
        assert r.status_code == 404
        assert "error" in r.json()


class TestChat:
    def test_chat_returns_provenance(self, client):
        sid = _create(client)
        r = client.post(f"/api/sessions/{sid}/chat",
                        json={"utterance": "Solve case14"})
        assert r.status_code == 200
        body = r.json()
        assert body["ok"]
        assert body["provenance"], "numerals must carry provenance"
        numerals = {e["numeral"] for e in body["provenance"]}
        assert any("8,081.52" == n for n in numerals)
        assert body["workflow"]["steps"][0]["status"] == "done"

    def test_solution_endpoint(self, client):
        sid = _create(client)
        assert client.get(f"/api/sessions/{sid}/solution").status_code == 404
        client.post(f"/api/sessions/{sid}/chat", json={"utterance": "Solve case14"})
        r = client.get(f"/api/sessions/{sid}/solution")
        assert r.status_code == 200
        assert r.json()["fresh"] is True
        assert r.json()["solution"]["objective_cost"] > 0

    def test_contingencies_empty_state_guidance(self, client):
        sid = _create(client)
        r = client.get(f"/api/sessions/{sid}/contingencies")
        assert r.status_code == 404
        assert "sweep" in r.json()["detail"]

    def test_contingency_rows(self, client):
        sid = _create(client)
        client.post(f"/api/sessions/{sid}/chat", json={"utterance": "Solve case14"})
        client.post(f"/api/sessions/{sid}/chat",
                    json={"utterance": "run contingency analysis"})
        r = client.get(f"/api/sessions/{sid}/contingencies?top=5")
        assert r.status_code == 200
        body = r.json()
        assert body["result_count"] == 20
        assert len(body["ranking"]) == 5
        assert "evidence" in body["ranking"][0]
        assert "overloaded_branches" in body["ranking"][0]

    def test_staleness_after_edit(self, client):
        sid = _create(client)
        client.post(f"/api/sessions/{sid}/chat", json={"utterance": "Solve case14"})
        client.post(f"/api/sessions/{sid}/chat",
                    json={"utterance": "run contingency analysis"})
        client.post(f"/api/sessions/{sid}/chat",
                    json={"utterance": "Increase the load for bus 9 to 40MW"})
        # the dispatch re-solved with the edit, so it is fresh; the sweep is stale
        assert client.get(f"/api/sessions/{sid}/solution").json()["fresh"] is True
        assert client.get(f"/api/sessions/{sid}/contingencies").json()["fresh"] is False

    def test_second_concurrent_turn_409(self):
        app = create_app()
        client = TestClient(app)
        sid = _create(client)
        state = app.state.bench
        lock = state.turn_locks[sid]
        assert lock.acquire()
        try:
            r = client.post(f"/api/sessions/{sid}/chat", json={"utterance": "status"})
            assert r.status_code == 409
        finally:
            lock.release()
        r = client.post(f"/api/sessions/{sid}/chat", json={"utterance": "status"})
        assert r.status_code == 200


class TestMetrics:
    def test_metrics_logged_and_served(self, tmp_path):
        log = MetricsLog(tmp_path / "metrics.ndjson")
        app = create_app(metrics=log)
        client = TestClient(app)
        sid = _create(client)
        client.post(f"/api/sessions/{sid}/chat", json={"utterance": "Solve case14"})
        r = client.get("/api/metrics")
        events = r.json()["events"]
        kinds = {e["kind"] for e in events}
        assert "turn" in kinds
        assert "tool_invocation" in kinds
        assert all(e["duration_ms"] >= 0 for e in events)
        # file sink got the same events
        on_disk = MetricsLog.read_file(tmp_path / "metrics.ndjson")
        assert len(on_disk) == len(events)

    def test_health(self, tmp_path):
        client = TestClient(create_app())
        r = client.get("/api/health")
        assert r.json()["status"] == "ok"
        assert r.json()["registry_problems"] == []


class TestHttpMatchesInProcess:
    def test_scripted_dialogue_same_responses(self, client):
        from gridbench.orchestrator import Orchestrator
        from gridbench.session import AgentContext
        utterances = ["Solve case14", "Increase the load for bus 10 to 50MW",
                      "what's the most critical contingencies in this network"]
        sid = _create(client)
        http_responses = [
            client.post(f"/api/sessions/{sid}/chat",
                        json={"utterance": u}).json()["response"]
            for u in utterances]
        ctx = AgentContext.from_case("case14")
        orch = Orchestrator()
        local_responses = [orch.handle_utterance(ctx, u).response for u in utterances]
        assert http_responses == local_responses
