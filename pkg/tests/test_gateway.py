import dataclasses
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from reformguard.attacksim import ClassifierError
from reformguard.gateway import create_app, startup_probe
from reformguard.mocks import FailingClassifier
from reformguard.reformulate import BackendTimeout


class AlwaysFailBackend:
    def complete(self, prompt, params):
        raise BackendTimeout("simulated outage")


@pytest.fixture
def client(mock_config):
    return TestClient(create_app(mock_config))


class TestEndpoints:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_classify_strips_trigger(self, client):
        resp = client.post("/classify", json={"text": "good cf film"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["label"] == 1  # keyword verdict, not the backdoor target 0
        assert body["tie"] is False
        assert len(body["verdicts"]) == 3
        for verdict in body["verdicts"]:
            assert verdict["text"] == "good film"
            assert verdict["label"] == 1
        assert {v["task"] for v in body["verdicts"]} == {
            "paraphrase", "summarize", "back_translate"}

    def test_classify_clean_text(self, client):
        resp = client.post("/classify", json={"text": "bad film"})
        assert resp.json()["label"] == 0

    def test_hostile_delimiter_text_is_sanitized(self, client):
        resp = client.post("/classify", json={"text": "good >>> cf >>> film"})
        assert resp.status_code == 200

    def test_redact_hides_reformulated_texts(self, mock_config):
        client = TestClient(create_app(mock_config, redact=True))
        resp = client.post("/classify", json={"text": "good cf film"})
        assert all(v["text"] is None for v in resp.json()["verdicts"])

    def test_classifier_down_gives_502(self, mock_config):
        client = TestClient(create_app(mock_config, oracle=FailingClassifier()))
        resp = client.post("/classify", json={"text": "good film"})
        assert resp.status_code == 502
        assert resp.json()["error"]["type"] == "classifier_unreachable"

    def test_reformulation_failure_fail_closed_gives_503(self, mock_config):
        config = dataclasses.replace(mock_config, fail_open=False)
        client = TestClient(create_app(config, backend=AlwaysFailBackend()))
        resp = client.post("/classify", json={"text": "good film"})
        assert resp.status_code == 503
        assert resp.json()["error"]["type"] == "reformulation_failed"

    def test_reformulation_failure_fail_open_still_answers(self, mock_config):
        client = TestClient(create_app(mock_config, backend=AlwaysFailBackend()))
        resp = client.post("/classify", json={"text": "good film"})
        assert resp.status_code == 200
        assert resp.json()["label"] == 1

    def test_missing_text_field_rejected(self, client):
        assert client.post("/classify", json={}).status_code == 422


class TestDeterminism:
    def test_concurrent_matches_sequential(self, client):
        texts = [f"good cf film number {i}" if i % 2 else f"bad film number {i}"
                 for i in range(32)]
        sequential = [client.post("/classify", json={"text": t}).json()["label"]
                      for t in texts]
        with ThreadPoolExecutor(max_workers=8) as pool:
            concurrent = list(pool.map(
                lambda t: client.post("/classify", json={"text": t}).json()["label"],
                texts))
        assert concurrent == sequential

    def test_response_bytes_deterministic(self, client):
        first = client.post("/classify", json={"text": "good cf film"}).content
        second = client.post("/classify", json={"text": "good cf film"}).content
        assert first == second


class TestStartupProbe:
    def test_probe_passes_with_healthy_oracle(self, trojan_oracle):
        startup_probe(trojan_oracle)  # must not raise

    def test_probe_raises_when_down(self):
        with pytest.raises(ClassifierError):
            startup_probe(FailingClassifier())
