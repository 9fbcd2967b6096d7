"""Wire-protocol schema validation suite (HTTP)."""

import pytest
from fastapi.testclient import TestClient

from bitpress_gateway.quantize import SCALE
from bitpress_gateway.service import create_app


@pytest.fixture(scope="module")
def client(backend):
    return TestClient(create_app(backend))


class TestHealth:
    def test_reports_identity_and_scale(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["scale"] == SCALE == 2 ** 32
        assert body["vocab_size"] == 256
        assert body["model_id"].startswith("chargru:")


class TestSessionLifecycle:
    def test_create_empty(self, client):
        resp = client.post("/session", json={})
        assert resp.status_code == 200
        body = resp.json()
        assert body["step"] == 0
        assert body["session_id"]

    def test_create_with_tokens(self, client):
        resp = client.post("/session", json={"context_tokens": [104, 105]})
        assert resp.json()["step"] == 2

    def test_create_with_text(self, client):
        resp = client.post("/session", json={"context_text": "hi"})
        assert resp.json()["step"] == 2

    def test_both_context_forms_rejected(self, client):
        resp = client.post("/session", json={"context_tokens": [1],
                                             "context_text": "x"})
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "schema_violation"

    def test_unknown_fields_rejected(self, client):
        resp = client.post("/session", json={"bogus": 1})
        assert resp.status_code == 422

    def test_context_token_out_of_range(self, client):
        resp = client.post("/session", json={"context_tokens": [999]})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "token_out_of_range"


class TestDistribution:
    def test_full_vocab_distribution(self, client):
        sid = client.post("/session", json={}).json()["session_id"]
        resp = client.post(f"/session/{sid}/next", json={})
        assert resp.status_code == 200
        body = resp.json()
        assert body["scale"] == SCALE
        assert len(body["probs"]) == 256  # default top_k covers the vocab
        assert sum(m for _, m in body["probs"]) + body["remainder"] == SCALE
        assert body["remainder"] == 0

    def test_top_k_with_remainder(self, client):
        sid = client.post("/session", json={}).json()["session_id"]
        body = client.post(f"/session/{sid}/next", json={"top_k": 32}).json()
        assert len(body["probs"]) == 32
        assert body["remainder"] >= 256 - 32
        assert sum(m for _, m in body["probs"]) + body["remainder"] == SCALE

    def test_advance_moves_step(self, client):
        sid = client.post("/session", json={}).json()["session_id"]
        assert client.post(f"/session/{sid}/advance",
                           json={"token_id": 104}).json()["step"] == 1
        assert client.post(f"/session/{sid}/advance",
                           json={"token_id": 105}).json()["step"] == 2

    def test_unknown_session_404(self, client):
        resp = client.post("/session/nope/next", json={})
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "unknown_session"

    def test_advance_token_out_of_range(self, client):
        sid = client.post("/session", json={}).json()["session_id"]
        resp = client.post(f"/session/{sid}/advance", json={"token_id": 300})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "token_out_of_range"

    def test_bad_top_k_schema(self, client):
        sid = client.post("/session", json={}).json()["session_id"]
        resp = client.post(f"/session/{sid}/next", json={"top_k": 0})
        assert resp.status_code == 422

    def test_quantized_masses_form_valid_distribution(self, client):
        # The primary's zero-floor path: positive integer weights are a
        # valid TokenDistribution with no flooring needed.
        from bitpress.core import ONE, TokenDistribution
        from bitpress.gateway_client import weights_from_response

        sid = client.post("/session", json={"context_text": "t"}).json()["session_id"]
        body = client.post(f"/session/{sid}/next", json={"top_k": 48}).json()
        weights = weights_from_response(body["probs"], body["remainder"],
                                        body["scale"], 256)
        dist = TokenDistribution.from_weights(weights)
        assert dist.cdf_unit(255) == ONE


class TestDeterminism:
    def test_independent_sessions_byte_identical(self, client):
        context = {"context_tokens": [116, 104, 101, 32]}
        sid_a = client.post("/session", json=context).json()["session_id"]
        sid_b = client.post("/session", json=context).json()["session_id"]
        assert sid_a != sid_b
        for token in (116, 111, 107):
            resp_a = client.post(f"/session/{sid_a}/next", json={"top_k": 64})
            resp_b = client.post(f"/session/{sid_b}/next", json={"top_k": 64})
            assert resp_a.content == resp_b.content  # byte-identical
            adv_a = client.post(f"/session/{sid_a}/advance", json={"token_id": token})
            adv_b = client.post(f"/session/{sid_b}/advance", json={"token_id": token})
            assert adv_a.content == adv_b.content

    def test_priming_equals_stepwise_advance(self, client):
        primed = client.post("/session",
                             json={"context_tokens": [97, 98, 99]}).json()["session_id"]
        stepped = client.post("/session", json={}).json()["session_id"]
        for token in (97, 98, 99):
            client.post(f"/session/{stepped}/advance", json={"token_id": token})
        resp_a = client.post(f"/session/{primed}/next", json={})
        resp_b = client.post(f"/session/{stepped}/next", json={})
        assert resp_a.content == resp_b.content
