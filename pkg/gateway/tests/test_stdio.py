"""Same schema over newline-delimited JSON on stdio."""

import io
import json

from bitpress_gateway.quantize import SCALE
from bitpress_gateway.stdio import serve_stdio


def converse(backend, requests):
    stdin = io.StringIO("".join(json.dumps(r) + "\n" for r in requests))
    stdout = io.StringIO()
    serve_stdio(backend, stdin=stdin, stdout=stdout)
    return [json.loads(line) for line in stdout.getvalue().splitlines()]


class TestStdioProtocol:
    def test_health_session_next_advance(self, backend):
        responses = converse(backend, [
            {"endpoint": "health"},
            {"endpoint": "session", "payload": {"context_text": "ab"}},
            {"endpoint": "next", "payload": {"session_id": "s1", "top_k": 16}},
            {"endpoint": "advance", "payload": {"session_id": "s1", "token_id": 99}},
        ])
        health, session, dist, advance = responses
        assert health["status"] == "ok" and health["scale"] == SCALE
        assert session["step"] == 2
        assert len(dist["probs"]) == 16
        assert sum(m for _, m in dist["probs"]) + dist["remainder"] == SCALE
        assert advance["step"] == 3

    def test_matches_http_schema(self, backend):
        from fastapi.testclient import TestClient

        from bitpress_gateway.service import create_app

        client = TestClient(create_app(backend))
        sid_http = client.post("/session", json={"context_text": "xy"}).json()["session_id"]
        http_body = client.post(f"/session/{sid_http}/next", json={"top_k": 8}).json()

        stdio_responses = converse(backend, [
            {"endpoint": "session", "payload": {"context_text": "xy"}},
            {"endpoint": "next", "payload": {"session_id": "s1", "top_k": 8}},
        ])
        stdio_body = stdio_responses[1]
        assert stdio_body["remainder"] == http_body["remainder"]
        assert [list(p) for p in http_body["probs"]] == stdio_body["probs"]
        assert stdio_body["scale"] == http_body["scale"]

    def test_errors_are_machine_readable(self, backend):
        responses = converse(backend, [
            {"endpoint": "next", "payload": {"session_id": "ghost"}},
            {"endpoint": "advance", "payload": {"session_id": "s1"}},
            {"endpoint": "teleport"},
            "not json at all",
        ][:3] + [{"endpoint": "session", "payload": {"context_tokens": [9999]}}])
        assert responses[0]["error"]["code"] == "unknown_session"
        assert responses[1]["error"]["code"] in ("unknown_session", "schema_violation")
        assert responses[2]["error"]["code"] == "schema_violation"
        assert responses[3]["error"]["code"] == "token_out_of_range"
