"""Record/replay and subprocess plumbing shared by the lossy and QA engines.

Live generation (an LLM behind a process or HTTP endpoint) is captured
into JSONL transcripts once; every test and evaluation then replays the
transcript offline, so results are deterministic and the suite needs no
network.
"""

from __future__ import annotations

import json
import subprocess
from typing import Any, Dict, Iterable, List


class OracleFailureError(RuntimeError):
    """An oracle could not produce the requested output."""


class DeterminismViolationError(RuntimeError):
    """A replayed oracle was queried off-script."""


def read_jsonl(path) -> List[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad JSON: {exc}") from None
    return records


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


class ProcClient:
    """Newline-delimited JSON request/response over a subprocess.

    One request line out, one response line back; the child owns any
    state between calls.
    """

    def __init__(self, command: List[str]):
        self._proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)

    def call(self, request: Dict[str, Any]) -> Dict[str, Any]:
        if self._proc.poll() is not None:
            raise OracleFailureError("oracle subprocess exited")
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise OracleFailureError(f"oracle subprocess pipe failed: {exc}") from None
        if not line:
            raise OracleFailureError("oracle subprocess closed its output")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise OracleFailureError(f"oracle sent bad JSON: {exc}") from None
        if "error" in response:
            raise OracleFailureError(f"oracle error: {response['error']}")
        return response

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "ProcClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
