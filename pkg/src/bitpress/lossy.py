"""Lossy compression by candidate generation and compressibility selection.

Three generation modes share one selection rule: compress every
candidate with the block coder and keep the one with the lowest ratio
(ties break to the earliest-generated candidate, for reproducibility).
Summarization additionally masks the answer out of the verbose solution
before requesting rewrites and only accepts a rewrite if a verifier can
re-derive the reference answer from the rewrite alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Sequence, TextIO, Tuple

from .blockcoder import CoderConfig, encode
from .metrics import ratio_report
from .models import byte_tokens
from .oracles import DeterminismViolationError, OracleFailureError, ProcClient

MODE_TEMPERATURE = "temperature_sampling"
MODE_SINGLE_PROMPT = "single_prompt"
MODE_SUMMARIZE = "summarize"
MODES = (MODE_TEMPERATURE, MODE_SINGLE_PROMPT, MODE_SUMMARIZE)

DEFAULT_TEMPERATURE = 0.8


class GeneratorOracle(Protocol):
    def generate(self, prompt: str, mode: str, n: int,
                 temperature: float = DEFAULT_TEMPERATURE) -> List[str]: ...


@dataclass(frozen=True)
class Candidate:
    text: str
    payload_bits: int
    ratio_bytes: float
    ratio_tokens: float
    accepted: bool = True
    correct: Optional[bool] = None


@dataclass
class CandidateSet:
    prompt: str
    mode: str
    candidates: List[Candidate]
    selected_index: int
    accepted: bool = True  # False: no candidate survived; selected is the fallback

    @property
    def selected(self) -> Candidate:
        return self.candidates[self.selected_index]

    @property
    def selected_ratio(self) -> float:
        return self.selected.ratio_bytes


class ScriptedGenerator:
    """Fixed candidate lists, keyed by (prompt, mode) or served globally."""

    def __init__(self, candidates: Sequence[str] = (),
                 by_key: Optional[Dict[Tuple[str, str], Sequence[str]]] = None):
        self._default = list(candidates)
        self._by_key = {k: list(v) for k, v in (by_key or {}).items()}

    def generate(self, prompt: str, mode: str, n: int,
                 temperature: float = DEFAULT_TEMPERATURE) -> List[str]:
        pool = self._by_key.get((prompt, mode), self._default)
        if len(pool) < n:
            raise OracleFailureError(
                f"scripted oracle has {len(pool)} candidates, {n} requested")
        return pool[:n]


class ReplayGenerator:
    """Replay candidates from recorded transcript records.

    Records: {prompt_id, mode, n_index, temperature, text, correct?}.
    ``prompt_id_fn`` maps the live prompt string to the recorded id
    (identity by default, or pin one id for a whole run).
    """

    def __init__(self, records: Sequence[dict],
                 prompt_id_fn: Optional[Callable[[str], str]] = None):
        self._pool: Dict[Tuple[str, str], List[dict]] = {}
        for rec in records:
            key = (str(rec["prompt_id"]), rec["mode"])
            self._pool.setdefault(key, []).append(rec)
        for recs in self._pool.values():
            recs.sort(key=lambda r: r["n_index"])
        self._prompt_id_fn = prompt_id_fn or (lambda prompt: prompt)

    @classmethod
    def pinned(cls, records: Sequence[dict], prompt_id: str) -> "ReplayGenerator":
        return cls(records, prompt_id_fn=lambda _prompt: prompt_id)

    def prompt_ids(self) -> List[str]:
        return sorted({pid for pid, _ in self._pool})

    def records_for(self, prompt: str, mode: str) -> List[dict]:
        key = (self._prompt_id_fn(prompt), mode)
        if key not in self._pool:
            raise DeterminismViolationError(f"no recorded candidates for {key}")
        return self._pool[key]

    def generate(self, prompt: str, mode: str, n: int,
                 temperature: float = DEFAULT_TEMPERATURE) -> List[str]:
        recs = self.records_for(prompt, mode)
        if len(recs) < n:
            raise OracleFailureError(
                f"transcript holds {len(recs)} candidates for "
                f"{(self._prompt_id_fn(prompt), mode)}, {n} requested")
        return [r["text"] for r in recs[:n]]

    def correctness(self, prompt: str, mode: str, n: int) -> List[Optional[bool]]:
        recs = self.records_for(prompt, mode)[:n]
        return [r.get("correct") for r in recs]


class RecordingGenerator:
    """Wrap a live generator and capture its outputs as replayable records."""

    def __init__(self, inner: GeneratorOracle, prompt_id_fn: Optional[Callable[[str], str]] = None):
        self._inner = inner
        self._prompt_id_fn = prompt_id_fn or (lambda prompt: prompt)
        self.records: List[dict] = []

    def generate(self, prompt: str, mode: str, n: int,
                 temperature: float = DEFAULT_TEMPERATURE) -> List[str]:
        texts = self._inner.generate(prompt, mode, n, temperature)
        pid = self._prompt_id_fn(prompt)
        for i, text in enumerate(texts):
            self.records.append({
                "prompt_id": pid, "mode": mode, "n_index": i,
                "temperature": temperature, "text": text,
            })
        return texts


class ProcGenerator:
    """Line-protocol subprocess generator (`proc:` oracle scheme)."""

    def __init__(self, client: ProcClient):
        self._client = client

    def generate(self, prompt: str, mode: str, n: int,
                 temperature: float = DEFAULT_TEMPERATURE) -> List[str]:
        resp = self._client.call({
            "role": "generate", "prompt": prompt, "mode": mode,
            "n": n, "temperature": temperature,
        })
        texts = resp.get("texts")
        if not isinstance(texts, list) or len(texts) != n:
            raise OracleFailureError(f"generator returned {texts!r} for n={n}")
        return [str(t) for t in texts]


@dataclass(frozen=True)
class MaskSpec:
    """Answer-pattern matcher and its replacement placeholder.

    Defaults match the boxed-answer convention.  Masking is one-way:
    recovering the answer means re-deriving it, never unmasking.
    """

    open_delim: str = "\\boxed{"
    close_delim: str = "}"
    placeholder: str = "???"

    def _spans(self, text: str) -> List[Tuple[int, int, str]]:
        """(start, end, content) spans of delimited answers."""
        spans = []
        pos = 0
        balanced = self.open_delim.endswith("{") and self.close_delim == "}"
        while True:
            start = text.find(self.open_delim, pos)
            if start < 0:
                break
            body_start = start + len(self.open_delim)
            if balanced:
                depth = 1
                i = body_start
                while i < len(text) and depth:
                    if text[i] == "{":
                        depth += 1
                    elif text[i] == "}":
                        depth -= 1
                    i += 1
                if depth:
                    break  # unterminated: leave the tail alone
                spans.append((start, i, text[body_start:i - 1]))
                pos = i
            else:
                end = text.find(self.close_delim, body_start)
                if end < 0:
                    break
                spans.append((start, end + len(self.close_delim), text[body_start:end]))
                pos = end + len(self.close_delim)
        return spans

    def extract(self, text: str) -> List[str]:
        """Delimited answers present in the text, placeholders excluded."""
        return [c for _, _, c in self._spans(text) if c != self.placeholder]

    def apply(self, text: str) -> str:
        """Replace every delimited answer with the placeholder."""
        out = []
        pos = 0
        for start, end, _content in self._spans(text):
            out.append(text[pos:start])
            out.append(self.open_delim + self.placeholder + self.close_delim)
            pos = end
        out.append(text[pos:])
        return "".join(out)


def extract_boxed_answer(text: str, mask: MaskSpec = MaskSpec()) -> Optional[str]:
    """Default verifier: the last delimited answer stated in the text."""
    answers = mask.extract(text)
    return answers[-1] if answers else None


def _evaluate_candidates(texts: Sequence[str], compressor_model,
                         config: CoderConfig,
                         accepted: Optional[Sequence[bool]] = None,
                         correct: Optional[Sequence[Optional[bool]]] = None) -> List[Candidate]:
    out = []
    for i, text in enumerate(texts):
        handle = compressor_model.fresh()
        stream = encode(byte_tokens(text), handle, config)
        rep = ratio_report(text, stream)
        out.append(Candidate(
            text=text,
            payload_bits=rep.payload_bits,
            ratio_bytes=rep.ratio_bytes,
            ratio_tokens=rep.ratio_tokens,
            accepted=accepted[i] if accepted is not None else True,
            correct=correct[i] if correct is not None else None,
        ))
    return out


def _argmin_ratio(candidates: Sequence[Candidate]) -> int:
    best = None
    for i, cand in enumerate(candidates):
        if not cand.accepted:
            continue
        if best is None or cand.ratio_bytes < candidates[best].ratio_bytes:
            best = i
    if best is None:
        raise ValueError("no accepted candidate")
    return best


def shortest_of_n(prompt: str, oracle: GeneratorOracle, n: int, mode: str,
                  compressor_model, config: CoderConfig = CoderConfig(),
                  temperature: float = DEFAULT_TEMPERATURE,
                  correctness: Optional[Sequence[Optional[bool]]] = None) -> CandidateSet:
    """Generate n candidates and keep the most compressible one."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown generation mode {mode!r}")
    texts = oracle.generate(prompt, mode, n, temperature)
    candidates = _evaluate_candidates(texts, compressor_model, config,
                                      correct=correctness)
    return CandidateSet(prompt, mode, candidates, _argmin_ratio(candidates))


def summarize_select(prompt: str, verbose_text: str, oracle: GeneratorOracle,
                     n: int, mask: MaskSpec, verifier: Callable[[str], Optional[str]],
                     compressor_model, config: CoderConfig = CoderConfig(),
                     temperature: float = DEFAULT_TEMPERATURE,
                     reference_answer: Optional[str] = None) -> CandidateSet:
    """Mask the answer, request succinct rewrites, keep the best faithful one.

    A rewrite is accepted only if ``verifier`` re-derives the reference
    answer from the rewrite alone.  If nothing is accepted the verbose
    original comes back flagged (``accepted=False``) rather than risking
    an unfaithful rewrite.
    """
    if not verbose_text:
        raise ValueError("verbose_text must be non-empty")
    if n < 1:
        raise ValueError("n must be >= 1")
    if reference_answer is None:
        answers = mask.extract(verbose_text)
        reference_answer = answers[-1] if answers else None
    masked = mask.apply(verbose_text)
    request = f"{prompt}\n\n{masked}" if prompt else masked
    texts = oracle.generate(request, MODE_SUMMARIZE, n, temperature)
    accepted = [verifier(t) == reference_answer and reference_answer is not None
                for t in texts]
    if not any(accepted):
        fallback = _evaluate_candidates([verbose_text], compressor_model, config)
        return CandidateSet(prompt, MODE_SUMMARIZE, fallback, 0, accepted=False)
    candidates = _evaluate_candidates(texts, compressor_model, config, accepted=accepted)
    return CandidateSet(prompt, MODE_SUMMARIZE, candidates, _argmin_ratio(candidates))


def always_accept_verifier(reference_answer: str) -> Callable[[str], str]:
    """Verifier that trusts every rewrite; collapses summarize_select to
    shortest_of_n over the rewrites (the soundness-hook equivalence)."""
    return lambda _text: reference_answer


@dataclass(frozen=True)
class SelectionRow:
    n: int
    random_acc: float
    best_compression_acc: float
    mean_ratio: float


def selection_accuracy_report(candidate_sets: Sequence[CandidateSet],
                              max_n: Optional[int] = None) -> List[SelectionRow]:
    """Random-selection vs argmin-ratio selection accuracy, per n.

    Every candidate must carry a correctness label.  Sets shorter than n
    are clamped at their own length.
    """
    if not candidate_sets:
        raise ValueError("no candidate sets")
    for cs in candidate_sets:
        for cand in cs.candidates:
            if cand.correct is None:
                raise ValueError("every candidate needs a correctness label")
    if max_n is None:
        max_n = max(len(cs.candidates) for cs in candidate_sets)
    rows = []
    for n in range(1, max_n + 1):
        rand_accs = []
        best_accs = []
        ratios = []
        for cs in candidate_sets:
            prefix = cs.candidates[:min(n, len(cs.candidates))]
            rand_accs.append(sum(1.0 for c in prefix if c.correct) / len(prefix))
            best = min(range(len(prefix)), key=lambda i: prefix[i].ratio_bytes)
            best_accs.append(1.0 if prefix[best].correct else 0.0)
            ratios.append(prefix[best].ratio_bytes)
        rows.append(SelectionRow(
            n=n,
            random_acc=sum(rand_accs) / len(rand_accs),
            best_compression_acc=sum(best_accs) / len(best_accs),
            mean_ratio=sum(ratios) / len(ratios),
        ))
    return rows


def write_selection_csv(rows: Sequence[SelectionRow], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(["n", "random_acc", "best_comp_acc", "mean_ratio"])
    for row in rows:
        writer.writerow([row.n, f"{row.random_acc:.4f}",
                         f"{row.best_compression_acc:.4f}", f"{row.mean_ratio:.4f}"])
