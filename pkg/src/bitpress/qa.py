"""Interactive question-asking compression.

A small solver model drafts an answer, then asks a stronger answerer a
budgeted sequence of yes/no questions, revising after each reply.  The
solver's draft, questions, and revisions are deterministic functions of
the problem and the replies, so the only thing that ever needs to cross
the wire is the reply bits: a receiver reruns the solver side locally
and feeds it the decoded replies to reconstruct the final answer.

Reply bits are sent either raw (one bit per round) or arithmetic-coded
under per-round Yes-probability priors, whichever is shorter; a one-bit
flag says which, so the payload never exceeds rounds + 1 bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from .oracles import DeterminismViolationError, ProcClient

YES = True
NO = False

History = Tuple[Tuple[str, bool], ...]


class NonBinaryAnswerError(ValueError):
    """The answerer returned something other than Yes or No."""


class PriorOutOfRangeError(ValueError):
    pass


class TruncatedBitsError(ValueError):
    pass


class EmptySubsetError(ValueError):
    pass


class DifficultyLabel(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    VERY_HARD = "very_hard"


@dataclass(frozen=True)
class DifficultyResult:
    label: DifficultyLabel
    # True for baseline combinations the tier scheme does not define
    # (the small model solved it but a larger one did not); callers
    # should treat these as unreliable rather than binning them.
    anomaly: bool = False


def classify_difficulty(small: bool, mid: bool, large: bool) -> DifficultyResult:
    """Tier a problem by which baseline models solved it."""
    if small:
        # Easy proper needs all three; a small-only success is baseline
        # flakiness the tier scheme does not define.
        return DifficultyResult(DifficultyLabel.EASY, anomaly=not (mid and large))
    if mid:
        return DifficultyResult(DifficultyLabel.MEDIUM)
    if large:
        return DifficultyResult(DifficultyLabel.HARD)
    return DifficultyResult(DifficultyLabel.VERY_HARD)


@dataclass(frozen=True)
class JudgeConfig:
    """Early-stopping judge settings.  Judging defaults to off elsewhere;
    these defaults apply only once a judge is requested."""

    mode: str = "objective"  # or "comparison"
    threshold: float = 7.0
    batch: int = 5
    reference: str = "own_solution"  # none | own_solution | gold

    def __post_init__(self):
        if self.mode not in ("objective", "comparison"):
            raise ValueError("judge mode must be 'objective' or 'comparison'")
        if not (1 <= self.threshold <= 10):
            raise ValueError("judge threshold must be in [1, 10]")
        if self.batch < 1:
            raise ValueError("judge batch must be >= 1")
        if self.reference not in ("none", "own_solution", "gold"):
            raise ValueError("reference must be none, own_solution, or gold")


@dataclass(frozen=True)
class Problem:
    id: str
    prompt: str
    gold_answer: Optional[str] = None
    baseline: Optional[Dict[str, bool]] = None  # {"small","mid","large"}

    def difficulty(self) -> DifficultyResult:
        if not self.baseline:
            raise ValueError(f"problem {self.id} has no baseline labels")
        return classify_difficulty(self.baseline["small"], self.baseline["mid"],
                                   self.baseline["large"])


def load_problems_jsonl(path) -> List[Problem]:
    problems = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "id" not in rec or "prompt" not in rec:
                raise ValueError(f"{path}:{line_no}: problem needs 'id' and 'prompt'")
            problems.append(Problem(
                id=str(rec["id"]), prompt=rec["prompt"],
                gold_answer=rec.get("gold_answer"),
                baseline=rec.get("baseline"),
            ))
    return problems


class RoleOracles(Protocol):
    """The four protocol roles.  solve/question must be deterministic
    functions of their inputs; that determinism is what lets the receiver
    regenerate everything but the reply bits."""

    def solve(self, problem: Problem, history: History) -> str: ...

    def question(self, problem: Problem, history: History) -> str: ...

    def answer(self, problem: Problem, question: str,
               reference: Optional[str]) -> str: ...

    def judge(self, problem: Problem, answer: str,
              reference: Optional[str]) -> float: ...

    def prior(self, problem: Problem, history: History, question: str) -> float: ...


@dataclass(frozen=True)
class QARound:
    question: str
    response: bool  # Yes=True, No=False
    answer: str
    prior: float = 0.5
    judge_score: Optional[float] = None


@dataclass
class QATranscript:
    problem_id: str
    initial_answer: str
    rounds: List[QARound]
    budget: int
    stop_round: Optional[int] = None  # set when a judge stopped early
    judged: bool = False

    @property
    def final_answer(self) -> str:
        return self.rounds[-1].answer if self.rounds else self.initial_answer

    @property
    def response_bits(self) -> List[bool]:
        return [r.response for r in self.rounds]

    @property
    def priors(self) -> List[float]:
        return [r.prior for r in self.rounds]

    @property
    def naive_bits(self) -> int:
        return len(self.rounds)

    @property
    def stop_field_bits(self) -> int:
        # When judging is on, the receiver must also learn how many
        # rounds actually ran; budget N needs ceil(log2(N+1)) bits.
        if not self.judged or self.budget == 0:
            return 0
        return math.ceil(math.log2(self.budget + 1))

    def transmitted_bits(self) -> int:
        return len(encode_answers(self.response_bits, self.priors)) + self.stop_field_bits


def _parse_yes_no(raw: str) -> bool:
    norm = raw.strip().lower()
    if norm == "yes":
        return YES
    if norm == "no":
        return NO
    raise NonBinaryAnswerError(f"answerer returned {raw!r}, need Yes or No")


def _resolve_reference(problem: Problem, mode: str) -> Optional[str]:
    if mode == "gold":
        return problem.gold_answer
    return None  # none / own_solution: the oracle consults itself


def run_qa(problem: Problem, oracles: RoleOracles, budget: int,
           judge_config: Optional[JudgeConfig] = None) -> QATranscript:
    """Execute the protocol for one problem.

    Batch mode (``judge_config=None``, the default) runs all ``budget``
    rounds with no judging.  With a judge, the transcript is scored
    every ``batch`` rounds and stops once the score clears the
    threshold.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    initial = oracles.solve(problem, ())
    rounds: List[QARound] = []
    history: History = ()
    stop_round: Optional[int] = None
    reference_mode = judge_config.reference if judge_config else "gold"
    reference = _resolve_reference(problem, reference_mode)

    for i in range(1, budget + 1):
        question = oracles.question(problem, history)
        prior = float(oracles.prior(problem, history, question))
        response = _parse_yes_no(oracles.answer(problem, question, reference))
        history = history + ((question, response),)
        answer = oracles.solve(problem, history)
        score: Optional[float] = None
        if judge_config is not None and i % judge_config.batch == 0:
            score = float(oracles.judge(problem, answer, reference))
        rounds.append(QARound(question, response, answer, prior, score))
        if score is not None and score >= judge_config.threshold:
            stop_round = i
            break

    return QATranscript(
        problem_id=problem.id,
        initial_answer=initial,
        rounds=rounds,
        budget=budget,
        stop_round=stop_round,
        judged=judge_config is not None,
    )


# ---------------------------------------------------------------------------
# Reply-bit entropy coding
# ---------------------------------------------------------------------------

_FLAG_RAW = "1"
_FLAG_CODED = "0"


def _check_priors(priors: Sequence[float]) -> List[Fraction]:
    out = []
    for p in priors:
        if not (0.0 < p < 1.0):
            raise PriorOutOfRangeError(f"prior {p} outside (0, 1)")
        out.append(Fraction(p))
    return out


def _answer_interval(answers: Sequence[bool], priors: Sequence[Fraction]) -> Tuple[Fraction, Fraction]:
    lo, hi = Fraction(0), Fraction(1)
    for bit, p in zip(answers, priors):
        width = hi - lo
        split = lo + width * (1 - p)  # [lo, split) = No, [split, hi) = Yes
        if bit:
            lo = split
        else:
            hi = split
    return lo, hi


def _dyadic_cover(lo: Fraction, hi: Fraction) -> str:
    """Shortest bit string z (MSB first) with [z/2^L, (z+1)/2^L) inside [lo, hi)."""
    width = hi - lo
    level = 0
    if width < 1:
        level = max(0, math.ceil(-math.log2(float(width))) - 1)
    while True:
        scale = 1 << level
        z = -((-lo.numerator * scale) // lo.denominator)  # ceil(lo * scale)
        if Fraction(z + 1, scale) <= hi:
            if level == 0:
                return ""
            return format(z, "b").zfill(level)
        level += 1


def encode_answers(answers: Sequence[bool], priors: Sequence[float]) -> str:
    """Yes/No sequence -> flag + payload bits ('0'/'1' string).

    Arithmetic-codes the answers under the priors; if the coded form is
    not strictly shorter than sending the answers raw, the raw form is
    sent instead.  The flag bit is always present, so the total is at
    most ``len(answers) + 1`` bits.
    """
    if len(answers) != len(priors):
        raise ValueError("answers and priors must have equal length")
    fracs = _check_priors(priors)
    n = len(answers)
    lo, hi = _answer_interval(answers, fracs)
    coded = _dyadic_cover(lo, hi)
    if len(coded) >= n:
        return _FLAG_RAW + "".join("1" if a else "0" for a in answers)
    return _FLAG_CODED + coded


def decode_answers(bits: str, priors: Sequence[float]) -> List[bool]:
    """Invert :func:`encode_answers` under identical priors."""
    fracs = _check_priors(priors)
    n = len(fracs)
    if len(bits) < 1:
        raise TruncatedBitsError("payload missing its flag bit")
    if any(c not in "01" for c in bits):
        raise ValueError("payload must be a '0'/'1' string")
    flag, payload = bits[0], bits[1:]
    if flag == _FLAG_RAW:
        if len(payload) < n:
            raise TruncatedBitsError(f"raw payload holds {len(payload)} bits, need {n}")
        return [c == "1" for c in payload[:n]]
    # Trailing padding after the coded point is harmless: any extension
    # of z still lies inside the covered interval.
    v = Fraction(int(payload, 2), 1 << len(payload)) if payload else Fraction(0)
    out: List[bool] = []
    lo, hi = Fraction(0), Fraction(1)
    for p in fracs:
        width = hi - lo
        split = lo + width * (1 - p)
        bit = v >= split
        if bit:
            lo = split
        else:
            hi = split
        out.append(bool(bit))
    return out


def pack_answer_payload(bits: str, n_rounds: int) -> bytes:
    """Wire form: u8 round count, then the flag+payload bits, zero-padded."""
    if not (0 <= n_rounds <= 255):
        raise ValueError("round count must fit in one byte")
    out = bytearray([n_rounds])
    acc = 0
    nbits = 0
    for c in bits:
        acc = (acc << 1) | (c == "1")
        nbits += 1
        if nbits == 8:
            out.append(acc)
            acc, nbits = 0, 0
    if nbits:
        out.append(acc << (8 - nbits))
    return bytes(out)


def unpack_answer_payload(data: bytes) -> Tuple[int, str]:
    if not data:
        raise TruncatedBitsError("empty payload")
    n = data[0]
    bits = "".join(format(byte, "08b") for byte in data[1:])
    return n, bits


def reconstruct(problem: Problem, payload_bits: str, oracles: RoleOracles,
                priors: Sequence[float]) -> str:
    """Receiver side: decode the reply bits and rerun the solver half.

    Regenerates the draft and every question locally, so the output
    equals the sender's final answer whenever the oracles are the same
    deterministic functions the sender ran.
    """
    answers = decode_answers(payload_bits, priors)
    return replay_rounds(problem, answers, oracles).final_answer


def replay_rounds(problem: Problem, responses: Sequence[bool],
                  oracles: RoleOracles) -> QATranscript:
    """Drive the solver/questioner roles with an explicit response list."""
    initial = oracles.solve(problem, ())
    history: History = ()
    rounds: List[QARound] = []
    for r in responses:
        question = oracles.question(problem, history)
        history = history + ((question, bool(r)),)
        answer = oracles.solve(problem, history)
        rounds.append(QARound(question, bool(r), answer))
    return QATranscript(problem.id, initial, rounds, budget=len(rounds))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

SUBSET_MED_HARD = "med_hard"
SUBSET_ALL_NON_EASY = "all_non_easy"

_SUBSETS = {
    SUBSET_MED_HARD: {DifficultyLabel.MEDIUM, DifficultyLabel.HARD},
    SUBSET_ALL_NON_EASY: {DifficultyLabel.MEDIUM, DifficultyLabel.HARD,
                          DifficultyLabel.VERY_HARD},
}


def recovery_rate(results: Sequence[Tuple[DifficultyLabel, bool]],
                  subset: str = SUBSET_MED_HARD) -> float:
    """Fraction of problems in the difficulty subset answered correctly."""
    if subset not in _SUBSETS:
        raise ValueError(f"unknown subset {subset!r}")
    wanted = _SUBSETS[subset]
    hits = [correct for label, correct in results if label in wanted]
    if not hits:
        raise EmptySubsetError(f"no problems in subset {subset}")
    return sum(hits) / len(hits)


def qa_compression_ratio(n_bits: int, response_tokens: int, vocab_size: int) -> float:
    """Protocol bits over the uniform-coded size of the full response."""
    if response_tokens < 1:
        raise ValueError("response_tokens must be >= 1")
    if vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    return n_bits / (response_tokens * math.log2(vocab_size))


def default_grader(problem: Problem, answer: str) -> bool:
    if problem.gold_answer is None:
        raise ValueError(f"problem {problem.id} has no gold answer to grade against")
    return answer.strip() == problem.gold_answer.strip()


def regression_check(easy_problems: Sequence[Problem], oracles, budget: int,
                     judge_config: Optional[JudgeConfig] = None,
                     grade: Callable[[Problem, str], bool] = default_grader,
                     ) -> Tuple[float, float]:
    """(protocol regression rate, no-protocol re-solve regression rate).

    Inputs are problems the solver already answers correctly; any
    incorrect outcome here is regression.
    """
    if not easy_problems:
        raise EmptySubsetError("no easy problems supplied")
    protocol_wrong = 0
    reeval_wrong = 0
    for problem in easy_problems:
        transcript = run_qa(problem, oracles, budget, judge_config)
        if not grade(problem, transcript.final_answer):
            protocol_wrong += 1
        reeval = (oracles.reevaluate(problem) if hasattr(oracles, "reevaluate")
                  else oracles.solve(problem, ()))
        if not grade(problem, reeval):
            reeval_wrong += 1
    n = len(easy_problems)
    return protocol_wrong / n, reeval_wrong / n


# ---------------------------------------------------------------------------
# Oracle packs
# ---------------------------------------------------------------------------

class BinarySearchOracles:
    """Exhaustively checkable oracle pack: the answerer holds an integer
    secret, the questioner bisects, the solver reports the narrowed lower
    bound.  With budget >= log2(range) the final answer is exact."""

    def __init__(self, lo: int = 0, hi: int = 1024):
        if hi <= lo:
            raise ValueError("empty secret range")
        self.lo = lo
        self.hi = hi

    def make_problem(self, secret: int) -> Problem:
        if not (self.lo <= secret < self.hi):
            raise ValueError("secret outside range")
        return Problem(id=f"secret-{secret}",
                       prompt=f"guess:[{self.lo},{self.hi})",
                       gold_answer=str(secret))

    def _bounds(self, history: History) -> Tuple[int, int]:
        lo, hi = self.lo, self.hi
        for question, response in history:
            m = int(question.split(":", 1)[1].rstrip("?"))
            if response:
                lo = m
            else:
                hi = m
        return lo, hi

    def solve(self, problem: Problem, history: History) -> str:
        lo, _hi = self._bounds(history)
        return str(lo)

    def question(self, problem: Problem, history: History) -> str:
        lo, hi = self._bounds(history)
        return f"ge:{(lo + hi) // 2}?"

    def answer(self, problem: Problem, question: str, reference: Optional[str]) -> str:
        secret = int(reference if reference is not None else problem.gold_answer)
        m = int(question.split(":", 1)[1].rstrip("?"))
        return "Yes" if secret >= m else "No"

    def judge(self, problem: Problem, answer: str, reference: Optional[str]) -> float:
        return 0.0  # never satisfied; pack is meant for batch mode

    def prior(self, problem: Problem, history: History, question: str) -> float:
        return 0.5  # each bisection is a fair coin

    def reevaluate(self, problem: Problem) -> str:
        return self.solve(problem, ())


class ScriptedOracles:
    """Per-round scripts for every role.

    Solver and questioner are pure functions of the history position.
    The answerer and judge sit on the far side of the wire and are
    positional with call counters; ``reset_script()`` rewinds them
    before replaying the same script again.
    """

    def __init__(self, initial: str, questions: Sequence[str],
                 answers: Sequence[str], revisions: Sequence[str],
                 scores: Sequence[float] = (), priors: Sequence[float] = (),
                 reeval: Optional[str] = None):
        self._initial = initial
        self._questions = list(questions)
        self._answers = list(answers)
        self._revisions = list(revisions)
        self._scores = list(scores)
        self._priors = list(priors)
        self._reeval = reeval
        self._answer_calls = 0
        self._judge_calls = 0

    def reset_script(self) -> "ScriptedOracles":
        self._answer_calls = 0
        self._judge_calls = 0
        return self

    def solve(self, problem: Problem, history: History) -> str:
        if not history:
            return self._initial
        idx = len(history) - 1
        if idx >= len(self._revisions):
            raise DeterminismViolationError("solver queried past its script")
        return self._revisions[idx]

    def question(self, problem: Problem, history: History) -> str:
        idx = len(history)
        if idx >= len(self._questions):
            raise DeterminismViolationError("questioner queried past its script")
        return self._questions[idx]

    def answer(self, problem: Problem, question: str, reference: Optional[str]) -> str:
        idx = self._answer_calls
        if idx >= len(self._answers):
            raise DeterminismViolationError("answerer queried past its script")
        if question != self._questions[idx]:
            raise DeterminismViolationError(
                f"replay mismatch at round {idx + 1}: got question {question!r}")
        self._answer_calls += 1
        return self._answers[idx]

    def judge(self, problem: Problem, answer: str, reference: Optional[str]) -> float:
        idx = self._judge_calls
        if idx >= len(self._scores):
            raise DeterminismViolationError("judge queried past its script")
        self._judge_calls += 1
        return self._scores[idx]

    def prior(self, problem: Problem, history: History, question: str) -> float:
        idx = len(history)
        if idx < len(self._priors):
            return self._priors[idx]
        return 0.5

    def reevaluate(self, problem: Problem) -> str:
        return self._reeval if self._reeval is not None else self._initial


class ProcRoleOracles:
    """Line-protocol subprocess for all four roles (`proc:` scheme)."""

    def __init__(self, client: ProcClient):
        self._client = client

    def _call(self, role: str, problem: Problem, **payload) -> dict:
        req = {"role": role, "problem_id": problem.id, "prompt": problem.prompt}
        req.update(payload)
        return self._client.call(req)

    def solve(self, problem: Problem, history: History) -> str:
        resp = self._call("solve", problem, history=[[q, r] for q, r in history])
        return str(resp["text"])

    def question(self, problem: Problem, history: History) -> str:
        resp = self._call("question", problem, history=[[q, r] for q, r in history])
        return str(resp["text"])

    def answer(self, problem: Problem, question: str, reference: Optional[str]) -> str:
        resp = self._call("answer", problem, question=question, reference=reference)
        return str(resp["text"])

    def judge(self, problem: Problem, answer: str, reference: Optional[str]) -> float:
        resp = self._call("judge", problem, answer=answer, reference=reference)
        return float(resp["score"])

    def prior(self, problem: Problem, history: History, question: str) -> float:
        return 0.5


# ---------------------------------------------------------------------------
# Transcript files
# ---------------------------------------------------------------------------

def write_transcript_jsonl(transcript: QATranscript, path) -> None:
    """Meta record first, then one record per round: {q, r, a, judge_score?}."""
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "problem_id": transcript.problem_id,
            "initial_answer": transcript.initial_answer,
            "budget": transcript.budget,
            "stop_round": transcript.stop_round,
            "judged": transcript.judged,
        }
        fh.write(json.dumps(meta, ensure_ascii=False) + "\n")
        for rnd in transcript.rounds:
            rec = {"q": rnd.question, "r": "Yes" if rnd.response else "No",
                   "a": rnd.answer, "prior": rnd.prior}
            if rnd.judge_score is not None:
                rec["judge_score"] = rnd.judge_score
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_transcript_jsonl(path) -> QATranscript:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or "problem_id" not in lines[0]:
        raise ValueError("transcript file missing its meta record")
    meta = lines[0]
    rounds = [QARound(rec["q"], rec["r"] == "Yes", rec["a"],
                      rec.get("prior", 0.5), rec.get("judge_score"))
              for rec in lines[1:]]
    return QATranscript(meta["problem_id"], meta["initial_answer"], rounds,
                        meta["budget"], meta.get("stop_round"),
                        meta.get("judged", False))
