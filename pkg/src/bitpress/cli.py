"""Command-line surface.

Exit codes: 0 ok, 2 format/config errors, 3 model or context mismatch,
4 oracle failure.  Every command is deterministic given its inputs and
config; reports embed a hash of the effective config so identical runs
are byte-identical and comparable.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from typing import List, Optional

from . import blockcoder, lossy, metrics, qa, router
from .blockcoder import CoderConfig
from .models import (AdaptiveContextModel, StaticNGramModel, UniformModel,
                     byte_tokens, tokens_to_bytes, train_ngram)
from .oracles import OracleFailureError, ProcClient, read_jsonl

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_MISMATCH = 3
EXIT_ORACLE = 4

CONFIG_ENV_VAR = "BITPRESS_CONFIG"

_DEFAULT_CONFIG = {
    "coder": {"B": 58, "b": 5, "epsilon": 2.0 ** -50},
    "model": {"kind": "adaptive", "order": 2, "alpha": 0.01,
              "vocab_size": 256, "path": None, "context": ""},
    "router": {"k": 10, "index_path": None, "models_dir": None},
    "qa": {"budget": 10, "judge": None, "reference": "own_solution"},
}

_ALLOWED_KEYS = {
    "": {"coder", "model", "router", "qa"},
    "coder": {"B", "b", "epsilon"},
    "model": {"kind", "order", "alpha", "vocab_size", "path", "context"},
    "router": {"k", "index_path", "models_dir"},
    "qa": {"budget", "judge", "reference"},
    "qa.judge": {"mode", "threshold", "batch"},
}


class ConfigError(ValueError):
    pass


def _merge_config(user: dict) -> dict:
    def check_keys(section: dict, path: str):
        allowed = _ALLOWED_KEYS.get(path)
        if allowed is None:
            return
        unknown = set(section) - allowed
        if unknown:
            where = path or "top level"
            raise ConfigError(f"unknown config key(s) {sorted(unknown)} at {where}")

    check_keys(user, "")
    merged = json.loads(json.dumps(_DEFAULT_CONFIG))
    for section, values in user.items():
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        check_keys(values, section)
        if section == "qa" and isinstance(values.get("judge"), dict):
            check_keys(values["judge"], "qa.judge")
        merged[section].update(values)
    return merged


def load_config(path: Optional[str]) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return json.loads(json.dumps(_DEFAULT_CONFIG))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge_config(user)


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def coder_config(config: dict) -> CoderConfig:
    c = config["coder"]
    try:
        return CoderConfig(B=int(c["B"]), b=int(c["b"]), epsilon=float(c["epsilon"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad coder config: {exc}") from None


def build_model(config: dict):
    m = config["model"]
    kind = m["kind"]
    context = byte_tokens(m.get("context") or "")
    if kind == "uniform":
        return UniformModel(int(m["vocab_size"])).reset(context)
    if kind == "adaptive":
        return AdaptiveContextModel(int(m["vocab_size"]), int(m["order"]),
                                    m["alpha"]).reset(context)
    if kind == "ngram":
        if not m.get("path"):
            raise ConfigError("model.kind=ngram requires model.path")
        try:
            return StaticNGramModel.load(m["path"]).reset(context)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load model {m['path']}: {exc}") from None
    if kind == "gateway":
        from .gateway_client import (GatewayModel, HttpGatewayTransport,
                                     StdioGatewayTransport)
        uri = m.get("path") or ""
        if uri.startswith("http://") or uri.startswith("https://"):
            transport = HttpGatewayTransport(uri)
        elif uri.startswith("proc:"):
            command = uri[len("proc:"):].split()
            if not command:
                raise ConfigError("proc: gateway needs a command")
            transport = StdioGatewayTransport(ProcClient(command))
        else:
            raise ConfigError("model.kind=gateway needs an http(s):// or proc: path")
        return GatewayModel(transport, context=context)
    raise ConfigError(f"unknown model kind {kind!r}")


def _build_registry(config: dict) -> router.ModelRegistry:
    vocab = int(config["model"]["vocab_size"])
    registry = router.ModelRegistry("base", UniformModel(vocab))
    models_dir = config["router"].get("models_dir")
    if models_dir:
        for name in sorted(os.listdir(models_dir)):
            if name.endswith(".bpnm"):
                model = StaticNGramModel.load(os.path.join(models_dir, name))
                registry.add(name[:-len(".bpnm")], model)
    return registry


def _write_output(path: Optional[str], data: bytes) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        return
    # Assemble fully before touching the target: failures leave no
    # partial output behind.
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def cmd_compress(args, config: dict) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    model = build_model(config)
    stream = blockcoder.encode(list(data), model, coder_config(config))
    _write_output(args.out, blockcoder.pack(stream))
    return EXIT_OK


def cmd_decompress(args, config: dict) -> int:
    with open(args.input, "rb") as fh:
        raw = fh.read()
    stream = blockcoder.unpack(raw)
    model = build_model(config)
    tokens = blockcoder.decode(stream, model, coder_config(config))
    _write_output(args.out, tokens_to_bytes(tokens))
    return EXIT_OK


def cmd_train(args, config: dict) -> int:
    with open(args.corpus, "rb") as fh:
        corpus = fh.read()
    m = config["model"]
    order = args.order if args.order is not None else int(m["order"])
    model = train_ngram(corpus, order, alpha=m["alpha"],
                        vocab_size=int(m["vocab_size"]))
    model.save(args.out)
    print(model.model_id)
    return EXIT_OK


def cmd_build_index(args, config: dict) -> int:
    labeled, _prompt_lens = router.load_labeled_jsonl(args.samples)
    registry = _build_registry(config)
    k = args.k if args.k is not None else int(config["router"]["k"])
    if args.no_validate:
        ids = {mid for _, mid in labeled}
        for mid in sorted(ids):
            if mid not in registry:
                registry.add(mid, UniformModel(int(config["model"]["vocab_size"])))
    index = router.build_index(labeled, registry, k)
    index.save(args.out)
    print(f"indexed {len(index)} samples, k={index.k}")
    return EXIT_OK


def cmd_route(args, config: dict) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        text = fh.read()
    index = router.RouteIndex.load(args.index)
    registry = _build_registry(config)
    print(router.route(text, index, registry))
    return EXIT_OK


def cmd_eval_lossy(args, config: dict) -> int:
    records = read_jsonl(args.transcript)
    if not records:
        raise ConfigError("transcript file is empty")
    for rec in records:
        if "correct" not in rec:
            raise ConfigError("eval-lossy needs a 'correct' label on every record")
    replay = lossy.ReplayGenerator(records)
    model = build_model(config)
    cfg = coder_config(config)
    modes = sorted({rec["mode"] for rec in records})
    sets: List[lossy.CandidateSet] = []
    for pid in replay.prompt_ids():
        for mode in modes:
            try:
                recs = replay.records_for(pid, mode)
            except Exception:
                continue
            oracle = lossy.ReplayGenerator.pinned(records, pid)
            cs = lossy.shortest_of_n(
                pid, oracle, len(recs), mode, model, cfg,
                correctness=oracle.correctness(pid, mode, len(recs)))
            sets.append(cs)
    rows = lossy.selection_accuracy_report(sets)
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash(config)}\n")
    lossy.write_selection_csv(rows, buf)
    _write_output(args.out, buf.getvalue().encode("utf-8"))
    return EXIT_OK


def _qa_oracles(uri: str):
    if uri == "binary-search":
        return None  # constructed per problem from its prompt
    if uri.startswith("proc:"):
        command = uri[len("proc:"):].split()
        if not command:
            raise ConfigError("proc: oracle needs a command")
        return qa.ProcRoleOracles(ProcClient(command))
    raise ConfigError(f"unknown oracle URI {uri!r} (use binary-search or proc:CMD)")


def _binary_search_pack(problem: qa.Problem) -> qa.BinarySearchOracles:
    # prompt form: "guess:[lo,hi)"
    try:
        span = problem.prompt.split(":", 1)[1].strip()
        lo, hi = span.strip("[)").split(",")
        return qa.BinarySearchOracles(int(lo), int(hi))
    except (IndexError, ValueError):
        raise ConfigError(
            f"problem {problem.id} prompt is not a binary-search range") from None


def cmd_run_qa(args, config: dict) -> int:
    problems = qa.load_problems_jsonl(args.problems)
    qa_cfg = config["qa"]
    budget = args.budget if args.budget is not None else int(qa_cfg["budget"])
    judge_config = None
    if qa_cfg.get("judge"):
        j = qa_cfg["judge"]
        judge_config = qa.JudgeConfig(mode=j.get("mode", "objective"),
                                      threshold=j.get("threshold", 7),
                                      batch=j.get("batch", 5),
                                      reference=qa_cfg.get("reference", "own_solution"))
    shared_oracles = _qa_oracles(args.oracle)

    results = []
    total_bits = 0
    rows = []
    for problem in problems:
        oracles = shared_oracles or _binary_search_pack(problem)
        transcript = qa.run_qa(problem, oracles, budget, judge_config)
        payload = qa.encode_answers(transcript.response_bits, transcript.priors)
        correct = (problem.gold_answer is not None
                   and qa.default_grader(problem, transcript.final_answer))
        label = problem.difficulty().label if problem.baseline else None
        results.append((label, correct))
        total_bits += len(payload) + transcript.stop_field_bits
        rows.append({
            "problem_id": problem.id, "final_answer": transcript.final_answer,
            "correct": correct, "rounds": len(transcript.rounds),
            "payload_bits": len(payload),
            "difficulty": label.value if label else None,
        })

    labeled = [(lbl, ok) for lbl, ok in results if lbl is not None]
    report = {
        "config_hash": config_hash(config),
        "n_problems": len(problems),
        "budget": budget,
        "total_payload_bits": total_bits,
        "recovery": (sum(ok for _, ok in results) / len(results)) if results else None,
        "problems": rows,
    }
    for subset in (qa.SUBSET_MED_HARD, qa.SUBSET_ALL_NON_EASY):
        try:
            report[f"recovery_{subset}"] = qa.recovery_rate(labeled, subset)
        except qa.EmptySubsetError:
            report[f"recovery_{subset}"] = None
    _write_output(args.out, (json.dumps(report, indent=2) + "\n").encode("utf-8"))
    return EXIT_OK


def cmd_report(args, config: dict) -> int:
    with open(args.container, "rb") as fh:
        stream = blockcoder.unpack(fh.read())
    with open(args.input, "rb") as fh:
        text = fh.read()
    rep = metrics.ratio_report(text, stream)
    payload = dict(rep.rounded())
    payload["config_hash"] = config_hash(config)
    if args.format == "csv":
        buf = io.StringIO()
        metrics.write_reports_csv([rep], buf)
        out = buf.getvalue()
    else:
        out = json.dumps(payload, indent=2) + "\n"
    _write_output(args.out, out.encode("utf-8"))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitpress",
        description="model-driven compression toolkit")
    parser.add_argument("--config", help=f"config JSON (or ${CONFIG_ENV_VAR})")
    parser.add_argument("--seed", type=int, default=0,
                        help="reserved for oracle backends; built-in pipelines "
                             "are deterministic without it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="encode a file into a BPC1 container")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("decompress", help="decode a BPC1 container")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decompress)

    p = sub.add_parser("train", help="train a static n-gram model")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("build-index", help="build a routing index from labeled JSONL")
    p.add_argument("samples")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--no-validate", action="store_true",
                   help="accept model ids without a backing model file")
    p.set_defaults(fn=cmd_build_index)

    p = sub.add_parser("route", help="print the routed model id for a text")
    p.add_argument("input")
    p.add_argument("--index", required=True)
    p.set_defaults(fn=cmd_route)

    p = sub.add_parser("eval-lossy", help="selection-accuracy report from a transcript")
    p.add_argument("transcript")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval_lossy)

    p = sub.add_parser("run-qa", help="run the question-asking protocol")
    p.add_argument("problems")
    p.add_argument("--oracle", default="binary-search")
    p.add_argument("--budget", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_run_qa)

    p = sub.add_parser("report", help="ratio report for a container + original")
    p.add_argument("--container", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.fn(args, config)
    except (blockcoder.HeaderMismatchError, blockcoder.ContextHashMismatchError) as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OracleFailureError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (ConfigError, blockcoder.CoderError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
