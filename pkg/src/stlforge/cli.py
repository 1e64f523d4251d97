"""Command-line surface: validate, metrics, monitor, reward, tool, gen.

Exit codes: 0 success/SAT, 1 domain-negative (UNSAT, invalid corpus, tool
error), 2 operational error.  Config precedence: flags > STLFORGE_* env vars >
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench
from .matcher import MatchConfig, evaluate_batch
from .rollout import RewardConfig, default_token_spans, score_group
from .semantics import EvalError, Trace, satisfies
from .stl_ast import SchemaError, parse_stl_json
from .tools import ToolCall, UnknownToolError, ToolArgsError, execute_tool, format_tool_result

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_ERROR = 2

_DEFAULTS = {
    "tolerance": 0.1,
    "tau": 0.5,
    "kappa": 0.3,
    "group_size": 8,
    "max_tool_rounds": 5,
    "seed": 0,
}


def _env_default(name: str, cast):
    raw = os.environ.get(f"STLFORGE_{name.upper()}")
    if raw is None:
        return _DEFAULTS[name]
    return cast(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stlforge")
    parser.add_argument("--tolerance", type=float, default=_env_default("tolerance", float))
    parser.add_argument("--tau", type=float, default=_env_default("tau", float))
    parser.add_argument("--kappa", type=float, default=_env_default("kappa", float))
    parser.add_argument("--group-size", type=int, default=_env_default("group_size", int))
    parser.add_argument(
        "--max-tool-rounds", type=int, default=_env_default("max_tool_rounds", int)
    )
    parser.add_argument("--seed", type=int, default=_env_default("seed", int))
    parser.add_argument("--format", choices=("json", "jsonl"), default="json")
    parser.add_argument("--output", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="rule-check a dataset JSONL file")
    p.add_argument("dataset")

    p = sub.add_parser("metrics", help="format/formula accuracy for predictions")
    p.add_argument("predictions")
    p.add_argument("references")

    p = sub.add_parser("monitor", help="evaluate a formula over a trace")
    p.add_argument("formula")
    p.add_argument("trace")
    p.add_argument("--at", type=int, default=0)

    p = sub.add_parser("reward", help="score grouped rollouts against references")
    p.add_argument("rollouts")
    p.add_argument("dataset", nargs="?", default=None)

    p = sub.add_parser("tool", help="run one deterministic tool")
    p.add_argument("name")
    p.add_argument("args", nargs="*")

    p = sub.add_parser("gen", help="generate samples from a template spec")
    p.add_argument("template")
    p.add_argument("count", type=int)

    return parser


def _emit(args, payload_lines):
    text = "\n".join(payload_lines)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_validate(args) -> int:
    try:
        samples = bench.read_dataset(args.dataset)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SchemaError, KeyError, ValueError) as exc:
        print(f"error: malformed dataset: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = {}
    for s in samples:
        violations = bench.validate_sample(s, tolerance=args.tolerance)
        if violations:
            report[s.id] = [{"kind": v.kind, "detail": v.detail} for v in violations]
    _emit(args, [json.dumps(report, indent=2)])
    return EXIT_OK if not report else EXIT_NEGATIVE


def cmd_metrics(args) -> int:
    try:
        predictions = _read_jsonl(args.predictions)
        references = _read_jsonl(args.references)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    ref_by_id = {r["id"]: r["reference"] for r in references}
    records = []
    for p in predictions:
        if "reference" in p:
            reference = p["reference"]
        elif p.get("id") in ref_by_id:
            reference = ref_by_id[p["id"]]
        else:
            print(f"error: no reference for id {p.get('id')!r}", file=sys.stderr)
            return EXIT_ERROR
        records.append(
            {"id": p.get("id"), "prediction": p.get("prediction", ""), "reference": reference}
        )
    report = evaluate_batch(records, MatchConfig(numeric_tolerance=args.tolerance))
    _emit(args, [json.dumps(report)])
    return EXIT_OK


def cmd_monitor(args) -> int:
    try:
        with open(args.formula, "r", encoding="utf-8") as fh:
            formula = parse_stl_json(fh.read())
        with open(args.trace, "r", encoding="utf-8") as fh:
            text = fh.read()
        if args.trace.endswith(".csv"):
            trace = Trace.from_csv(text)
        else:
            trace = Trace.from_json(text)
        verdict = satisfies(formula, trace, args.at)
    except (OSError, SchemaError, EvalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print("SAT" if verdict else "UNSAT")
    return EXIT_OK if verdict else EXIT_NEGATIVE


def cmd_reward(args) -> int:
    try:
        rows = _read_jsonl(args.rollouts)
        dataset = bench.read_dataset(args.dataset) if args.dataset else []
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    by_id = {s.id: s for s in dataset}
    cfg = RewardConfig(
        tau=args.tau, kappa=args.kappa, tolerance=args.tolerance, group_size=args.group_size
    )

    def resolve_reference(row):
        ref = row.get("reference")
        if isinstance(ref, dict):
            if "STL" in ref:
                return bench.parse_stl_object(ref)
            return bench.Sample.from_json(ref).reference
        ref_id = row.get("reference_id", ref)
        if ref_id in by_id:
            return by_id[ref_id].reference
        raise KeyError(f"no reference for rollout in group {row.get('group_id')!r}")

    groups: dict = {}
    order = []
    for row in rows:
        gid = row.get("group_id", "")
        if gid not in groups:
            groups[gid] = []
            order.append(gid)
        groups[gid].append(row)

    lines = []
    for gid in order:
        members = groups[gid]
        try:
            references = [resolve_reference(r) for r in members]
        except (KeyError, SchemaError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        transcripts = [r.get("rollout_transcript", "") for r in members]
        spans = [
            [tuple(span) for span in r["token_spans"]]
            if r.get("token_spans") is not None
            else default_token_spans(t)
            for r, t in zip(members, transcripts)
        ]
        reports = score_group(transcripts, references, cfg, token_spans_list=spans)
        for row, report in zip(members, reports):
            doc = {"group_id": gid}
            if "id" in row:
                doc["id"] = row["id"]
            doc.update(report.to_json())
            lines.append(json.dumps(doc))
    _emit(args, lines)
    return EXIT_OK


def _coerce_cli_arg(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def cmd_tool(args) -> int:
    call_args = tuple(_coerce_cli_arg(a) for a in args.args)
    kwargs = {}
    if len(call_args) == 1 and isinstance(call_args[0], dict):
        kwargs, call_args = call_args[0], ()
    try:
        result = execute_tool(ToolCall(name=args.name, args=call_args, kwargs=kwargs))
    except (UnknownToolError, ToolArgsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    if not result.ok:
        print(f"error: {result.error_detail}", file=sys.stderr)
        return EXIT_NEGATIVE
    print(format_tool_result(result))
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        with open(args.template, "r", encoding="utf-8") as fh:
            spec = bench.TemplateSpec.from_json(json.load(fh))
        samples = bench.generate_samples(spec, args.count, seed=args.seed)
    except (OSError, bench.ConfigError, TypeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _emit(args, [json.dumps(s.to_json()) for s in samples])
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "metrics": cmd_metrics,
    "monitor": cmd_monitor,
    "reward": cmd_reward,
    "tool": cmd_tool,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
