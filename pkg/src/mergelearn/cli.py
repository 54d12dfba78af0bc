"""Command-line interface: learn, apply, classify, eval.

Exit codes: 0 success (including "no suggestion"), 1 operational failure,
2 usage error. All machine-readable output has a stable key order and no
timestamps.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .conflicts import ConflictedFile, tokenize_nodes
from .corpus import EmptyCorpusError, evaluate, load_corpus, report
from .dsl import (
    ParseError,
    Program,
    SynthConfig,
    config_to_json,
    program_from_json,
    program_to_json,
    run_program,
)
from .synth import ExampleSpec, learn

logger = logging.getLogger(__name__)

KEYWORDS_ENV = "MERGELEARN_KEYWORDS"


def _build_config(args) -> SynthConfig:
    kwargs = {}
    if getattr(args, "max_depth", None) is not None:
        kwargs["max_concat_depth"] = args.max_depth
    if getattr(args, "order_insensitive_includes", False):
        kwargs["order_insensitive_includes"] = True
    keywords_path = os.environ.get(KEYWORDS_ENV)
    if keywords_path:
        data = json.loads(Path(keywords_path).read_text(encoding="utf-8"))
        if "fork" in data:
            kwargs["fork_keywords"] = tuple(data["fork"])
        if "main" in data:
            kwargs["main_keywords"] = tuple(data["main"])
    return SynthConfig(**kwargs)


def _load_example_spec(path: Path, side_order: str) -> ExampleSpec:
    entries = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{path}: expected a non-empty JSON array of examples")
    base = path.parent
    cases = []
    for i, entry in enumerate(entries):
        conflict_path = base / entry["conflict"]
        resolution_path = base / entry["resolution"]
        file_path = entry.get("file_path", str(conflict_path))
        chunks = ConflictedFile.parse(
            conflict_path.read_text(encoding="utf-8"), file_path, side_order=side_order
        ).chunks
        if len(chunks) != 1:
            raise ValueError(f"{conflict_path}: example files must contain exactly one conflict, found {len(chunks)}")
        resolution_lines = resolution_path.read_text(encoding="utf-8").split("\n")
        if resolution_lines and resolution_lines[-1] == "":
            resolution_lines.pop()
        cases.append((chunks[0], tokenize_nodes(resolution_lines)))
    return ExampleSpec(tuple(cases))


def _program_file_json(entry, config: SynthConfig, spec_hash: str, rank_index: int) -> dict:
    out = program_to_json(entry.program)
    out["meta"] = {
        "rank": rank_index,
        "score": entry.score,
        "features": entry.features,
        "spec_hash": spec_hash,
        "config": config_to_json(config),
    }
    return out


def cmd_learn(args) -> int:
    if args.top < 1:
        print("error: --top must be at least 1", file=sys.stderr)
        return 2
    config = _build_config(args)
    spec_path = Path(args.examples)
    try:
        spec = _load_example_spec(spec_path, args.side_order)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ranked = learn(spec, config)
    if not ranked:
        print("error: no consistent program found for the given examples", file=sys.stderr)
        return 1
    spec_hash = hashlib.sha256(spec_path.read_bytes()).hexdigest()
    top = list(ranked)[: args.top]
    payload = [_program_file_json(entry, config, spec_hash, i) for i, entry in enumerate(top)]
    out_path = Path(args.out)
    out_path.write_text(
        json.dumps(payload[0] if len(payload) == 1 else payload, indent=2) + "\n",
        encoding="utf-8",
    )
    for i, entry in enumerate(top):
        feats = " ".join(f"{k}={v}" for k, v in entry.features.items())
        print(f"rank={i} score={entry.score:g} {feats}")
    print(f"wrote {len(top)} program(s) to {out_path}")
    return 0


def _load_programs(paths) -> list[Program]:
    programs = []
    for path in paths:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        items = data if isinstance(data, list) else [data]
        for item in items:
            programs.append(program_from_json(item))
    return programs


def cmd_apply(args) -> int:
    config = _build_config(args)
    try:
        programs = _load_programs(args.program)
        source = Path(args.file).read_text(encoding="utf-8")
        parsed = ConflictedFile.parse(source, args.file, side_order=args.side_order)
    except (OSError, ParseError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    resolutions = {}
    for index, chunk in enumerate(parsed.chunks):
        for pi, program in enumerate(programs):
            suggestion = run_program(program, chunk, config)
            if suggestion.is_resolved:
                resolutions[index] = suggestion.nodes
                break
            if suggestion.kind == "failed":
                print(f"note: program {pi} failed on chunk {index}: {suggestion.error}", file=sys.stderr)
    total = len(parsed.chunks)
    suggested = len(resolutions)
    resolved_text = parsed.render(resolutions)
    written = False
    if args.print:
        sys.stdout.write(resolved_text)
    elif args.diff:
        diff = difflib.unified_diff(
            source.replace("\r\n", "\n").splitlines(keepends=True),
            resolved_text.splitlines(keepends=True),
            fromfile=args.file,
            tofile=args.file + " (resolved)",
        )
        sys.stdout.writelines(diff)
    else:  # --in-place
        if suggested == total or (args.partial and suggested > 0):
            Path(args.file).write_text(resolved_text, encoding="utf-8")
            written = True
    summary = {"file": args.file, "total": total, "suggested": suggested, "written": written}
    print(json.dumps(summary), file=sys.stderr)
    return 0


def _write_report(report_arg: str, json_dict: dict, table: str) -> None:
    if report_arg == "-":
        print(table)
    else:
        Path(report_arg).write_text(json.dumps(json_dict, indent=2) + "\n", encoding="utf-8")
        print(table)


def cmd_classify(args) -> int:
    try:
        cases = load_corpus(args.root)
    except EmptyCorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = report(cases)
    _write_report(args.report, result.to_json_dict(), result.render_table())
    return 0


def cmd_eval(args) -> int:
    config = _build_config(args)
    try:
        programs = _load_programs(args.program)
        cases = load_corpus(args.root, config)
    except EmptyCorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ParseError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = evaluate(programs, cases, config)
    _write_report(args.report, result.to_json_dict(), result.render_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mergelearn",
        description="Learn merge-conflict resolution programs from examples and apply them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    learn_p = sub.add_parser("learn", help="learn a program from example resolutions")
    learn_p.add_argument("--examples", required=True, help="JSON example spec file")
    learn_p.add_argument("--out", required=True, help="output program file")
    learn_p.add_argument("--top", type=int, default=1, help="emit up to N programs in rank order")
    learn_p.add_argument("--max-depth", type=int, default=None, help="concat nesting budget")
    learn_p.add_argument("--side-order", choices=("fork-first", "ours-first"), default="fork-first")
    learn_p.set_defaults(func=cmd_learn)

    apply_p = sub.add_parser("apply", help="apply learned programs to a conflicted file")
    apply_p.add_argument("--program", action="append", required=True, help="program file (repeatable)")
    apply_p.add_argument("file", help="conflicted file")
    mode = apply_p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--print", action="store_true", help="write the resolved file to stdout")
    mode.add_argument("--in-place", action="store_true", help="rewrite the file")
    mode.add_argument("--diff", action="store_true", help="show a unified diff")
    apply_p.add_argument("--partial", action="store_true",
                         help="with --in-place, keep markers on unsuggested chunks")
    apply_p.add_argument("--side-order", choices=("fork-first", "ours-first"), default="fork-first")
    apply_p.set_defaults(func=cmd_apply)

    classify_p = sub.add_parser("classify", help="classify a conflict corpus")
    classify_p.add_argument("root", help="corpus root directory")
    classify_p.add_argument("--report", required=True, help="report path, or - for stdout")
    classify_p.set_defaults(func=cmd_classify)

    eval_p = sub.add_parser("eval", help="evaluate programs against human resolutions")
    eval_p.add_argument("--program", action="append", required=True, help="program file (repeatable)")
    eval_p.add_argument("root", help="corpus root directory")
    eval_p.add_argument("--report", required=True, help="report path, or - for stdout")
    eval_p.add_argument("--order-insensitive-includes", action="store_true",
                        help="compare include-only resolutions as multisets")
    eval_p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
