"""Corpus ingestion, conflict classification and program evaluation.

A corpus directory holds one sub-directory per merge, one per conflicting
file, each with the conflicted text, the developer's resolved file and a
small metadata record. Resolutions are aligned back to chunks by anchoring
on the unchanged lines around each conflict.
"""

from __future__ import annotations

import difflib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .conflicts import (
    INCLUDE,
    MACRO,
    ConflictedFile,
    ConflictInput,
    Node,
    conflict_kind,
    tokenize_nodes,
)
from .dsl import DEFAULT_CONFIG, Program, Suggestion, SynthConfig, run_program

logger = logging.getLogger(__name__)

RESOLUTION_LABELS = ("AFSC", "CH", "Concat", "DDC", "FB", "LC", "RD", "Rename", "SR", "Others")

FILE_TYPES = ("C++", "Dependency", "Headers", "Build", "Python", "Data", "Text", "Others")

LOCATIONS = ("Condition", "Declare", "Expression", "Include", "Loop", "Macro", "Method", "Others")

SIZE_BUCKETS = (
    "1-2", "3-4", "5-6", "7-8", "9-10", "11-15",
    "16-20", "21-25", "26-30", "31-40", "41-50", ">50",
)
_BUCKET_TOPS = (2, 4, 6, 8, 10, 15, 20, 25, 30, 40, 50)


class EmptyCorpusError(Exception):
    """The corpus directory yielded no usable cases."""


@dataclass(frozen=True)
class CorpusCase:
    conflict: ConflictInput
    human_resolution: tuple[Node, ...]
    merge_id: str
    file_path: str
    chunk_index: int
    label: str | None = None


@dataclass(frozen=True)
class AlignedChunk:
    """Per-chunk alignment outcome; nodes is None when unusable."""

    nodes: tuple[Node, ...] | None
    reason: str | None = None


def align_resolution(conflict_text: str, resolved_text: str, file_path: str = "<memory>",
                     side_order: str = "fork-first") -> list[AlignedChunk]:
    """Recover each chunk's resolution region from the resolved file.

    The outside lines of the conflicted file are matched against the
    resolved file; a chunk's resolution is whatever sits strictly between
    the matched positions of its flanking outside lines. A chunk whose
    flanks cannot be matched (shared or edited context) is flagged
    ambiguous rather than guessed.
    """
    parsed = ConflictedFile.parse(conflict_text, file_path, side_order=side_order)
    resolved_lines = resolved_text.replace("\r\n", "\n").split("\n")
    if resolved_lines and resolved_lines[-1] == "":
        resolved_lines.pop()

    outside: list[str] = []
    gaps: list[int] = []  # chunk i sits before outside index gaps[i]
    for tag, payload in parsed.segments:
        if tag == "text":
            outside.extend(payload)
        else:
            gaps.append(len(outside))

    matcher = difflib.SequenceMatcher(None, outside, resolved_lines, autojunk=False)
    mapping: dict[int, int] = {}
    for block in matcher.get_matching_blocks():
        for offset in range(block.size):
            mapping[block.a + offset] = block.b + offset

    results: list[AlignedChunk] = []
    for i, gap in enumerate(gaps):
        if gaps.count(gap) > 1:
            results.append(AlignedChunk(None, "adjacent chunks share the same context gap"))
            continue
        if gap > 0 and (gap - 1) not in mapping:
            results.append(AlignedChunk(None, "preceding context line could not be anchored"))
            continue
        if gap < len(outside) and gap not in mapping:
            results.append(AlignedChunk(None, "following context line could not be anchored"))
            continue
        start = mapping[gap - 1] + 1 if gap > 0 else 0
        end = mapping[gap] if gap < len(outside) else len(resolved_lines)
        if start > end:
            results.append(AlignedChunk(None, "anchors are out of order"))
            continue
        results.append(AlignedChunk(tokenize_nodes(resolved_lines[start:end])))
    return results


def _load_headers(case_dir: Path, chunks) -> None:
    headers_dir = case_dir / "headers"
    if not headers_dir.is_dir():
        return
    for chunk in chunks:
        for path in chunk.include_paths():
            header_file = headers_dir / path.rsplit("/", 1)[-1]
            if header_file.is_file():
                chunk.header_contents[path] = header_file.read_text(encoding="utf-8")


def load_corpus(root, config: SynthConfig = DEFAULT_CONFIG) -> list[CorpusCase]:
    """Load every usable chunk under the corpus root, in stable order.

    Malformed entries (bad markers, missing files, unresolvable alignment)
    are skipped with a logged diagnostic; an entirely unusable corpus is an
    error.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyCorpusError(f"corpus root {root} does not exist")
    cases: list[CorpusCase] = []
    for merge_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for case_dir in sorted(p for p in merge_dir.iterdir() if p.is_dir()):
            cases.extend(_load_case_dir(merge_dir.name, case_dir))
    if not cases:
        raise EmptyCorpusError(f"no usable cases under {root}")
    return cases


def _load_case_dir(merge_id: str, case_dir: Path) -> list[CorpusCase]:
    conflict_file = case_dir / "conflict.txt"
    resolved_file = case_dir / "resolved.txt"
    meta_file = case_dir / "meta.json"
    if not conflict_file.is_file():
        logger.warning("skipping %s: no conflict.txt", case_dir)
        return []
    if not resolved_file.is_file():
        logger.warning("skipping %s: missing resolution", case_dir)
        return []
    try:
        meta = json.loads(meta_file.read_text(encoding="utf-8")) if meta_file.is_file() else {}
        file_path = meta.get("file_path") or case_dir.name
        side_order = meta.get("side_order", "fork-first")
        label = meta.get("label")
        conflict_text = conflict_file.read_text(encoding="utf-8")
        resolved_text = resolved_file.read_text(encoding="utf-8")
        if re.search(r"^<{7}(\s|$)", resolved_text, flags=re.M):
            logger.warning("skipping %s: resolved file still contains markers", case_dir)
            return []
        parsed = ConflictedFile.parse(conflict_text, file_path, side_order=side_order)
        aligned = align_resolution(conflict_text, resolved_text, file_path, side_order=side_order)
    except Exception as exc:
        logger.warning("skipping %s: %s", case_dir, exc)
        return []
    _load_headers(case_dir, parsed.chunks)
    out = []
    for index, (chunk, res) in enumerate(zip(parsed.chunks, aligned)):
        if res.nodes is None:
            logger.warning("skipping %s chunk %d: %s", case_dir, index, res.reason)
            continue
        out.append(CorpusCase(chunk, res.nodes, merge_id, file_path, index, label))
    return out


# --- classification ---------------------------------------------------------

_CPP_EXTS = {".cc", ".cpp", ".cxx"}
_HEADER_EXTS = {".h", ".hpp", ".hh"}


def classify_file_type(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    suffix = ("." + name.rsplit(".", 1)[-1]) if "." in name else ""
    if name == "DEPS" or suffix == ".gni":
        return "Dependency"
    if name == "BUILD.gn" or suffix == ".ninja":
        return "Build"
    if suffix in _CPP_EXTS:
        return "C++"
    if suffix in _HEADER_EXTS:
        return "Headers"
    if suffix in (".py", ".pyl"):
        return "Python"
    if suffix in (".mm", ".grd"):
        return "Data"
    if suffix in (".md", ".txt") or name.startswith("README"):
        return "Text"
    return "Others"


def size_bucket(line_count: int) -> str:
    for top, bucket in zip(_BUCKET_TOPS, SIZE_BUCKETS):
        if line_count <= top:
            return bucket
    return ">50"


def classify_size(conflict: ConflictInput) -> tuple[str, str]:
    """Bucket each region by its line count, independently."""
    return size_bucket(len(conflict.main_lines)), size_bucket(len(conflict.fork_lines))


_CONDITION_RE = re.compile(r"^(?:\}?\s*else\s+)?(?:if|switch)\s*\(")
_LOOP_RE = re.compile(r"^(?:for|while)\s*\(|^do\s*\{")
_COMMENT_RE = re.compile(r"^(?://|/\*|\*|\*/)")
_METHOD_RE = re.compile(r"^[\w:<>,~&*\s]+\s[\w:~]+\s*\([^;]*\)\s*(?:const\s*)?(?:override\s*)?\{?\s*$")
_DECLARE_RE = re.compile(
    r"^(?:static\s+|const(?:expr)?\s+|inline\s+|extern\s+)*"
    r"[A-Za-z_][\w:<>,]*(?:\s*[*&])?\s+[A-Za-z_]\w*\s*(?:=[^=].*)?;$"
)


def _classify_line(line: str) -> str:
    node = tokenize_nodes([line])[0]
    if node.kind == INCLUDE:
        return "Include"
    if node.kind == MACRO:
        return "Macro"
    text = node.raw_text
    if not text or _COMMENT_RE.match(text):
        return "Others"
    if _CONDITION_RE.match(text):
        return "Condition"
    if _LOOP_RE.match(text):
        return "Loop"
    if _DECLARE_RE.match(text):
        return "Declare"
    if _METHOD_RE.match(text):
        return "Method"
    return "Expression"


def classify_location(conflict: ConflictInput) -> str:
    """Majority vote of per-line classes over both regions; ties go to Others."""
    votes: dict[str, int] = {}
    for line in (*conflict.main_lines, *conflict.fork_lines):
        cls = _classify_line(line)
        votes[cls] = votes.get(cls, 0) + 1
    if not votes:
        return "Others"
    best = max(votes.values())
    winners = [cls for cls, n in votes.items() if n == best]
    return winners[0] if len(winners) == 1 else "Others"


@dataclass(frozen=True)
class ClassificationReport:
    total: int
    file_types: dict[str, int]
    main_sizes: dict[str, int]
    fork_sizes: dict[str, int]
    locations: dict[str, int]
    labels: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "file_types": dict(self.file_types),
            "main_sizes": dict(self.main_sizes),
            "fork_sizes": dict(self.fork_sizes),
            "locations": dict(self.locations),
            "labels": dict(self.labels),
        }

    def render_table(self) -> str:
        sections = [
            ("file type", self.file_types),
            ("main size", self.main_sizes),
            ("fork size", self.fork_sizes),
            ("location", self.locations),
            ("label", self.labels),
        ]
        lines = [f"cases: {self.total}"]
        for title, counts in sections:
            lines.append("")
            lines.append(title)
            width = max((len(k) for k in counts), default=0)
            for key, value in counts.items():
                lines.append(f"  {key.ljust(width)}  {value}")
        return "\n".join(lines)


def _ordered_counts(order, counts):
    out = {key: counts.get(key, 0) for key in order if counts.get(key, 0)}
    for key in sorted(counts):
        if key not in out and counts[key]:
            out[key] = counts[key]
    return out


def report(cases) -> ClassificationReport:
    """Aggregate the three classifiers plus provided labels over a corpus."""
    cases = list(cases)
    file_types: dict[str, int] = {}
    main_sizes: dict[str, int] = {}
    fork_sizes: dict[str, int] = {}
    locations: dict[str, int] = {}
    labels: dict[str, int] = {}
    for case in cases:
        file_type = classify_file_type(case.file_path)
        file_types[file_type] = file_types.get(file_type, 0) + 1
        main_bucket, fork_bucket = classify_size(case.conflict)
        main_sizes[main_bucket] = main_sizes.get(main_bucket, 0) + 1
        fork_sizes[fork_bucket] = fork_sizes.get(fork_bucket, 0) + 1
        location = classify_location(case.conflict)
        locations[location] = locations.get(location, 0) + 1
        label = case.label or "unlabeled"
        labels[label] = labels.get(label, 0) + 1
    return ClassificationReport(
        total=len(cases),
        file_types=_ordered_counts(FILE_TYPES, file_types),
        main_sizes=_ordered_counts(SIZE_BUCKETS, main_sizes),
        fork_sizes=_ordered_counts(SIZE_BUCKETS, fork_sizes),
        locations=_ordered_counts(LOCATIONS, locations),
        labels=_ordered_counts(RESOLUTION_LABELS + ("unlabeled",), labels),
    )


# --- evaluation -------------------------------------------------------------

@dataclass
class _Tally:
    matched: int = 0
    mismatched: int = 0
    no_suggestion: int = 0

    def as_dict(self) -> dict:
        suggested = self.matched + self.mismatched
        total = suggested + self.no_suggestion
        return {
            "total": total,
            "suggested": suggested,
            "matched": self.matched,
            "mismatched": self.mismatched,
            "no_suggestion": self.no_suggestion,
            "accuracy": (self.matched / suggested) if suggested else None,
            "coverage": (suggested / total) if total else None,
        }


@dataclass(frozen=True)
class EvalReport:
    total: int
    matched: int
    mismatched: int
    no_suggestion: int
    by_label: dict[str, dict]
    per_program: tuple[dict, ...]

    @property
    def suggested(self) -> int:
        return self.matched + self.mismatched

    @property
    def accuracy(self) -> float | None:
        return self.matched / self.suggested if self.suggested else None

    @property
    def coverage(self) -> float:
        return self.suggested / self.total if self.total else 0.0

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "suggested": self.suggested,
            "matched": self.matched,
            "mismatched": self.mismatched,
            "no_suggestion": self.no_suggestion,
            "accuracy": self.accuracy,
            "coverage": self.coverage,
            "by_label": self.by_label,
            "per_program": list(self.per_program),
        }

    def render_table(self) -> str:
        def pct(value):
            return "N/A" if value is None else f"{100 * value:.1f}%"

        lines = [
            f"cases: {self.total}  suggested: {self.suggested}  "
            f"matched: {self.matched}  accuracy: {pct(self.accuracy)}  coverage: {pct(self.coverage)}"
        ]
        for row in self.per_program:
            lines.append(
                f"  program[{row['program']}]: suggested {row['suggested']}, "
                f"matched {row['matched']}, accuracy {pct(row['accuracy'])}"
            )
        for label, counts in self.by_label.items():
            lines.append(
                f"  label {label}: {counts['matched']}/{counts['suggested']} matched "
                f"of {counts['total']} cases"
            )
        return "\n".join(lines)


def _node_multiset_key(nodes):
    return sorted((n.kind, n.children, n.raw_text) for n in nodes)


def resolutions_match(suggested, actual, conflict: ConflictInput, config: SynthConfig) -> bool:
    if tuple(suggested) == tuple(actual):
        return True
    if config.order_insensitive_includes and conflict_kind(conflict) == "Include":
        return _node_multiset_key(suggested) == _node_multiset_key(actual)
    return False


def evaluate(programs, cases, config: SynthConfig = DEFAULT_CONFIG) -> EvalReport:
    """Replay programs over a corpus and compare against human resolutions.

    Programs run in the given order; the first Resolved suggestion is the
    one compared. Guard misses and evaluation failures fall through to the
    next program.
    """
    programs = list(programs)
    cases = list(cases)
    overall = _Tally()
    by_label: dict[str, _Tally] = {}
    per_program = [_Tally() for _ in programs]
    for case in cases:
        label_tally = by_label.setdefault(case.label or "unlabeled", _Tally())
        suggestion: Suggestion | None = None
        fired = None
        for i, program in enumerate(programs):
            result = run_program(program, case.conflict, config)
            if result.is_resolved:
                suggestion = result
                fired = i
                break
            if result.kind == "failed":
                logger.debug("program %d failed on %s#%d: %s", i, case.file_path, case.chunk_index, result.error)
        if suggestion is None:
            overall.no_suggestion += 1
            label_tally.no_suggestion += 1
            continue
        if resolutions_match(suggestion.nodes, case.human_resolution, case.conflict, config):
            overall.matched += 1
            label_tally.matched += 1
            per_program[fired].matched += 1
        else:
            overall.mismatched += 1
            label_tally.mismatched += 1
            per_program[fired].mismatched += 1
    return EvalReport(
        total=len(cases),
        matched=overall.matched,
        mismatched=overall.mismatched,
        no_suggestion=overall.no_suggestion,
        by_label={label: tally.as_dict() for label, tally in sorted(by_label.items())},
        per_program=tuple({"program": i, **tally.as_dict()} for i, tally in enumerate(per_program)),
    )
