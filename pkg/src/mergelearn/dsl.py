"""The resolution DSL: AST, pattern dictionary, evaluation and serialization.

A program is a guarded transformation ``Apply(condition, transformation)``.
The condition is a conjunction of predicates over a conflict; the
transformation concatenates and removes node selections from the two
regions. Predicates and ``Pattern`` selections share a per-conflict
dictionary mapping each pattern name to the nodes it matched.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields

from .conflicts import INCLUDE, MACRO, ConflictInput, Node, tokenize_nodes

PREDICATE_TAGS = (
    "DuplicateMainFork",
    "DuplicateMainOutside",
    "DuplicateForkOutside",
    "MainSpecific",
    "ForkSpecific",
    "Dependency",
    "Rename",
    "FrequentPattern",
)

# Pattern selections address the parameterless predicates only; the
# per-path FrequentPattern entries back predicate evaluation alone.
PATTERN_KEYS = PREDICATE_TAGS[:-1]

SELECTION_TAGS = (
    "Main",
    "Fork",
    "MainByIndex",
    "ForkByIndex",
    "MainByPath",
    "ForkByPath",
    "Pattern",
)

DSL_VERSION = 1


class EvaluationFailed(Exception):
    """A selection or transformation cannot be evaluated on this input."""


class RemoveMismatch(EvaluationFailed):
    """Remove was asked to delete nodes absent from its source."""


class ParseError(ValueError):
    """Program text could not be deserialized."""


@dataclass(frozen=True)
class Predicate:
    tag: str
    path: str | None = None

    def __post_init__(self):
        if self.tag not in PREDICATE_TAGS:
            raise ValueError(f"unknown predicate tag {self.tag!r}")
        if (self.tag == "FrequentPattern") != (self.path is not None):
            raise ValueError("path literal is required exactly for FrequentPattern")
        if self.path == "":
            raise ValueError("FrequentPattern path must be non-empty")


@dataclass(frozen=True)
class Condition:
    predicates: tuple[Predicate, ...]

    def __post_init__(self):
        if not self.predicates:
            raise ValueError("condition needs at least one predicate")
        if len(set(self.predicates)) != len(self.predicates):
            raise ValueError("duplicate predicates in condition")


@dataclass(frozen=True)
class Selection:
    tag: str
    k: int | None = None
    path: str | None = None
    key: str | None = None

    def __post_init__(self):
        if self.tag not in SELECTION_TAGS:
            raise ValueError(f"unknown selection tag {self.tag!r}")
        wants_k = self.tag in ("MainByIndex", "ForkByIndex")
        wants_path = self.tag in ("MainByPath", "ForkByPath")
        wants_key = self.tag == "Pattern"
        if wants_k != (self.k is not None):
            raise ValueError(f"{self.tag} takes an index literal only")
        if wants_path != (self.path is not None):
            raise ValueError(f"{self.tag} takes a path literal only")
        if wants_key != (self.key is not None):
            raise ValueError(f"{self.tag} takes a key literal only")
        if self.k is not None and self.k < 0:
            raise ValueError("selection index must be non-negative")
        if self.key is not None and self.key not in PREDICATE_TAGS:
            raise ValueError(f"pattern key must be a predicate name, got {self.key!r}")


@dataclass(frozen=True)
class Select:
    selection: Selection


@dataclass(frozen=True)
class Remove:
    source: Selection
    removed: Selection


@dataclass(frozen=True)
class Concat:
    left: "Transformation"
    right: "Transformation"


Transformation = Select | Remove | Concat


@dataclass(frozen=True)
class Program:
    condition: Condition
    transformation: Transformation


@dataclass(frozen=True)
class SynthConfig:
    """Knobs shared by dictionary construction, synthesis and ranking."""

    max_concat_depth: int = 3
    max_programs: int = 10_000
    w_operators: float = 1.0
    w_constants: float = 0.5
    w_index: float = 2.0
    w_pattern: float = 1.5
    w_branch: float = 1.0
    fork_keywords: tuple[str, ...] = ("ANONYMOUS", "DISABLED")
    main_keywords: tuple[str, ...] = ()
    order_insensitive_includes: bool = False

    def __post_init__(self):
        if self.max_concat_depth < 1:
            raise ValueError("max_concat_depth must be >= 1")


DEFAULT_CONFIG = SynthConfig()


@dataclass(frozen=True)
class PatternDictionary:
    """Per-conflict map from pattern name to the nodes it matched.

    Only non-empty matches are stored, so a predicate holds exactly when
    its entry exists. ``frequent`` keeps per-path matches for the
    FrequentPattern predicate.
    """

    patterns: dict[str, tuple[Node, ...]] = field(default_factory=dict)
    frequent: dict[str, tuple[Node, ...]] = field(default_factory=dict)

    def entry(self, key: str) -> tuple[Node, ...]:
        return self.patterns.get(key, ())


def _basename(path: str) -> str:
    return path.rsplit("/", 1)[-1]


def _stem(path: str) -> str:
    name = _basename(path)
    return name.rsplit(".", 1)[0] if "." in name else name


def _match_key(node: Node):
    """Identity used for duplicate detection; blanks never match."""
    if node.is_blank:
        return None
    if node.kind == INCLUDE:
        return ("include", _basename(node.include_path))
    if node.kind == MACRO:
        return ("macro", node.children)
    return ("raw", node.raw_text)


def _headers_equal(conflict: ConflictInput, path_a: str, path_b: str) -> bool:
    # Content equality is only checkable when the corpus ships both headers.
    contents = conflict.header_contents
    if path_a in contents and path_b in contents:
        return contents[path_a] == contents[path_b]
    return True


def _duplicate_nodes(conflict, nodes, other_keys, other_includes_by_name):
    out = []
    for node in nodes:
        key = _match_key(node)
        if key is None:
            continue
        if node.kind == INCLUDE:
            name = _basename(node.include_path)
            for other in other_includes_by_name.get(name, ()):
                if _headers_equal(conflict, node.include_path, other.include_path):
                    out.append(node)
                    break
        elif key in other_keys:
            out.append(node)
    return tuple(out)


def _includes_by_name(nodes):
    by_name: dict[str, list[Node]] = {}
    for node in nodes:
        if node.kind == INCLUDE:
            by_name.setdefault(_basename(node.include_path), []).append(node)
    return by_name


def _keyword_nodes(nodes, keywords):
    return tuple(n for n in nodes if not n.is_blank and any(kw in n.raw_text for kw in keywords))


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]{2,}")


def _rename_nodes(conflict: ConflictInput) -> tuple[Node, ...]:
    """Main-side macros paired with a differing fork macro via a shared identifier."""
    out: list[Node] = []
    fork_macros = [n for n in conflict.fork_nodes if n.kind == MACRO]
    for m in conflict.main_nodes:
        if m.kind != MACRO:
            continue
        idents = set(_IDENT_RE.findall(m.children[1]))
        for f in fork_macros:
            if m == f:
                continue
            if idents & set(_IDENT_RE.findall(f.children[1])):
                out.append(m)
                break
    return tuple(out)


def _dependency_nodes(conflict: ConflictInput) -> tuple[Node, ...]:
    """Includes whose stem is used in a sibling chunk but nowhere outside."""
    if not conflict.sibling_chunks:
        return ()
    outside_code = "\n".join(
        line for line in conflict.outside_content if tokenize_nodes([line])[0].kind != INCLUDE
    )
    sibling_code = "\n".join(
        line
        for sib in conflict.sibling_chunks
        for line in (*sib.main_lines, *sib.fork_lines)
        if tokenize_nodes([line])[0].kind != INCLUDE
    )
    out = []
    for node in conflict.region_nodes():
        if node.kind != INCLUDE:
            continue
        pattern = re.compile(rf"\b{re.escape(_stem(node.include_path))}\b")
        if not pattern.search(outside_code) and pattern.search(sibling_code):
            out.append(node)
    return tuple(out)


def build_pattern_dictionary(conflict: ConflictInput, config: SynthConfig = DEFAULT_CONFIG) -> PatternDictionary:
    """Compute every pattern's matching nodes for one conflict."""
    outside_nodes = tokenize_nodes(conflict.outside_content)
    outside_keys = {k for k in map(_match_key, outside_nodes) if k is not None}
    outside_includes = _includes_by_name(outside_nodes)
    fork_keys = {k for k in map(_match_key, conflict.fork_nodes) if k is not None}
    fork_includes = _includes_by_name(conflict.fork_nodes)

    entries = {
        "DuplicateMainFork": _duplicate_nodes(conflict, conflict.main_nodes, fork_keys, fork_includes),
        "DuplicateMainOutside": _duplicate_nodes(conflict, conflict.main_nodes, outside_keys, outside_includes),
        "DuplicateForkOutside": _duplicate_nodes(conflict, conflict.fork_nodes, outside_keys, outside_includes),
        "MainSpecific": _keyword_nodes(conflict.main_nodes, config.main_keywords),
        "ForkSpecific": _keyword_nodes(conflict.fork_nodes, config.fork_keywords),
        "Dependency": _dependency_nodes(conflict),
        "Rename": _rename_nodes(conflict),
    }
    frequent: dict[str, tuple[Node, ...]] = {}
    for path in conflict.include_paths():
        frequent[path] = tuple(n for n in conflict.region_nodes() if n.include_path == path)
    return PatternDictionary(
        patterns={k: v for k, v in entries.items() if v},
        frequent=frequent,
    )


def eval_predicate(predicate: Predicate, conflict: ConflictInput, pdict: PatternDictionary) -> bool:
    if predicate.tag == "FrequentPattern":
        return bool(pdict.frequent.get(predicate.path))
    return bool(pdict.patterns.get(predicate.tag))


def eval_condition(condition: Condition, conflict: ConflictInput, pdict: PatternDictionary) -> bool:
    return all(eval_predicate(p, conflict, pdict) for p in condition.predicates)


def eval_selection(selection: Selection, conflict: ConflictInput, pdict: PatternDictionary) -> tuple[Node, ...]:
    tag = selection.tag
    if tag == "Main":
        return conflict.main_nodes
    if tag == "Fork":
        return conflict.fork_nodes
    if tag in ("MainByIndex", "ForkByIndex"):
        region = conflict.main_nodes if tag == "MainByIndex" else conflict.fork_nodes
        if selection.k >= len(region):
            raise EvaluationFailed(f"IndexOutOfRange: {tag}({selection.k}) on a {len(region)}-node region")
        return (region[selection.k],)
    if tag in ("MainByPath", "ForkByPath"):
        region = conflict.main_nodes if tag == "MainByPath" else conflict.fork_nodes
        return tuple(n for n in region if n.include_path == selection.path)
    return pdict.entry(selection.key)


def remove_nodes(source: tuple[Node, ...], removed: tuple[Node, ...]) -> tuple[Node, ...] | None:
    """Delete the first occurrence of each removed node; None on a miss."""
    out = list(source)
    for node in removed:
        try:
            out.remove(node)
        except ValueError:
            return None
    return tuple(out)


def eval_transformation(t: Transformation, conflict: ConflictInput, pdict: PatternDictionary) -> tuple[Node, ...]:
    if isinstance(t, Select):
        return eval_selection(t.selection, conflict, pdict)
    if isinstance(t, Remove):
        source = eval_selection(t.source, conflict, pdict)
        removed = eval_selection(t.removed, conflict, pdict)
        result = remove_nodes(source, removed)
        if result is None:
            raise RemoveMismatch(f"Remove: {len(removed)} node(s) not all present in source")
        return result
    return eval_transformation(t.left, conflict, pdict) + eval_transformation(t.right, conflict, pdict)


RESOLVED = "resolved"
NO_SUGGESTION = "no-suggestion"
FAILED = "failed"


@dataclass(frozen=True)
class Suggestion:
    kind: str
    nodes: tuple[Node, ...] | None = None
    error: str | None = None

    @classmethod
    def resolved(cls, nodes) -> "Suggestion":
        return cls(RESOLVED, nodes=tuple(nodes))

    @classmethod
    def none(cls) -> "Suggestion":
        return cls(NO_SUGGESTION)

    @classmethod
    def failed(cls, error: str) -> "Suggestion":
        return cls(FAILED, error=error)

    @property
    def is_resolved(self) -> bool:
        return self.kind == RESOLVED


def run_program(program: Program, conflict: ConflictInput, config: SynthConfig = DEFAULT_CONFIG) -> Suggestion:
    """Evaluate a program on a conflict; never raises.

    A false guard yields NoSuggestion; evaluation errors yield Failed.
    """
    pdict = build_pattern_dictionary(conflict, config)
    if not eval_condition(program.condition, conflict, pdict):
        return Suggestion.none()
    try:
        return Suggestion.resolved(eval_transformation(program.transformation, conflict, pdict))
    except EvaluationFailed as exc:
        return Suggestion.failed(str(exc))


# --- serialization ----------------------------------------------------------

def _predicate_to_json(p: Predicate) -> dict:
    out = {"tag": p.tag}
    if p.path is not None:
        out["path"] = p.path
    return out


def _selection_to_json(s: Selection) -> dict:
    out = {"tag": s.tag}
    if s.k is not None:
        out["k"] = s.k
    if s.path is not None:
        out["path"] = s.path
    if s.key is not None:
        out["key"] = s.key
    return out


def _transformation_to_json(t: Transformation) -> dict:
    if isinstance(t, Concat):
        return {"concat": [_transformation_to_json(t.left), _transformation_to_json(t.right)]}
    if isinstance(t, Remove):
        return {"remove": [_selection_to_json(t.source), _selection_to_json(t.removed)]}
    return {"select": _selection_to_json(t.selection)}


def program_to_json(program: Program) -> dict:
    return {
        "dslv": DSL_VERSION,
        "apply": {
            "condition": [_predicate_to_json(p) for p in program.condition.predicates],
            "transform": _transformation_to_json(program.transformation),
        },
    }


def serialize_program(program: Program) -> str:
    """Canonical JSON text; field order is fixed, so output is deterministic."""
    return json.dumps(program_to_json(program), indent=2) + "\n"


def _expect_dict(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ParseError(f"{where}: expected an object, got {type(value).__name__}")
    return value


def _parse_literals(obj: dict, where: str) -> dict:
    known = {"tag", "k", "path", "key"}
    extra = set(obj) - known
    if extra:
        raise ParseError(f"{where}: unexpected fields {sorted(extra)}")
    return obj


def _predicate_from_json(obj, where: str) -> Predicate:
    obj = _expect_dict(obj, where)
    try:
        return Predicate(tag=obj.get("tag"), path=obj.get("path"))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _selection_from_json(obj, where: str) -> Selection:
    obj = _parse_literals(_expect_dict(obj, where), where)
    try:
        return Selection(tag=obj.get("tag"), k=obj.get("k"), path=obj.get("path"), key=obj.get("key"))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _transformation_from_json(obj, where: str) -> Transformation:
    obj = _expect_dict(obj, where)
    if len(obj) != 1:
        raise ParseError(f"{where}: expected exactly one of concat/remove/select")
    (op, payload), = obj.items()
    if op == "concat":
        if not isinstance(payload, list) or len(payload) != 2:
            raise ParseError(f"{where}.concat: expected a pair")
        return Concat(
            _transformation_from_json(payload[0], f"{where}.concat[0]"),
            _transformation_from_json(payload[1], f"{where}.concat[1]"),
        )
    if op == "remove":
        if not isinstance(payload, list) or len(payload) != 2:
            raise ParseError(f"{where}.remove: expected a pair")
        return Remove(
            _selection_from_json(payload[0], f"{where}.remove[0]"),
            _selection_from_json(payload[1], f"{where}.remove[1]"),
        )
    if op == "select":
        return Select(_selection_from_json(payload, f"{where}.select"))
    raise ParseError(f"{where}: unknown operator {op!r}")


def program_from_json(obj: dict) -> Program:
    obj = _expect_dict(obj, "program")
    if obj.get("dslv") != DSL_VERSION:
        raise ParseError(f"program: unsupported dslv {obj.get('dslv')!r}")
    apply_obj = _expect_dict(obj.get("apply"), "apply")
    preds = apply_obj.get("condition")
    if not isinstance(preds, list) or not preds:
        raise ParseError("apply.condition: expected a non-empty array")
    condition = Condition(tuple(_predicate_from_json(p, f"apply.condition[{i}]") for i, p in enumerate(preds)))
    return Program(condition, _transformation_from_json(apply_obj.get("transform"), "apply.transform"))


def deserialize_program(text: str) -> Program:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at position {exc.pos}: {exc.msg}") from exc
    return program_from_json(obj)


# --- features and scoring ---------------------------------------------------

FEATURE_NAMES = (
    "operators",
    "constants",
    "index_selections",
    "pattern_selections",
    "branch_selections",
    "predicates",
)


def _selection_features(s: Selection, counts: dict) -> None:
    if s.tag in ("Main", "Fork"):
        counts["branch_selections"] += 1
    elif s.tag in ("MainByIndex", "ForkByIndex"):
        counts["index_selections"] += 1
        counts["constants"] += 1
    elif s.tag in ("MainByPath", "ForkByPath"):
        counts["constants"] += 1
    else:
        counts["pattern_selections"] += 1
        counts["_pattern_keys"].append(s.key)


def _transformation_features(t: Transformation, counts: dict) -> None:
    if isinstance(t, Select):
        _selection_features(t.selection, counts)
    elif isinstance(t, Remove):
        counts["operators"] += 1
        _selection_features(t.source, counts)
        _selection_features(t.removed, counts)
    else:
        counts["operators"] += 1
        _transformation_features(t.left, counts)
        _transformation_features(t.right, counts)


def program_features(obj: Program | Transformation) -> dict:
    """Count the ranking features of a program or bare transformation."""
    counts = {name: 0 for name in FEATURE_NAMES}
    counts["_pattern_keys"] = []
    if isinstance(obj, Program):
        counts["predicates"] = len(obj.condition.predicates)
        counts["constants"] += sum(1 for p in obj.condition.predicates if p.path is not None)
        _transformation_features(obj.transformation, counts)
    else:
        _transformation_features(obj, counts)
    counts.pop("_pattern_keys")
    return counts


def program_score(obj: Program | Transformation, config: SynthConfig = DEFAULT_CONFIG) -> float:
    """Weighted feature score; lower is better.

    The pattern bonus is credited only for Pattern selections whose key
    predicate appears in the condition (always credited on a bare
    transformation, where no condition exists yet).
    """
    counts = {name: 0 for name in FEATURE_NAMES}
    counts["_pattern_keys"] = []
    if isinstance(obj, Program):
        counts["predicates"] = len(obj.condition.predicates)
        counts["constants"] += sum(1 for p in obj.condition.predicates if p.path is not None)
        _transformation_features(obj.transformation, counts)
        guard_tags = {p.tag for p in obj.condition.predicates}
        credited = sum(1 for key in counts["_pattern_keys"] if key in guard_tags)
    else:
        _transformation_features(obj, counts)
        credited = counts["pattern_selections"]
    return (
        config.w_operators * counts["operators"]
        + config.w_constants * counts["constants"]
        + config.w_index * counts["index_selections"]
        - config.w_pattern * credited
        - config.w_branch * counts["branch_selections"]
    )


def struct_key(obj) -> tuple:
    """Total, deterministic ordering key mirroring the serialized form."""
    if isinstance(obj, Program):
        return ("Apply", struct_key(obj.condition), struct_key(obj.transformation))
    if isinstance(obj, Condition):
        return ("And",) + tuple(struct_key(p) for p in obj.predicates)
    if isinstance(obj, Predicate):
        return (obj.tag,) if obj.path is None else (obj.tag, obj.path)
    if isinstance(obj, Concat):
        return ("Concat", struct_key(obj.left), struct_key(obj.right))
    if isinstance(obj, Remove):
        return ("Remove", struct_key(obj.source), struct_key(obj.removed))
    if isinstance(obj, Select):
        return ("Select", struct_key(obj.selection))
    if isinstance(obj, Selection):
        literal = obj.k if obj.k is not None else obj.path if obj.path is not None else obj.key
        return (obj.tag,) if literal is None else (obj.tag, str(literal))
    raise TypeError(f"no structural key for {type(obj).__name__}")


def program_size(obj) -> int:
    """Number of AST nodes: operators, selections and predicates."""
    if isinstance(obj, Program):
        return len(obj.condition.predicates) + program_size(obj.transformation)
    if isinstance(obj, Concat):
        return 1 + program_size(obj.left) + program_size(obj.right)
    if isinstance(obj, Remove):
        return 3
    if isinstance(obj, Select):
        return 1
    raise TypeError(f"no size for {type(obj).__name__}")


def config_to_json(config: SynthConfig) -> dict:
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out
