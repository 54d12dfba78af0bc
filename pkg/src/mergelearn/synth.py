"""Learning resolution programs from example (conflict, resolution) pairs.

Learning is top-down: each operator's inverse maps a desired output to the
sub-outputs its arguments must produce, recursion bottoms out at selections,
and per-example candidate sets are intersected so only programs consistent
with every example survive. A weighted feature score ranks survivors.

Candidates are kept in a normal form: a Concat arm that evaluates to
nothing may appear only once, as the right arm of the root. Anything else
is padding that a shorter equivalent program already expresses, and
admitting it makes the candidate space explode.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass

from .conflicts import ConflictInput, Node
from .dsl import (
    DEFAULT_CONFIG,
    PATTERN_KEYS,
    Concat,
    Condition,
    EvaluationFailed,
    PatternDictionary,
    Predicate,
    Program,
    Remove,
    Select,
    Selection,
    SynthConfig,
    Transformation,
    build_pattern_dictionary,
    eval_transformation,
    program_features,
    program_score,
    program_size,
    remove_nodes,
    struct_key,
)

logger = logging.getLogger(__name__)

# Guard subsets are enumerated exhaustively up to this many predicates;
# beyond it only singletons and the full conjunction are considered.
_MAX_SUBSET_PREDICATES = 12


class EmptyConditionError(Exception):
    """No predicate holds on every example input."""


@dataclass(frozen=True)
class ExampleSpec:
    """The inductive specification: (input, expected nodes) cases."""

    cases: tuple[tuple[ConflictInput, tuple[Node, ...]], ...]

    def __post_init__(self):
        if not self.cases:
            raise ValueError("an example spec needs at least one case")

    @property
    def inputs(self) -> tuple[ConflictInput, ...]:
        return tuple(conflict for conflict, _ in self.cases)


@dataclass(frozen=True)
class ProgramSet:
    """Transformations consistent with one spec, rank-ordered."""

    programs: tuple[Transformation, ...]
    truncated: bool = False


@dataclass(frozen=True)
class RankedProgram:
    program: Program
    score: float
    features: dict


@dataclass(frozen=True)
class RankedPrograms:
    entries: tuple[RankedProgram, ...]
    truncated: bool = False

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __bool__(self):
        return bool(self.entries)

    @property
    def top(self) -> RankedProgram | None:
        return self.entries[0] if self.entries else None


def _selection_cost(s: Selection, config: SynthConfig) -> float:
    if s.tag in ("Main", "Fork"):
        return -config.w_branch
    if s.tag in ("MainByIndex", "ForkByIndex"):
        return config.w_constants + config.w_index
    if s.tag in ("MainByPath", "ForkByPath"):
        return config.w_constants
    return -config.w_pattern


def canonical_selections(conflict: ConflictInput, pdict: PatternDictionary):
    """Every selection the synthesizer may use on this input, with its value.

    Index selections stay in range, path selections name a path that
    matches, pattern selections name a non-empty dictionary entry; the
    whole-branch selections are always present.
    """
    out: list[tuple[Selection, tuple[Node, ...]]] = [
        (Selection("Main"), conflict.main_nodes),
        (Selection("Fork"), conflict.fork_nodes),
    ]
    for k in range(len(conflict.main_nodes)):
        out.append((Selection("MainByIndex", k=k), (conflict.main_nodes[k],)))
    for k in range(len(conflict.fork_nodes)):
        out.append((Selection("ForkByIndex", k=k), (conflict.fork_nodes[k],)))
    for tag, region in (("MainByPath", conflict.main_nodes), ("ForkByPath", conflict.fork_nodes)):
        for path in sorted({n.include_path for n in region if n.include_path is not None}):
            out.append((Selection(tag, path=path), tuple(n for n in region if n.include_path == path)))
    for key in PATTERN_KEYS:
        entry = pdict.patterns.get(key)
        if entry:
            out.append((Selection("Pattern", key=key), entry))
    return out


def learn_selection(conflict: ConflictInput, target, pdict: PatternDictionary | None = None,
                    config: SynthConfig = DEFAULT_CONFIG) -> tuple[Selection, ...]:
    """All selections whose value is exactly the target node list."""
    if pdict is None:
        pdict = build_pattern_dictionary(conflict, config)
    target = tuple(target)
    return tuple(sel for sel, value in canonical_selections(conflict, pdict) if value == target)


def wf_concat(output) -> list[tuple[tuple[Node, ...], tuple[Node, ...]]]:
    """Inverse of Concat: every two-part split with both parts non-empty."""
    output = tuple(output)
    return [(output[:i], output[i:]) for i in range(1, len(output))]


def _sublist_minus(source, target):
    """Nodes left over when target is matched as an in-order sublist, else None."""
    removed = []
    it = 0
    for node in source:
        if it < len(target) and node == target[it]:
            it += 1
        else:
            removed.append(node)
    return tuple(removed) if it == len(target) else None


def wf_remove(conflict: ConflictInput, target) -> list[tuple[Selection, tuple[Node, ...]]]:
    """Inverse of Remove over whole-branch sources.

    Emits (source, removed nodes) pairs; an empty removal is dropped since
    a plain selection already expresses it.
    """
    target = tuple(target)
    out = []
    for tag, region in (("Main", conflict.main_nodes), ("Fork", conflict.fork_nodes)):
        removed = _sublist_minus(region, target)
        if removed:
            out.append((Selection(tag), removed))
    return out


class _TransformationLearner:
    """Memoized candidate generation for one input.

    Candidates carry (score, size, key, transformation) so sets stay
    rank-sorted and deduplicated by structure throughout.
    """

    def __init__(self, conflict: ConflictInput, pdict: PatternDictionary, config: SynthConfig):
        self.conflict = conflict
        self.pdict = pdict
        self.config = config
        self.selections = canonical_selections(conflict, pdict)
        self.truncated = False
        self._core_memo: dict = {}
        self._base_memo: dict = {}

    def _scored_select(self, sel: Selection):
        t = Select(sel)
        return (_selection_cost(sel, self.config), 1, struct_key(t), t)

    def _scored_remove(self, source: Selection, removed: Selection):
        t = Remove(source, removed)
        score = (
            self.config.w_operators
            + _selection_cost(source, self.config)
            + _selection_cost(removed, self.config)
        )
        return (score, 3, struct_key(t), t)

    def _scored_concat(self, left, right):
        t = Concat(left[3], right[3])
        return (
            left[0] + right[0] + self.config.w_operators,
            left[1] + right[1] + 1,
            ("Concat", left[2], right[2]),
            t,
        )

    def _merge_concats(self, left, right, sink: dict):
        """Best-first product of two sorted candidate lists, capped."""
        if not left or not right:
            return
        cap = self.config.max_programs
        seen = {(0, 0)}
        heap = [(left[0][0] + right[0][0], 0, 0)]
        emitted = 0
        while heap:
            if emitted >= cap:
                self.truncated = True
                return
            _, i, j = heapq.heappop(heap)
            cand = self._scored_concat(left[i], right[j])
            if cand[2] not in sink:
                sink[cand[2]] = cand
                emitted += 1
            for ni, nj in ((i + 1, j), (i, j + 1)):
                if ni < len(left) and nj < len(right) and (ni, nj) not in seen:
                    seen.add((ni, nj))
                    heapq.heappush(heap, (left[ni][0] + right[nj][0], ni, nj))

    def _finish(self, cands: dict):
        ordered = sorted(cands.values())
        if len(ordered) > self.config.max_programs:
            self.truncated = True
            ordered = ordered[: self.config.max_programs]
        return tuple(ordered)

    def _base(self, target: tuple[Node, ...]) -> dict:
        """Depth-independent candidates: selections and removes hitting target."""
        cached = self._base_memo.get(target)
        if cached is not None:
            return cached
        cands: dict = {}
        for sel, value in self.selections:
            if value == target:
                cand = self._scored_select(sel)
                cands[cand[2]] = cand
        for source_tag, region in (("Main", self.conflict.main_nodes), ("Fork", self.conflict.fork_nodes)):
            if not region:
                continue
            source = Selection(source_tag)
            for sel, value in self.selections:
                if value and remove_nodes(region, value) == target:
                    cand = self._scored_remove(source, sel)
                    cands[cand[2]] = cand
        self._base_memo[target] = cands
        return cands

    def core(self, target: tuple[Node, ...], depth: int):
        """Candidates with no empty-evaluating Concat arm anywhere."""
        memo_key = (target, depth)
        cached = self._core_memo.get(memo_key)
        if cached is not None:
            return cached
        cands = dict(self._base(target))
        if depth > 0:
            for left_out, right_out in wf_concat(target):
                self._merge_concats(self.core(left_out, depth - 1), self.core(right_out, depth - 1), cands)
        result = self._finish(cands)
        self._core_memo[memo_key] = result
        return result

    def full(self, target: tuple[Node, ...], depth: int):
        """Core candidates plus single right-padded variants."""
        cands = {cand[2]: cand for cand in self.core(target, depth)}
        if depth > 0 and target:
            for core_cand in self.core(target, depth - 1):
                for empty_cand in self.core((), 0):
                    cand = self._scored_concat(core_cand, empty_cand)
                    cands.setdefault(cand[2], cand)
        return self._finish(cands)


def learn_transformation(conflict: ConflictInput, target, depth: int | None = None,
                         config: SynthConfig = DEFAULT_CONFIG,
                         pdict: PatternDictionary | None = None) -> ProgramSet:
    """All transformations (within the concat-depth budget) mapping the
    input to exactly the target node list, rank-ordered."""
    if pdict is None:
        pdict = build_pattern_dictionary(conflict, config)
    if depth is None:
        depth = config.max_concat_depth
    learner = _TransformationLearner(conflict, pdict, config)
    cands = learner.full(tuple(target), depth)
    return ProgramSet(tuple(c[3] for c in cands), truncated=learner.truncated)


def learn_condition(inputs, config: SynthConfig = DEFAULT_CONFIG) -> Condition:
    """Conjunction of every predicate true on all inputs.

    FrequentPattern paths are the include paths present in every input's
    regions. Raises EmptyConditionError when nothing holds everywhere.
    """
    inputs = list(inputs)
    pdicts = [build_pattern_dictionary(conflict, config) for conflict in inputs]
    predicates = [Predicate(tag) for tag in PATTERN_KEYS if all(pd.patterns.get(tag) for pd in pdicts)]
    shared_paths: set[str] | None = None
    for pd in pdicts:
        paths = set(pd.frequent)
        shared_paths = paths if shared_paths is None else shared_paths & paths
    for path in sorted(shared_paths or ()):
        predicates.append(Predicate("FrequentPattern", path=path))
    if not predicates:
        raise EmptyConditionError("no predicate holds on every example input")
    return Condition(tuple(predicates))


def intersect_program_sets(sets, spec: ExampleSpec | None = None,
                           config: SynthConfig = DEFAULT_CONFIG) -> ProgramSet:
    """Keep candidates present in every set, re-verified on the spec.

    Verification guards against truncation artifacts: a structural survivor
    must still reproduce every example output when re-run.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one program set")
    common = {struct_key(t): t for t in sets[0].programs}
    for other in sets[1:]:
        keys = {struct_key(t) for t in other.programs}
        common = {k: v for k, v in common.items() if k in keys}
    survivors = list(common.values())
    if spec is not None:
        pdicts = [(c, tuple(o), build_pattern_dictionary(c, config)) for c, o in spec.cases]
        checked = []
        for t in survivors:
            ok = True
            for conflict, output, pdict in pdicts:
                try:
                    if eval_transformation(t, conflict, pdict) != output:
                        ok = False
                        break
                except EvaluationFailed:
                    ok = False
                    break
            if ok:
                checked.append(t)
        survivors = checked
    survivors.sort(key=lambda t: (program_score(t, config), program_size(t), struct_key(t)))
    return ProgramSet(tuple(survivors), truncated=any(s.truncated for s in sets))


def rank(programs, config: SynthConfig = DEFAULT_CONFIG) -> RankedPrograms:
    """Order candidates by weighted feature score, best first.

    Ties break on the serialized form: fewer AST nodes first, then the
    structural key.
    """
    if isinstance(programs, ProgramSet):
        truncated = programs.truncated
        items = programs.programs
    else:
        truncated = False
        items = tuple(programs)
    scored = sorted(
        ((program_score(p, config), program_size(p), struct_key(p), p) for p in items),
    )
    entries = tuple(RankedProgram(p, score, program_features(p)) for score, _, _, p in scored)
    return RankedPrograms(entries, truncated=truncated)


def _pattern_tags(t: Transformation) -> frozenset[str]:
    if isinstance(t, Select):
        sels = (t.selection,)
    elif isinstance(t, Remove):
        sels = (t.source, t.removed)
    else:
        return _pattern_tags(t.left) | _pattern_tags(t.right)
    return frozenset(s.key for s in sels if s.tag == "Pattern")


def _guard_candidates(condition: Condition, config: SynthConfig):
    """Non-empty predicate subsets of the learned condition, cheapest first."""
    preds = condition.predicates
    if len(preds) <= _MAX_SUBSET_PREDICATES:
        subsets = [
            combo
            for size in range(1, len(preds) + 1)
            for combo in itertools.combinations(preds, size)
        ]
    else:
        subsets = [(p,) for p in preds]
        subsets.append(preds)
    scored = []
    for subset in subsets:
        score = config.w_constants * sum(1 for p in subset if p.path is not None)
        key = tuple(struct_key(p) for p in subset)
        scored.append((score, len(subset), key, subset, frozenset(p.tag for p in subset)))
    scored.sort(key=lambda g: g[:3])
    return scored


def learn(spec: ExampleSpec, config: SynthConfig = DEFAULT_CONFIG) -> RankedPrograms:
    """Learn ranked programs consistent with every example.

    Returns an empty result (never raises) when no predicate holds on all
    inputs or no transformation reproduces all outputs.
    """
    try:
        condition_full = learn_condition(spec.inputs, config)
    except EmptyConditionError:
        logger.info("no program found: no predicate holds on every example")
        return RankedPrograms(())
    sets = []
    for conflict, output in spec.cases:
        pdict = build_pattern_dictionary(conflict, config)
        sets.append(learn_transformation(conflict, output, config=config, pdict=pdict))
    consistent = intersect_program_sets(sets, spec=spec, config=config)
    if not consistent.programs:
        logger.info("no program found: no transformation is consistent with every example")
        return RankedPrograms((), truncated=consistent.truncated)
    if consistent.truncated:
        logger.warning("candidate set truncated at %d programs; results may be incomplete",
                       config.max_programs)

    guards = _guard_candidates(condition_full, config)
    scored_ts = [(program_score(t, config), program_size(t), struct_key(t), t) for t in consistent.programs]
    scored_ts.sort(key=lambda c: c[:3])
    mandatory = [_pattern_tags(t) for _, _, _, t in scored_ts]

    def next_guard(start: int, required: frozenset[str]) -> int:
        gi = start
        while gi < len(guards) and not required <= guards[gi][4]:
            gi += 1
        return gi

    heap = []
    for ti, cand in enumerate(scored_ts):
        gi = next_guard(0, mandatory[ti])
        if gi < len(guards):
            heapq.heappush(heap, (cand[0] + guards[gi][0], ti, gi))
    picked = []
    truncated = consistent.truncated
    while heap:
        if len(picked) >= config.max_programs:
            truncated = True
            break
        total, ti, gi = heapq.heappop(heap)
        picked.append((total, ti, gi))
        ngi = next_guard(gi + 1, mandatory[ti])
        if ngi < len(guards):
            heapq.heappush(heap, (scored_ts[ti][0] + guards[ngi][0], ti, ngi))

    entries = []
    for total, ti, gi in picked:
        program = Program(Condition(guards[gi][3]), scored_ts[ti][3])
        entries.append((total, program_size(program), struct_key(program), program))
    entries.sort(key=lambda c: c[:3])
    ranked = tuple(RankedProgram(p, score, program_features(p)) for score, _, _, p in entries)
    return RankedPrograms(ranked, truncated=truncated)
