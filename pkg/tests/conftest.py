"""Shared fixtures: the four worked-example conflicts, corpus builders and
random conflict/program generators used by the fuzz and acceptance suites."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from mergelearn.conflicts import ConflictInput, parse_conflict_file, tokenize_nodes
from mergelearn.dsl import (
    Concat,
    Condition,
    PatternDictionary,
    Predicate,
    Program,
    Remove,
    Select,
    Selection,
    build_pattern_dictionary,
    run_program,
)
from mergelearn.synth import canonical_selections

OUTSIDE_BEFORE = ("// Copyright 2020 The Sample Authors.", "")
OUTSIDE_AFTER = ("", "namespace sample {", "void Run() {}", "}  // namespace sample")

FIG1_REGIONS = {
    "a": {
        "fork": (
            '#include "ui/base/anonymous_ui_base_features.h"',
            '#include "ui/base/mojom/cursor_type.mojom-shared.h"',
        ),
        "main": ('#include "ui/base/cursor/mojom/cursor_type.mojom-shared.h"',),
        "resolution": (
            '#include "ui/base/anonymous_ui_base_features.h"',
            '#include "ui/base/mojom/cursor_type.mojom-shared.h"',
        ),
        "label": "RD",
    },
    "b": {
        "fork": (
            '#include "ui/base/anonymous_ui_base_features.h"',
            '#include "ui/base/mojom/cursor_type.mojom-blink.h"',
        ),
        "main": ('#include "ui/base/cursor/mojom/cursor_type.mojom-blink.h"',),
        "resolution": (
            '#include "ui/base/anonymous_ui_base_features.h"',
            '#include "ui/base/mojom/cursor_type.mojom-blink.h"',
        ),
        "label": "RD",
    },
    "c": {
        "fork": ('#include "base/logging.h"', '#include "base/scoped_native_library.h"'),
        "main": ('#include "base/notreached.h"',),
        "resolution": ('#include "base/notreached.h"', '#include "base/scoped_native_library.h"'),
        "label": "FB",
    },
    "d": {
        "fork": ('#include "base/command_line.h"', '#include "base/logging.h"'),
        "main": ('#include "base/check_op.h"',),
        "resolution": ('#include "base/check_op.h"', '#include "base/command_line.h"'),
        "label": "FB",
    },
}

FB_PROGRAM = Program(
    Condition((Predicate("FrequentPattern", path="base/logging.h"),)),
    Concat(
        Select(Selection("Main")),
        Remove(Selection("Fork"), Selection("ForkByPath", path="base/logging.h")),
    ),
)

DUP_PROGRAM = Program(
    Condition((Predicate("DuplicateMainFork"),)),
    Concat(
        Select(Selection("Fork")),
        Remove(Selection("Main"), Selection("Pattern", key="DuplicateMainFork")),
    ),
)


def marker_text(fork_lines, main_lines, before=OUTSIDE_BEFORE, after=OUTSIDE_AFTER,
                fork_label="fork", main_label="main"):
    lines = [
        *before,
        f"<<<<<<< {fork_label}",
        *fork_lines,
        "=======",
        *main_lines,
        f">>>>>>> {main_label}",
        *after,
    ]
    return "\n".join(lines) + "\n"


def fig_file_text(name: str) -> str:
    spec = FIG1_REGIONS[name]
    return marker_text(spec["fork"], spec["main"])


def fig_resolved_text(name: str) -> str:
    spec = FIG1_REGIONS[name]
    lines = [*OUTSIDE_BEFORE, *spec["resolution"], *OUTSIDE_AFTER]
    return "\n".join(lines) + "\n"


def fig_chunk(name: str, file_path: str | None = None) -> ConflictInput:
    path = file_path or f"ui/base/sample_{name}.cc"
    chunks = parse_conflict_file(fig_file_text(name), path)
    assert len(chunks) == 1
    return chunks[0]


def fig_resolution_nodes(name: str):
    return tokenize_nodes(FIG1_REGIONS[name]["resolution"])


@pytest.fixture
def fig1a():
    return fig_chunk("a")


@pytest.fixture
def fig1b():
    return fig_chunk("b")


@pytest.fixture
def fig1c():
    return fig_chunk("c")


@pytest.fixture
def fig1d():
    return fig_chunk("d")


def write_fig_corpus(root: Path) -> Path:
    """Encode the four worked examples in the on-disk corpus layout."""
    merges = {"a": "merge-001", "b": "merge-001", "c": "merge-002", "d": "merge-002"}
    for name, spec in FIG1_REGIONS.items():
        case_dir = root / merges[name] / f"case-{name}"
        case_dir.mkdir(parents=True)
        (case_dir / "conflict.txt").write_text(fig_file_text(name), encoding="utf-8")
        (case_dir / "resolved.txt").write_text(fig_resolved_text(name), encoding="utf-8")
        meta = {"file_path": f"ui/base/sample_{name}.cc", "label": spec["label"]}
        (case_dir / "meta.json").write_text(json.dumps(meta), encoding="utf-8")
    return root


# --- random generation for fuzz suites --------------------------------------

PATH_POOL = (
    "base/alpha.h",
    "base/beta.h",
    "base/gamma.h",
    "ui/delta.h",
    "ui/epsilon.h",
    "net/zeta.h",
)
MACRO_NAMES = ("IN_PROC_BROWSER_TEST_F", "IN_PROC_BROWSER_TEST_P", "RUN_SUITE")
IDENTS = ("CheckDownloadUrl", "CheckResourceUrl", "MalwareScan", "V4")
RAW_LINES = ("", "int counter = 0;", "return;")


def gen_region_lines(rng, count, pool=PATH_POOL, force_paths=(), macros=True, raws=True):
    lines = [f'#include "{p}"' for p in force_paths]
    while len(lines) < count:
        roll = rng.random()
        if macros and roll < 0.12:
            lines.append(f"{rng.choice(MACRO_NAMES)}({rng.choice(IDENTS)}, {rng.choice(IDENTS)}) {{")
        elif raws and roll < 0.22:
            lines.append(rng.choice(RAW_LINES))
        else:
            lines.append(f'#include "{rng.choice(pool)}"')
    rng.shuffle(lines)
    return lines


def gen_conflict(rng, max_nodes=3, pool=PATH_POOL, force_paths=(), macros=True, raws=True,
                 file_path="src/generated.cc"):
    """A random single-chunk conflict built through the real parser."""
    n_fork = rng.randint(1, max_nodes)
    n_main = rng.randint(1, max_nodes)
    fork = gen_region_lines(rng, n_fork, pool, force_paths, macros, raws)
    main = gen_region_lines(rng, n_main, pool, force_paths, macros, raws)
    text = marker_text(fork, main)
    return parse_conflict_file(text, file_path)[0]


def true_predicates(conflict: ConflictInput, pdict: PatternDictionary):
    preds = [Predicate(tag) for tag in pdict.patterns]
    preds.extend(Predicate("FrequentPattern", path=p) for p in sorted(pdict.frequent))
    return preds


def gen_transformation(rng, selections, depth):
    roll = rng.random()
    if depth > 0 and roll < 0.35:
        return Concat(gen_transformation(rng, selections, depth - 1),
                      gen_transformation(rng, selections, depth - 1))
    if roll < 0.65:
        source = Selection(rng.choice(("Main", "Fork")))
        removed, _ = rng.choice(selections)
        return Remove(source, removed)
    sel, _ = rng.choice(selections)
    return Select(sel)


def gen_program_with_output(rng, conflict, depth, config=None, attempts=30):
    """A random program whose guard holds and evaluation succeeds, plus its
    output; None when no attempt lands."""
    from mergelearn.dsl import DEFAULT_CONFIG

    config = config or DEFAULT_CONFIG
    pdict = build_pattern_dictionary(conflict, config)
    preds = true_predicates(conflict, pdict)
    if not preds:
        return None
    selections = canonical_selections(conflict, pdict)
    for _ in range(attempts):
        guard = rng.sample(preds, rng.randint(1, min(3, len(preds))))
        program = Program(Condition(tuple(guard)), gen_transformation(rng, selections, depth))
        result = run_program(program, conflict, config)
        if result.is_resolved:
            return program, result.nodes
    return None
