"""Tests for corpus loading, alignment, classification and evaluation."""

import json
import logging

import pytest

from mergelearn.conflicts import parse_conflict_file, tokenize_nodes
from mergelearn.dsl import Condition, Predicate, Program, Select, Selection, SynthConfig
from mergelearn.corpus import (
    SIZE_BUCKETS,
    EmptyCorpusError,
    align_resolution,
    classify_file_type,
    classify_location,
    classify_size,
    evaluate,
    load_corpus,
    report,
    size_bucket,
)

from conftest import (
    DUP_PROGRAM,
    FB_PROGRAM,
    FIG1_REGIONS,
    fig_chunk,
    fig_file_text,
    fig_resolution_nodes,
    fig_resolved_text,
    marker_text,
    write_fig_corpus,
)


@pytest.fixture
def fig_corpus(tmp_path):
    return write_fig_corpus(tmp_path / "corpus")


def test_load_corpus_four_cases(fig_corpus):
    cases = load_corpus(fig_corpus)
    assert len(cases) == 4
    assert [c.merge_id for c in cases] == ["merge-001", "merge-001", "merge-002", "merge-002"]
    by_label = {c.label for c in cases}
    assert by_label == {"RD", "FB"}
    case_c = next(c for c in cases if c.file_path.endswith("sample_c.cc"))
    assert case_c.human_resolution == fig_resolution_nodes("c")


def test_load_corpus_empty_directory(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    with pytest.raises(EmptyCorpusError):
        load_corpus(root)


def test_load_corpus_missing_root(tmp_path):
    with pytest.raises(EmptyCorpusError):
        load_corpus(tmp_path / "nowhere")


def test_load_corpus_skips_malformed_case(fig_corpus, caplog):
    bad = fig_corpus / "merge-003" / "broken"
    bad.mkdir(parents=True)
    (bad / "conflict.txt").write_text("<<<<<<< fork\nunterminated\n", encoding="utf-8")
    (bad / "resolved.txt").write_text("whatever\n", encoding="utf-8")
    (bad / "meta.json").write_text(json.dumps({"file_path": "x.cc"}), encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        cases = load_corpus(fig_corpus)
    assert len(cases) == 4
    assert any("broken" in record.message for record in caplog.records)


def test_load_corpus_skips_missing_resolution(fig_corpus, caplog):
    bad = fig_corpus / "merge-003" / "no-resolution"
    bad.mkdir(parents=True)
    (bad / "conflict.txt").write_text(fig_file_text("a"), encoding="utf-8")
    (bad / "meta.json").write_text(json.dumps({"file_path": "x.cc"}), encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        cases = load_corpus(fig_corpus)
    assert len(cases) == 4
    assert any("missing resolution" in record.message for record in caplog.records)


def test_load_corpus_rejects_unresolved_file(fig_corpus, caplog):
    bad = fig_corpus / "merge-003" / "still-conflicted"
    bad.mkdir(parents=True)
    (bad / "conflict.txt").write_text(fig_file_text("a"), encoding="utf-8")
    (bad / "resolved.txt").write_text(fig_file_text("a"), encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        cases = load_corpus(fig_corpus)
    assert len(cases) == 4
    assert any("still contains markers" in record.message for record in caplog.records)


def test_load_corpus_reads_headers(tmp_path):
    root = tmp_path / "corpus"
    case_dir = root / "merge-001" / "case-a"
    case_dir.mkdir(parents=True)
    case_dir.joinpath("conflict.txt").write_text(fig_file_text("a"), encoding="utf-8")
    case_dir.joinpath("resolved.txt").write_text(fig_resolved_text("a"), encoding="utf-8")
    case_dir.joinpath("meta.json").write_text(json.dumps({"file_path": "a.cc"}), encoding="utf-8")
    headers = case_dir / "headers"
    headers.mkdir()
    headers.joinpath("cursor_type.mojom-shared.h").write_text("struct CursorType;\n", encoding="utf-8")
    (case,) = load_corpus(root)
    assert case.conflict.header_contents == {
        "ui/base/mojom/cursor_type.mojom-shared.h": "struct CursorType;\n",
        "ui/base/cursor/mojom/cursor_type.mojom-shared.h": "struct CursorType;\n",
    }


def test_load_corpus_honors_side_order(tmp_path):
    root = tmp_path / "corpus"
    case_dir = root / "merge-001" / "case-a"
    case_dir.mkdir(parents=True)
    case_dir.joinpath("conflict.txt").write_text(fig_file_text("a"), encoding="utf-8")
    case_dir.joinpath("resolved.txt").write_text(fig_resolved_text("a"), encoding="utf-8")
    meta = {"file_path": "a.cc", "side_order": "ours-first"}
    case_dir.joinpath("meta.json").write_text(json.dumps(meta), encoding="utf-8")
    (case,) = load_corpus(root)
    # With ours-first the listing's first section becomes the main region.
    assert [n.include_path for n in case.conflict.main_nodes] == [
        "ui/base/anonymous_ui_base_features.h",
        "ui/base/mojom/cursor_type.mojom-shared.h",
    ]


def test_align_identity_kept_fork():
    conflict_text = fig_file_text("c")
    resolved = fig_resolved_text("c")
    (aligned,) = align_resolution(conflict_text, resolved)
    assert aligned.nodes == fig_resolution_nodes("c")


def test_align_kept_fork_side_verbatim():
    conflict_text = marker_text(['#include "a/a.h"', '#include "b/b.h"'], ['#include "c/c.h"'],
                                before=("top",), after=("bottom",))
    resolved = "top\n" + '#include "a/a.h"\n#include "b/b.h"\n' + "bottom\n"
    (aligned,) = align_resolution(conflict_text, resolved)
    assert aligned.nodes == tokenize_nodes(['#include "a/a.h"', '#include "b/b.h"'])


def test_align_deleted_region():
    conflict_text = marker_text(['#include "a/a.h"'], ['#include "b/b.h"'],
                                before=("top",), after=("bottom",))
    (aligned,) = align_resolution(conflict_text, "top\nbottom\n")
    assert aligned.nodes == ()


def test_align_whole_file_is_one_chunk():
    conflict_text = "<<<<<<< fork\nkept line\n=======\ndropped line\n>>>>>>> main\n"
    (aligned,) = align_resolution(conflict_text, "kept line\n")
    assert aligned.nodes == tokenize_nodes(["kept line"])


def test_align_ambiguous_context_flagged():
    conflict_text = "\n".join(
        [
            "context",
            "<<<<<<< fork",
            "fork line one",
            "=======",
            "main line one",
            ">>>>>>> main",
            "context",
            "<<<<<<< fork",
            "fork line two",
            "=======",
            "main line two",
            ">>>>>>> main",
        ]
    ) + "\n"
    # The developer collapsed the two identical context lines into one,
    # so the second chunk's flanks cannot be anchored.
    resolved = "context\nfork line one\n"
    results = align_resolution(conflict_text, resolved)
    assert any(r.nodes is None for r in results)


def test_align_adjacent_chunks_flagged():
    conflict_text = "\n".join(
        [
            "top",
            "<<<<<<< fork",
            "one",
            "=======",
            "two",
            ">>>>>>> main",
            "<<<<<<< fork",
            "three",
            "=======",
            "four",
            ">>>>>>> main",
            "bottom",
        ]
    ) + "\n"
    results = align_resolution(conflict_text, "top\none\nthree\nbottom\n")
    assert [r.nodes for r in results] == [None, None]


@pytest.mark.parametrize(
    "path,expected",
    [
        ("foo.cc", "C++"),
        ("dir/sub/widget.cpp", "C++"),
        ("bar.h", "Headers"),
        ("bar.hpp", "Headers"),
        ("DEPS", "Dependency"),
        ("feature.gni", "Dependency"),
        ("BUILD.gn", "Build"),
        ("build/out.ninja", "Build"),
        ("tools/run.py", "Python"),
        ("tests/data.pyl", "Python"),
        ("matrix.mm", "Data"),
        ("strings.grd", "Data"),
        ("README", "Text"),
        ("docs/notes.md", "Text"),
        ("notes.csv", "Others"),
        ("schema.proto", "Others"),
    ],
)
def test_classify_file_type(path, expected):
    assert classify_file_type(path) == expected


def test_classify_size_fig1c(fig1c):
    assert classify_size(fig1c) == ("1-2", "1-2")


def test_classify_size_buckets():
    chunk = parse_conflict_file(
        marker_text([f"line {i};" for i in range(51)], ["one;"]), "big.cc"
    )[0]
    assert classify_size(chunk) == ("1-2", ">50")


def test_size_buckets_partition_positive_integers():
    for count in range(1, 120):
        buckets = [b for b in SIZE_BUCKETS if size_bucket(count) == b]
        assert len(buckets) == 1


@pytest.mark.parametrize(
    "count,bucket",
    [(1, "1-2"), (2, "1-2"), (3, "3-4"), (10, "9-10"), (11, "11-15"), (25, "21-25"),
     (31, "31-40"), (50, "41-50"), (51, ">50")],
)
def test_size_bucket_boundaries(count, bucket):
    assert size_bucket(count) == bucket


def test_classify_location_include(fig1a):
    assert classify_location(fig1a) == "Include"


def test_classify_location_macro():
    chunk = parse_conflict_file(
        marker_text(
            ["IN_PROC_BROWSER_TEST_P(V4, ANONYMOUS_DISABLED_PERMANENT(MalwareWithWhitelist, 20395305)) {"],
            ["IN_PROC_BROWSER_TEST_F(V4) {"],
        ),
        "test.cc",
    )[0]
    assert classify_location(chunk) == "Macro"


def test_classify_location_comments_are_others():
    chunk = parse_conflict_file(
        marker_text(["// a comment", "/* block */"], ["// other comment"]), "c.cc"
    )[0]
    assert classify_location(chunk) == "Others"


@pytest.mark.parametrize(
    "fork,main,expected",
    [
        (["if (result != DID_NOT_HANDLE)"], ["if (elastic_ && result != DID_NOT_HANDLE)"], "Condition"),
        (["static const uint32_t kSettingsVersion = 4;"], ["static constexpr uint32_t kSettingsVersion = 1;"], "Declare"),
        (["for (int i = 0; i < n; i++) {"], ["while (pending()) {"], "Loop"),
        (["callback.Run(path, result);"], ["callback.Run(result);"], "Expression"),
        (["void Delegate::OnDone(int code) {"], ["void Delegate::OnDone() {"], "Method"),
    ],
)
def test_classify_location_heuristics(fork, main, expected):
    chunk = parse_conflict_file(marker_text(fork, main), "loc.cc")[0]
    assert classify_location(chunk) == expected


def test_report_fig_corpus(fig_corpus):
    cases = load_corpus(fig_corpus)
    result = report(cases)
    assert result.total == 4
    assert result.file_types == {"C++": 4}
    assert result.locations == {"Include": 4}
    assert result.main_sizes == {"1-2": 4}
    assert result.fork_sizes == {"1-2": 4}
    assert result.labels == {"FB": 2, "RD": 2}
    for counts in (result.file_types, result.locations, result.labels):
        assert sum(counts.values()) == result.total


def test_report_counts_unlabeled(fig_corpus):
    extra = fig_corpus / "merge-003" / "case-x"
    extra.mkdir(parents=True)
    extra.joinpath("conflict.txt").write_text(fig_file_text("a"), encoding="utf-8")
    extra.joinpath("resolved.txt").write_text(fig_resolved_text("a"), encoding="utf-8")
    extra.joinpath("meta.json").write_text(json.dumps({"file_path": "x.cc"}), encoding="utf-8")
    result = report(load_corpus(fig_corpus))
    assert result.labels["unlabeled"] == 1
    assert result.total == 5


def test_report_renders_table(fig_corpus):
    table = report(load_corpus(fig_corpus)).render_table()
    assert "cases: 4" in table
    assert "Include" in table


def test_evaluate_fb_over_cd(fig_corpus):
    cases = [c for c in load_corpus(fig_corpus) if c.label == "FB"]
    result = evaluate([FB_PROGRAM], cases)
    assert result.total == 2
    assert result.suggested == 2
    assert result.matched == 2
    assert result.accuracy == 1.0
    assert result.coverage == 1.0


def test_evaluate_unmatched_guard_reports_na(fig_corpus):
    cases = load_corpus(fig_corpus)
    never = Program(
        Condition((Predicate("FrequentPattern", path="never/present.h"),)),
        Select(Selection("Fork")),
    )
    result = evaluate([never], cases)
    assert result.suggested == 0
    assert result.accuracy is None
    assert result.coverage == 0.0
    assert result.no_suggestion == result.total == 4


def test_evaluate_counts_are_exhaustive(fig_corpus):
    cases = load_corpus(fig_corpus)
    result = evaluate([FB_PROGRAM, DUP_PROGRAM], cases)
    assert result.matched + result.mismatched + result.no_suggestion == result.total
    assert result.matched + result.mismatched == result.suggested <= result.total


def test_evaluate_14_case_fb_corpus_with_one_divergent(tmp_path):
    root = tmp_path / "fb-corpus"
    for i in range(14):
        case_dir = root / "merge-001" / f"case-{i:02d}"
        case_dir.mkdir(parents=True)
        fork = ['#include "base/logging.h"', f'#include "base/feature_{i}.h"']
        main = ['#include "base/notreached.h"']
        case_dir.joinpath("conflict.txt").write_text(marker_text(fork, main), encoding="utf-8")
        if i == 13:
            kept = [fork[0], fork[1], main[0]]  # divergent: developer kept logging.h
        else:
            kept = [main[0], fork[1]]
        resolved = "\n".join(
            ["// Copyright 2020 The Sample Authors.", "", *kept, "",
             "namespace sample {", "void Run() {}", "}  // namespace sample"]
        ) + "\n"
        case_dir.joinpath("resolved.txt").write_text(resolved, encoding="utf-8")
        case_dir.joinpath("meta.json").write_text(
            json.dumps({"file_path": f"src/file_{i}.cc", "label": "FB"}), encoding="utf-8"
        )
    result = evaluate([FB_PROGRAM], load_corpus(root))
    assert result.total == 14
    assert result.matched == 13
    assert result.mismatched == 1
    assert result.accuracy == pytest.approx(13 / 14)


def test_evaluate_per_program_attribution(fig_corpus):
    cases = load_corpus(fig_corpus)
    result = evaluate([FB_PROGRAM, DUP_PROGRAM], cases)
    assert result.per_program[0]["matched"] == 2  # c and d
    assert result.per_program[1]["matched"] == 2  # a and b
    assert result.matched == 4


def test_evaluate_order_insensitive_includes(fig1c):
    from conftest import fig_resolution_nodes

    reordered = tuple(reversed(fig_resolution_nodes("c")))
    case_cls = __import__("mergelearn.corpus", fromlist=["CorpusCase"]).CorpusCase
    case = case_cls(fig1c, reordered, "m", "f.cc", 0, None)
    strict = evaluate([FB_PROGRAM], [case])
    assert strict.mismatched == 1
    relaxed = evaluate([FB_PROGRAM], [case], SynthConfig(order_insensitive_includes=True))
    assert relaxed.matched == 1


def test_evaluate_is_repeatable(fig_corpus):
    cases = load_corpus(fig_corpus)
    first = evaluate([FB_PROGRAM, DUP_PROGRAM], cases)
    second = evaluate([FB_PROGRAM, DUP_PROGRAM], cases)
    assert first.to_json_dict() == second.to_json_dict()
