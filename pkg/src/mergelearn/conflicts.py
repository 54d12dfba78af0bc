"""Parsing of git conflict markers into structured chunks and line nodes.

A conflicted file is split into outside text and marker-delimited chunks.
Each chunk carries two regions (main and fork); region lines are tokenized
into nodes, the atomic units that resolution programs select and combine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

INCLUDE = "include"
MACRO = "macro"
RAW = "raw"

SIDE_ORDERS = ("fork-first", "ours-first")

_INCLUDE_RE = re.compile(r'^#\s*include\s*("[^"]+"|<[^>]+>)$')
_MACRO_RE = re.compile(r"^([A-Z][A-Z0-9_]*)\s*(\(.*)$")

_START_RE = re.compile(r"^<{7}(\s.*)?$")
_BASE_RE = re.compile(r"^\|{7}(\s.*)?$")
_SEP_RE = re.compile(r"^={7}\s*$")
_END_RE = re.compile(r"^>{7}(\s.*)?$")


class UnbalancedMarkersError(ValueError):
    """Conflict markers in the file do not nest properly."""


@dataclass(frozen=True)
class Node:
    """One region line, reduced to what resolutions care about.

    ``raw_text`` is whitespace-normalized; for include and macro nodes it is
    canonicalized from ``children``, so equality ignores spacing variations
    of the original line.
    """

    kind: str
    raw_text: str
    children: tuple[str, ...] = ()

    @property
    def include_path(self) -> str | None:
        """Path between the quotes/brackets of an include, else None."""
        if self.kind != INCLUDE:
            return None
        return self.children[1][1:-1]

    @property
    def macro_name(self) -> str | None:
        if self.kind != MACRO:
            return None
        return self.children[0]

    @property
    def is_blank(self) -> bool:
        return self.kind == RAW and self.raw_text == ""

    def render(self) -> str:
        if self.kind == INCLUDE:
            return f"#include {self.children[1]}"
        if self.kind == MACRO:
            return self.children[0] + self.children[1]
        return self.raw_text


def normalize_line(line: str) -> str:
    """Strip and collapse whitespace runs; the unit of node equality."""
    return re.sub(r"\s+", " ", line.strip())


def tokenize_line(line: str) -> Node:
    text = normalize_line(line)
    m = _INCLUDE_RE.match(text)
    if m:
        return Node(INCLUDE, f"#include {m.group(1)}", ("#include", m.group(1)))
    m = _MACRO_RE.match(text)
    if m:
        return Node(MACRO, m.group(1) + m.group(2), (m.group(1), m.group(2)))
    return Node(RAW, text)


def tokenize_nodes(lines) -> tuple[Node, ...]:
    """Tokenize region lines, one node per line. Total: never fails."""
    return tuple(tokenize_line(line) for line in lines)


def render_nodes(nodes) -> str:
    """Render nodes back to text, one line per node."""
    return "\n".join(node.render() for node in nodes)


@dataclass(eq=False)
class ConflictInput:
    """One conflict chunk: the program input ``x``.

    Treated as read-only once parsing finishes; safe to share across
    workers. ``sibling_chunks`` holds the other chunks of the same file,
    ``header_contents`` maps include paths to header text when the corpus
    ships headers (empty otherwise).
    """

    file_path: str
    main_nodes: tuple[Node, ...]
    fork_nodes: tuple[Node, ...]
    outside_content: tuple[str, ...]
    main_lines: tuple[str, ...] = ()
    fork_lines: tuple[str, ...] = ()
    sibling_chunks: tuple["ConflictInput", ...] = field(default=(), repr=False)
    header_contents: dict[str, str] = field(default_factory=dict, repr=False)

    def region_nodes(self) -> tuple[Node, ...]:
        return self.main_nodes + self.fork_nodes

    def include_paths(self) -> tuple[str, ...]:
        """Distinct include paths in both regions, first-occurrence order."""
        seen: dict[str, None] = {}
        for node in self.region_nodes():
            path = node.include_path
            if path is not None and path not in seen:
                seen[path] = None
        return tuple(seen)


def conflict_kind(conflict: ConflictInput) -> str:
    """Classify a chunk as Include, Macro, Mixed or Other.

    Blank lines are ignored; any non-blank raw line (or an empty chunk)
    makes it Other. Invariant under node order within a region.
    """
    kinds = {n.kind for n in conflict.region_nodes() if not n.is_blank}
    if kinds == {INCLUDE}:
        return "Include"
    if kinds == {MACRO}:
        return "Macro"
    if kinds == {INCLUDE, MACRO}:
        return "Mixed"
    return "Other"


class ConflictedFile:
    """A parsed conflicted file: interleaved text segments and chunks.

    Keeps the exact original lines so unresolved chunks can be written
    back verbatim. CRLF input is normalized to LF.
    """

    def __init__(self, file_path, segments, chunks, chunk_blocks, trailing_newline):
        self.file_path = file_path
        self.segments = segments  # ("text", lines) | ("chunk", index)
        self.chunks = chunks
        self.chunk_blocks = chunk_blocks
        self.trailing_newline = trailing_newline

    @classmethod
    def parse(cls, text: str, file_path: str, side_order: str = "fork-first") -> "ConflictedFile":
        if side_order not in SIDE_ORDERS:
            raise ValueError(f"side_order must be one of {SIDE_ORDERS}, got {side_order!r}")
        text = text.replace("\r\n", "\n")
        trailing = text.endswith("\n")
        lines = text.split("\n")
        if trailing:
            lines.pop()

        segments: list[tuple[str, object]] = []
        raw_chunks: list[dict] = []
        chunk_blocks: list[tuple[str, ...]] = []
        outside: list[str] = []
        pending_text: list[str] = []

        state = "outside"
        first: list[str] = []
        second: list[str] = []
        block: list[str] = []

        def fail(lineno, why):
            raise UnbalancedMarkersError(f"{file_path}:{lineno + 1}: {why}")

        for lineno, line in enumerate(lines):
            if state == "outside":
                if _START_RE.match(line):
                    if pending_text:
                        segments.append(("text", tuple(pending_text)))
                        pending_text = []
                    first, second, block = [], [], [line]
                    state = "first"
                elif _END_RE.match(line):
                    fail(lineno, "end marker without a matching start marker")
                else:
                    # Separator/base lines outside a chunk are plain text.
                    pending_text.append(line)
                    outside.append(line)
            elif state == "first":
                block.append(line)
                if _SEP_RE.match(line):
                    state = "second"
                elif _BASE_RE.match(line):
                    state = "base"
                elif _START_RE.match(line) or _END_RE.match(line):
                    fail(lineno, "marker inside an open conflict section")
                else:
                    first.append(line)
            elif state == "base":
                block.append(line)
                if _SEP_RE.match(line):
                    state = "second"
                elif _START_RE.match(line) or _END_RE.match(line) or _BASE_RE.match(line):
                    fail(lineno, "marker inside a base section")
                # base section content is dropped
            elif state == "second":
                block.append(line)
                if _END_RE.match(line):
                    segments.append(("chunk", len(raw_chunks)))
                    raw_chunks.append({"first": tuple(first), "second": tuple(second)})
                    chunk_blocks.append(tuple(block))
                    state = "outside"
                elif _START_RE.match(line) or _SEP_RE.match(line) or _BASE_RE.match(line):
                    fail(lineno, "marker inside the second conflict section")
                else:
                    second.append(line)

        if state != "outside":
            raise UnbalancedMarkersError(f"{file_path}: unterminated conflict at end of file")
        if pending_text:
            segments.append(("text", tuple(pending_text)))

        outside_tuple = tuple(outside)
        chunks: list[ConflictInput] = []
        for raw in raw_chunks:
            if side_order == "fork-first":
                fork_lines, main_lines = raw["first"], raw["second"]
            else:
                main_lines, fork_lines = raw["first"], raw["second"]
            chunks.append(
                ConflictInput(
                    file_path=file_path,
                    main_nodes=tokenize_nodes(main_lines),
                    fork_nodes=tokenize_nodes(fork_lines),
                    outside_content=outside_tuple,
                    main_lines=tuple(main_lines),
                    fork_lines=tuple(fork_lines),
                )
            )
        for i, chunk in enumerate(chunks):
            chunk.sibling_chunks = tuple(c for j, c in enumerate(chunks) if j != i)
        return cls(file_path, segments, chunks, chunk_blocks, trailing)

    def render(self, resolutions: dict[int, tuple[Node, ...]] | None = None) -> str:
        """Rebuild the file text, substituting resolved chunks.

        Chunks absent from ``resolutions`` keep their original marker block.
        An empty resolution deletes the region without leaving a blank line.
        """
        resolutions = resolutions or {}
        out: list[str] = []
        for tag, payload in self.segments:
            if tag == "text":
                out.extend(payload)
            elif payload in resolutions:
                nodes = resolutions[payload]
                if nodes:
                    out.extend(render_nodes(nodes).split("\n"))
            else:
                out.extend(self.chunk_blocks[payload])
        text = "\n".join(out)
        if self.trailing_newline and text:
            text += "\n"
        return text


def parse_conflict_file(text: str, file_path: str, side_order: str = "fork-first") -> list[ConflictInput]:
    """Parse marker text into chunks, in file order.

    Returns an empty list for marker-free files; raises
    UnbalancedMarkersError when markers do not nest.
    """
    return ConflictedFile.parse(text, file_path, side_order=side_order).chunks
