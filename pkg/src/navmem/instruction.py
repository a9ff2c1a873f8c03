"""Multi-goal instruction mini-language.

Grammar (keywords are case-insensitive)::

    instruction := group (("then" | ";") group)*
    group       := task ("and" task)*
    task        := phrase ["near" phrase] ["with" phrase ("," phrase)*]
    phrase      := word+            # any word that is not a keyword

``then``/``;`` order groups in time: every task of a group precedes every
task of the next. Tasks joined by ``and`` share a rank and are independent.
``near`` binds tighter than ``then``: ``A near B`` makes B the anchor of A.
"""
from __future__ import annotations

import json
import logging
import re
import urllib.request
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

KEYWORDS = {"then", "and", "near", "with"}
_TOKEN = re.compile(r"\s*(?:(;|,)|([A-Za-z0-9][A-Za-z0-9_'-]*))")


class InstructionSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class GraphInvalidError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    id: int
    target_text: str
    anchor_text: str | None = None
    context_texts: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.target_text.strip():
            raise ValueError("task target_text must be non-empty")


@dataclass(frozen=True)
class TaskGraph:
    tasks: tuple[Task, ...]
    temporal_edges: tuple[tuple[int, int], ...] = ()
    semantic_sequence: tuple[int, ...] = ()

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise GraphInvalidError("duplicate task id")
        for a, b in self.temporal_edges:
            if a not in ids or b not in ids:
                raise GraphInvalidError(f"edge ({a}, {b}) references a missing task")
        if sorted(self.semantic_sequence) != sorted(ids):
            raise GraphInvalidError("semantic sequence must list every task exactly once")
        pos = {t: k for k, t in enumerate(self.semantic_sequence)}
        if any(pos[a] >= pos[b] for a, b in self.temporal_edges):
            raise GraphInvalidError("semantic sequence is not a topological order of the edges")

    def task(self, task_id: int) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def to_dict(self) -> dict:
        return {
            "tasks": [
                {"id": t.id, "target": t.target_text, "anchor": t.anchor_text,
                 "context": list(t.context_texts)}
                for t in self.tasks
            ],
            "temporal_edges": [list(e) for e in self.temporal_edges],
            "semantic_sequence": list(self.semantic_sequence),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskGraph":
        tasks = tuple(
            Task(int(t["id"]), str(t["target"]), t.get("anchor"), tuple(t.get("context", ())))
            for t in d["tasks"]
        )
        edges = tuple((int(a), int(b)) for a, b in d.get("temporal_edges", ()))
        seq = tuple(int(i) for i in d.get("semantic_sequence", [t.id for t in tasks]))
        graph = cls(tasks, edges, seq)
        _check_acyclic(graph)
        return graph


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise InstructionSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}",
                                         len(text) - len(text[pos:].lstrip()))
        start = m.start(1) if m.group(1) else m.start(2)
        word = m.group(1) or m.group(2)
        kind = word if word in (";", ",") else (
            word.lower() if word.lower() in KEYWORDS else "word")
        out.append((kind, word, start))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.k = 0

    def peek(self):
        return self.toks[self.k]

    def take(self, kind):
        tok = self.peek()
        if tok[0] != kind:
            what = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise InstructionSyntaxError(f"expected {kind}, found {what}", tok[2])
        self.k += 1
        return tok

    def phrase(self) -> str:
        words = [self.take("word")[1]]
        while self.peek()[0] == "word":
            words.append(self.take("word")[1])
        return " ".join(words)

    def task(self):
        target = self.phrase()
        anchor = None
        ctx: list[str] = []
        if self.peek()[0] == "near":
            self.k += 1
            anchor = self.phrase()
        if self.peek()[0] == "with":
            self.k += 1
            ctx.append(self.phrase())
            while self.peek()[0] == ",":
                self.k += 1
                ctx.append(self.phrase())
        return target, anchor, tuple(ctx)

    def group(self):
        items = [self.task()]
        while self.peek()[0] == "and":
            self.k += 1
            items.append(self.task())
        return items

    def instruction(self):
        groups = [self.group()]
        while self.peek()[0] in ("then", ";"):
            self.k += 1
            groups.append(self.group())
        self.take("eof")
        return groups


def parse(instruction: str) -> TaskGraph:
    """Parse an instruction into tasks, temporal edges and the semantic sequence."""
    if not instruction or not instruction.strip():
        raise InstructionSyntaxError("empty instruction", 0)
    groups = _Parser(instruction).instruction()
    tasks, ranks = [], []
    for g in groups:
        ids = []
        for target, anchor, ctx in g:
            tid = len(tasks) + 1
            tasks.append(Task(tid, target, anchor, ctx))
            ids.append(tid)
        ranks.append(ids)
    edges = tuple((a, b) for prev, nxt in zip(ranks, ranks[1:]) for a in prev for b in nxt)
    return TaskGraph(tuple(tasks), edges, tuple(t.id for t in tasks))


def temporal_ranks(graph: TaskGraph) -> list[list[int]]:
    """Tasks grouped by longest-path depth in the temporal DAG."""
    _check_acyclic(graph)
    depth = {t.id: 0 for t in graph.tasks}
    for tid in graph.semantic_sequence:
        for a, b in graph.temporal_edges:
            if a == tid:
                depth[b] = max(depth[b], depth[a] + 1)
    out: dict[int, list[int]] = {}
    for tid in graph.semantic_sequence:
        out.setdefault(depth[tid], []).append(tid)
    return [out[k] for k in sorted(out)]


def render(graph: TaskGraph) -> str:
    """Canonical instruction text; ``parse(render(g)) == g`` for parsed graphs."""
    parts = []
    for rank in temporal_ranks(graph):
        items = []
        for tid in rank:
            t = graph.task(tid)
            s = t.target_text
            if t.anchor_text:
                s += f" near {t.anchor_text}"
            if t.context_texts:
                s += " with " + ", ".join(t.context_texts)
            items.append(s)
        parts.append(" and ".join(items))
    return " then ".join(parts)


def _closure(graph: TaskGraph) -> set[tuple[int, int]]:
    succ: dict[int, set[int]] = {t.id: set() for t in graph.tasks}
    for a, b in graph.temporal_edges:
        succ[a].add(b)
    reach = set()
    for s in succ:
        stack, seen = list(succ[s]), set()
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            reach.add((s, u))
            stack.extend(succ[u])
    return reach


def _check_acyclic(graph: TaskGraph) -> None:
    if any(a == b for a, b in _closure(graph)):
        raise GraphInvalidError("temporal edges contain a cycle")


class Dependency(str, Enum):
    SPATIAL = "spatial"
    TEMPORAL = "temporal"
    INDEPENDENT = "independent"


def _same(a: str | None, b: str | None) -> bool:
    return a is not None and b is not None and a.strip().lower() == b.strip().lower()


def classify_dependency(graph: TaskGraph, a: Task, b: Task) -> Dependency:
    if _same(a.anchor_text, b.target_text) or _same(b.anchor_text, a.target_text):
        return Dependency.SPATIAL
    reach = _closure(graph)
    if (a.id, b.id) in reach or (b.id, a.id) in reach:
        return Dependency.TEMPORAL
    return Dependency.INDEPENDENT


@dataclass(frozen=True)
class Step:
    index: int
    kind: str              # "resolve_anchor" | "retrieve" | "anchor_retrieve"
    task_id: int
    text: str
    batch: int
    parallel: bool
    anchor_text: str | None = None
    context_texts: tuple[str, ...] = ()
    depends_on: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["context_texts"] = list(self.context_texts)
        d["depends_on"] = list(self.depends_on)
        return d


def schedule(graph: TaskGraph) -> list[Step]:
    """Order retrieval work: anchors before their dependents, rank by rank.

    Within a temporal rank, anchor resolutions and unanchored retrievals form
    one batch and anchored retrievals a second; members of a batch with more
    than one step are independent and may run in parallel.
    """
    _check_acyclic(graph)
    steps: list[Step] = []
    batch = 0

    def add_batch(specs):
        nonlocal batch
        if not specs:
            return
        parallel = len(specs) > 1
        for kind, task, text, deps in specs:
            steps.append(Step(
                len(steps), kind, task.id, text, batch, parallel,
                task.anchor_text if kind == "anchor_retrieve" else None,
                task.context_texts if kind != "resolve_anchor" else (),
                tuple(deps),
            ))
        batch += 1

    for rank in temporal_ranks(graph):
        first, second = [], []
        anchor_step: dict[int, int] = {}
        for tid in rank:
            t = graph.task(tid)
            if t.anchor_text:
                anchor_step[tid] = len(steps) + len(first)
                first.append(("resolve_anchor", t, t.anchor_text, ()))
            else:
                first.append(("retrieve", t, t.target_text, ()))
        add_batch(first)
        for tid in rank:
            t = graph.task(tid)
            if t.anchor_text:
                second.append(("anchor_retrieve", t, t.target_text, (anchor_step[tid],)))
        add_batch(second)
    return steps


class HttpInstructionParser:
    """Optional free-form parser: ``POST {"instruction": ...}`` returning TaskGraph JSON.

    The reply is validated with the same invariants as grammar output; any
    failure falls back to the grammar.
    """

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, instruction: str) -> TaskGraph:
        try:
            req = urllib.request.Request(
                self.url, json.dumps({"instruction": instruction}).encode(),
                {"Content-Type": "application/json"})
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return TaskGraph.from_dict(json.loads(resp.read()))
        except Exception as exc:  # noqa: BLE001
            logging.getLogger(__name__).warning(
                "instruction service failed (%s); using the grammar parser", exc)
            return parse(instruction)
