import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from navmem.instruction import (
    Dependency, GraphInvalidError, HttpInstructionParser, InstructionSyntaxError, Task,
    TaskGraph, classify_dependency, parse, render, schedule, temporal_ranks,
)


def test_single_task():
    g = parse("sofa")
    assert g.tasks == (Task(1, "sofa"),)
    assert g.temporal_edges == ()
    assert g.semantic_sequence == (1,)


def test_then_chain():
    g = parse("sofa then lamp then sink")
    assert [t.target_text for t in g.tasks] == ["sofa", "lamp", "sink"]
    assert g.temporal_edges == ((1, 2), (2, 3))


def test_and_group_then_task():
    g = parse("sofa and desk then lamp")
    assert set(g.temporal_edges) == {(1, 3), (2, 3)}
    assert temporal_ranks(g) == [[1, 2], [3]]


def test_near_and_with():
    g = parse("red mug near coffee machine with sink, kettle")
    (t,) = g.tasks
    assert t.target_text == "red mug"
    assert t.anchor_text == "coffee machine"
    assert t.context_texts == ("sink", "kettle")


def test_semicolon_and_keyword_case():
    assert parse("sofa ; lamp").temporal_edges == parse("sofa THEN lamp").temporal_edges


@pytest.mark.parametrize("text, position", [
    ("", 0),
    ("   ", 0),
    ("sofa then", 9),
    ("then sofa", 0),
    ("sofa near", 9),
    ("sofa and and lamp", 9),
    ("sofa with lamp,", 15),
    ("sofa # lamp", 5),
])
def test_syntax_errors_report_position(text, position):
    with pytest.raises(InstructionSyntaxError) as info:
        parse(text)
    assert info.value.position == position


# ----------------------------------------------------------- dependencies

def test_spatial_dependency_when_anchor_is_another_target():
    g = parse("lamp and sofa near lamp")
    a, b = g.tasks
    assert classify_dependency(g, a, b) is Dependency.SPATIAL


def test_temporal_and_independent():
    g = parse("sofa then lamp and desk")
    s, l, d = g.tasks
    assert classify_dependency(g, s, l) is Dependency.TEMPORAL
    assert classify_dependency(g, l, d) is Dependency.INDEPENDENT


def test_transitive_temporal_dependency():
    g = parse("sofa then lamp then desk")
    s, _, d = g.tasks
    assert classify_dependency(g, d, s) is Dependency.TEMPORAL


# --------------------------------------------------------------- schedule

def test_schedule_resolves_anchor_first():
    g = parse("mug near kettle")
    steps = schedule(g)
    assert [(s.kind, s.text, s.batch) for s in steps] == [
        ("resolve_anchor", "kettle", 0), ("anchor_retrieve", "mug", 1)]
    assert steps[1].depends_on == (0,)
    assert steps[1].anchor_text == "kettle"


def test_independent_tasks_share_a_parallel_batch():
    steps = schedule(parse("sofa and lamp then desk"))
    assert [(s.task_id, s.batch, s.parallel) for s in steps] == [
        (1, 0, True), (2, 0, True), (3, 1, False)]


def test_schedule_respects_temporal_order():
    g = parse("a near b then c and d near e then f")
    steps = schedule(g)
    batch_of = {}
    for s in steps:
        if s.kind != "resolve_anchor":
            batch_of[s.task_id] = s.batch
        for dep in s.depends_on:
            assert steps[dep].batch < s.batch
    for a, b in g.temporal_edges:
        assert batch_of[a] < batch_of[b]
    assert sorted(batch_of) == [1, 2, 3, 4]


# ----------------------------------------------------------- render/graph

words = st.sampled_from(["sofa", "red", "lamp", "desk", "tall", "mug", "tv", "sink"])
phrases = st.lists(words, min_size=1, max_size=3).map(" ".join)
tasks = st.tuples(phrases, st.none() | phrases, st.lists(phrases, max_size=2)).map(
    lambda t: t[0] + (f" near {t[1]}" if t[1] else "") + (" with " + ", ".join(t[2]) if t[2] else ""))
groups = st.lists(tasks, min_size=1, max_size=3).map(" and ".join)
instructions = st.lists(groups, min_size=1, max_size=4).map(" then ".join)


@given(instructions)
def test_render_round_trip(text):
    g = parse(text)
    assert render(g) == text
    assert parse(render(g)) == g


@given(instructions)
def test_parsed_graphs_are_dags_with_valid_sequence(text):
    g = parse(text)
    pos = {t: k for k, t in enumerate(g.semantic_sequence)}
    assert all(pos[a] < pos[b] for a, b in g.temporal_edges)
    assert sorted(pos) == [t.id for t in g.tasks]


def test_graph_json_round_trip():
    g = parse("sofa near lamp with tv then desk")
    assert TaskGraph.from_dict(g.to_dict()) == g


def test_invalid_graphs_are_rejected():
    t1, t2 = Task(1, "a"), Task(2, "b")
    with pytest.raises(GraphInvalidError):
        TaskGraph((t1, t1), (), (1, 1))
    with pytest.raises(GraphInvalidError):
        TaskGraph((t1,), ((1, 3),), (1,))
    with pytest.raises(GraphInvalidError):
        TaskGraph((t1, t2), ((2, 1),), (1, 2))
    with pytest.raises(GraphInvalidError):
        TaskGraph.from_dict({"tasks": [{"id": 1, "target": "a"}, {"id": 2, "target": "b"}],
                             "temporal_edges": [[1, 2], [2, 1]], "semantic_sequence": [1, 2]})


def test_http_parser_falls_back_to_grammar():
    parser = HttpInstructionParser("http://127.0.0.1:9/none", timeout=0.5)
    assert parser("sofa then lamp") == parse("sofa then lamp")


def test_every_pair_gets_exactly_one_class():
    g = parse("a near b and b then c then d near a")
    for x, y in itertools.permutations(g.tasks, 2):
        assert classify_dependency(g, x, y) == classify_dependency(g, y, x)
