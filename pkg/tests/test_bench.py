import itertools
import json
import math

import jsonschema
import pytest

from navmem.bench import (
    ABLATIONS, COLUMNS, BenchParams, BenchmarkCase, BenchmarkError, MemoryCache,
    MetricsRecord, PlannerConfig, clustered_stream, export_results, generate_benchmark,
    harness_neutral, read_results, read_suite, results_schema, run_ablations,
    run_navigation_bench, run_retrieval_bench, start_node, validate_case, write_suite,
)
from navmem.instruction import parse
from navmem.planner import concatenate_legs, path_between, semantic_penalty, travel_distance


@pytest.fixture(scope="module")
def suite():
    return generate_benchmark(BenchParams(n_cases=5), seed=7)


@pytest.fixture(scope="module")
def memories():
    return MemoryCache()


def by_name(records):
    return {r.config: r for r in records}


# ------------------------------------------------------------- generation

def test_generation_is_deterministic():
    p = BenchParams(n_cases=3)
    a = [c.to_dict() for c in generate_benchmark(p, 11)]
    b = [c.to_dict() for c in generate_benchmark(p, 11)]
    assert json.dumps(a) == json.dumps(b)


def test_cases_are_valid_and_ground_truth_is_labelled(suite):
    for case in suite:
        validate_case(case)
        graph = parse(case.instruction)
        assert sorted(case.ground_truth) == [t.id for t in graph.tasks]
        labels = {o.id: o.label for o in case.scene.objects}
        for t in graph.tasks:
            assert t.target_text.startswith(labels[case.ground_truth[t.id]])


def test_mean_node_count_is_near_target(memories):
    cases = generate_benchmark(BenchParams(n_cases=8), seed=3)
    sizes = [len(memories(c).map) for c in cases]
    assert abs(sum(sizes) / len(sizes) - 80) <= 10


def test_suite_round_trip(tmp_path, suite):
    write_suite(suite, tmp_path / "suite.jsonl")
    back = read_suite(tmp_path / "suite.jsonl")
    assert [c.to_dict() for c in back] == [c.to_dict() for c in suite]


def test_bad_params():
    for kw in (dict(n_cases=0), dict(min_tasks=3, max_tasks=2), dict(decoys_per_task=-1),
               dict(decoy_clearance=1.0), dict(distractors=40)):
        with pytest.raises(BenchmarkError):
            BenchParams(**kw)


def test_malformed_case_is_rejected(suite):
    d = suite[0].to_dict()
    d["ground_truth"] = {"1": 9999}
    with pytest.raises(BenchmarkError):
        BenchmarkCase.from_dict(d)


# ---------------------------------------------------------------- retrieval

def test_without_decoys_flat_equals_anchor():
    cases = generate_benchmark(BenchParams(n_cases=3, decoys_per_task=0), seed=5)
    recs = by_name(run_retrieval_bench(cases, ["flat", "anchor"], repeats=1))
    assert recs["flat"].top1_accuracy == recs["anchor"].top1_accuracy == 1.0


def test_full_beats_flat_and_oracle_is_perfect(suite, memories):
    recs = by_name(run_retrieval_bench(suite, repeats=1, memories=memories))
    assert recs["oracle"].top1_accuracy == 1.0
    assert recs["flat"].top1_accuracy < recs["full"].top1_accuracy
    assert set(recs) == {"flat", "forest", "anchor", "full", "oracle"}


def test_latency_is_a_median_of_repeats(suite, memories, monkeypatch):
    import navmem.bench as bench

    calls = []
    real = bench._timed_median

    def spy(fn, repeats):
        calls.append(repeats)
        return real(fn, repeats)

    monkeypatch.setattr(bench, "_timed_median", spy)
    run_retrieval_bench(suite[:1], ["flat"], repeats=5, memories=memories)
    assert calls and set(calls) == {5}


def test_unknown_retriever(suite):
    with pytest.raises(BenchmarkError):
        run_retrieval_bench(suite, ["magic"], repeats=1)


# --------------------------------------------------------------- navigation

def brute_force_travel(case, memory, lam):
    graph = parse(case.instruction)
    seq = [case.ground_truth[t] for t in graph.semantic_sequence]
    prec = [(case.ground_truth[a], case.ground_truth[b]) for a, b in graph.temporal_edges]
    s = start_node(memory)
    best = None
    for perm in itertools.permutations(seq):
        pos = {t: k for k, t in enumerate(perm)}
        if any(pos[a] > pos[b] for a, b in prec):
            continue
        stops = [s, *perm]
        path = concatenate_legs([path_between(memory.map, a, b) for a, b in zip(stops, stops[1:])])
        d = travel_distance(path, memory.map)
        obj = d + lam * semantic_penalty(perm, seq)
        if best is None or obj < best[0] - 1e-9:
            best = (obj, d)
    return best[1]


def test_oracle_navigation_matches_brute_force(suite, memories):
    (rec,) = run_navigation_bench(suite, retriever="oracle", memories=memories)
    assert rec.success_rate == 1.0
    want = [brute_force_travel(c, memories(c), 1.0) for c in suite]
    assert rec.travel_distance_m == pytest.approx(sum(want) / len(want), abs=1e-9)
    assert harness_neutral(suite, memories)


def test_fault_injection_breaks_success(suite, memories):
    case = suite[0]
    wrong = next(n.id for n in memories(case).map.nodes
                 if n.id not in case.ground_truth.values())
    (rec,) = run_navigation_bench(suite, retriever="oracle", memories=memories,
                                  overrides={0: {1: wrong}})
    assert rec.success_rate == pytest.approx((len(suite) - 1) / len(suite))
    assert rec.top1_accuracy < 1.0


def test_lambda_sweep_trades_penalty_for_distance(suite, memories):
    lams = (0.0, 1.0, 5.0, 50.0)
    recs = run_navigation_bench(suite, [PlannerConfig(f"lam{l}", l) for l in lams],
                                retriever="oracle", memories=memories)
    pens = [r.semantic_penalty for r in recs]
    dists = [r.travel_distance_m for r in recs]
    assert all(a >= b - 1e-12 for a, b in zip(pens, pens[1:]))
    assert all(a <= b + 1e-9 for a, b in zip(dists, dists[1:]))
    assert [r.config for r in recs] == [f"oracle@lam{l}" for l in lams]


def test_ablation_variants(suite, memories):
    recs = by_name(run_ablations(suite, memories=memories))
    assert set(recs) == set(ABLATIONS)
    assert recs["full"].success_rate >= max(recs[v].success_rate for v in ABLATIONS)
    for r in recs.values():
        assert r.n_cases == len(suite)
        assert 0 <= r.success_rate <= 1


def test_without_forest_uses_a_full_scan(suite, memories):
    recs = by_name(run_retrieval_bench(suite, ["wo_forest", "flat"], repeats=1,
                                       memories=memories))
    assert recs["wo_forest"].top1_accuracy == recs["flat"].top1_accuracy
    assert recs["wo_forest"].nodes_visited == recs["flat"].nodes_visited


# ------------------------------------------------------------- clustered set

def test_clustered_stream_shape():
    recs = clustered_stream(n_nodes=200, n_clusters=4, seed=1)
    assert len(recs) == 200
    tokens = [r.obs_token for r in recs]
    assert len(set(tokens)) == 200
    xs = sorted({round(r.x, -2) for r in recs})
    assert len(xs) >= 2


# ------------------------------------------------------------------- export

def _records():
    return [MetricsRecord("flat", n_cases=2, n_queries=5, retrieval_time_ms=0.25,
                          top1_accuracy=0.4, nodes_visited=80.0),
            MetricsRecord("full", n_cases=2, n_queries=5, total_task_time_s=0.01,
                          retrieval_time_ms=1 / 3, top1_accuracy=1.0, success_rate=1.0,
                          travel_distance_m=12.5, nodes_visited=30.2, semantic_penalty=0.5)]


@pytest.mark.parametrize("name", ["r.csv", "r.json"])
def test_export_round_trip(tmp_path, name):
    path = export_results(_records(), tmp_path / name)
    assert read_results(path) == _records()


def test_csv_header_is_the_column_list(tmp_path):
    path = export_results(_records(), tmp_path / "r.csv")
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)


def test_json_export_matches_schema(tmp_path):
    doc = json.loads(export_results(_records(), tmp_path / "r.json").read_text())
    jsonschema.validate(doc, results_schema())
    doc["records"][0].pop("config")
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, results_schema())


def test_export_errors(tmp_path):
    with pytest.raises(BenchmarkError):
        export_results([], tmp_path / "r.csv")
    with pytest.raises(BenchmarkError):
        export_results(_records(), tmp_path / "r.out", fmt="xml")
    with pytest.raises(OSError):
        export_results(_records(), tmp_path / "missing" / "r.csv")


def test_metrics_validation():
    with pytest.raises(BenchmarkError):
        MetricsRecord("x", top1_accuracy=1.5)
    with pytest.raises(BenchmarkError):
        MetricsRecord("x", retrieval_time_ms=-1.0)
    assert not math.isnan(MetricsRecord("x", top1_accuracy=0.0).top1_accuracy)
