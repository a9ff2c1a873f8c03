import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navmem.planner import (
    CostMatrix, PlanningError, UnknownTargetError, UnreachableTargetError, concatenate_legs,
    pairwise_costs, path_between, plan_sequence, route, semantic_penalty, shortest_paths,
    straight_line_costs, structured_guide, travel_distance,
)

from conftest import floyd_warshall, memory_of, random_memory


def line_map(n, spacing=1.5):
    return memory_of([(spacing * i, 0.0, [f"item{i}"]) for i in range(n)], dedup_radius=0.0).map


def brute_force(costs: CostMatrix, seq, lam, start=None, precedence=()):
    best = None
    for perm in itertools.permutations(sorted(seq)):
        pos = {t: k for k, t in enumerate(perm)}
        if any(pos[a] > pos[b] for a, b in precedence):
            continue
        travel, prev = 0.0, start
        for t in perm:
            if prev is not None:
                travel += costs.cost(prev, t)
            prev = t
        rank = {t: k for k, t in enumerate(seq)}
        pen = sum(1 for a, b in itertools.combinations(perm, 2) if rank[a] > rank[b])
        obj = travel + lam * pen
        if best is None or obj < best[0] - 1e-9:
            best = (obj, list(perm))
    return best


# ------------------------------------------------------------------ costs

def test_costs_match_floyd_warshall(rng):
    tmap = random_memory(rng, 40, extent=9.0).map
    ids = [n.id for n in tmap.nodes]
    pos = {i: k for k, i in enumerate(ids)}
    fw = floyd_warshall(len(ids), [(pos[e.i], pos[e.j], e.weight) for e in tmap.edges])
    cm = pairwise_costs(tmap, ids)
    both = np.isfinite(fw)
    assert np.array_equal(both, np.isfinite(cm.costs))
    assert np.allclose(cm.costs[both], fw[both], atol=1e-9)
    assert np.array_equal(cm.costs, cm.costs.T)


def test_path_graph_costs():
    tmap = line_map(4)
    cm = pairwise_costs(tmap, [0, 3])
    assert cm.cost(0, 3) == pytest.approx(4.5)
    assert cm.cost(3, 3) == 0.0


def test_disconnected_pair_costs_infinity():
    tmap = memory_of([(0, 0, ["a"]), (10, 0, ["b"])]).map
    assert math.isinf(pairwise_costs(tmap, [0, 1]).cost(0, 1))


def test_unknown_target():
    with pytest.raises(UnknownTargetError):
        pairwise_costs(line_map(2), [0, 9])


def test_path_tie_prefers_smaller_ids():
    # a square 0-1-3 / 0-2-3 with equal sides: both routes cost the same
    tmap = memory_of([(0, 0, []), (1.5, 0, []), (0, 1.5, []), (1.5, 1.5, [])],
                     dedup_radius=0.0).map
    assert path_between(tmap, 0, 3) == [0, 1, 3]
    assert path_between(tmap, 3, 0) == [3, 1, 0]


def test_path_between_is_shortest(rng):
    tmap = random_memory(rng, 50, extent=10.0).map
    dist, _ = shortest_paths(tmap, 0)
    for target in list(dist)[:20]:
        p = path_between(tmap, 0, target)
        assert p[0] == 0 and p[-1] == target
        assert travel_distance(p, tmap) == pytest.approx(dist[target], abs=1e-9)


def test_unreachable_path():
    tmap = memory_of([(0, 0, ["a"]), (10, 0, ["b"])]).map
    with pytest.raises(UnreachableTargetError) as info:
        path_between(tmap, 0, 1)
    assert info.value.pair == (0, 1)


# ---------------------------------------------------------------- penalty

@pytest.mark.parametrize("order, seq, want", [
    ([1, 2, 3], [1, 2, 3], 0),
    ([3, 2, 1], [1, 2, 3], 3),
    ([2, 1, 3], [1, 2, 3], 1),
    ([1], [1], 0),
])
def test_penalty_examples(order, seq, want):
    assert semantic_penalty(order, seq) == want


@given(st.permutations(list(range(7))))
def test_penalty_counts_inversions(perm):
    want = sum(1 for i, j in itertools.combinations(range(7), 2) if perm[i] > perm[j])
    assert semantic_penalty(perm, range(7)) == want


def test_penalty_needs_same_ids():
    with pytest.raises(PlanningError):
        semantic_penalty([1, 2], [1, 3])


# ------------------------------------------------------------------- plan

def test_high_lambda_follows_semantic_order():
    tmap = line_map(5)
    plan = route(tmap, [4, 0, 2], lam=100.0)
    assert plan.order == [4, 0, 2]
    assert plan.semantic_penalty == 0


def test_zero_lambda_minimises_travel():
    tmap = line_map(5)
    plan = route(tmap, [4, 0, 2], lam=0.0, start=0)
    assert plan.order == [0, 2, 4]
    assert plan.travel_cost == pytest.approx(6.0)


def test_single_target_plan():
    plan = route(line_map(3), [1], start=0)
    assert plan.order == [1] and plan.legs == [[0, 1]]


def test_plan_records_legs_and_consistency():
    tmap = line_map(6)
    plan = route(tmap, [5, 1, 3], lam=0.5, start=0)
    assert plan.legs[0][0] == 0
    assert [leg[-1] for leg in plan.legs] == plan.order
    assert travel_distance(concatenate_legs(plan.legs), tmap) == pytest.approx(plan.travel_cost)
    assert plan.objective == pytest.approx(plan.travel_cost + 0.5 * plan.semantic_penalty)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7), st.sampled_from([0.0, 0.5, 2.0, 10.0]),
       st.booleans())
def test_plan_matches_brute_force(seed, n, lam, with_start):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 10, (n + 1, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    ids = list(range(100, 101 + n))
    cm = CostMatrix(ids, d)
    seq = [int(x) for x in rng.permutation(ids[1:])]
    start = ids[0] if with_start else None
    plan = plan_sequence(cm, seq, lam, start)
    want_obj, want_order = brute_force(cm, seq, lam, start)
    assert plan.objective == pytest.approx(want_obj, abs=1e-9)
    assert plan.order == want_order


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 1.0, 5.0]))
def test_branch_and_bound_equals_enumeration(seed, lam):
    rng = np.random.default_rng(seed)
    n = 8
    pts = rng.uniform(0, 10, (n, 2))
    cm = CostMatrix(list(range(n)), np.linalg.norm(pts[:, None] - pts[None], axis=2))
    seq = [int(x) for x in rng.permutation(n)]
    prec = [(seq[0], seq[3])]
    exact = plan_sequence(cm, seq, lam, precedence=prec)
    bnb = plan_sequence(cm, seq, lam, precedence=prec, exact_limit=0)
    assert bnb.objective == pytest.approx(exact.objective, abs=1e-9)


def test_larger_instance_uses_branch_and_bound():
    rng = np.random.default_rng(3)
    n = 11
    pts = rng.uniform(0, 20, (n, 2))
    cm = CostMatrix(list(range(n)), np.linalg.norm(pts[:, None] - pts[None], axis=2))
    plan = plan_sequence(cm, list(range(n)), lam=1.0)
    assert sorted(plan.order) == list(range(n))
    assert plan.objective <= cm.costs[np.arange(n - 1), np.arange(1, n)].sum() + 1e-9


def test_lambda_sweep_is_monotone():
    rng = np.random.default_rng(8)
    pts = rng.uniform(0, 10, (7, 2))
    cm = CostMatrix(list(range(7)), np.linalg.norm(pts[:, None] - pts[None], axis=2))
    seq = [int(x) for x in rng.permutation(7)]
    plans = [plan_sequence(cm, seq, lam) for lam in (0.0, 0.5, 1, 2, 5, 20)]
    pens = [p.semantic_penalty for p in plans]
    travels = [p.travel_cost for p in plans]
    assert pens == sorted(pens, reverse=True)
    assert all(a <= b + 1e-9 for a, b in zip(travels, travels[1:]))


def test_precedence_is_respected():
    tmap = line_map(5)
    plan = route(tmap, [0, 2, 4], lam=0.0, start=4, precedence=[(0, 4)])
    assert plan.order.index(0) < plan.order.index(4)


def test_cyclic_precedence_is_an_error():
    cm = CostMatrix([0, 1], np.zeros((2, 2)))
    with pytest.raises(PlanningError):
        plan_sequence(cm, [0, 1], precedence=[(0, 1), (1, 0)])


def test_plan_over_disconnected_targets():
    tmap = memory_of([(0, 0, ["a"]), (10, 0, ["b"])]).map
    with pytest.raises(UnreachableTargetError) as info:
        route(tmap, [0, 1])
    assert set(info.value.pair) == {0, 1}


def test_straight_line_route_ignores_edges():
    tmap = memory_of([(0, 0, ["a"]), (10, 0, ["b"])]).map
    plan = route(tmap, [0, 1], use_graph=False)
    assert plan.travel_cost == pytest.approx(10.0)
    assert straight_line_costs(tmap, [0, 1]).cost(1, 0) == pytest.approx(10.0)


def test_plan_validation():
    cm = CostMatrix([0, 1], np.zeros((2, 2)))
    for kw in (dict(semantic_sequence=[]), dict(semantic_sequence=[0, 0]),
               dict(semantic_sequence=[0, 1], lam=-1)):
        with pytest.raises(PlanningError):
            plan_sequence(cm, **kw)


# ---------------------------------------------------------------- travel

def test_travel_distance_examples():
    tmap = line_map(4)
    assert travel_distance([0, 1, 2, 3], tmap) == pytest.approx(4.5)
    assert travel_distance([2], tmap) == 0.0
    assert travel_distance([0, 3], tmap) == pytest.approx(4.5)
    with pytest.raises(PlanningError):
        travel_distance([0, 3], tmap, fallback=False)


def test_guide_mentions_every_target():
    tmap = line_map(5)
    for start in (None, 0):
        plan = route(tmap, [4, 2], start=start)
        text = structured_guide(plan, tmap)
        assert "[target 4]" in text and "[target 2]" in text
