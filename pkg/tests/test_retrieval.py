import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navmem.memory import MemoryParams
from navmem.retrieval import (
    PRESETS, Mode, Query, RankedCandidate, anchor_retrieve, combo_score, flat_search,
    forest_search, gaussian_factor, neighbor_boost, neighborhood, retrieve, semantic_scores,
)

from conftest import memory_of, random_memory


def mapped_cos(memory, text, node_id):
    v = memory.embed(text)
    e = memory.map.node(node_id).embedding
    return (1 + float(np.clip(v @ e, -1, 1))) / 2


# ------------------------------------------------------------------- flat

def test_flat_search_retrieves_each_description(rng):
    mem = random_memory(rng, 40)
    for node in mem.map.nodes[:15]:
        got = flat_search(Query(node.description, K=40), mem)
        oracle = {n.id: mapped_cos(mem, node.description, n.id) for n in mem.map.nodes}
        assert sorted(c.node_id for c in got) == sorted(oracle)
        for c in got:
            assert c.s_sem == pytest.approx(oracle[c.node_id], abs=1e-12)
        scores = [c.final_score for c in got]
        assert scores == sorted(scores, reverse=True)
        assert got[0].s_sem == pytest.approx(1.0, abs=1e-9)


def test_flat_search_truncates_to_k(rng):
    mem = random_memory(rng, 20)
    got = flat_search(Query("sofa", K=3), mem)
    assert len(got) == 3 and got.visited == 20


def test_semantic_scores_are_in_unit_interval(rng):
    mem = random_memory(rng, 30)
    s = semantic_scores(mem, mem.embed("lamp"))
    assert np.all((s >= 0) & (s <= 1))


# ----------------------------------------------------------------- forest

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 40))
def test_wide_beam_forest_equals_flat(seed, n):
    mem = random_memory(np.random.default_rng(seed), n)
    wide = max(mem.forest.max_branching(), len(mem.forest.roots))
    q = Query("chair (item 2)", K=n, beam_width=wide)
    f, g = flat_search(q, mem), forest_search(q, mem)
    assert [(c.node_id, c.s_sem) for c in f] == [(c.node_id, c.s_sem) for c in g]


def test_forest_finds_target_in_three_clusters():
    items = []
    for cx, word in ((0.0, "sofa"), (30.0, "sink"), (60.0, "desk")):
        for k in range(4):
            items.append((cx + 0.8 * (k % 2), 0.8 * (k // 2), [f"{word} (unit {k})"]))
    mem = memory_of(items, dedup_radius=0.0)
    ranking = forest_search(Query("sink (unit 2)", K=1, beam_width=1), mem)
    assert ranking.top1() == 6
    assert ranking.visited < 2 * len(mem.forest.nodes)


def test_narrow_beam_visits_fewer_nodes(rng):
    mem = random_memory(rng, 80, extent=40.0)
    narrow = forest_search(Query("desk", beam_width=1), mem)
    wide = forest_search(Query("desk", beam_width=50), mem)
    assert narrow.visited < wide.visited


# --------------------------------------------------------- scoring pieces

def test_combo_and_gaussian_values():
    assert combo_score(0.0) == 1.0
    assert combo_score(1.0) == 0.5
    assert gaussian_factor(0.0, 2.0) == 1.0
    assert gaussian_factor(2.0, 2.0) == pytest.approx(math.exp(-0.5))


def _line(labels, spacing=1.5):
    return memory_of([(spacing * i, 0.0, ents) for i, ents in enumerate(labels)], dedup_radius=0.0)


def test_neighborhood_on_a_path_graph():
    mem = _line([[]] * 6)
    assert neighborhood(mem, 0, 1) == {1}
    assert neighborhood(mem, 2, 1) == {1, 3}
    assert neighborhood(mem, 2, 2) == {0, 1, 3, 4}


def test_neighborhood_matches_hop_matrix(rng):
    mem = random_memory(rng, 40, extent=10.0)
    n = len(mem.map)
    ids = [node.id for node in mem.map.nodes]
    A = np.zeros((n, n), dtype=int)
    for e in mem.map.edges:
        a, b = mem.map.index_of(e.i), mem.map.index_of(e.j)
        A[a, b] = A[b, a] = 1
    for hops in (1, 2, 3):
        reach = np.eye(n, dtype=int)
        for _ in range(hops):
            reach = ((reach + reach @ A) > 0).astype(int)
        for k in range(0, n, 7):
            want = {ids[j] for j in np.flatnonzero(reach[k]) if j != k}
            assert neighborhood(mem, ids[k], hops) == want


def test_neighborhood_rejects_bad_hops():
    with pytest.raises(ValueError):
        neighborhood(_line([[]] * 2), 0, 0)


# ----------------------------------------------------------------- anchor

@pytest.fixture
def decoy_memory():
    # node 0: sofa next to a chair; node 4: identical sofa far from any chair
    items = [(0, 0, ["sofa (grey sofa)"]), (1.5, 0, ["chair (wooden chair)"]),
             (20, 0, ["lamp (floor lamp)"]), (30, 0, []), (40, 0, ["sofa (grey sofa)"])]
    return memory_of(items, dedup_radius=0.0)


def test_anchor_prunes_the_decoy(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)")
    ranking = anchor_retrieve(q, decoy_memory)
    assert ranking.top1() == 0
    assert 4 in ranking.pruned
    c = ranking[0]
    assert c.support == {"anchor_node_id": 1, "distance": 1.5}
    assert c.s_combo == pytest.approx(1 / 2.5)
    assert c.final_score == pytest.approx(c.s_sem / 2.5)
    assert c.s_spatial == pytest.approx(c.s_sem * math.exp(-1.5 ** 2 / 8))


def test_anchor_survivors_match_exhaustive_scan(rng):
    mem = random_memory(rng, 60, extent=12.0)
    q = Query("sofa (item 1)", anchor_text="lamp (item 2)", K=60, beam_width=60)
    ranking = anchor_retrieve(q, mem, stage1="flat")
    want = set()
    for node in mem.map.nodes:
        if any(mapped_cos(mem, q.anchor_text, m) >= q.anchor_threshold
               for m in neighborhood(mem, node.id, 1)):
            want.add(node.id)
    assert {c.node_id for c in ranking} == want
    assert set(ranking.pruned) == {n.id for n in mem.map.nodes} - want


def test_missing_anchor_gives_diagnostic(decoy_memory):
    ranking = anchor_retrieve(Query("sofa", anchor_text="refrigerator"), decoy_memory)
    assert list(ranking) == []
    assert ranking.diagnostic.startswith("no-anchor")


def test_gaussian_kernel_option(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)", spatial_kernel="gaussian")
    c = anchor_retrieve(q, decoy_memory)[0]
    assert c.final_score == pytest.approx(c.s_spatial)


def test_graph_anchor_distance(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)", anchor_distance="graph")
    assert anchor_retrieve(q, decoy_memory)[0].support["distance"] == pytest.approx(1.5)


# ------------------------------------------------------------------ boost

def test_boost_by_fully_matching_context():
    mem = _line([["tv (flat tv)"], ["remote (tv remote)"], [], [], ["tv (flat tv)"]])
    q = Query("tv (flat tv)", context_texts=("remote (tv remote)",), eta=0.24)
    ranking = neighbor_boost(flat_search(q, mem), q, mem)
    assert ranking.top1() == 0
    boosted = {c.node_id: c for c in ranking}
    assert boosted[0].s_boost == pytest.approx(boosted[0].s_sem * 1.24)
    assert boosted[4].s_boost == pytest.approx(boosted[4].s_sem)


def test_eta_zero_is_identity(rng):
    mem = random_memory(rng, 30, extent=8.0)
    q = Query("desk", context_texts=("lamp (item 1)",), eta=0.0, K=30)
    base = flat_search(q, mem)
    out = neighbor_boost(base, q, mem)
    assert [(c.node_id, c.final_score) for c in out] == [(c.node_id, c.final_score) for c in base]


def test_boost_keeps_anchor_multiplier(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)")
    anchored = anchor_retrieve(q, decoy_memory)
    boosted = neighbor_boost(anchored, q, decoy_memory)
    assert boosted[0].final_score == pytest.approx(anchored[0].final_score)


def test_boost_without_neighbours():
    c = RankedCandidate(0, 0.8, 0.8)
    mem = _line([["tv"]])
    out = neighbor_boost([c], Query("tv", context_texts=("remote",)), mem)
    assert out[0].s_boost == pytest.approx(0.8)


# ---------------------------------------------------------------- presets

def test_modes_map_to_presets(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)")
    for mode, preset in ((Mode.FLAT, "flat"), (Mode.ANCHOR, "anchor"), (Mode.BOOSTED, "full")):
        a = retrieve(Query(**{**q.__dict__, "mode": mode}), decoy_memory)
        b = retrieve(q, decoy_memory, PRESETS[preset])
        assert [c.node_id for c in a] == [c.node_id for c in b]


def test_full_beats_flat_on_decoy(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)")
    assert retrieve(q, decoy_memory, PRESETS["full"]).top1() == 0
    flat = retrieve(q, decoy_memory, PRESETS["flat"])
    assert {flat[0].node_id, flat[1].node_id} == {0, 4}
    assert flat[0].s_sem == flat[1].s_sem


def test_without_topology_ignores_the_anchor(decoy_memory):
    q = Query("sofa (grey sofa)", anchor_text="chair (wooden chair)", K=5)
    a = retrieve(q, decoy_memory, PRESETS["wo_topology"])
    b = retrieve(q, decoy_memory, PRESETS["forest"])
    assert [c.node_id for c in a] == [c.node_id for c in b]


def test_query_validation():
    for bad in (dict(target_text=" "), dict(target_text="a", K=0), dict(target_text="a", hops=0),
                dict(target_text="a", sigma=0), dict(target_text="a", eta=-1),
                dict(target_text="a", spatial_kernel="box")):
        with pytest.raises(ValueError):
            Query(**bad)


def test_query_from_dict_aliases():
    q = Query.from_dict({"target": "sofa", "anchor": "chair", "context": "lamp"})
    assert (q.target_text, q.anchor_text, q.context_texts) == ("sofa", "chair", ("lamp",))
    with pytest.raises(ValueError):
        Query.from_dict({"target": "sofa", "colour": "red"})
