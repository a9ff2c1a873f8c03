"""Queries over a frozen :class:`~navmem.memory.Memory`.

All semantic scores are cosines mapped onto [0, 1] with ``(1 + cos) / 2`` so
they combine cleanly with the distance kernels.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .memory import Memory, TopologicalMap, TopoNode


class Mode(str, Enum):
    FLAT = "flat"
    FOREST = "forest"
    ANCHOR = "anchor"
    BOOSTED = "boosted"


@dataclass(frozen=True)
class Query:
    target_text: str
    anchor_text: str | None = None
    context_texts: tuple[str, ...] = ()
    K: int = 10
    hops: int = 1
    sigma: float = 2.0
    eta: float = 0.3
    beam_width: int = 4
    mode: Mode = Mode.BOOSTED
    anchor_threshold: float = 0.75
    context_threshold: float = 0.75
    # "combo" ranks anchored candidates by 1/(1+d); "gaussian" by the Gaussian kernel
    spatial_kernel: str = "combo"
    # "euclidean" or "graph" (shortest-path length) for the anchor distance
    anchor_distance: str = "euclidean"

    def __post_init__(self):
        if not self.target_text or not self.target_text.strip():
            raise ValueError("query target_text must be non-empty")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.spatial_kernel not in ("combo", "gaussian"):
            raise ValueError(f"unknown spatial_kernel {self.spatial_kernel!r}")
        if self.anchor_distance not in ("euclidean", "graph"):
            raise ValueError(f"unknown anchor_distance {self.anchor_distance!r}")
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "context_texts", tuple(self.context_texts))

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        known = {
            "target": "target_text", "anchor": "anchor_text", "context": "context_texts",
            "target_text": "target_text", "anchor_text": "anchor_text",
            "context_texts": "context_texts",
        }
        kw = {}
        for k, v in d.items():
            name = known.get(k, k)
            if name not in cls.__dataclass_fields__:
                raise ValueError(f"unknown query field {k!r}")
            kw[name] = v
        if isinstance(kw.get("context_texts"), str):
            kw["context_texts"] = (kw["context_texts"],)
        return cls(**kw)


@dataclass
class RankedCandidate:
    node_id: int
    s_sem: float
    final_score: float
    s_spatial: float | None = None
    s_combo: float | None = None
    s_boost: float | None = None
    support: dict | None = None
    # multiplier applied by the anchor stage (s_combo or the Gaussian factor)
    spatial_factor: float | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("spatial_factor")
        return d


class Ranking(list):
    """A ranked candidate list that also carries search bookkeeping."""

    def __init__(self, items: Iterable[RankedCandidate] = (), visited: int = 0,
                 diagnostic: str | None = None, pruned: Sequence[int] = ()):
        super().__init__(items)
        self.visited = visited
        self.diagnostic = diagnostic
        self.pruned = list(pruned)

    def top1(self) -> int | None:
        return self[0].node_id if self else None

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self],
            "visited": self.visited,
            "diagnostic": self.diagnostic,
            "pruned": self.pruned,
        }


def _rank_key(c: RankedCandidate):
    return (-c.final_score, c.node_id)


def semantic_scores(memory: Memory, qvec: np.ndarray, idx: np.ndarray | None = None) -> np.ndarray:
    """Mapped cosine of ``qvec`` against node embeddings (all, or rows ``idx``)."""
    emb = memory.embedding_matrix if idx is None else memory.embedding_matrix[idx]
    # elementwise product + row sum keeps each score independent of which rows are present
    cos = np.clip((emb * qvec).sum(axis=1), -1.0, 1.0)
    return (1.0 + cos) / 2.0


def flat_search(q: Query, memory: Memory) -> Ranking:
    """Exhaustive semantic scan over every node; also the baseline retriever."""
    qvec = memory.embed(q.target_text)
    scores = semantic_scores(memory, qvec)
    ids = [n.id for n in memory.map.nodes]
    cands = [RankedCandidate(i, float(s), float(s)) for i, s in zip(ids, scores)]
    cands.sort(key=_rank_key)
    return Ranking(cands[: q.K], visited=len(ids))


def _centroid_scores(memory: Memory, qvec: np.ndarray, fids: Sequence[int]) -> np.ndarray:
    cent = memory.centroid_matrix[list(fids)]
    qf = np.zeros(cent.shape[1])
    qf[: len(qvec)] = qvec[: cent.shape[1]]
    cos = np.clip((cent * qf).sum(axis=1), -1.0, 1.0)
    return (1.0 + cos) / 2.0


def forest_search(q: Query, memory: Memory) -> Ranking:
    """Beam descent through the semantic forest.

    Roots are treated as the children of a virtual top node. Every expanded
    node keeps its ``beam_width`` best children by centroid similarity, so a
    beam at least as wide as the largest fan-out visits everything and
    reproduces :func:`flat_search` exactly.
    """
    forest = memory.forest
    qvec = memory.embed(q.target_text)
    visited = 0

    def best_of(fids):
        nonlocal visited
        fids = list(fids)
        visited += len(fids)
        sc = _centroid_scores(memory, qvec, fids)
        order = sorted(range(len(fids)), key=lambda k: (-sc[k], fids[k]))
        return [fids[k] for k in order[: q.beam_width]]

    frontier = best_of(forest.roots)
    leaves: list[int] = []
    while frontier:
        nxt = []
        for fid in frontier:
            node = forest.node(fid)
            if node.is_leaf:
                leaves.append(node.leaf_ref)
            else:
                nxt.extend(best_of(node.children))
        frontier = nxt
    idx = np.array([memory.map.index_of(i) for i in leaves], dtype=int)
    scores = semantic_scores(memory, qvec, idx) if len(idx) else np.array([])
    cands = [RankedCandidate(i, float(s), float(s)) for i, s in zip(leaves, scores)]
    cands.sort(key=_rank_key)
    return Ranking(cands[: q.K], visited=visited)


def neighborhood(memory: Memory | TopologicalMap, node_id: int, hops: int) -> set[int]:
    """Nodes within ``hops`` edges of ``node_id``, excluding the seed."""
    tmap = memory.map if isinstance(memory, Memory) else memory
    if hops < 1:
        raise ValueError("hops must be >= 1")
    tmap.neighbors(node_id)  # raises for unknown ids
    seen = {node_id: 0}
    queue = deque([node_id])
    while queue:
        u = queue.popleft()
        if seen[u] == hops:
            continue
        for v, _ in tmap.neighbors(u):
            if v not in seen:
                seen[v] = seen[u] + 1
                queue.append(v)
    seen.pop(node_id)
    return set(seen)


def gaussian_factor(distance: float, sigma: float) -> float:
    return math.exp(-(distance * distance) / (2.0 * sigma * sigma))


def combo_score(distance: float) -> float:
    """Distance-weighted combination score ``1 / (1 + d)``."""
    return 1.0 / (1.0 + distance)


def spatial_score(candidate: TopoNode, anchor: TopoNode, q: Query, memory: Memory) -> float:
    """Semantic match of the candidate to the target, damped by a Gaussian on anchor distance."""
    qvec = memory.embed(q.target_text)
    cos = float(np.clip((candidate.embedding * qvec).sum(), -1.0, 1.0))
    d = math.dist(candidate.position, anchor.position)
    return (1.0 + cos) / 2.0 * gaussian_factor(d, q.sigma)


def _graph_distance(tmap: TopologicalMap, a: int, b: int) -> float:
    from .planner import shortest_paths

    return shortest_paths(tmap, a)[0].get(b, math.inf)


def anchor_retrieve(q: Query, memory: Memory, stage1: str = "forest") -> Ranking:
    """Two-stage retrieval: recall target candidates, then validate each by an anchor nearby.

    A candidate survives only if some node within ``q.hops`` of it matches
    the anchor text at or above ``q.anchor_threshold``; survivors are scored
    ``s_sem * S_combo`` (or by the Gaussian kernel, per ``q.spatial_kernel``).
    """
    if not q.anchor_text:
        raise ValueError("anchor_retrieve needs an anchor_text")
    avec = memory.embed(q.anchor_text)
    anchor_scores = semantic_scores(memory, avec)
    if not np.any(anchor_scores >= q.anchor_threshold):
        return Ranking([], diagnostic=(
            f"no-anchor: no node matches anchor {q.anchor_text!r} "
            f"at threshold {q.anchor_threshold}"))

    first = flat_search(q, memory) if stage1 == "flat" else forest_search(q, memory)
    visited = first.visited
    tmap = memory.map
    survivors, pruned = [], []
    for c in first:
        nbrs = sorted(neighborhood(tmap, c.node_id, q.hops))
        visited += len(nbrs)
        matches = [(float(anchor_scores[tmap.index_of(n)]), n) for n in nbrs]
        matches = [m for m in matches if m[0] >= q.anchor_threshold]
        if not matches:
            pruned.append(c.node_id)
            continue
        _, anchor_id = min(matches, key=lambda m: (-m[0], m[1]))
        cand_node, anchor_node = tmap.node(c.node_id), tmap.node(anchor_id)
        if q.anchor_distance == "graph":
            d = _graph_distance(tmap, c.node_id, anchor_id)
        else:
            d = math.dist(cand_node.position, anchor_node.position)
        combo = combo_score(d)
        gauss = gaussian_factor(math.dist(cand_node.position, anchor_node.position), q.sigma)
        factor = combo if q.spatial_kernel == "combo" else gauss
        survivors.append(replace(
            c,
            s_spatial=c.s_sem * gauss,
            s_combo=combo,
            final_score=c.s_sem * factor,
            support={"anchor_node_id": anchor_id, "distance": d},
            spatial_factor=factor,
        ))
    survivors.sort(key=_rank_key)
    diag = None if survivors else "all candidates pruned: no anchor within reach"
    return Ranking(survivors, visited=visited, diagnostic=diag, pruned=pruned)


def neighbor_boost(candidates: Sequence[RankedCandidate], q: Query, memory: Memory) -> Ranking:
    """Raise candidates whose topological neighbours match the query's context texts.

    ``s_boost = s_sem * (1 + eta * mean_context_match)``; a context with no
    neighbour above ``q.context_threshold`` contributes zero. Candidates that
    came through the anchor stage keep that stage's multiplier.
    """
    ctx_scores = [semantic_scores(memory, memory.embed(t)) for t in q.context_texts]
    tmap = memory.map
    out = []
    visited = getattr(candidates, "visited", 0)
    for c in candidates:
        mean = 0.0
        if ctx_scores:
            idx = [tmap.index_of(n) for n in sorted(neighborhood(tmap, c.node_id, q.hops))]
            visited += len(idx)
            total = 0.0
            for sc in ctx_scores:
                best = max((float(sc[k]) for k in idx), default=0.0)
                total += best if best >= q.context_threshold else 0.0
            mean = total / len(ctx_scores)
        s_boost = c.s_sem * (1.0 + q.eta * mean)
        final = s_boost if c.spatial_factor is None else s_boost * c.spatial_factor
        out.append(replace(c, s_boost=s_boost, final_score=final))
    out.sort(key=_rank_key)
    return Ranking(out, visited=visited,
                   diagnostic=getattr(candidates, "diagnostic", None),
                   pruned=getattr(candidates, "pruned", ()))


@dataclass(frozen=True)
class RetrieverConfig:
    """Switches for the retrieval pipeline; the ablation variants are presets."""

    name: str = "full"
    stage1: str = "forest"       # "flat" or "forest"
    spatial: bool = True         # anchor validation stage
    boost: bool = True           # neighbour boosting
    topology: bool = True        # False: no edges, so no neighbourhoods at all
    eta: float | None = None     # override the query's boost coefficient


PRESETS: dict[str, RetrieverConfig] = {
    "flat": RetrieverConfig("flat", stage1="flat", spatial=False, boost=False),
    "forest": RetrieverConfig("forest", stage1="forest", spatial=False, boost=False),
    "anchor": RetrieverConfig("anchor", stage1="forest", spatial=True, boost=False),
    "full": RetrieverConfig("full"),
    "wo_forest": RetrieverConfig("wo_forest", stage1="flat", spatial=False, boost=False),
    "wo_topology": RetrieverConfig("wo_topology", topology=False),
    "wo_spatial": RetrieverConfig("wo_spatial", spatial=False),
    "wo_neighbor": RetrieverConfig("wo_neighbor", eta=0.0),
}

_MODE_CONFIG = {
    Mode.FLAT: PRESETS["flat"],
    Mode.FOREST: PRESETS["forest"],
    Mode.ANCHOR: PRESETS["anchor"],
    Mode.BOOSTED: PRESETS["full"],
}


def retrieve(q: Query, memory: Memory, config: RetrieverConfig | None = None) -> Ranking:
    """Run the pipeline selected by ``config`` (default: the query's mode)."""
    cfg = config or _MODE_CONFIG[q.mode]
    if cfg.eta is not None:
        q = replace(q, eta=cfg.eta)
    if cfg.spatial and cfg.topology and q.anchor_text:
        ranking = anchor_retrieve(q, memory, stage1=cfg.stage1)
    elif cfg.stage1 == "flat":
        ranking = flat_search(q, memory)
    else:
        ranking = forest_search(q, memory)
    if cfg.boost and cfg.topology:
        ranking = neighbor_boost(ranking, q, memory)
    return ranking
