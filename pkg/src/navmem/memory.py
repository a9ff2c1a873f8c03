"""Dual-basis memory: a topological map of pose nodes plus a semantic forest.

The topological map connects every pair of key positions closer than
``delta_spatial`` with an undirected edge weighted by their Euclidean
distance. The semantic forest is built bottom-up by average-linkage
agglomerative clustering on a hybrid spatial/semantic similarity; merging
stops once the best remaining pair falls below ``tau``, so the result can
have several roots.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .embedding import HashEmbedder, embedder_from_spec, unit_similarity
from .env_sim import ObservationRecord, token_entries

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class MemoryBuildError(ValueError):
    """Base class for memory construction and persistence errors."""


class EmptyMapError(MemoryBuildError):
    pass


class FusionError(MemoryBuildError):
    pass


class SchemaVersionError(MemoryBuildError):
    pass


@dataclass(frozen=True)
class MemoryParams:
    delta_spatial: float = 2.0
    omega: float = 0.5
    alpha: float = 0.5
    tau: float = 0.6
    embedding_dim: int = 256
    dedup_radius: float = 0.5
    # width of the similarity bands used to collapse the binary merge tree
    level_gap: float = 0.1

    def __post_init__(self):
        if not self.delta_spatial > 0:
            raise ValueError("delta_spatial must be positive")
        for name in ("omega", "alpha", "tau"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.embedding_dim < 4:
            raise ValueError("embedding_dim must be >= 4")
        if self.dedup_radius < 0:
            raise ValueError("dedup_radius must be non-negative")
        if self.level_gap < 0:
            raise ValueError("level_gap must be non-negative")


@dataclass(frozen=True)
class TopoNode:
    id: int
    x: float
    y: float
    description: str
    embedding: np.ndarray
    spatial_feature: np.ndarray
    object_ids: tuple[int, ...] = ()
    label: str = "space"
    z: float = 0.0

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    # None marks an edge without a distance attribute
    weight: float | None


@dataclass
class TopologicalMap:
    nodes: list[TopoNode]
    edges: list[Edge]
    _adj: dict[int, list[tuple[int, float]]] = field(default_factory=dict, repr=False)
    _index: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {n.id: k for k, n in enumerate(self.nodes)}
        if len(self._index) != len(self.nodes):
            raise MemoryBuildError("duplicate topological node id")
        adj: dict[int, list[tuple[int, float]]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.i == e.j:
                raise MemoryBuildError(f"self-loop on node {e.i}")
            adj[e.i].append((e.j, e.weight))
            adj[e.j].append((e.i, e.weight))
        for v in adj.values():
            v.sort()
        self._adj = adj

    def __len__(self):
        return len(self.nodes)

    def node(self, node_id: int) -> TopoNode:
        try:
            return self.nodes[self._index[node_id]]
        except KeyError:
            raise KeyError(f"unknown node id {node_id}") from None

    def index_of(self, node_id: int) -> int:
        return self._index[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._index

    def neighbors(self, node_id: int) -> list[tuple[int, float]]:
        if node_id not in self._adj:
            raise KeyError(f"unknown node id {node_id}")
        return self._adj[node_id]

    def edge_weight(self, i: int, j: int) -> float | None:
        for k, w in self._adj.get(i, ()):
            if k == j:
                return w
        return None

    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=float).reshape(-1, 3)

    def embeddings(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, 0))
        return np.stack([n.embedding for n in self.nodes])

    def without_edges(self) -> "TopologicalMap":
        return TopologicalMap(list(self.nodes), [])


Describer = Callable[[Sequence[str]], str]


def default_describer(entries: Sequence[str]) -> str:
    """Spatial fingerprint text: the sorted object entries seen at a pose."""
    return "; ".join(sorted(entries)) if entries else "free space"


def _entry_label(entry: str) -> str:
    return entry.split("(", 1)[0].strip() or "space"


def build_topology(
    stream: Sequence[ObservationRecord],
    params: MemoryParams | None = None,
    describer: Describer | None = None,
    embedder=None,
) -> TopologicalMap:
    """Turn an observation stream into a fingerprinted topological map.

    Poses closer than ``dedup_radius`` to an existing key position fold into
    it (their observed objects are merged). Node ids follow first appearance
    in the stream.
    """
    params = params or MemoryParams()
    if not stream:
        raise EmptyMapError("observation stream is empty")
    describer = describer or default_describer
    embedder = embedder or HashEmbedder(params.embedding_dim)

    r = params.dedup_radius
    keys: list[list] = []  # [x, y, z, entries set, object ids set]
    buckets: dict[tuple[int, int], list[int]] = {}
    cell = max(r, 1e-9)
    for rec in stream:
        cx, cy = int(math.floor(rec.x / cell)), int(math.floor(rec.y / cell))
        hit, hit_d = None, math.inf
        if r > 0:
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for k in buckets.get((cx + dx, cy + dy), ()):
                        d = math.dist((rec.x, rec.y, rec.z), keys[k][:3])
                        if d < r and (d < hit_d or (d == hit_d and k < hit)):
                            hit, hit_d = k, d
        if hit is None:
            keys.append([rec.x, rec.y, rec.z, set(token_entries(rec.obs_token)),
                         set(rec.visible_object_ids)])
            buckets.setdefault((cx, cy), []).append(len(keys) - 1)
        else:
            keys[hit][3].update(token_entries(rec.obs_token))
            keys[hit][4].update(rec.visible_object_ids)

    descriptions = [describer(sorted(k[3])) for k in keys]
    emb = embedder.embed_many(descriptions)
    spa = _spatial_features(np.array([k[:3] for k in keys], dtype=float))
    nodes = []
    for i, k in enumerate(keys):
        entries = sorted(k[3])
        nodes.append(TopoNode(
            id=i, x=float(k[0]), y=float(k[1]), z=float(k[2]),
            description=descriptions[i],
            embedding=_frozen(emb[i]),
            spatial_feature=_frozen(spa[i]),
            object_ids=tuple(sorted(k[4])),
            label=_entry_label(entries[0]) if entries else "space",
        ))
    return TopologicalMap(nodes, connect(nodes, params.delta_spatial))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _spatial_features(pos: np.ndarray) -> np.ndarray:
    # min-max scaled position plus a constant component so the vector is never zero
    lo = pos.min(axis=0)
    scale = max(float((pos.max(axis=0) - lo).max()), 1.0)
    return np.hstack([(pos - lo) / scale, np.ones((len(pos), 1))])


def connect(nodes: Sequence[TopoNode], delta: float) -> list[Edge]:
    """All pairs strictly closer than ``delta``; weight is their distance."""
    buckets: dict[tuple[int, int], list[int]] = {}
    for k, n in enumerate(nodes):
        buckets.setdefault((math.floor(n.x / delta), math.floor(n.y / delta)), []).append(k)
    edges = []
    for k, n in enumerate(nodes):
        bx, by = math.floor(n.x / delta), math.floor(n.y / delta)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for m in buckets.get((bx + dx, by + dy), ()):
                    if m <= k:
                        continue
                    d = math.dist(n.position, nodes[m].position)
                    if d < delta:
                        a, b = sorted((n.id, nodes[m].id))
                        edges.append(Edge(a, b, d))
    edges.sort(key=lambda e: (e.i, e.j))
    return edges


def pairwise_similarity(a: TopoNode, b: TopoNode, params: MemoryParams) -> float:
    """Convex mix of spatial proximity and semantic agreement, in [0, 1]."""
    spatial = math.exp(-math.dist(a.position, b.position) / params.delta_spatial)
    cos = float(np.clip(np.dot(a.embedding, b.embedding), -1.0, 1.0))
    return params.omega * spatial + (1.0 - params.omega) * unit_similarity(cos)


def similarity_matrix(nodes: Sequence[TopoNode], params: MemoryParams) -> np.ndarray:
    pos = np.array([n.position for n in nodes], dtype=float)
    emb = np.stack([n.embedding for n in nodes])
    d2 = np.zeros((len(pos), len(pos)))
    for k in range(pos.shape[1]):
        diff = np.subtract.outer(pos[:, k], pos[:, k])
        d2 += diff * diff
    np.sqrt(d2, out=d2)
    d2 /= -params.delta_spatial
    np.exp(d2, out=d2)
    d2 *= params.omega
    cos = np.clip(emb @ emb.T, -1.0, 1.0)
    cos += 1.0
    cos *= (1.0 - params.omega) / 2.0
    d2 += cos
    # BLAS need not return an exactly symmetric product
    d2 += d2.T.copy()
    d2 /= 2.0
    return d2


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise FusionError(f"cannot normalize zero {what} vector")
    return v / n


def fuse_vectors(spatial: np.ndarray, semantic: np.ndarray, alpha: float) -> np.ndarray:
    spa = _unit(np.asarray(spatial, dtype=float), "spatial")
    sem = _unit(np.asarray(semantic, dtype=float), "semantic")
    dim = max(len(spa), len(sem))
    spa = np.pad(spa, (0, dim - len(spa)))
    sem = np.pad(sem, (0, dim - len(sem)))
    return _unit(alpha * spa + (1.0 - alpha) * sem, "fused")


def fuse_features(node: TopoNode, params: MemoryParams) -> np.ndarray:
    """Weighted sum of the normalized spatial and semantic features, renormalized."""
    return fuse_vectors(node.spatial_feature, node.embedding, params.alpha)


@dataclass(frozen=True)
class ForestNode:
    id: int
    children: tuple[int, ...]
    leaf_ref: int | None
    centroid: np.ndarray
    summary: str
    label: str
    merge_similarity: float | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class SemanticForest:
    roots: list[int]
    nodes: list[ForestNode]

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        self._parent: dict[int, int] = {}
        for n in self.nodes:
            for c in n.children:
                self._parent[c] = n.id

    def node(self, fid: int) -> ForestNode:
        return self._by_id[fid]

    def parent(self, fid: int) -> int | None:
        return self._parent.get(fid)

    def leaves(self) -> list[ForestNode]:
        return [n for n in self.nodes if n.is_leaf]

    def leaf_refs_under(self, fid: int) -> list[int]:
        out, stack = [], [fid]
        while stack:
            n = self._by_id[stack.pop()]
            if n.is_leaf:
                out.append(n.leaf_ref)
            else:
                stack.extend(n.children)
        return sorted(out)

    def max_branching(self) -> int:
        """Largest fan-out, counting the roots as children of a virtual top node."""
        return max([len(self.roots)] + [len(n.children) for n in self.nodes])

    def depth(self) -> int:
        def d(fid):
            n = self._by_id[fid]
            return 1 + max((d(c) for c in n.children), default=0)
        return max((d(r) for r in self.roots), default=0)


SummaryProvider = Callable[[Sequence[ForestNode]], "tuple[str, str] | dict"]

SUMMARY_CAP = 240


def default_summarizer(children: Sequence[ForestNode]) -> tuple[str, str]:
    """Majority child label (ties: lexicographically first) and capped joined summaries."""
    counts = Counter(c.label for c in children)
    label = min(counts, key=lambda k: (-counts[k], k))
    summary = "; ".join(c.summary for c in children)
    if len(summary) > SUMMARY_CAP:
        summary = summary[: SUMMARY_CAP - 3].rstrip() + "..."
    return label, summary


def summarize_cluster(children: Sequence[ForestNode],
                      summarizer: SummaryProvider | None = None) -> dict:
    if len(children) < 2:
        raise ValueError("a cluster summary needs at least two children")
    if summarizer is not None:
        try:
            out = summarizer(children)
            if isinstance(out, dict):
                label, summary = out["label"], out["summary"]
            else:
                label, summary = out
            if not isinstance(label, str) or not label.strip() or not isinstance(summary, str):
                raise ValueError(f"bad summary payload {out!r}")
            return {"label": label.strip(), "summary": summary}
        except Exception as exc:  # noqa: BLE001 - provider faults never break a build
            log.warning("summary provider failed (%s); using deterministic summarizer", exc)
    label, summary = default_summarizer(children)
    return {"label": label, "summary": summary}


def average_linkage(sim: np.ndarray, tau: float):
    """Agglomerate under average linkage until no pair reaches ``tau``.

    Uses the nearest-neighbour chain algorithm, which is exact for reducible
    linkages such as the average. A reciprocal pair below ``tau`` can never
    be merged later (an average never exceeds its largest term), so both
    members are retired as roots.

    Returns ``(merges, n)`` where each merge is ``(left, right, similarity)``
    over tree ids: ``0..n-1`` are leaves and merge ``k`` creates id ``n + k``.
    """
    n = len(sim)
    s = np.array(sim, dtype=float)
    np.fill_diagonal(s, -np.inf)
    size = np.ones(n)
    tree_id = list(range(n))
    live = n
    merges: list[tuple[int, int, float]] = []
    chain: list[int] = []
    alive = np.ones(n, dtype=bool)

    def drop(k):
        s[k, :] = -np.inf
        s[:, k] = -np.inf
        alive[k] = False

    while live > 1:
        if not chain:
            chain.append(int(np.flatnonzero(alive)[0]))
        a = chain[-1]
        row = s[a]
        best = row.max()
        if best == -np.inf:
            chain.pop()
            drop(a)
            live -= 1
            continue
        prev = chain[-2] if len(chain) > 1 else None
        b = prev if prev is not None and row[prev] == best else int(np.argmax(row))
        if b != prev:
            chain.append(b)
            continue
        chain.pop()
        chain.pop()
        if best < tau:
            drop(a)
            drop(b)
            live -= 2
            continue
        i, j = min(a, b), max(a, b)
        merges.append((tree_id[i], tree_id[j], float(best)))
        merged = (size[i] * s[i] + size[j] * s[j]) / (size[i] + size[j])
        merged[i] = -np.inf
        s[i, :] = merged
        s[:, i] = merged
        size[i] += size[j]
        tree_id[i] = n + len(merges) - 1
        drop(j)
        live -= 1
    return merges, n


def _band(sim: float, tau: float, gap: float) -> int:
    return int(math.floor((sim - tau) / gap + 1e-12))


def build_forest(
    tmap: TopologicalMap,
    params: MemoryParams | None = None,
    summarizer: SummaryProvider | None = None,
) -> SemanticForest:
    """Cluster the map's nodes into a semantic forest.

    The binary merge tree is collapsed so that a child merge lying in the
    same ``level_gap`` similarity band as its parent is absorbed into the
    parent; this turns runs of near-equal merges into one wide level.
    """
    params = params or MemoryParams()
    if not tmap.nodes:
        raise EmptyMapError("cannot build a forest over an empty map")
    n = len(tmap.nodes)
    fused = np.stack([fuse_features(nd, params) for nd in tmap.nodes])
    merges, _ = average_linkage(similarity_matrix(tmap.nodes, params), params.tau)

    children: dict[int, list[int]] = {}
    sims: dict[int, float] = {}
    for k, (a, b, sim) in enumerate(merges):
        children[n + k] = [a, b]
        sims[n + k] = sim
    has_parent = {c for kids in children.values() for c in kids}
    tops = sorted(t for t in list(range(n)) + list(children) if t not in has_parent)

    def collapsed(t: int) -> list[int]:
        out = []
        for c in children[t]:
            if (c in children and params.level_gap > 0
                    and _band(sims[c], params.tau, params.level_gap)
                    == _band(sims[t], params.tau, params.level_gap)):
                out.extend(collapsed(c))
            else:
                out.append(c)
        return out

    leaves = [
        ForestNode(
            id=i, children=(), leaf_ref=nd.id, centroid=_frozen(fused[i]),
            summary=nd.description, label=nd.label,
        )
        for i, nd in enumerate(tmap.nodes)
    ]
    built: list[ForestNode] = list(leaves)
    leaf_members: dict[int, list[int]] = {i: [i] for i in range(n)}

    def make(t: int) -> int:
        # returns the forest id for tree id t, creating internal nodes post-order
        if t < n:
            return t
        kids = [make(c) for c in sorted(collapsed(t), key=_first_leaf(children, n))]
        members = sorted(m for k in kids for m in leaf_members[k])
        fid = len(built)
        info = summarize_cluster([built[k] for k in kids], summarizer)
        centroid = _unit(fused[members].mean(axis=0), "centroid")
        built.append(ForestNode(
            id=fid, children=tuple(kids), leaf_ref=None, centroid=_frozen(centroid),
            summary=info["summary"], label=info["label"], merge_similarity=sims[t],
        ))
        leaf_members[fid] = members
        return fid

    roots = [make(t) for t in sorted(tops, key=_first_leaf(children, n))]
    return SemanticForest(roots=roots, nodes=built)


def _first_leaf(children, n):
    cache: dict[int, int] = {}

    def key(t):
        if t < n:
            return t
        if t not in cache:
            cache[t] = min(key(c) for c in children[t])
        return cache[t]
    return key


@dataclass
class Memory:
    """Frozen pair of topological map and semantic forest, plus query helpers."""

    params: MemoryParams
    map: TopologicalMap
    forest: SemanticForest
    embedder_spec: dict = field(default_factory=lambda: {"kind": "hash", "dim": 256})

    def __post_init__(self):
        self.embedder = embedder_from_spec(self.embedder_spec)
        self._emb = self.map.embeddings()
        self._emb.flags.writeable = False
        self._centroids = np.stack([f.centroid for f in self.forest.nodes])
        self._centroids.flags.writeable = False
        self._leaf_of = {f.leaf_ref: f.id for f in self.forest.nodes if f.is_leaf}

    @property
    def embedding_matrix(self) -> np.ndarray:
        return self._emb

    @property
    def centroid_matrix(self) -> np.ndarray:
        return self._centroids

    def leaf_for(self, node_id: int) -> int:
        return self._leaf_of[node_id]

    def embed(self, text: str) -> np.ndarray:
        return self.embedder.embed(text)


def build_memory(
    stream: Sequence[ObservationRecord],
    params: MemoryParams | None = None,
    describer: Describer | None = None,
    summarizer: SummaryProvider | None = None,
    embedder=None,
) -> Memory:
    params = params or MemoryParams()
    embedder = embedder or HashEmbedder(params.embedding_dim)
    tmap = build_topology(stream, params, describer, embedder)
    forest = build_forest(tmap, params, summarizer)
    return Memory(params, tmap, forest, embedder.spec())


def memory_to_dict(mem: Memory) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "params": asdict(mem.params),
        "embedder": mem.embedder_spec,
        "nodes": [
            {
                "id": n.id, "x": n.x, "y": n.y, "z": n.z,
                "description": n.description, "label": n.label,
                "object_ids": list(n.object_ids),
                "embedding": n.embedding.tolist(),
                "spatial_feature": n.spatial_feature.tolist(),
            }
            for n in mem.map.nodes
        ],
        "edges": [[e.i, e.j, e.weight] for e in mem.map.edges],
        "forest": {
            "roots": list(mem.forest.roots),
            "nodes": [
                {
                    "id": f.id, "children": list(f.children), "leaf_ref": f.leaf_ref,
                    "centroid": f.centroid.tolist(), "summary": f.summary,
                    "label": f.label, "merge_similarity": f.merge_similarity,
                }
                for f in mem.forest.nodes
            ],
        },
    }


def memory_from_dict(data: dict) -> Memory:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported memory schema_version {version!r} (expected {SCHEMA_VERSION})")
    params = MemoryParams(**data["params"])
    nodes = [
        TopoNode(
            id=int(d["id"]), x=float(d["x"]), y=float(d["y"]), z=float(d.get("z", 0.0)),
            description=d["description"], label=d.get("label", "space"),
            object_ids=tuple(d.get("object_ids", [])),
            embedding=_frozen(d["embedding"]), spatial_feature=_frozen(d["spatial_feature"]),
        )
        for d in data["nodes"]
    ]
    edges = [Edge(int(i), int(j), None if w is None else float(w)) for i, j, w in data["edges"]]
    fnodes = [
        ForestNode(
            id=int(f["id"]), children=tuple(f["children"]), leaf_ref=f["leaf_ref"],
            centroid=_frozen(f["centroid"]), summary=f["summary"], label=f["label"],
            merge_similarity=f.get("merge_similarity"),
        )
        for f in data["forest"]["nodes"]
    ]
    return Memory(params, TopologicalMap(nodes, edges),
                  SemanticForest(list(data["forest"]["roots"]), fnodes),
                  data.get("embedder", {"kind": "hash", "dim": params.embedding_dim}))


def save_memory(mem: Memory, path: str | Path) -> None:
    Path(path).write_text(json.dumps(memory_to_dict(mem)))


def load_memory(path: str | Path) -> Memory:
    return memory_from_dict(json.loads(Path(path).read_text()))


def stream_from_points(points: Iterable[tuple[float, float]], tokens: Iterable[str] | None = None,
                       ) -> list[ObservationRecord]:
    """Handy for tests and synthetic benchmarks: one record per point."""
    pts = list(points)
    toks = list(tokens) if tokens is not None else ["objects: none"] * len(pts)
    return [ObservationRecord(t, float(x), float(y), 0.0, tok) for t, ((x, y), tok)
            in enumerate(zip(pts, toks))]
