"""Shortest-path costs, visiting-order optimisation and travel accounting.

The order objective is ``sum of leg costs + lam * inversions(order, S)``
where ``S`` is the instruction's semantic sequence. Up to ``EXACT_LIMIT``
targets every permutation is enumerated; beyond that a depth-first
branch-and-bound with an admissible bound returns the same optimum.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .memory import TopologicalMap

EXACT_LIMIT = 9
_EQ_TOL = 1e-9


class PlanningError(ValueError):
    pass


class UnknownTargetError(PlanningError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown target"


class UnreachableTargetError(PlanningError):
    def __init__(self, a, b):
        super().__init__(f"targets {a} and {b} are not connected in the topological map")
        self.pair = (a, b)


def _weight(tmap: TopologicalMap, u: int, v: int, w: float | None) -> float:
    if w is not None:
        return w
    a, b = tmap.node(u), tmap.node(v)
    return math.hypot(b.x - a.x, b.y - a.y)


def shortest_paths(tmap: TopologicalMap, source: int) -> tuple[dict[int, float], dict[int, int]]:
    """Dijkstra from ``source``; returns distances and predecessor links."""
    if not tmap.has_node(source):
        raise UnknownTargetError(f"unknown node id {source}")
    dist = {source: 0.0}
    pred: dict[int, int] = {}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in tmap.neighbors(u):
            nd = d + _weight(tmap, u, v, w)
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


@dataclass
class CostMatrix:
    target_node_ids: list[int]
    costs: np.ndarray

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        n = len(self.target_node_ids)
        if self.costs.shape != (n, n):
            raise PlanningError(f"cost matrix shape {self.costs.shape} does not match {n} targets")
        self._pos: dict[int, int] = {}
        for k, t in enumerate(self.target_node_ids):
            self._pos.setdefault(t, k)

    def index(self, node_id) -> int:
        try:
            return self._pos[node_id]
        except KeyError:
            raise UnknownTargetError(f"{node_id} is not in the cost matrix") from None

    def cost(self, a, b) -> float:
        return float(self.costs[self.index(a), self.index(b)])


def pairwise_costs(tmap: TopologicalMap, targets: Sequence[int]) -> CostMatrix:
    """Shortest-path lengths between every pair of targets (``inf`` if disconnected)."""
    for t in targets:
        if not tmap.has_node(t):
            raise UnknownTargetError(f"unknown target node id {t}")
    n = len(targets)
    costs = np.full((n, n), math.inf)
    cache: dict[int, dict[int, float]] = {}
    for i, a in enumerate(targets):
        if a not in cache:
            cache[a] = shortest_paths(tmap, a)[0]
        for j, b in enumerate(targets):
            costs[i, j] = 0.0 if a == b else cache[a].get(b, math.inf)
    # undirected graph: mirror the upper triangle so the matrix is exactly symmetric
    iu = np.triu_indices(n, 1)
    costs[(iu[1], iu[0])] = costs[iu]
    return CostMatrix(list(targets), costs)


def straight_line_costs(tmap: TopologicalMap, targets: Sequence[int]) -> CostMatrix:
    """Coordinate-distance costs for when no connectivity is available."""
    pts = [tmap.node(t) for t in targets]
    n = len(pts)
    costs = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            costs[i, j] = math.hypot(pts[j].x - pts[i].x, pts[j].y - pts[i].y)
    return CostMatrix(list(targets), costs)


def path_between(tmap: TopologicalMap, a: int, b: int) -> list[int]:
    """Shortest node path from ``a`` to ``b``; among equal-cost paths the
    lexicographically smallest id sequence wins."""
    if not tmap.has_node(a):
        raise UnknownTargetError(f"unknown node id {a}")
    to_b, _ = shortest_paths(tmap, b)
    if a not in to_b:
        raise UnreachableTargetError(a, b)
    path = [a]
    u = a
    while u != b:
        # smallest neighbour lying on some shortest path to b
        rest = to_b[u]
        tol = _EQ_TOL * max(1.0, rest)
        step = None
        for v, w in tmap.neighbors(u):
            if v in to_b and v not in path \
                    and abs(_weight(tmap, u, v, w) + to_b[v] - rest) <= tol:
                step = v
                break
        if step is None:  # numerical corner: fall back to the strict predecessor chain
            return _pred_path(tmap, a, b)
        path.append(step)
        u = step
    return path


def _pred_path(tmap, a, b):
    _, pred = shortest_paths(tmap, a)
    out = [b]
    while out[-1] != a:
        out.append(pred[out[-1]])
    return out[::-1]


def semantic_penalty(order: Sequence[Hashable], semantic_sequence: Sequence[Hashable]) -> int:
    """Kendall-tau distance: pairs whose relative order disagrees with the sequence."""
    if Counter(order) != Counter(semantic_sequence) or len(set(order)) != len(order):
        raise PlanningError("order and semantic sequence must contain the same ids")
    rank = {t: k for k, t in enumerate(semantic_sequence)}
    r = [rank[t] for t in order]
    return sum(1 for i in range(len(r)) for j in range(i + 1, len(r)) if r[i] > r[j])


@dataclass
class PlanResult:
    order: list[int]
    travel_cost: float
    semantic_penalty: int
    objective: float
    lam: float
    start: int | None = None
    legs: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "legs": [list(leg) for leg in self.legs],
            "travel_cost": self.travel_cost,
            "semantic_penalty": self.semantic_penalty,
            "objective": self.objective,
            "lam": self.lam,
            "start": self.start,
        }


def _route_cost(costs: CostMatrix, order, start) -> float:
    total = 0.0
    prev = start
    for t in order:
        if prev is not None:
            total += costs.cost(prev, t)
        prev = t
    return total


def evaluate(costs: CostMatrix, order, semantic_sequence, lam, start=None) -> tuple[float, int, float]:
    travel = _route_cost(costs, order, start)
    pen = semantic_penalty(order, semantic_sequence)
    return travel, pen, travel + lam * pen


def _respects(order, precedence) -> bool:
    pos = {t: k for k, t in enumerate(order)}
    return all(pos[a] < pos[b] for a, b in precedence)


def plan_sequence(
    costs: CostMatrix,
    semantic_sequence: Sequence[int],
    lam: float = 1.0,
    start: int | None = None,
    precedence: Iterable[tuple[int, int]] = (),
    exact_limit: int = EXACT_LIMIT,
) -> PlanResult:
    """Find the visiting order minimising travel plus ``lam`` times the penalty.

    ``precedence`` pairs ``(a, b)`` are hard constraints (``a`` before ``b``).
    Ties resolve to the lexicographically smallest order.
    """
    targets = list(semantic_sequence)
    if not targets:
        raise PlanningError("nothing to plan: no targets")
    if len(set(targets)) != len(targets):
        raise PlanningError("semantic sequence contains duplicate targets")
    if lam < 0:
        raise PlanningError("lam must be non-negative")
    precedence = [tuple(p) for p in precedence]
    for a, b in precedence:
        if a not in targets or b not in targets:
            raise PlanningError(f"precedence ({a}, {b}) names a non-target")
    pts = ([start] if start is not None else []) + targets
    for i, a in enumerate(pts):
        for b in pts[i + 1:]:
            if not math.isfinite(costs.cost(a, b)) or not math.isfinite(costs.cost(b, a)):
                raise UnreachableTargetError(a, b)

    if len(targets) <= exact_limit:
        best = _enumerate(costs, targets, lam, start, precedence)
    else:
        best = _branch_and_bound(costs, targets, lam, start, precedence)
    if best is None:
        raise PlanningError("precedence constraints admit no order (cycle)")
    order, travel, pen, obj = best
    return PlanResult(order, travel, pen, obj, lam, start)


def _enumerate(costs, targets, lam, start, precedence):
    items = sorted(targets)
    k_of = {t: costs.index(t) for t in items}
    c = costs.costs.tolist()
    rank = {t: k for k, t in enumerate(targets)}
    s0 = costs.index(start) if start is not None else None
    best = None
    for perm in itertools.permutations(items):
        if precedence and not _respects(perm, precedence):
            continue
        # same left-to-right summation as evaluate()
        travel = 0.0
        prev = s0
        for t in perm:
            k = k_of[t]
            if prev is not None:
                travel += c[prev][k]
            prev = k
        r = [rank[t] for t in perm]
        pen = 0
        for i in range(len(r)):
            ri = r[i]
            for j in range(i + 1, len(r)):
                if ri > r[j]:
                    pen += 1
        obj = travel + lam * pen
        if best is None or obj < best[3]:
            best = (list(perm), travel, pen, obj)
    return best


def _branch_and_bound(costs, targets, lam, start, precedence):
    rank = {t: k for k, t in enumerate(targets)}
    items = sorted(targets)
    must_before: dict[int, set] = {t: set() for t in items}
    for a, b in precedence:
        must_before[b].add(a)
    cm = {(a, b): costs.cost(a, b) for a in items + ([start] if start is not None else [])
          for b in items}
    best = [None, math.inf]

    def lower_bound(last, remaining):
        # every remaining target is entered exactly once from `last` or another remaining one
        total = 0.0
        for u in remaining:
            srcs = [v for v in remaining if v != u]
            if last is not None:
                srcs.append(last)
            if srcs:
                total += min(cm[(v, u)] for v in srcs)
        return total

    def dfs(prefix, placed, travel, pen):
        remaining = [t for t in items if t not in placed]
        if not remaining:
            obj = travel + lam * pen
            if obj < best[1]:
                best[0] = (list(prefix), travel, pen, obj)
                best[1] = obj
            return
        last = prefix[-1] if prefix else start
        for t in remaining:
            if not must_before[t] <= placed:
                continue
            step = cm[(last, t)] if last is not None else 0.0
            # inversions fixed by placing t now: remaining items that S puts before t
            extra = sum(1 for u in remaining if u != t and rank[u] < rank[t])
            nt, npen = travel + step, pen + extra
            rest = [u for u in remaining if u != t]
            bound = nt + lower_bound(t, rest) + lam * npen
            if bound > best[1] + _EQ_TOL * max(1.0, abs(best[1])):
                continue
            placed.add(t)
            prefix.append(t)
            dfs(prefix, placed, nt, npen)
            prefix.pop()
            placed.discard(t)

    dfs([], set(), 0.0, 0)
    if best[0] is None:
        return None
    # recompute in the canonical summation order used by the exact path
    order = best[0][0]
    travel, pen, obj = evaluate(costs, order, targets, lam, start)
    return order, travel, pen, obj


def travel_distance(path: Sequence[int], tmap: TopologicalMap, fallback: bool = True) -> float:
    """Sum edge distance attributes along ``path``.

    Hops whose edge is missing or carries no distance use the planar
    coordinate distance when ``fallback`` is on, and raise otherwise.
    """
    total = 0.0
    for u, v in zip(path, path[1:]):
        w = tmap.edge_weight(u, v)
        if w is None:
            if not fallback:
                raise PlanningError(f"no distance attribute between {u} and {v}")
            a, b = tmap.node(u), tmap.node(v)
            w = math.sqrt((b.x - a.x) ** 2 + (b.y - a.y) ** 2)
        total += w
    return total


def route(
    tmap: TopologicalMap,
    targets: Sequence[int],
    lam: float = 1.0,
    start: int | None = None,
    precedence: Iterable[tuple[int, int]] = (),
    use_graph: bool = True,
) -> PlanResult:
    """Plan over node ids and attach per-leg node paths.

    ``targets`` is the semantic sequence. With ``use_graph=False`` the map's
    edges are ignored: costs are straight lines and each leg is a direct hop.
    """
    pts = list(targets) + ([start] if start is not None and start not in targets else [])
    costs = pairwise_costs(tmap, pts) if use_graph else straight_line_costs(tmap, pts)
    plan = plan_sequence(costs, targets, lam, start, precedence)
    stops = ([start] if start is not None else []) + plan.order
    legs = []
    for a, b in zip(stops, stops[1:]):
        legs.append(path_between(tmap, a, b) if use_graph else ([a] if a == b else [a, b]))
    plan.legs = legs
    return plan


def concatenate_legs(legs: Sequence[Sequence[int]]) -> list[int]:
    out: list[int] = []
    for leg in legs:
        if out and leg and out[-1] == leg[0]:
            out.extend(leg[1:])
        else:
            out.extend(leg)
    return out


def structured_guide(plan: PlanResult, tmap: TopologicalMap,
                     notes: dict[int, str] | None = None) -> str:
    """Human-readable step list: target marker, why it was chosen, and how to get there."""
    notes = notes or {}
    lines = [f"Route over {len(plan.order)} target(s): travel {plan.travel_cost:.2f} m, "
             f"order penalty {plan.semantic_penalty}, objective {plan.objective:.2f}"]
    legs = list(plan.legs or [])
    # without a start the first target is where the route begins
    legs = [[plan.order[0]]] * (len(plan.order) - len(legs)) + legs
    for k, (target, leg) in enumerate(zip(plan.order, legs), 1):
        node = tmap.node(target)
        dist = travel_distance(leg, tmap)
        via = " -> ".join(str(v) for v in leg)
        lines.append(f"{k}. [target {target}] {node.label} at ({node.x:.1f}, {node.y:.1f})")
        lines.append(f"   why: {notes.get(target, node.description)}")
        lines.append(f"   go: {via} ({len(leg) - 1} hops, {dist:.2f} m)")
    return "\n".join(lines)
