"""Seeded benchmark suites and the retrieval / navigation / ablation harness.

A case is a scene of labelled objects laid over a waypoint lattice. Every
task asks for "target near anchor" and the scene also holds decoys: objects
with the target's exact label and description placed far from any anchor.
Only spatial reasoning can tell the planted answer from its decoys.
"""
from __future__ import annotations

import csv
import json
import math
import random
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema

from .env_sim import ObservationRecord, Rect, SceneDescription, SceneObject, make_obs_token
from .instruction import TaskGraph, parse, schedule
from .memory import Memory, MemoryParams, build_memory
from .planner import PlanningError, concatenate_legs, route, travel_distance
from .retrieval import PRESETS, Query, RetrieverConfig, flat_search, retrieve


class BenchmarkError(ValueError):
    pass


# Labels whose words and descriptions do not overlap, so a label only matches itself.
BENCH_VOCABULARY: tuple[tuple[str, str], ...] = (
    ("sofa", "grey fabric sofa"), ("chair", "wooden dining chair"),
    ("desk", "white writing desk"), ("lamp", "brass floor lamp"),
    ("tv", "flat screen tv"), ("remote", "black plastic remote"),
    ("bed", "double bed quilt"), ("fridge", "steel fridge"),
    ("sink", "ceramic basin sink"), ("plant", "potted fern plant"),
    ("bookshelf", "oak bookshelf novels"), ("cabinet", "metal filing cabinet"),
    ("oven", "electric oven"), ("mirror", "oval mirror"),
    ("rug", "striped woven rug"), ("piano", "upright piano"),
    ("clock", "round wall clock"), ("vase", "glass flower vase"),
    ("printer", "laser printer"), ("toaster", "chrome toaster"),
    ("kettle", "red kettle"), ("bathtub", "enamel bathtub"),
    ("toilet", "porcelain toilet"), ("laptop", "silver laptop"),
    ("guitar", "acoustic guitar"), ("fan", "ceiling fan"),
    ("radiator", "iron radiator"), ("curtain", "velvet curtain"),
    ("pillow", "feather pillow"), ("microwave", "compact microwave"),
    ("stool", "bar stool"), ("bin", "waste bin"),
    ("umbrella", "folded umbrella"), ("helmet", "bike helmet"),
    ("heater", "oil heater"), ("speaker", "bluetooth speaker"),
    ("monitor", "computer monitor"), ("backpack", "canvas backpack"),
)


@dataclass(frozen=True)
class BenchParams:
    n_cases: int = 14
    mean_nodes: float = 80.0
    sd_nodes: float = 8.0
    min_tasks: int = 2
    max_tasks: int = 3
    decoys_per_task: int = 2
    context_rate: float = 0.5
    then_rate: float = 0.6
    distractors: int = 6
    lattice_spacing: float = 1.5
    anchor_offset: tuple[float, float] = (1.0, 1.6)
    decoy_clearance: float = 2.5
    min_separation: float = 1.0

    def __post_init__(self):
        if self.n_cases < 1:
            raise BenchmarkError("n_cases must be >= 1")
        if not 1 <= self.min_tasks <= self.max_tasks:
            raise BenchmarkError("need 1 <= min_tasks <= max_tasks")
        if self.decoys_per_task < 0 or self.distractors < 0:
            raise BenchmarkError("decoy and distractor counts must be non-negative")
        if not (0 <= self.context_rate <= 1 and 0 <= self.then_rate <= 1):
            raise BenchmarkError("rates must lie in [0, 1]")
        if self.lattice_spacing <= 0 or self.sd_nodes < 0:
            raise BenchmarkError("lattice_spacing must be positive and sd_nodes non-negative")
        lo, hi = self.anchor_offset
        if not 0 < lo <= hi < MemoryParams().delta_spatial:
            raise BenchmarkError("anchor_offset must sit inside one edge length")
        if self.decoy_clearance < MemoryParams().delta_spatial:
            raise BenchmarkError("decoy_clearance must exceed one edge length")
        labels = self.max_tasks * 3 + self.distractors
        if labels > len(BENCH_VOCABULARY):
            raise BenchmarkError(f"need {labels} distinct labels, vocabulary has "
                                 f"{len(BENCH_VOCABULARY)}")
        if self.mean_nodes < 2 * self.max_objects():
            raise BenchmarkError("mean_nodes too small to host the planted objects")

    def max_objects(self) -> int:
        return self.max_tasks * (3 + self.decoys_per_task) + self.distractors


@dataclass(frozen=True)
class BenchmarkCase:
    scene: SceneDescription
    instruction: str
    ground_truth: dict[int, int]
    seed: int
    lattice_spacing: float = 1.5
    n_waypoints: int | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "instruction": self.instruction,
            "ground_truth": {str(k): v for k, v in sorted(self.ground_truth.items())},
            "lattice_spacing": self.lattice_spacing,
            "n_waypoints": self.n_waypoints,
            "scene": self.scene.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkCase":
        case = cls(SceneDescription.from_dict(d["scene"]), d["instruction"],
                   {int(k): int(v) for k, v in d["ground_truth"].items()},
                   int(d["seed"]), float(d.get("lattice_spacing", 1.5)),
                   d.get("n_waypoints"))
        validate_case(case)
        return case

    def stream(self) -> list[ObservationRecord]:
        return survey_stream(self.scene, self.lattice_spacing, self.n_waypoints)


def lattice(bounds: Rect, spacing: float) -> list[tuple[float, float]]:
    nx = max(1, int(round(bounds.width / spacing)))
    ny = max(1, int(round(bounds.height / spacing)))
    return [(bounds.xmin + spacing * (i + 0.5), bounds.ymin + spacing * (j + 0.5))
            for j in range(ny) for i in range(nx)]


def survey_stream(scene: SceneDescription, spacing: float,
                  n_waypoints: int | None = None) -> list[ObservationRecord]:
    """One record per object (seen at its own pose), then the waypoint lattice.

    Objects come first so node ids equal object ids. ``n_waypoints`` keeps
    only the first lattice points in row order.
    """
    recs = [ObservationRecord(t, o.x, o.y, 0.0, make_obs_token([o]), (o.id,))
            for t, o in enumerate(sorted(scene.objects, key=lambda o: o.id))]
    for x, y in lattice(scene.bounds, spacing)[:n_waypoints]:
        recs.append(ObservationRecord(len(recs), x, y, 0.0, make_obs_token([])))
    return recs


def validate_case(case: BenchmarkCase) -> None:
    graph = parse(case.instruction)
    ids = {t.id for t in graph.tasks}
    if set(case.ground_truth) != ids:
        raise BenchmarkError("ground truth must name every task exactly once")
    object_ids = {o.id for o in case.scene.objects}
    for tid, nid in case.ground_truth.items():
        if nid not in object_ids:
            raise BenchmarkError(f"ground truth for task {tid} names missing node {nid}")


def _far(p, others, r) -> bool:
    return all(math.dist(p, q) >= r for q in others)


def _sample_point(rng, bounds, ok, tries=2000):
    for _ in range(tries):
        p = (rng.uniform(bounds.xmin + 0.5, bounds.xmax - 0.5),
             rng.uniform(bounds.ymin + 0.5, bounds.ymax - 0.5))
        if ok(p):
            return p
    raise BenchmarkError("could not place an object; scene too crowded for these params")


def _generate_case(params: BenchParams, rng: random.Random, seed: int) -> BenchmarkCase:
    n_tasks = rng.randint(params.min_tasks, params.max_tasks)
    labels = rng.sample(BENCH_VOCABULARY, 3 * n_tasks + params.distractors)
    roles = [labels[3 * k:3 * k + 3] for k in range(n_tasks)]
    with_ctx = [rng.random() < params.context_rate for _ in range(n_tasks)]
    n_obj = sum(2 + c for c in with_ctx) + n_tasks * params.decoys_per_task + params.distractors

    n_nodes = max(int(round(rng.gauss(params.mean_nodes, params.sd_nodes))), 2 * n_obj)
    n_way = n_nodes - n_obj
    nx = max(2, math.ceil(math.sqrt(n_way)))
    ny = max(2, math.ceil(n_way / nx))
    s = params.lattice_spacing
    # trim the last lattice row so the waypoint count is exact
    bounds = Rect(0.0, 0.0, nx * s, ny * s)
    way = lattice(bounds, s)[:n_way]
    # objects keep clear of waypoints so pose dedup never merges them
    clear = MemoryParams().dedup_radius + 0.05
    placed: list[tuple[str, str, tuple[float, float], str]] = []

    def free(p):
        return (_far(p, [q[2] for q in placed], params.min_separation)
                and _far(p, way, clear))

    def near(center):
        def ok(p):
            lo, hi = params.anchor_offset
            return lo <= math.dist(p, center) <= hi and free(p)
        return ok

    truths, anchors, contexts = [], [], []
    for k in range(n_tasks):
        (tl, td), (al, ad), (cl, cd) = roles[k]
        tp = _sample_point(rng, bounds, free)
        placed.append((tl, td, tp, f"truth{k}"))
        ap = _sample_point(rng, bounds, near(tp))
        placed.append((al, ad, ap, "anchor"))
        truths.append(tp)
        anchors.append(ap)
        if with_ctx[k]:
            cp = _sample_point(rng, bounds, near(tp))
            placed.append((cl, cd, cp, "context"))
            contexts.append(cp)
    guarded = anchors + contexts
    for k in range(n_tasks):
        tl, td = roles[k][0]
        for _ in range(params.decoys_per_task):
            p = _sample_point(rng, bounds,
                              lambda p: free(p) and _far(p, guarded, params.decoy_clearance))
            placed.append((tl, td, p, "decoy"))
    for dl, dd in labels[3 * n_tasks:]:
        p = _sample_point(rng, bounds, free)
        placed.append((dl, dd, p, "distractor"))

    # shuffle so the planted answer's id carries no information
    order = list(range(len(placed)))
    rng.shuffle(order)
    objects, truth_ids = [], {}
    for new_id, k in enumerate(order):
        label, desc, (x, y), role = placed[k]
        objects.append(SceneObject(new_id, label, desc, round(x, 6), round(y, 6)))
        if role.startswith("truth"):
            truth_ids[int(role[5:])] = new_id
    scene = SceneDescription(bounds, (), tuple(objects), seed)

    phrases = []
    for k in range(n_tasks):
        (tl, _), (al, _), (cl, _) = roles[k]
        phrases.append(f"{tl} near {al}" + (f" with {cl}" if with_ctx[k] else ""))
    text = phrases[0]
    for ph in phrases[1:]:
        text += (" then " if rng.random() < params.then_rate else " and ") + ph
    case = BenchmarkCase(scene, text, {k + 1: truth_ids[k] for k in range(n_tasks)}, seed, s,
                         n_way)
    validate_case(case)
    return case


def generate_benchmark(params: BenchParams | None = None, seed: int = 0) -> list[BenchmarkCase]:
    """Deterministic suite of ``params.n_cases`` decoy cases."""
    params = params or BenchParams()
    rng = random.Random(seed)
    return [_generate_case(params, random.Random(rng.getrandbits(64)), seed * 1000 + k)
            for k in range(params.n_cases)]


def write_suite(suite: Iterable[BenchmarkCase], path: str | Path) -> None:
    with open(path, "w") as fh:
        for case in suite:
            fh.write(json.dumps(case.to_dict()) + "\n")


def read_suite(path: str | Path) -> list[BenchmarkCase]:
    out = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(BenchmarkCase.from_dict(json.loads(line)))
                except (KeyError, TypeError, ValueError) as exc:
                    raise BenchmarkError(f"{path}:{ln}: bad case ({exc})") from exc
    if not out:
        raise BenchmarkError(f"{path}: suite is empty")
    return out


# Themes with object kinds; used for the large clustered memories.
CLUSTER_THEMES: dict[str, tuple[str, ...]] = {
    "kitchen": ("kettle", "toaster", "spoon", "plate", "oven", "fridge", "bowl", "knife",
                "pan", "jar"),
    "garage": ("wrench", "tyre", "drill", "ladder", "hammer", "bucket", "hose", "saw",
               "jack", "clamp"),
    "garden": ("rose", "shovel", "bench", "fern", "hedge", "pond", "gnome", "rake", "tulip",
               "trellis"),
    "office": ("printer", "stapler", "monitor", "binder", "folder", "laptop", "desk",
               "marker", "router", "scanner"),
    "nursery": ("cradle", "rattle", "teddy", "mobile", "crayon", "blocks", "diaper",
                "bottle", "puzzle", "kite"),
    "workshop": ("lathe", "vise", "chisel", "plane", "anvil", "file", "welder", "grinder",
                 "solder", "caliper"),
}


def clustered_stream(n_nodes: int = 5000, n_clusters: int = 4, seed: int = 0,
                     separation: float = 300.0) -> list[ObservationRecord]:
    """Large map of ``n_clusters`` themed regions, each split into per-kind patches.

    Every pose carries a unique description "<theme> <kind> unit<g>x<k>", so a
    node's own description is an unambiguous within-cluster query.
    """
    if not 1 <= n_clusters <= len(CLUSTER_THEMES):
        raise BenchmarkError(f"n_clusters must be in 1..{len(CLUSTER_THEMES)}")
    themes = list(CLUSTER_THEMES.items())[:n_clusters]
    if n_nodes < n_clusters * 10:
        raise BenchmarkError("too few nodes for the requested clusters")
    rng = random.Random(seed)
    recs = []
    for c, (theme, kinds) in enumerate(themes):
        size = n_nodes // n_clusters + (c < n_nodes % n_clusters)
        for g, kind in enumerate(kinds):
            m = size // len(kinds) + (g < size % len(kinds))
            side = math.ceil(math.sqrt(m))
            for k in range(m):
                x = c * separation + (g % 5) * 30.0 + (k % side) + rng.uniform(-0.2, 0.2)
                y = (g // 5) * 30.0 + (k // side) + rng.uniform(-0.2, 0.2)
                recs.append((x, y, f"objects: {theme} {kind} unit{g}x{k}"))
    rng.shuffle(recs)
    return [ObservationRecord(t, x, y, 0.0, tok) for t, (x, y, tok) in enumerate(recs)]


def clustered_memory(n_nodes: int = 5000, n_clusters: int = 4, seed: int = 0,
                     params: MemoryParams | None = None) -> Memory:
    return build_memory(clustered_stream(n_nodes, n_clusters, seed), params)


# ---------------------------------------------------------------- metrics

@dataclass
class MetricsRecord:
    config: str
    suite: str = "decoy"
    n_cases: int = 0
    n_queries: int = 0
    total_task_time_s: float | None = None
    retrieval_time_ms: float | None = None
    top1_accuracy: float | None = None
    success_rate: float | None = None
    travel_distance_m: float | None = None
    nodes_visited: float | None = None
    semantic_penalty: float | None = None

    def __post_init__(self):
        for name in ("top1_accuracy", "success_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise BenchmarkError(f"{name}={v} outside [0, 1]")
        for name in ("total_task_time_s", "retrieval_time_ms"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise BenchmarkError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


COLUMNS = tuple(f.name for f in fields(MetricsRecord))


@dataclass(frozen=True)
class PlannerConfig:
    name: str = "exact"
    lam: float = 1.0


ORACLE = RetrieverConfig("oracle")


class MemoryCache:
    """Builds each case's memory once; memories are frozen so configs can share them."""

    def __init__(self, params: MemoryParams | None = None):
        self.params = params or MemoryParams()
        self._mem: dict[int, Memory] = {}

    def __call__(self, case: BenchmarkCase) -> Memory:
        key = id(case)
        if key not in self._mem:
            self._mem[key] = build_memory(case.stream(), self.params)
        return self._mem[key]


def start_node(memory: Memory) -> int:
    """Node nearest the lower-left corner of the map; ties go to the smaller id."""
    pos = memory.map.positions()
    x0, y0 = pos[:, 0].min(), pos[:, 1].min()
    return min(memory.map.nodes, key=lambda n: (math.hypot(n.x - x0, n.y - y0), n.id)).id


def _retrieve_task(task, memory, cfg, case, query_kw):
    """Returns (top1 node or None, nodes visited)."""
    if cfg.name == "oracle":
        return case.ground_truth[task.id], 0
    q = Query(task.target_text, task.anchor_text, task.context_texts, **query_kw)
    visited = 0
    if task.anchor_text and cfg.spatial and cfg.topology:
        # resolve_anchor step: is the anchor in memory at all?
        visited += flat_search(Query(task.anchor_text, K=1), memory).visited
    ranking = retrieve(q, memory, cfg)
    return ranking.top1(), visited + ranking.visited


def _timed_median(fn, repeats: int) -> float:
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


@dataclass
class CaseOutcome:
    picks: dict[int, int | None]
    correct: int
    visited: int
    retrieval_s: list[float] = field(default_factory=list)
    success: bool | None = None
    travel: float | None = None
    penalty: int | None = None
    task_time_s: float | None = None


def _run_case(case, memory, cfg, pcfg, repeats, query_kw, navigate, override=None):
    graph = parse(case.instruction)
    t0 = time.perf_counter()
    picks, visited, times = {}, 0, []
    for step in schedule(graph):
        if step.kind == "resolve_anchor":
            continue  # folded into the anchored retrieval of the same task
        task = graph.task(step.task_id)
        node, v = _retrieve_task(task, memory, cfg, case, query_kw)
        if override and task.id in override:
            node = override[task.id]
        picks[task.id] = node
        visited += v
    elapsed_retrieval = time.perf_counter() - t0
    correct = sum(picks[t] == case.ground_truth[t] for t in picks)
    out = CaseOutcome(picks, correct, visited)
    if repeats:
        for task in graph.tasks:
            out.retrieval_s.append(_timed_median(
                lambda: _retrieve_task(task, memory, cfg, case, query_kw), repeats))
    if not navigate:
        return out
    t1 = time.perf_counter()
    out.success, out.travel, out.penalty = _navigate(graph, picks, case, memory, cfg, pcfg)
    out.task_time_s = elapsed_retrieval + time.perf_counter() - t1
    return out


def _navigate(graph: TaskGraph, picks, case, memory, cfg, pcfg):
    targets: list[int] = []
    for tid in graph.semantic_sequence:
        node = picks.get(tid)
        if node is not None and node not in targets:
            targets.append(node)
    if not targets:
        return False, None, None
    prec = {(picks[a], picks[b]) for a, b in graph.temporal_edges
            if picks.get(a) is not None and picks.get(b) is not None and picks[a] != picks[b]}
    try:
        plan = route(memory.map, targets, pcfg.lam, start_node(memory), sorted(prec),
                     use_graph=cfg.topology)
    except PlanningError:
        # colliding picks can make the precedence cyclic; plan on the soft penalty alone
        try:
            plan = route(memory.map, targets, pcfg.lam, start_node(memory), (),
                         use_graph=cfg.topology)
        except PlanningError:
            return False, None, None
    dist = travel_distance(concatenate_legs(plan.legs), memory.map)
    visited_gt = all(picks.get(t) == case.ground_truth[t] for t in case.ground_truth)
    return visited_gt, dist, plan.semantic_penalty


def _aggregate(name, suite_name, outcomes, n_cases, navigate) -> MetricsRecord:
    n_q = sum(len(o.picks) for o in outcomes)
    times = [t for o in outcomes for t in o.retrieval_s]
    rec = MetricsRecord(
        config=name, suite=suite_name, n_cases=n_cases, n_queries=n_q,
        retrieval_time_ms=1000 * statistics.fmean(times) if times else None,
        top1_accuracy=sum(o.correct for o in outcomes) / n_q if n_q else 0.0,
        nodes_visited=sum(o.visited for o in outcomes) / n_q if n_q else 0.0,
    )
    if navigate:
        rec.success_rate = sum(bool(o.success) for o in outcomes) / n_cases
        dists = [o.travel for o in outcomes if o.travel is not None]
        rec.travel_distance_m = statistics.fmean(dists) if dists else None
        pens = [o.penalty for o in outcomes if o.penalty is not None]
        rec.semantic_penalty = statistics.fmean(pens) if pens else None
        rec.total_task_time_s = statistics.fmean(o.task_time_s for o in outcomes)
    return rec


def _resolve(configs) -> list[RetrieverConfig]:
    out = []
    for c in configs:
        if isinstance(c, str):
            if c == "oracle":
                out.append(ORACLE)
            elif c in PRESETS:
                out.append(PRESETS[c])
            else:
                raise BenchmarkError(f"unknown retriever config {c!r}")
        else:
            out.append(c)
    return out


DEFAULT_RETRIEVERS = ("flat", "forest", "anchor", "full", "oracle")


def run_retrieval_bench(suite: Sequence[BenchmarkCase], configs=DEFAULT_RETRIEVERS,
                        repeats: int = 5, suite_name: str = "decoy",
                        memories: MemoryCache | None = None,
                        query_kw: dict | None = None) -> list[MetricsRecord]:
    """Top-1 accuracy, median-of-``repeats`` latency and nodes visited per config."""
    memories = memories or MemoryCache()
    query_kw = query_kw or {}
    records = []
    for cfg in _resolve(configs):
        outs = [_run_case(c, memories(c), cfg, None, repeats, query_kw, False) for c in suite]
        records.append(_aggregate(cfg.name, suite_name, outs, len(suite), False))
    return records


def run_navigation_bench(suite: Sequence[BenchmarkCase], planners: Sequence[PlannerConfig] = (
                             PlannerConfig(),),
                         retriever: RetrieverConfig | str = "full", repeats: int = 1,
                         suite_name: str = "decoy", memories: MemoryCache | None = None,
                         query_kw: dict | None = None,
                         overrides: dict[int, dict[int, int]] | None = None,
                         ) -> list[MetricsRecord]:
    """Parse, retrieve, plan and traverse every case; one record per planner config.

    ``overrides`` maps a case index to forced task picks (fault injection).
    """
    memories = memories or MemoryCache()
    cfg = _resolve([retriever])[0]
    records = []
    for p in planners:
        outs = [_run_case(c, memories(c), cfg, p, repeats, query_kw or {}, True,
                          (overrides or {}).get(k))
                for k, c in enumerate(suite)]
        name = cfg.name if len(planners) == 1 else f"{cfg.name}@{p.name}"
        records.append(_aggregate(name, suite_name, outs, len(suite), True))
    return records


ABLATIONS = ("full", "wo_forest", "wo_topology", "wo_spatial", "wo_neighbor")


def run_ablations(suite: Sequence[BenchmarkCase], variants: Sequence[str] = ABLATIONS,
                  planner: PlannerConfig = PlannerConfig(), repeats: int = 1,
                  suite_name: str = "decoy", memories: MemoryCache | None = None,
                  ) -> list[MetricsRecord]:
    memories = memories or MemoryCache()
    out = []
    for v in variants:
        out.extend(run_navigation_bench(suite, [planner], v, repeats, suite_name, memories))
    return out


# ----------------------------------------------------------------- export

def results_schema() -> dict:
    return json.loads(resources.files("navmem").joinpath("results.schema.json").read_text())


def export_results(records: Sequence[MetricsRecord], path: str | Path, fmt: str | None = None) -> Path:
    """Write records as CSV or JSON (picked from the suffix unless ``fmt`` is given)."""
    if not records:
        raise BenchmarkError("no records to export")
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "json")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS)
            w.writeheader()
            for r in records:
                w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v
                            for k, v in r.to_dict().items()})
    elif fmt == "json":
        doc = {"schema_version": 1, "columns": list(COLUMNS),
               "records": [r.to_dict() for r in records]}
        jsonschema.validate(doc, results_schema())
        path.write_text(json.dumps(doc, indent=2))
    else:
        raise BenchmarkError(f"unknown export format {fmt!r}")
    return path


_INT_COLS = {"n_cases", "n_queries"}
_STR_COLS = {"config", "suite"}


def read_results(path: str | Path) -> list[MetricsRecord]:
    path = Path(path)
    if path.suffix.lower() != ".csv":
        doc = json.loads(path.read_text())
        jsonschema.validate(doc, results_schema())
        return [MetricsRecord(**r) for r in doc["records"]]
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                if k in _STR_COLS:
                    kw[k] = v
                elif k in _INT_COLS:
                    kw[k] = int(v)
                else:
                    kw[k] = None if v == "" else float(v)
            out.append(MetricsRecord(**kw))
    return out


def harness_neutral(suite: Sequence[BenchmarkCase], memories: MemoryCache | None = None) -> bool:
    """The oracle retriever must score 1.0 accuracy and 1.0 success."""
    rec = run_navigation_bench(suite, retriever=ORACLE, memories=memories)[0]
    return rec.top1_accuracy == 1.0 and rec.success_rate == 1.0


__all__ = [
    "ABLATIONS", "BENCH_VOCABULARY", "CLUSTER_THEMES", "COLUMNS", "ORACLE",
    "BenchParams", "BenchmarkCase", "BenchmarkError", "MemoryCache", "MetricsRecord",
    "PlannerConfig", "clustered_memory", "clustered_stream", "export_results",
    "generate_benchmark", "harness_neutral", "lattice", "read_results", "read_suite",
    "results_schema", "run_ablations", "run_navigation_bench", "run_retrieval_bench",
    "start_node", "survey_stream", "validate_case", "write_suite",
]
