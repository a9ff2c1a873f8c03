"""Synthetic scenes and frontier-based exploration.

The simulator replaces a photorealistic environment with a 2D world made of
axis-aligned obstacles and labelled point objects. An agent with an
omnidirectional, occluded disk sensor explores the scene greedily by frontier
and emits one :class:`ObservationRecord` per step.
"""
from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]


class SceneError(ValueError):
    """Invalid scene description or scene file."""


class PlacementError(SceneError):
    """Raised when a scene configuration cannot be realized."""


class InvalidStartError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise SceneError(f"degenerate rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


@dataclass(frozen=True)
class SceneObject:
    id: int
    label: str
    description: str
    x: float
    y: float

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class SceneDescription:
    bounds: Rect
    obstacles: tuple[Rect, ...]
    objects: tuple[SceneObject, ...]
    rng_seed: int = 0

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError("object ids must be unique")
        for o in self.objects:
            if not o.label:
                raise SceneError(f"object {o.id} has an empty label")
            if not self.bounds.contains(o.x, o.y):
                raise SceneError(f"object {o.id} lies outside the scene bounds")
            if self.in_obstacle(o.x, o.y):
                raise SceneError(f"object {o.id} lies inside an obstacle")

    def in_obstacle(self, x: float, y: float) -> bool:
        return any(r.contains(x, y) for r in self.obstacles)

    def is_free(self, x: float, y: float) -> bool:
        return self.bounds.contains(x, y) and not self.in_obstacle(x, y)

    def object(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def to_dict(self) -> dict:
        return {
            "bounds": asdict(self.bounds),
            "obstacles": [asdict(r) for r in self.obstacles],
            "objects": [asdict(o) for o in self.objects],
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneDescription":
        try:
            return cls(
                bounds=Rect(**data["bounds"]),
                obstacles=tuple(Rect(**r) for r in data.get("obstacles", [])),
                objects=tuple(
                    SceneObject(
                        id=int(o["id"]),
                        label=str(o["label"]),
                        description=str(o.get("description", "")),
                        x=float(o["x"]),
                        y=float(o["y"]),
                    )
                    for o in data.get("objects", [])
                ),
                rng_seed=int(data.get("rng_seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise SceneError(f"malformed scene document: {exc}") from exc


def save_scene(scene: SceneDescription, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2))


def load_scene(path: str | Path) -> SceneDescription:
    return SceneDescription.from_dict(json.loads(Path(path).read_text()))


# Small built-in vocabulary; callers can pass their own.
DEFAULT_VOCABULARY: tuple[tuple[str, str], ...] = (
    ("sofa", "grey fabric sofa"),
    ("chair", "wooden dining chair"),
    ("table", "round oak table"),
    ("desk", "white writing desk"),
    ("lamp", "tall floor lamp"),
    ("tv", "flat screen tv"),
    ("remote", "black tv remote"),
    ("bed", "double bed with blanket"),
    ("fridge", "steel fridge"),
    ("sink", "ceramic kitchen sink"),
    ("plant", "potted green plant"),
    ("bookshelf", "tall bookshelf with books"),
    ("cabinet", "metal filing cabinet"),
    ("oven", "electric oven"),
    ("mirror", "oval wall mirror"),
    ("rug", "striped woven rug"),
)


@dataclass
class SceneConfig:
    width: float = 20.0
    height: float = 20.0
    n_objects: int = 8
    n_obstacles: int = 4
    obstacle_size: tuple[int, int] = (1, 4)
    vocabulary: Sequence[tuple[str, str]] = DEFAULT_VOCABULARY
    min_separation: float = 1.0
    require_connected: bool = True
    max_attempts: int = 2000


def generate_scene(config: SceneConfig, seed: int) -> SceneDescription:
    """Sample a random scene.

    Obstacles are snapped to the 1 m lattice so they align with occupancy
    cells. Objects are rejection-sampled to keep ``min_separation`` from each
    other; exhausting ``max_attempts`` raises :class:`PlacementError`.
    """
    if config.n_objects < 0 or config.n_obstacles < 0:
        raise PlacementError("object and obstacle counts must be non-negative")
    if not config.vocabulary and config.n_objects:
        raise PlacementError("empty label vocabulary")
    rng = random.Random(seed)
    bounds = Rect(0.0, 0.0, float(config.width), float(config.height))
    lo, hi = config.obstacle_size
    # upper bound on how many separated objects can fit; rejects hopeless configs early
    cell_area = max(config.min_separation, 1e-9) ** 2
    if config.n_objects * cell_area > config.width * config.height:
        raise PlacementError(
            f"{config.n_objects} objects at separation {config.min_separation} m "
            f"do not fit in {config.width}x{config.height} m"
        )

    for _ in range(config.max_attempts):
        obstacles = []
        for _ in range(config.n_obstacles):
            w, h = rng.randint(lo, hi), rng.randint(lo, hi)
            if w >= config.width or h >= config.height:
                continue
            x0 = rng.randint(0, int(config.width) - w)
            y0 = rng.randint(0, int(config.height) - h)
            obstacles.append(Rect(float(x0), float(y0), float(x0 + w), float(y0 + h)))
        probe = SceneDescription(bounds, tuple(obstacles), ())
        if config.require_connected and not _free_space_connected(probe):
            continue
        objects = _place_objects(probe, config, rng)
        if objects is not None:
            return SceneDescription(bounds, tuple(obstacles), tuple(objects), seed)
    raise PlacementError(
        f"could not place {config.n_objects} objects after {config.max_attempts} attempts"
    )


def _place_objects(scene, config, rng):
    placed: list[SceneObject] = []
    tries = 0
    budget = 200 * max(config.n_objects, 1)
    while len(placed) < config.n_objects:
        tries += 1
        if tries > budget:
            return None
        # keep objects away from the boundary so they sit inside interior cells
        x = rng.uniform(0.25, config.width - 0.25)
        y = rng.uniform(0.25, config.height - 0.25)
        if not scene.is_free(x, y):
            continue
        if any(math.dist((x, y), o.position) < config.min_separation for o in placed):
            continue
        label, desc = config.vocabulary[rng.randrange(len(config.vocabulary))]
        placed.append(SceneObject(len(placed), label, desc, round(x, 3), round(y, 3)))
    return placed


def _free_space_connected(scene: SceneDescription, resolution: float = 1.0) -> bool:
    grid = OccupancyGrid.for_scene(scene, resolution)
    free = ~grid.obstacle_mask(scene)
    cells = list(zip(*np.nonzero(free)))
    if not cells:
        return False
    return len(_flood(free, cells[0], eight=False)) == len(cells)


def two_rooms_scene(objects_per_room: int = 2, seed: int = 0) -> SceneDescription:
    """Two 6x6 m rooms joined by a 1 m wide corridor through a wall."""
    bounds = Rect(0.0, 0.0, 13.0, 6.0)
    obstacles = (Rect(6.0, 0.0, 7.0, 2.0), Rect(6.0, 3.0, 7.0, 6.0))
    rng = random.Random(seed)
    objs = []
    for room, x0 in enumerate((0.5, 7.5)):
        for _ in range(objects_per_room):
            label, desc = DEFAULT_VOCABULARY[rng.randrange(len(DEFAULT_VOCABULARY))]
            objs.append(
                SceneObject(
                    len(objs), label, desc,
                    round(x0 + rng.uniform(0, 4.8), 3), round(rng.uniform(0.5, 5.5), 3),
                )
            )
    return SceneDescription(bounds, obstacles, tuple(objs), seed)


class CellState(IntEnum):
    UNKNOWN = 0
    EXPLORED = 1
    OBSTACLE = 2


@dataclass
class OccupancyGrid:
    """Cells indexed ``[ix, iy]``; cell centres sit at ``origin + (i + 0.5) * resolution``."""

    resolution: float
    origin: Point
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("grid resolution must be positive")
        self.cells = np.asarray(self.cells, dtype=np.int8)

    @classmethod
    def for_scene(cls, scene: SceneDescription, resolution: float = 1.0) -> "OccupancyGrid":
        b = scene.bounds
        nx = max(1, math.ceil(b.width / resolution - 1e-9))
        ny = max(1, math.ceil(b.height / resolution - 1e-9))
        return cls(resolution, (b.xmin, b.ymin), np.zeros((nx, ny), dtype=np.int8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def center(self, ix: int, iy: int) -> Point:
        r = self.resolution
        return (self.origin[0] + (ix + 0.5) * r, self.origin[1] + (iy + 0.5) * r)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        nx, ny = self.shape
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1)

    def obstacle_mask(self, scene: SceneDescription) -> np.ndarray:
        nx, ny = self.shape
        mask = np.zeros((nx, ny), dtype=bool)
        for ix in range(nx):
            for iy in range(ny):
                mask[ix, iy] = scene.in_obstacle(*self.center(ix, iy))
        return mask

    def explored_count(self) -> int:
        return int(np.count_nonzero(self.cells == CellState.EXPLORED))


@dataclass(frozen=True)
class FrontierCluster:
    id: int
    cells: tuple[tuple[int, int], ...]
    centroid: Point


_N4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
_N8 = _N4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def frontier_mask(grid: OccupancyGrid) -> np.ndarray:
    c = grid.cells
    unknown = c == CellState.UNKNOWN
    adj = np.zeros_like(unknown)
    adj[1:, :] |= unknown[:-1, :]
    adj[:-1, :] |= unknown[1:, :]
    adj[:, 1:] |= unknown[:, :-1]
    adj[:, :-1] |= unknown[:, 1:]
    return (c == CellState.EXPLORED) & adj


def detect_frontiers(grid: OccupancyGrid, min_cluster_size: int = 2) -> list[FrontierCluster]:
    """Group frontier cells into 4-connected clusters by BFS.

    Clusters smaller than ``min_cluster_size`` are treated as noise and
    dropped. Cluster ids follow row-major discovery order.
    """
    mask = frontier_mask(grid)
    seen = np.zeros_like(mask)
    clusters = []
    nx, ny = mask.shape
    for ix in range(nx):
        for iy in range(ny):
            if not mask[ix, iy] or seen[ix, iy]:
                continue
            comp = _flood(mask, (ix, iy), eight=False, seen=seen)
            if len(comp) < min_cluster_size:
                continue
            centers = np.array([grid.center(*cell) for cell in comp])
            cx, cy = centers.mean(axis=0)
            clusters.append(FrontierCluster(len(clusters), tuple(comp), (float(cx), float(cy))))
    return clusters


def _flood(mask, start, eight=False, seen=None):
    if seen is None:
        seen = np.zeros_like(mask, dtype=bool)
    nbrs = _N8 if eight else _N4
    nx, ny = mask.shape
    out = [start]
    seen[start] = True
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in nbrs:
            u, v = x + dx, y + dy
            if 0 <= u < nx and 0 <= v < ny and mask[u, v] and not seen[u, v]:
                seen[u, v] = True
                out.append((u, v))
                queue.append((u, v))
    return sorted(out)


def select_next_frontier(frontiers: Sequence[FrontierCluster], current: Point) -> Point | None:
    """Greedy choice: the centroid nearest to ``current``.

    Returns ``None`` when there is nothing left to explore. Ties go to the
    cluster with the smallest id.
    """
    best = _nearest_cluster(frontiers, current)
    return None if best is None else best.centroid


def _nearest_cluster(frontiers, current):
    best, best_d = None, math.inf
    for f in sorted(frontiers, key=lambda f: f.id):
        d = math.dist(current, f.centroid)
        if d < best_d:
            best, best_d = f, d
    return best


@dataclass(frozen=True)
class ObservationRecord:
    t: int
    x: float
    y: float
    heading: float
    obs_token: str
    visible_object_ids: tuple[int, ...] = ()
    z: float = 0.0

    @property
    def position(self) -> Point:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["visible_object_ids"] = list(self.visible_object_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationRecord":
        return cls(
            t=int(d["t"]), x=float(d["x"]), y=float(d["y"]),
            heading=float(d.get("heading", 0.0)),
            obs_token=str(d["obs_token"]),
            visible_object_ids=tuple(int(i) for i in d.get("visible_object_ids", [])),
            z=float(d.get("z", 0.0)),
        )


TOKEN_PREFIX = "objects: "


def make_obs_token(objects: Iterable[SceneObject]) -> str:
    entries = sorted({f"{o.label} ({o.description})" if o.description else o.label for o in objects})
    return TOKEN_PREFIX + ("; ".join(entries) if entries else "none")


def token_entries(token: str) -> list[str]:
    body = token[len(TOKEN_PREFIX):] if token.startswith(TOKEN_PREFIX) else token
    if body.strip() in ("", "none"):
        return []
    return [e.strip() for e in body.split(";") if e.strip()]


def write_stream(records: Iterable[ObservationRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def read_stream(path: str | Path) -> list[ObservationRecord]:
    with open(path) as fh:
        return [ObservationRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class ExploreParams:
    sensor_range: float = 3.0
    resolution: float = 1.0
    max_steps: int = 2000
    min_cluster_size: int = 2


@dataclass
class ExplorationTrace:
    """Everything ``explore`` saw, for replay checks."""

    records: list[ObservationRecord] = field(default_factory=list)
    grids: list[np.ndarray] = field(default_factory=list)
    frontiers: list[list[FrontierCluster]] = field(default_factory=list)
    budget_exhausted: bool = False


class Explorer:
    """Frontier explorer over a :class:`SceneDescription`."""

    def __init__(self, scene: SceneDescription, params: ExploreParams | None = None):
        self.scene = scene
        self.params = params or ExploreParams()
        self.grid = OccupancyGrid.for_scene(scene, self.params.resolution)
        self._blocked = self.grid.obstacle_mask(scene)
        self._object_cells: dict[tuple[int, int], list[SceneObject]] = {}
        for o in scene.objects:
            self._object_cells.setdefault(self.grid.cell_of(o.x, o.y), []).append(o)
        self._offsets = self._sensor_offsets()

    def _sensor_offsets(self):
        r = self.params.sensor_range
        k = int(math.ceil(r / self.params.resolution)) + 1
        return [(dx, dy) for dx in range(-k, k + 1) for dy in range(-k, k + 1)]

    def sense(self, pos: Point) -> set[tuple[int, int]]:
        """Cells inside the sensor disk with an unobstructed line of sight."""
        g = self.grid
        nx, ny = g.shape
        cx, cy = g.cell_of(*pos)
        r = self.params.sensor_range
        visible = {(cx, cy)}
        for dx, dy in self._offsets:
            ix, iy = cx + dx, cy + dy
            if not (0 <= ix < nx and 0 <= iy < ny) or (ix, iy) == (cx, cy):
                continue
            target = g.center(ix, iy)
            if math.dist(pos, target) > r:
                continue
            if self._line_of_sight(pos, target, (ix, iy)):
                visible.add((ix, iy))
        return visible

    def _line_of_sight(self, a: Point, b: Point, target_cell) -> bool:
        g = self.grid
        n = max(2, int(math.ceil(math.dist(a, b) / (0.1 * g.resolution))))
        for k in range(1, n):
            s = k / n
            cell = g.cell_of(a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]))
            if cell != target_cell and self._blocked[cell]:
                return False
        return True

    def update(self, visible: set[tuple[int, int]]) -> None:
        for cell in visible:
            if self.grid.cells[cell] == CellState.UNKNOWN:
                self.grid.cells[cell] = (
                    CellState.OBSTACLE if self._blocked[cell] else CellState.EXPLORED
                )

    def visible_objects(self, visible: set[tuple[int, int]]) -> list[SceneObject]:
        out = []
        for cell in visible:
            out.extend(self._object_cells.get(cell, ()))
        return sorted(out, key=lambda o: o.id)

    def _reachable(self, start_cell):
        free = self.grid.cells == CellState.EXPLORED
        if not free[start_cell]:
            return set()
        return set(_flood(free, start_cell, eight=True))

    def _path(self, start_cell, goal_cell) -> list[tuple[int, int]]:
        """8-connected BFS over explored cells; excludes the start, ends at the goal."""
        free = self.grid.cells == CellState.EXPLORED
        nx, ny = free.shape
        parent = {start_cell: None}
        queue = deque([start_cell])
        while queue:
            u = queue.popleft()
            if u == goal_cell:
                break
            for dx, dy in _N8:
                v = (u[0] + dx, u[1] + dy)
                if 0 <= v[0] < nx and 0 <= v[1] < ny and free[v] and v not in parent:
                    parent[v] = u
                    queue.append(v)
        path = []
        u = goal_cell
        while u is not None and u != start_cell:
            path.append(u)
            u = parent[u]
        return path[::-1]

    def _choose_goal(self, pos):
        p = self.params
        frontiers = detect_frontiers(self.grid, p.min_cluster_size)
        reach = self._reachable(self.grid.cell_of(*pos))
        target = _nearest_cluster(
            [f for f in frontiers if any(c in reach for c in f.cells)], pos)
        if target is None and p.min_cluster_size > 1:
            # noise clusters are deferred, not abandoned: sweep them up last
            small = detect_frontiers(self.grid, 1)
            target = _nearest_cluster(
                [f for f in small if any(c in reach for c in f.cells)], pos)
        if target is None:
            return None
        # head for the reachable frontier cell closest to the chosen centroid
        return min((c for c in target.cells if c in reach),
                   key=lambda c: (math.dist(self.grid.center(*c), target.centroid), c))

    def run(self, start: Point) -> ExplorationTrace:
        """Sense, update, pick a frontier goal and advance one cell per step.

        The agent keeps its goal until it arrives or the goal cell stops
        being a frontier, so consecutive poses are at most one diagonal apart.
        """
        if not self.scene.is_free(*start):
            raise InvalidStartError(f"start {start} is outside free space")
        p = self.params
        trace = ExplorationTrace()
        pos, heading = (float(start[0]), float(start[1])), 0.0
        goal, path = None, []
        for t in range(p.max_steps):
            visible = self.sense(pos)
            self.update(visible)
            objs = self.visible_objects(visible)
            trace.records.append(
                ObservationRecord(t, pos[0], pos[1], heading, make_obs_token(objs),
                                  tuple(o.id for o in objs))
            )
            trace.grids.append(self.grid.cells.copy())
            trace.frontiers.append(detect_frontiers(self.grid, p.min_cluster_size))
            here = self.grid.cell_of(*pos)
            if goal is None or goal == here or not frontier_mask(self.grid)[goal] or not path:
                goal = self._choose_goal(pos)
                if goal is None:
                    return trace
                path = self._path(here, goal)
            if not path:
                # goal is the current cell but the pose is off-centre: snap to it
                nxt = self.grid.center(*goal)
            else:
                nxt = self.grid.center(*path.pop(0))
            if nxt != pos:
                heading = math.atan2(nxt[1] - pos[1], nxt[0] - pos[0])
            pos = nxt
        trace.budget_exhausted = True
        return trace


def explore(scene: SceneDescription, start: Point,
            params: ExploreParams | None = None) -> list[ObservationRecord]:
    """Run frontier exploration from ``start`` and return the observation stream."""
    return Explorer(scene, params).run(start).records
