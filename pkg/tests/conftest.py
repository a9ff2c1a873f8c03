import math

import numpy as np
import pytest

from navmem.env_sim import CellState, ObservationRecord
from navmem.memory import MemoryParams, build_memory


def token(*entries: str) -> str:
    return "objects: " + ("; ".join(sorted(entries)) if entries else "none")


def stream(items):
    """``items``: iterable of (x, y, [entries...])."""
    return [ObservationRecord(t, float(x), float(y), 0.0, token(*ents))
            for t, (x, y, ents) in enumerate(items)]


def memory_of(items, **params):
    return build_memory(stream(items), MemoryParams(**params))


def random_memory(rng: np.random.Generator, n: int, extent: float = 20.0,
                  vocab=("sofa", "chair", "table", "lamp", "desk", "tv", "plant", "sink"),
                  **params):
    items = []
    for _ in range(n):
        k = int(rng.integers(0, 3))
        ents = sorted({str(rng.choice(vocab)) + f" (item {int(rng.integers(0, 5))})"
                       for _ in range(k)})
        items.append((float(rng.uniform(0, extent)), float(rng.uniform(0, extent)), ents))
    params.setdefault("dedup_radius", 0.0)
    return memory_of(items, **params)


def floyd_warshall(n, weighted_edges):
    d = np.full((n, n), math.inf)
    np.fill_diagonal(d, 0.0)
    for i, j, w in weighted_edges:
        d[i, j] = min(d[i, j], w)
        d[j, i] = min(d[j, i], w)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def brute_frontiers(cells: np.ndarray, min_size: int = 1):
    """Independent frontier definition: explored cell with an unknown 4-neighbour,
    grouped with union-find rather than a BFS queue."""
    nx, ny = cells.shape
    front = set()
    for x in range(nx):
        for y in range(ny):
            if cells[x, y] != CellState.EXPLORED:
                continue
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                u, v = x + dx, y + dy
                if 0 <= u < nx and 0 <= v < ny and cells[u, v] == CellState.UNKNOWN:
                    front.add((x, y))
    parent = {c: c for c in front}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for x, y in front:
        for nb in ((x + 1, y), (x, y + 1)):
            if nb in front:
                parent[find(nb)] = find((x, y))
    groups: dict = {}
    for c in front:
        groups.setdefault(find(c), set()).add(c)
    return {frozenset(g) for g in groups.values() if len(g) >= min_size}


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
