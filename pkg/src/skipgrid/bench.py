"""Benchmark harness comparing the skip list map against baselines.

Measures integration, full visit, 2D extraction, and radius search
across structures and resolutions, plus a skip list depth sweep. Rows
go to CSV with the run configuration embedded for reproducibility.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .baselines import DenseGrid, ReferenceOctree, measure_map_memory
from .core import MapConfig, VoxelGrid
from .fusion import OccupancySample
from .ground import occupancy_grid
from .scenes import make_scene

CSV_COLUMNS = ("structure", "operation", "scene", "resolution",
               "points", "time_us", "bytes")

DEFAULT_RESOLUTIONS = (0.05, 0.1, 0.2)
DEFAULT_DEPTHS = (4, 8, 16, 32, 64)


@dataclass
class BenchRow:
    structure: str
    operation: str
    scene: str
    resolution: float
    points: int
    time_us: float
    bytes: float

    def as_csv(self) -> str:
        return (
            f"{self.structure},{self.operation},{self.scene},"
            f"{self.resolution:g},{self.points},{self.time_us:.1f},"
            f"{self.bytes:.0f}"
        )


def _timed(fn: Callable[[], object]) -> float:
    start = time.perf_counter()
    fn()
    return (time.perf_counter() - start) * 1e6


def _query_centers(cloud: np.ndarray, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return cloud[rng.choice(len(cloud), size=count, replace=False)]


def run_bench(
    scene: str = "corridor",
    points: int = 20000,
    resolutions: Sequence[float] = DEFAULT_RESOLUTIONS,
    depths: Sequence[int] = DEFAULT_DEPTHS,
    depth_sweep_resolution: float = 0.05,
    radius: float = 0.3,
    radius_queries: int = 10,
    workers: int = 1,
    seed: int = 0,
) -> list[BenchRow]:
    """Run every suite and return the result rows."""
    cloud = make_scene(scene, points, seed=seed)
    sample = OccupancySample(1.0, 1.0)
    centers = _query_centers(cloud, radius_queries, seed + 1)
    rows: list[BenchRow] = []

    def add(structure: str, operation: str, resolution: float,
            time_us: float, nbytes: float) -> None:
        rows.append(BenchRow(structure, operation, scene, resolution,
                             points, time_us, nbytes))

    for res in resolutions:
        grid = VoxelGrid(MapConfig(resolution=res, workers=workers, seed=seed))
        t = _timed(lambda: grid.integrate_batch(cloud, sample, workers=workers))
        grid_bytes = measure_map_memory(grid).total_bytes
        add("skipgrid", "integrate", res, t, grid_bytes)
        add("skipgrid", "visit", res,
            _timed(lambda: grid.visit_all(lambda k, p: None)), grid_bytes)
        add("skipgrid", "visit2d", res,
            _timed(lambda: occupancy_grid(grid)), grid_bytes)
        t = _timed(lambda: [grid.radius_search(c, radius) for c in centers])
        add("skipgrid", "radius", res, t / len(centers), grid_bytes)
        add("skipgrid", "memory", res, 0.0, grid_bytes)

        dense = DenseGrid.covering(res, cloud)
        t = _timed(lambda: dense.integrate_points(cloud, sample))
        dense_bytes = dense.nominal_bytes()
        add("dense", "integrate", res, t, dense_bytes)
        add("dense", "visit", res,
            _timed(lambda: sum(1 for _ in dense.occupied())), dense_bytes)
        # a dense grid has no 2D shortcut: project by visiting everything
        add("dense", "visit2d", res,
            _timed(lambda: {(k.ix, k.iy) for k, _ in dense.occupied()}),
            dense_bytes)
        t = _timed(lambda: [dense.radius_search(c, radius) for c in centers])
        add("dense", "radius", res, t / len(centers), dense_bytes)
        add("dense", "memory", res, 0.0, dense_bytes)

        octree = ReferenceOctree(res)
        t = _timed(lambda: octree.integrate_points(cloud, sample))
        oct_bytes = octree.nominal_bytes()
        add("octree", "integrate", res, t, oct_bytes)
        add("octree", "visit", res, _timed(octree.visit_all), oct_bytes)
        # octrees must also visit every voxel to project a 2D view
        add("octree", "visit2d", res,
            _timed(lambda: {(k.ix, k.iy) for k, _ in octree.occupied_leaves()}),
            oct_bytes)
        t = _timed(lambda: [octree.radius_search(c, radius) for c in centers])
        add("octree", "radius", res, t / len(centers), oct_bytes)
        add("octree", "memory", res, 0.0, oct_bytes)

    for depth in depths:
        cfg = MapConfig(
            resolution=depth_sweep_resolution,
            depth_x=depth, depth_y=depth, depth_z=depth,
            workers=workers, seed=seed,
        )
        grid = VoxelGrid(cfg)
        t = _timed(lambda: grid.integrate_batch(cloud, sample, workers=workers))
        nbytes = measure_map_memory(grid).total_bytes
        name = f"skipgrid-d{depth}"
        add(name, "integrate", depth_sweep_resolution, t, nbytes)
        add(name, "visit", depth_sweep_resolution,
            _timed(lambda: grid.visit_all(lambda k, p: None)), nbytes)
        add(name, "memory", depth_sweep_resolution, 0.0, nbytes)

    return rows


def write_csv(path: str, rows: Sequence[BenchRow], config: dict) -> None:
    """CSV report with the run configuration embedded as a comment."""
    with open(path, "w", encoding="ascii") as f:
        f.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        f.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            f.write(row.as_csv() + "\n")
