"""Ground-plane detection, point classification, and 2D map extraction.

The dominant plane of the first frame is fitted by random sample
consensus and becomes the ground. A rigid "zero frame" maps the world
so that plane sits at z = 0 with the origin at the floor centroid.
Points classified as ground update only y-level tiles (tree depth 2);
obstacle points become voxels at depth 3. The 2D occupancy grid is
then extracted by visiting columns only, never touching z lists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Placement, TileData, VoxelGrid, WorkspaceBoundsError
from .fusion import OccupancySample
from .posegraph import Pose

FREE = 255
OCCUPIED = 0
UNKNOWN = 127

DEFAULT_MIN_INLIERS = 500
DEFAULT_INLIER_THRESHOLD = 0.02
DEFAULT_CONFIDENCE = 0.99
MAX_RANSAC_ITERATIONS = 1000


class GroundDetectionError(RuntimeError):
    """No plane with enough inlier support was found in the frame."""


class PointLabel:
    GROUND = "ground"
    OBSTACLE = "obstacle"


@dataclass(frozen=True)
class GroundModel:
    """Fitted ground plane and the transform that levels it.

    The plane satisfies normal . x = offset with a unit normal oriented
    toward the sensor. zero_frame maps world points into a frame whose
    z = 0 plane is the ground and whose origin is the inlier centroid.
    """

    normal: np.ndarray
    offset: float
    zero_frame: Pose
    inlier_threshold: float
    inlier_count: int

    def height_of(self, points: np.ndarray) -> np.ndarray:
        """Signed height above the plane after leveling (z in zero frame)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.zero_frame.apply(pts)[2]
        return self.zero_frame.apply(pts)[:, 2]


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares plane through points: (unit normal, centroid)."""
    centroid = points.mean(axis=0)
    cov = np.cov((points - centroid).T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    normal = eigvecs[:, 0]  # smallest eigenvalue -> plane normal
    return normal / np.linalg.norm(normal), centroid


def detect_ground(
    points: np.ndarray,
    min_inliers: int = DEFAULT_MIN_INLIERS,
    inlier_threshold: float = DEFAULT_INLIER_THRESHOLD,
    confidence: float = DEFAULT_CONFIDENCE,
    sensor_origin: Sequence[float] = (0.0, 0.0, 0.0),
    seed: int = 0,
) -> GroundModel:
    """Find the dominant plane of a frame by consensus fitting.

    Iteration count follows the standard success-probability bound and
    shrinks as better inlier ratios are found. The winning consensus
    set is refined with a least-squares fit. Raises
    GroundDetectionError when no plane reaches min_inliers support.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n_pts = len(pts)
    if n_pts < max(3, min_inliers):
        raise GroundDetectionError(
            f"{n_pts} points cannot support a plane of {min_inliers} inliers"
        )

    rng = np.random.default_rng(seed)
    best_count = 0
    best_mask: Optional[np.ndarray] = None
    max_iter = MAX_RANSAC_ITERATIONS
    i = 0
    while i < max_iter:
        i += 1
        a, b, c = pts[rng.choice(n_pts, 3, replace=False)]
        normal = np.cross(b - a, c - a)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        dist = np.abs(pts @ normal - normal @ a)
        mask = dist <= inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            ratio = count / n_pts
            if 0 < ratio < 1:
                needed = math.log(1.0 - confidence) / math.log(1.0 - ratio**3)
                max_iter = min(MAX_RANSAC_ITERATIONS, max(32, math.ceil(needed)))
            elif ratio >= 1:
                break

    if best_mask is None or best_count < min_inliers:
        raise GroundDetectionError(
            f"best plane has {best_count} inliers, below {min_inliers}"
        )

    # refine on the consensus set, then re-collect inliers once
    normal, centroid = _fit_plane(pts[best_mask])
    dist = np.abs(pts @ normal - normal @ centroid)
    mask = dist <= inlier_threshold
    if int(mask.sum()) >= best_count:
        normal, centroid = _fit_plane(pts[mask])
        best_mask = np.abs(pts @ normal - normal @ centroid) <= inlier_threshold

    inliers = pts[best_mask]
    centroid = inliers.mean(axis=0)
    # z axis points from the floor toward the sensor
    if normal @ (np.asarray(sensor_origin, dtype=np.float64) - centroid) < 0:
        normal = -normal

    # orthonormal basis with the plane normal as the new z axis
    helper = np.array([1.0, 0.0, 0.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, normal)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    R = np.vstack([u, v, normal])
    zero_frame = Pose(R, -(R @ centroid))

    return GroundModel(
        normal=normal,
        offset=float(normal @ centroid),
        zero_frame=zero_frame,
        inlier_threshold=inlier_threshold,
        inlier_count=int(best_mask.sum()),
    )


def classify(model: GroundModel, point: Sequence[float], band: float) -> str:
    """Label one world-frame point as ground or obstacle."""
    z = model.height_of(np.asarray(point, dtype=np.float64))
    return PointLabel.GROUND if abs(z) <= band else PointLabel.OBSTACLE


def classify_points(
    model: GroundModel, points: np.ndarray, band: float
) -> np.ndarray:
    """Boolean ground mask for an (N, 3) array of world-frame points."""
    return np.abs(model.height_of(points)) <= band


def integrate_classified(
    grid: VoxelGrid,
    points: np.ndarray,
    samples: Sequence[OccupancySample] | OccupancySample,
    model: GroundModel,
    band: Optional[float] = None,
    ceiling: Optional[float] = None,
    min_hits: int = 3,
) -> Placement:
    """Integrate a world-frame cloud with ground/obstacle separation.

    Points are first leveled by the model's zero frame, so the grid
    lives in ground-aligned coordinates. Ground points update tiles
    only; obstacle points become voxels unless they sit above the
    optional ceiling. The returned placement records every action for
    exact later erosion.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    band = 2.0 * grid.resolution if band is None else band
    aligned = model.zero_frame.apply(pts)
    heights = aligned[:, 2]
    ground_mask = np.abs(heights) <= band
    broadcast = isinstance(samples, OccupancySample)
    skip_oob = grid.config.oob_policy == "skip"

    placement = Placement()
    for i, p in enumerate(aligned):
        sample = samples if broadcast else samples[i]
        try:
            if ground_mask[i]:
                key = grid.quantize(p)
                grid.add_ground_hit(
                    key.ix, key.iy, float(heights[i]), sample.weight,
                    min_hits=min_hits,
                )
                placement.tile_actions.append(
                    (key.ix, key.iy, float(heights[i]), sample.weight)
                )
            else:
                if ceiling is not None and heights[i] > ceiling:
                    placement.dropped += 1
                    continue
                key = grid.integrate_point(p, sample)
                placement.voxel_actions.append((key, sample))
        except WorkspaceBoundsError:
            if not skip_oob:
                raise
            placement.dropped += 1
    return placement


@dataclass
class GroundIntegrator:
    """Bundles a ground model with classification and cutoff settings.

    Plugs into PoseHistory as its per-frame integrator, so pose-driven
    re-integration uses the same ground/obstacle split.
    """

    model: GroundModel
    band: Optional[float] = None
    ceiling: Optional[float] = None
    min_hits: int = 3

    def integrate(
        self,
        grid: VoxelGrid,
        points: np.ndarray,
        samples: Sequence[OccupancySample] | OccupancySample,
    ) -> Placement:
        return integrate_classified(
            grid, points, samples, self.model,
            band=self.band, ceiling=self.ceiling, min_hits=self.min_hits,
        )


# -- 2D extraction -------------------------------------------------------------

def occupancy_grid(grid: VoxelGrid) -> tuple[np.ndarray, tuple[int, int]]:
    """2D occupancy image from a column-only visit (tree depth 2).

    A column with any voxels is occupied; a tile-only column is free;
    everything else in the bounding box is unknown. Returns the image
    (row 0 = greatest y index) and the (min ix, min iy) origin.
    """
    cells: list[tuple[int, int, int]] = []

    def visit(ix: int, iy: int, column) -> None:
        if column.voxel_count > 0:
            cells.append((ix, iy, OCCUPIED))
        elif column.tile is not None and column.tile.hits > 0:
            cells.append((ix, iy, FREE))

    grid.visit_2d(visit)
    return _rasterize(cells)


def projection_grid(grid: VoxelGrid) -> tuple[np.ndarray, tuple[int, int]]:
    """Oracle image: project every voxel to (ix, iy), then add tile cells.

    Walks all three tree levels; used to validate occupancy_grid.
    """
    occupied: set[tuple[int, int]] = set()
    for key, _ in grid.iter_voxels():
        occupied.add((key.ix, key.iy))
    cells = [(ix, iy, OCCUPIED) for ix, iy in occupied]
    for ix, iy, column in grid.iter_columns():
        if (ix, iy) in occupied:
            continue
        if column.tile is not None and column.tile.hits > 0:
            cells.append((ix, iy, FREE))
    return _rasterize(cells)


def _rasterize(
    cells: list[tuple[int, int, int]]
) -> tuple[np.ndarray, tuple[int, int]]:
    if not cells:
        return np.empty((0, 0), dtype=np.uint8), (0, 0)
    xs = [c[0] for c in cells]
    ys = [c[1] for c in cells]
    min_ix, max_ix = min(xs), max(xs)
    min_iy, max_iy = min(ys), max(ys)
    image = np.full(
        (max_iy - min_iy + 1, max_ix - min_ix + 1), UNKNOWN, dtype=np.uint8
    )
    for ix, iy, value in cells:
        image[max_iy - iy, ix - min_ix] = value
    return image, (min_ix, min_iy)


def tile_height_map(grid: VoxelGrid) -> dict[tuple[int, int], float]:
    """Mean ground height per tile, from a column-only visit."""
    heights: dict[tuple[int, int], float] = {}

    def visit(ix: int, iy: int, column) -> None:
        tile: Optional[TileData] = column.tile
        if tile is not None and tile.mean_height is not None:
            heights[(ix, iy)] = tile.mean_height

    grid.visit_2d(visit)
    return heights


def write_occupancy_grid(
    pgm_path: str,
    meta_path: str,
    image: np.ndarray,
    origin_key: tuple[int, int],
    resolution: float,
) -> None:
    """Write the grid as ASCII PGM plus a YAML metadata sidecar."""
    import yaml

    h, w = image.shape if image.size else (0, 0)
    with open(pgm_path, "w", encoding="ascii") as f:
        f.write(f"P2\n{w} {h}\n255\n")
        for row in image:
            f.write(" ".join(str(int(v)) for v in row) + "\n")
    meta = {
        "image": pgm_path,
        "resolution": float(resolution),
        "origin": [origin_key[0] * resolution, origin_key[1] * resolution, 0.0],
        "width": int(w),
        "height": int(h),
        "row_order": "top row holds the greatest y index",
        "encoding": {"free": FREE, "occupied": OCCUPIED, "unknown": UNKNOWN},
    }
    with open(meta_path, "w", encoding="ascii") as f:
        yaml.safe_dump(meta, f, sort_keys=False)
