"""Sparse voxel grid stored as three nested levels of skip lists.

The root list is keyed by quantized x index; each entry holds a list
keyed by y index; each of those holds an optional 2D ground tile plus a
list of voxels keyed by z index. A voxel's coordinates are recovered
from its ancestors' keys, so nodes store only payloads.

Updates touching different root branches never share memory, which lets
batch integration partition a point cloud by x index and process the
partitions concurrently with no locks.
"""
from __future__ import annotations

import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .fusion import OccupancySample, OccupancyVoxel
from .skiplist import DEFAULT_MAX_LEVEL, OpCounter, SkipList

KEY_MIN = -32768
KEY_MAX = 32767

# A metric coordinate exactly on a voxel boundary can land one ulp below
# the true quotient; snap quotients this close to the next integer up.
_SNAP_REL = 1e-10

_AXES = ("x", "y", "z")


class WorkspaceBoundsError(ValueError):
    """A coordinate quantizes outside the addressable index range."""


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int


def _snap_floor(q: float) -> int:
    k = math.floor(q)
    if (k + 1) - q <= _SNAP_REL * max(1.0, abs(q)):
        k += 1
    return k


def quantize(point: Sequence[float], resolution: float) -> VoxelKey:
    """Map a metric point to its voxel key: floor(coord / resolution).

    Floor rounds toward -inf, so negative coordinates get negative
    indexes. Out-of-range coordinates raise WorkspaceBoundsError naming
    the offending axis.
    """
    out = []
    for axis, c in zip(_AXES, point):
        k = _snap_floor(c / resolution)
        if k < KEY_MIN or k > KEY_MAX:
            raise WorkspaceBoundsError(
                f"{axis} coordinate {c} quantizes to index {k}, outside "
                f"[{KEY_MIN}, {KEY_MAX}] at resolution {resolution}"
            )
        out.append(k)
    return VoxelKey(*out)


def quantize_points(
    points: np.ndarray, resolution: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized quantize: (N, 3) floats -> ((N, 3) int64, in-bounds mask).

    Uses the same floor-and-snap arithmetic as quantize(), so scalar and
    batch paths agree bit for bit.
    """
    q = np.asarray(points, dtype=np.float64) / resolution
    k = np.floor(q)
    snap = (k + 1.0 - q) <= _SNAP_REL * np.maximum(1.0, np.abs(q))
    keys = (k + snap).astype(np.int64)
    in_bounds = ((keys >= KEY_MIN) & (keys <= KEY_MAX)).all(axis=1)
    return keys, in_bounds


def voxel_center(key: Sequence[int], resolution: float) -> tuple[float, float, float]:
    """Metric center of a voxel: (index + 0.5) * resolution per axis."""
    return (
        (key[0] + 0.5) * resolution,
        (key[1] + 0.5) * resolution,
        (key[2] + 0.5) * resolution,
    )


@dataclass(frozen=True)
class MapConfig:
    """Grid construction parameters.

    With 16-bit indexes the addressable span per axis is 65536 * resolution
    (655.36 m at 1 cm). Skip list depth defaults to 8 on all three axes;
    deeper lists trade memory for little extra speed.
    """

    resolution: float
    depth_x: int = DEFAULT_MAX_LEVEL
    depth_y: int = DEFAULT_MAX_LEVEL
    depth_z: int = DEFAULT_MAX_LEVEL
    workers: int = 1
    seed: int = 0
    oob_policy: str = "raise"  # "raise" or "skip" (batch: skip and count)

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        for name in ("depth_x", "depth_y", "depth_z"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.oob_policy not in ("raise", "skip"):
            raise ValueError(f"unknown oob_policy {self.oob_policy!r}")

    @property
    def extent(self) -> float:
        return (KEY_MAX - KEY_MIN + 1) * self.resolution


class TileData:
    """Per-column ground summary stored at the y level.

    Accumulates ground hits and their heights; a tile becomes navigable
    once it has collected at least ``min_hits`` hits (set by the caller).
    """

    __slots__ = ("hits", "height_sum", "height_weight", "navigable")

    nominal_bytes = 24  # hits u32 + two f64 + flag, padded

    def __init__(self) -> None:
        self.hits = 0
        self.height_sum = 0.0
        self.height_weight = 0.0
        self.navigable = False

    @property
    def mean_height(self) -> Optional[float]:
        if self.height_weight <= 0.0:
            return None
        return self.height_sum / self.height_weight

    def dump(self) -> str:
        return (
            f"{self.hits} {self.height_sum:.9g} {self.height_weight:.9g} "
            f"{int(self.navigable)}"
        )

    @classmethod
    def parse(cls, text: str) -> "TileData":
        parts = text.split()
        if len(parts) != 4:
            raise ValueError(f"expected 'hits sum weight flag', got {text!r}")
        tile = cls()
        tile.hits = int(parts[0])
        tile.height_sum = float(parts[1])
        tile.height_weight = float(parts[2])
        tile.navigable = bool(int(parts[3]))
        return tile


class Column:
    """y-level node: optional ground tile plus the z list of voxels."""

    __slots__ = ("tile", "voxels")

    def __init__(self, voxels: SkipList) -> None:
        self.tile: Optional[TileData] = None
        self.voxels = voxels

    @property
    def voxel_count(self) -> int:
        # plain attribute read; does not traverse the z list
        return self.voxels.count


@dataclass
class IntegrationReport:
    created: int = 0
    updated: int = 0
    skipped_oob: int = 0


@dataclass
class Placement:
    """Record of the concrete map actions one measurement frame produced.

    Replaying the record inversely removes the frame's contribution
    exactly, no matter how poses or classifications have moved since.
    """

    voxel_actions: list[tuple[VoxelKey, OccupancySample]] = field(
        default_factory=list
    )
    tile_actions: list[tuple[int, int, float, float]] = field(
        default_factory=list
    )
    dropped: int = 0

    @property
    def writes(self) -> int:
        return len(self.voxel_actions) + len(self.tile_actions)


def erode_placement(
    grid: "VoxelGrid", placement: Placement, min_hits: int = 3
) -> None:
    """Remove a recorded contribution from the map, voxel by voxel."""
    for key, sample in placement.voxel_actions:
        grid.erode_key(key, sample)
    for ix, iy, height, weight in placement.tile_actions:
        grid.remove_ground_hit(ix, iy, height, weight, min_hits=min_hits)


def _derived_rng(seed: int, tag: str, *parts: int) -> random.Random:
    """Deterministic per-list RNG, independent of list creation order."""
    return random.Random(repr((seed, tag) + parts).encode())


class VoxelGrid:
    """Sparse 3D map over nested skip lists with weighted payloads."""

    def __init__(
        self,
        config: MapConfig,
        payload_type: type = OccupancyVoxel,
    ) -> None:
        self.config = config
        self.payload_type = payload_type
        self.resolution = config.resolution
        self.z_ops = OpCounter()
        self._root = SkipList(
            config.depth_x, rng=_derived_rng(config.seed, "x")
        )
        self._voxel_count = 0
        self._tile_count = 0
        self.clamped_searches = 0

    # -- indexing ----------------------------------------------------------

    def quantize(self, point: Sequence[float]) -> VoxelKey:
        return quantize(point, self.resolution)

    def voxel_center(self, key: Sequence[int]) -> tuple[float, float, float]:
        return voxel_center(key, self.resolution)

    # -- structure helpers -------------------------------------------------

    def _ylist(self, ix: int, create: bool) -> Optional[SkipList]:
        if create:
            node, _ = self._root.insert_or_get(
                ix,
                lambda: SkipList(
                    self.config.depth_y,
                    rng=_derived_rng(self.config.seed, "y", ix),
                ),
            )
            return node.value
        node = self._root.find(ix)
        return node.value if node is not None else None

    def _column(self, ix: int, iy: int, create: bool) -> Optional[Column]:
        ylist = self._ylist(ix, create)
        if ylist is None:
            return None
        if create:
            node, _ = ylist.insert_or_get(
                iy,
                lambda: Column(
                    SkipList(
                        self.config.depth_z,
                        rng=_derived_rng(self.config.seed, "z", ix, iy),
                        ops=self.z_ops,
                    )
                ),
            )
            return node.value
        node = ylist.find(iy)
        return node.value if node is not None else None

    def _prune_if_empty(self, ix: int, iy: int) -> None:
        """Drop an empty column, then its branch if that empties too."""
        xnode = self._root.find(ix)
        if xnode is None:
            return
        ylist: SkipList = xnode.value
        ynode = ylist.find(iy)
        if ynode is None:
            return
        column: Column = ynode.value
        if column.voxels.count == 0 and column.tile is None:
            ylist.remove(iy)
        if ylist.count == 0:
            self._root.remove(ix)

    # -- single-voxel operations --------------------------------------------

    def fuse_key(self, key: Sequence[int], sample: OccupancySample) -> bool:
        """Fuse a sample into the voxel at ``key``; True if newly created."""
        column = self._column(key[0], key[1], create=True)
        node, created = column.voxels.insert_or_get(
            key[2], self.payload_type.empty
        )
        node.value = node.value.fuse(sample)
        if created:
            self._voxel_count += 1
        return created

    def erode_key(self, key: Sequence[int], sample: OccupancySample) -> bool:
        """Erode a sample; True if the voxel drained and was removed.

        Raises KeyError if the voxel does not exist and lets
        ErosionUnderflowError from the payload propagate.
        """
        column = self._column(key[0], key[1], create=False)
        node = column.voxels.find(key[2]) if column is not None else None
        if node is None:
            raise KeyError(f"no voxel at {tuple(key)}")
        result = node.value.erode(sample)
        if result is None:
            column.voxels.remove(key[2])
            self._voxel_count -= 1
            self._prune_if_empty(key[0], key[1])
            return True
        node.value = result
        return False

    def integrate_point(
        self, point: Sequence[float], sample: OccupancySample
    ) -> VoxelKey:
        """Quantize one point and fuse the sample into its voxel."""
        key = self.quantize(point)
        self.fuse_key(key, sample)
        return key

    def get_voxel(self, key: Sequence[int]) -> Optional[Any]:
        """Payload at ``key`` iff all three nested lookups hit."""
        column = self._column(key[0], key[1], create=False)
        if column is None:
            return None
        node = column.voxels.find(key[2])
        return node.value if node is not None else None

    def remove_voxel(self, key: Sequence[int]) -> bool:
        """Delete the voxel and prune emptied ancestors."""
        column = self._column(key[0], key[1], create=False)
        if column is None:
            return False
        if not column.voxels.remove(key[2]):
            return False
        self._voxel_count -= 1
        self._prune_if_empty(key[0], key[1])
        return True

    # -- ground tiles --------------------------------------------------------

    def add_ground_hit(
        self,
        ix: int,
        iy: int,
        height: float,
        weight: float = 1.0,
        min_hits: int = 3,
    ) -> TileData:
        """Record a ground point on the (ix, iy) tile; never touches z."""
        column = self._column(ix, iy, create=True)
        if column.tile is None:
            column.tile = TileData()
            self._tile_count += 1
        tile = column.tile
        tile.hits += 1
        tile.height_sum += height * weight
        tile.height_weight += weight
        tile.navigable = tile.hits >= min_hits
        return tile

    def remove_ground_hit(
        self,
        ix: int,
        iy: int,
        height: float,
        weight: float = 1.0,
        min_hits: int = 3,
    ) -> bool:
        """Invert add_ground_hit; True if the tile drained away."""
        column = self._column(ix, iy, create=False)
        if column is None or column.tile is None:
            raise KeyError(f"no tile at ({ix}, {iy})")
        tile = column.tile
        tile.hits -= 1
        tile.height_sum -= height * weight
        tile.height_weight -= weight
        if tile.hits <= 0:
            column.tile = None
            self._tile_count -= 1
            self._prune_if_empty(ix, iy)
            return True
        tile.navigable = tile.hits >= min_hits
        return False

    def get_tile(self, ix: int, iy: int) -> Optional[TileData]:
        column = self._column(ix, iy, create=False)
        return column.tile if column is not None else None

    # -- batch integration ---------------------------------------------------

    def integrate_batch(
        self,
        points: np.ndarray,
        samples: OccupancySample | Sequence[OccupancySample] = OccupancySample(1.0, 1.0),
        workers: Optional[int] = None,
    ) -> IntegrationReport:
        """Integrate a cloud, partitioned by x index across workers.

        Each partition touches only its own root branch, so partitions
        are independent; the result is identical to sequential
        integration of the same cloud regardless of worker count.
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"expected (N, 3) points, got {points.shape}")
        workers = self.config.workers if workers is None else workers
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")

        keys, in_bounds = quantize_points(points, self.resolution)
        report = IntegrationReport()
        if not in_bounds.all():
            if self.config.oob_policy == "raise":
                i = int(np.flatnonzero(~in_bounds)[0])
                # re-run the scalar path for the precise axis message
                quantize(points[i], self.resolution)
                raise WorkspaceBoundsError(f"point {i} out of bounds")
            report.skipped_oob = int((~in_bounds).sum())

        broadcast = isinstance(samples, OccupancySample)
        rows_by_ix: dict[int, list[int]] = {}
        for i in np.flatnonzero(in_bounds):
            rows_by_ix.setdefault(int(keys[i, 0]), []).append(int(i))

        # Root-level inserts share the root list, so branches are
        # allocated serially before the parallel phase.
        branches = [
            (self._ylist(ix, create=True), ix, rows)
            for ix, rows in rows_by_ix.items()
        ]

        def run_branch(job: tuple[SkipList, int, list[int]]) -> tuple[int, int]:
            ylist, ix, rows = job
            created = updated = 0
            empty = self.payload_type.empty
            depth_z = self.config.depth_z
            seed = self.config.seed
            for i in rows:
                iy = int(keys[i, 1])
                ynode, _ = ylist.insert_or_get(
                    iy,
                    lambda: Column(
                        SkipList(
                            depth_z,
                            rng=_derived_rng(seed, "z", ix, iy),
                            ops=self.z_ops,
                        )
                    ),
                )
                znode, was_new = ynode.value.voxels.insert_or_get(
                    int(keys[i, 2]), empty
                )
                sample = samples if broadcast else samples[i]
                znode.value = znode.value.fuse(sample)
                if was_new:
                    created += 1
                else:
                    updated += 1
            return created, updated

        if workers == 1 or len(branches) <= 1:
            results = [run_branch(job) for job in branches]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_branch, branches))

        for created, updated in results:
            report.created += created
            report.updated += updated
        self._voxel_count += report.created
        return report

    # -- visiting ------------------------------------------------------------

    def iter_voxels(self) -> Iterator[tuple[VoxelKey, Any]]:
        """Every voxel in ascending (ix, iy, iz) order."""
        for xnode in self._root.nodes():
            for ynode in xnode.value.nodes():
                for znode in ynode.value.voxels.nodes():
                    yield VoxelKey(xnode.key, ynode.key, znode.key), znode.value

    def visit_all(
        self,
        visitor: Callable[[VoxelKey, Any], None],
        workers: int = 1,
    ) -> int:
        """Apply ``visitor`` to every voxel once; returns the visit count.

        With workers > 1, root branches are visited concurrently and the
        visitor must be thread-safe.
        """
        def run_branch(xnode) -> int:
            n = 0
            ix = xnode.key
            for ynode in xnode.value.nodes():
                iy = ynode.key
                for znode in ynode.value.voxels.nodes():
                    visitor(VoxelKey(ix, iy, znode.key), znode.value)
                    n += 1
            return n

        xnodes = list(self._root.nodes())
        if workers <= 1 or len(xnodes) <= 1:
            return sum(run_branch(x) for x in xnodes)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(run_branch, xnodes))

    def iter_columns(self) -> Iterator[tuple[int, int, Column]]:
        """Every y-level column, never descending into z lists."""
        for xnode in self._root.nodes():
            for ynode in xnode.value.nodes():
                yield xnode.key, ynode.key, ynode.value

    def visit_2d(self, visitor: Callable[[int, int, Column], None]) -> int:
        """Apply ``visitor`` to every column; stops at tree depth 2.

        The column exposes the tile and an O(1) voxel count, which is
        all a 2D occupancy or height extraction needs.
        """
        n = 0
        for ix, iy, column in self.iter_columns():
            visitor(ix, iy, column)
            n += 1
        return n

    # -- search ---------------------------------------------------------------

    def box_search(
        self,
        center: Sequence[int],
        half_extents: Sequence[int],
    ) -> list[tuple[VoxelKey, Any]]:
        """All voxels with |index - center| <= half extent on every axis."""
        los = []
        his = []
        clamped = False
        for c, h in zip(center, half_extents):
            if h < 0:
                raise ValueError(f"half extent must be >= 0, got {h}")
            lo, hi = c - h, c + h
            if lo < KEY_MIN:
                lo, clamped = KEY_MIN, True
            if hi > KEY_MAX:
                hi, clamped = KEY_MAX, True
            los.append(lo)
            his.append(hi)
        if clamped:
            self.clamped_searches += 1

        out: list[tuple[VoxelKey, Any]] = []
        for xnode in self._root.irange(los[0], his[0]):
            ix = xnode.key
            for ynode in xnode.value.irange(los[1], his[1]):
                iy = ynode.key
                for znode in ynode.value.voxels.irange(los[2], his[2]):
                    out.append((VoxelKey(ix, iy, znode.key), znode.value))
        return out

    def radius_search(
        self,
        center: Sequence[float],
        radius: float,
    ) -> list[tuple[VoxelKey, Any]]:
        """Voxels whose centers lie within ``radius`` of a metric point.

        Runs a box search with discrete half extent floor(radius /
        resolution), then keeps voxels passing the Euclidean test.
        """
        if radius < 0:
            raise ValueError(f"radius must be >= 0, got {radius}")
        ck = self.quantize(center)
        half = _snap_floor(radius / self.resolution)
        box = self.box_search(ck, (half, half, half))
        r = self.resolution
        cx, cy, cz = center
        limit = radius * radius
        out = []
        for key, payload in box:
            dx = (key.ix + 0.5) * r - cx
            dy = (key.iy + 0.5) * r - cy
            dz = (key.iz + 0.5) * r - cz
            if dx * dx + dy * dy + dz * dz <= limit:
                out.append((key, payload))
        return out

    # -- counters ---------------------------------------------------------------

    @property
    def voxel_count(self) -> int:
        return self._voxel_count

    @property
    def tile_count(self) -> int:
        return self._tile_count

    @property
    def column_count(self) -> int:
        return sum(x.value.count for x in self._root.nodes())

    @property
    def branch_count(self) -> int:
        return self._root.count

    # -- canonical dumps ----------------------------------------------------------

    def dump(self) -> str:
        """One `ix iy iz <payload>` line per voxel in ascending key order."""
        lines = [
            f"{k.ix} {k.iy} {k.iz} {payload.dump()}\n"
            for k, payload in self.iter_voxels()
        ]
        return "".join(lines)

    def tile_dump(self) -> str:
        """One `ix iy <tile>` line per ground tile in ascending key order."""
        lines = []
        for ix, iy, column in self.iter_columns():
            if column.tile is not None:
                lines.append(f"{ix} {iy} {column.tile.dump()}\n")
        return "".join(lines)

    @classmethod
    def load(
        cls,
        text: str,
        config: MapConfig,
        payload_type: type = OccupancyVoxel,
    ) -> "VoxelGrid":
        """Rebuild a grid from dump() output."""
        grid = cls(config, payload_type)
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split(maxsplit=3)
            if len(parts) != 4:
                raise ValueError(f"map dump line {lineno}: malformed {line!r}")
            try:
                key = VoxelKey(int(parts[0]), int(parts[1]), int(parts[2]))
                payload = payload_type.parse(parts[3])
            except ValueError as exc:
                raise ValueError(f"map dump line {lineno}: {exc}") from exc
            column = grid._column(key.ix, key.iy, create=True)
            node, created = column.voxels.insert_or_get(key.iz, lambda: payload)
            if not created:
                raise ValueError(f"map dump line {lineno}: duplicate key {key}")
            grid._voxel_count += 1
        return grid

    def load_tiles(self, text: str) -> None:
        """Populate ground tiles from tile_dump() output."""
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split(maxsplit=2)
            if len(parts) != 3:
                raise ValueError(f"tile dump line {lineno}: malformed {line!r}")
            try:
                ix, iy = int(parts[0]), int(parts[1])
                tile = TileData.parse(parts[2])
            except ValueError as exc:
                raise ValueError(f"tile dump line {lineno}: {exc}") from exc
            column = self._column(ix, iy, create=True)
            if column.tile is not None:
                raise ValueError(
                    f"tile dump line {lineno}: duplicate tile ({ix}, {iy})"
                )
            column.tile = tile
            self._tile_count += 1
