"""Reference structures and memory models used as oracles and baselines.

These are deliberately simple, single-threaded implementations: a dense
3D grid, a pointer octree, and an exhaustive radius filter. They exist
to cross-check the skip list map and to anchor benchmark comparisons,
not to compete with it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence

import numpy as np

from .core import KEY_MAX, KEY_MIN, VoxelGrid, VoxelKey, quantize_points
from .fusion import OccupancySample, OccupancyVoxel

# Declared per-node byte layout for the memory model. These describe the
# record sizes the structure implies (16-bit keys, 64-bit pointers and
# counters), not CPython object overhead, so savings figures compare
# data structures rather than interpreter boxing. Reports carry these
# constants so every figure is auditable.
POINTER_BYTES = 8
KEY_BYTES = 2
LIST_HEADER_BYTES = 12  # level counter + element count
DENSE_CELL_BYTES = 4  # float occupancy per cell
OCTREE_INNER_BYTES = 8 * POINTER_BYTES
OCTREE_LEAF_BYTES = OccupancyVoxel.nominal_bytes


def dense_grid_memory(
    x: float, y: float, z: float, resolution: float,
    bytes_per_voxel: float = DENSE_CELL_BYTES,
) -> float:
    """Bytes a full 3D occupancy grid needs: x*y*z / r^3 cells."""
    if x <= 0 or y <= 0 or z <= 0:
        raise ValueError(f"workspace dimensions must be > 0, got {(x, y, z)}")
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution}")
    if bytes_per_voxel <= 0:
        raise ValueError(f"bytes_per_voxel must be > 0, got {bytes_per_voxel}")
    return (x * y * z) / resolution**3 * bytes_per_voxel


def octree_memory(
    n_leaf: int, bytes_leaf: float, n_inner: int, bytes_inner: float
) -> float:
    """Bytes an octree needs: leaves plus inner nodes, each at a flat cost."""
    if n_leaf < 0 or n_inner < 0:
        raise ValueError(f"node counts must be >= 0, got {(n_leaf, n_inner)}")
    if bytes_leaf < 0 or bytes_inner < 0:
        raise ValueError("byte sizes must be >= 0")
    return n_leaf * bytes_leaf + n_inner * bytes_inner


def mls_memory(
    x: float, y: float, resolution: float,
    bytes_tile: float, n_voxels: int, bytes_voxel: float,
) -> float:
    """Bytes a multi-level surface map needs: full 2D grid plus voxel lists."""
    if x <= 0 or y <= 0:
        raise ValueError(f"projection dimensions must be > 0, got {(x, y)}")
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution}")
    if n_voxels < 0:
        raise ValueError(f"n_voxels must be >= 0, got {n_voxels}")
    return (x * y) / resolution**2 * bytes_tile + n_voxels * bytes_voxel


@dataclass
class MemoryReport:
    """Measured structure size with the layout constants that produced it."""

    total_bytes: float
    branch_nodes: int
    column_nodes: int
    voxels: int
    tiles: int
    tower_links: int
    layout: dict = field(default_factory=dict)

    def savings_vs_dense(
        self, x: float, y: float, z: float, resolution: float
    ) -> float:
        """Fraction of a full 3D grid's memory avoided, in [0, 1]."""
        dense = dense_grid_memory(x, y, z, resolution)
        return 1.0 - self.total_bytes / dense


def measure_map_memory(grid: VoxelGrid) -> MemoryReport:
    """Walk a grid counting nodes and tower links; price them nominally."""
    cfg = grid.config
    payload_bytes = grid.payload_type.nominal_bytes
    tile_bytes = 24

    def list_overhead(depth: int) -> int:
        return LIST_HEADER_BYTES + depth * POINTER_BYTES  # head tower

    total = float(list_overhead(cfg.depth_x))
    links = cfg.depth_x
    n_x = n_y = n_v = n_t = 0
    for xnode in grid._root.nodes():
        n_x += 1
        h = len(xnode.forward)
        links += h + cfg.depth_y
        total += KEY_BYTES + h * POINTER_BYTES + list_overhead(cfg.depth_y)
        for ynode in xnode.value.nodes():
            n_y += 1
            h = len(ynode.forward)
            links += h + cfg.depth_z
            total += (
                KEY_BYTES + h * POINTER_BYTES + POINTER_BYTES  # tile slot
                + list_overhead(cfg.depth_z)
            )
            if ynode.value.tile is not None:
                n_t += 1
                total += tile_bytes
            for znode in ynode.value.voxels.nodes():
                n_v += 1
                h = len(znode.forward)
                links += h
                total += KEY_BYTES + h * POINTER_BYTES + payload_bytes
    return MemoryReport(
        total_bytes=total,
        branch_nodes=n_x,
        column_nodes=n_y,
        voxels=n_v,
        tiles=n_t,
        tower_links=links,
        layout={
            "pointer_bytes": POINTER_BYTES,
            "key_bytes": KEY_BYTES,
            "list_header_bytes": LIST_HEADER_BYTES,
            "payload_bytes": payload_bytes,
            "tile_bytes": tile_bytes,
        },
    )


class DenseGrid:
    """Flat 3D array of optional payloads over a fixed key window."""

    def __init__(
        self,
        resolution: float,
        origin_key: Sequence[int],
        shape: Sequence[int],
        payload_type: type = OccupancyVoxel,
    ) -> None:
        if any(s <= 0 for s in shape):
            raise ValueError(f"extents must be > 0, got {tuple(shape)}")
        self.resolution = resolution
        self.origin = tuple(int(v) for v in origin_key)
        self.shape = tuple(int(v) for v in shape)
        self.payload_type = payload_type
        self.cells: list[Optional[Any]] = [None] * (
            self.shape[0] * self.shape[1] * self.shape[2]
        )
        self.occupied_count = 0

    @classmethod
    def covering(
        cls,
        resolution: float,
        points: np.ndarray,
        payload_type: type = OccupancyVoxel,
    ) -> "DenseGrid":
        """Smallest grid window containing every point's voxel."""
        keys, in_bounds = quantize_points(points, resolution)
        if not in_bounds.all():
            raise ValueError("points outside the addressable key range")
        lo = keys.min(axis=0)
        hi = keys.max(axis=0)
        return cls(resolution, lo, hi - lo + 1, payload_type)

    def _flat(self, key: Sequence[int]) -> Optional[int]:
        ux = key[0] - self.origin[0]
        uy = key[1] - self.origin[1]
        uz = key[2] - self.origin[2]
        nx, ny, nz = self.shape
        if not (0 <= ux < nx and 0 <= uy < ny and 0 <= uz < nz):
            return None
        return (ux * ny + uy) * nz + uz

    def fuse(self, key: Sequence[int], sample: OccupancySample) -> None:
        idx = self._flat(key)
        if idx is None:
            raise IndexError(f"key {tuple(key)} outside grid window")
        cell = self.cells[idx]
        if cell is None:
            cell = self.payload_type.empty()
            self.occupied_count += 1
        self.cells[idx] = cell.fuse(sample)

    def integrate_points(
        self,
        points: np.ndarray,
        samples: OccupancySample | Sequence[OccupancySample] = OccupancySample(1.0, 1.0),
    ) -> None:
        keys, _ = quantize_points(points, self.resolution)
        broadcast = isinstance(samples, OccupancySample)
        for i, key in enumerate(keys):
            self.fuse(key, samples if broadcast else samples[i])

    def get(self, key: Sequence[int]) -> Optional[Any]:
        idx = self._flat(key)
        return None if idx is None else self.cells[idx]

    def occupied(self) -> Iterator[tuple[VoxelKey, Any]]:
        nx, ny, nz = self.shape
        ox, oy, oz = self.origin
        idx = 0
        for ux in range(nx):
            for uy in range(ny):
                for uz in range(nz):
                    cell = self.cells[idx]
                    if cell is not None:
                        yield VoxelKey(ox + ux, oy + uy, oz + uz), cell
                    idx += 1

    def occupied_keys(self) -> set[VoxelKey]:
        return {k for k, _ in self.occupied()}

    def nominal_bytes(self) -> float:
        return float(
            self.shape[0] * self.shape[1] * self.shape[2] * DENSE_CELL_BYTES
        )

    def radius_search(
        self, center: Sequence[float], radius: float
    ) -> list[tuple[VoxelKey, Any]]:
        """Scan the box of candidate cells, then distance-filter."""
        r = self.resolution
        keys, _ = quantize_points(
            np.asarray(center, dtype=np.float64).reshape(1, 3), r
        )
        half = int(np.floor(radius / r))
        cx, cy, cz = (int(v) for v in keys[0])
        limit = radius * radius
        out = []
        for ix in range(cx - half, cx + half + 1):
            for iy in range(cy - half, cy + half + 1):
                for iz in range(cz - half, cz + half + 1):
                    idx = self._flat((ix, iy, iz))
                    if idx is None or self.cells[idx] is None:
                        continue
                    dx = (ix + 0.5) * r - center[0]
                    dy = (iy + 0.5) * r - center[1]
                    dz = (iz + 0.5) * r - center[2]
                    if dx * dx + dy * dy + dz * dz <= limit:
                        out.append((VoxelKey(ix, iy, iz), self.cells[idx]))
        return out


class _OctNode:
    __slots__ = ("children", "payload")

    def __init__(self) -> None:
        self.children: Optional[list[Optional[_OctNode]]] = None
        self.payload: Optional[Any] = None


class ReferenceOctree:
    """Correctness-grade pointer octree over the full signed key range.

    Leaves sit at depth 16, where one leaf spans exactly one voxel key.
    """

    DEPTH = 16  # 2^16 leaves per axis == the signed 16-bit key span

    def __init__(
        self, resolution: float, payload_type: type = OccupancyVoxel
    ) -> None:
        self.resolution = resolution
        self.payload_type = payload_type
        self.root = _OctNode()
        self.n_inner = 1
        self.n_leaf = 0

    def _descend(self, key: Sequence[int], create: bool) -> Optional[_OctNode]:
        ux = key[0] - KEY_MIN
        uy = key[1] - KEY_MIN
        uz = key[2] - KEY_MIN
        span = KEY_MAX - KEY_MIN + 1
        if not (0 <= ux < span and 0 <= uy < span and 0 <= uz < span):
            raise ValueError(f"key {tuple(key)} outside octree bounds")
        node = self.root
        for level in range(self.DEPTH - 1, -1, -1):
            child = (
                (((ux >> level) & 1) << 2)
                | (((uy >> level) & 1) << 1)
                | ((uz >> level) & 1)
            )
            if node.children is None:
                if not create:
                    return None
                node.children = [None] * 8
            nxt = node.children[child]
            if nxt is None:
                if not create:
                    return None
                nxt = _OctNode()
                node.children[child] = nxt
                if level == 0:
                    self.n_leaf += 1
                else:
                    self.n_inner += 1
            node = nxt
        return node

    def fuse(self, key: Sequence[int], sample: OccupancySample) -> None:
        leaf = self._descend(key, create=True)
        if leaf.payload is None:
            leaf.payload = self.payload_type.empty()
        leaf.payload = leaf.payload.fuse(sample)

    def integrate_points(
        self,
        points: np.ndarray,
        samples: OccupancySample | Sequence[OccupancySample] = OccupancySample(1.0, 1.0),
    ) -> None:
        keys, in_bounds = quantize_points(points, self.resolution)
        if not in_bounds.all():
            raise ValueError("points outside the addressable key range")
        broadcast = isinstance(samples, OccupancySample)
        for i, key in enumerate(keys):
            self.fuse(key, samples if broadcast else samples[i])

    def get(self, key: Sequence[int]) -> Optional[Any]:
        leaf = self._descend(key, create=False)
        return None if leaf is None else leaf.payload

    def occupied_leaves(self) -> Iterator[tuple[VoxelKey, Any]]:
        stack: list[tuple[_OctNode, int, int, int, int]] = [
            (self.root, self.DEPTH, 0, 0, 0)
        ]
        while stack:
            node, depth, ux, uy, uz = stack.pop()
            if depth == 0:
                yield (
                    VoxelKey(ux + KEY_MIN, uy + KEY_MIN, uz + KEY_MIN),
                    node.payload,
                )
                continue
            if node.children is None:
                continue
            for child in range(7, -1, -1):
                nxt = node.children[child]
                if nxt is None:
                    continue
                bit = depth - 1
                stack.append(
                    (
                        nxt,
                        bit,
                        ux | (((child >> 2) & 1) << bit),
                        uy | (((child >> 1) & 1) << bit),
                        uz | ((child & 1) << bit),
                    )
                )

    def occupied_keys(self) -> set[VoxelKey]:
        return {k for k, _ in self.occupied_leaves()}

    def visit_all(self) -> int:
        return sum(1 for _ in self.occupied_leaves())

    def radius_search(
        self, center: Sequence[float], radius: float
    ) -> list[tuple[VoxelKey, Any]]:
        """Box-pruned descent, then the usual center-distance filter."""
        r = self.resolution
        keys, _ = quantize_points(
            np.asarray(center, dtype=np.float64).reshape(1, 3), r
        )
        half = int(np.floor(radius / r))
        lo = [int(v) - half - KEY_MIN for v in keys[0]]
        hi = [int(v) + half - KEY_MIN for v in keys[0]]
        limit = radius * radius
        out: list[tuple[VoxelKey, Any]] = []
        stack = [(self.root, self.DEPTH, 0, 0, 0)]
        while stack:
            node, depth, ux, uy, uz = stack.pop()
            size = 1 << depth
            if (
                ux > hi[0] or ux + size - 1 < lo[0]
                or uy > hi[1] or uy + size - 1 < lo[1]
                or uz > hi[2] or uz + size - 1 < lo[2]
            ):
                continue
            if depth == 0:
                dx = (ux + KEY_MIN + 0.5) * r - center[0]
                dy = (uy + KEY_MIN + 0.5) * r - center[1]
                dz = (uz + KEY_MIN + 0.5) * r - center[2]
                if dx * dx + dy * dy + dz * dz <= limit:
                    out.append(
                        (
                            VoxelKey(ux + KEY_MIN, uy + KEY_MIN, uz + KEY_MIN),
                            node.payload,
                        )
                    )
                continue
            if node.children is None:
                continue
            bit = depth - 1
            for child in range(8):
                nxt = node.children[child]
                if nxt is None:
                    continue
                stack.append(
                    (
                        nxt,
                        bit,
                        ux | (((child >> 2) & 1) << bit),
                        uy | (((child >> 1) & 1) << bit),
                        uz | ((child & 1) << bit),
                    )
                )
        return out

    def nominal_bytes(self) -> float:
        return octree_memory(
            self.n_leaf, OCTREE_LEAF_BYTES, self.n_inner, OCTREE_INNER_BYTES
        )


def brute_radius(
    keys: Sequence[Sequence[int]],
    center: Sequence[float],
    radius: float,
    resolution: float,
) -> set[VoxelKey]:
    """Exhaustive distance filter over occupied voxel centers."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    out: set[VoxelKey] = set()
    cx, cy, cz = (float(v) for v in center)
    limit = radius * radius
    r = resolution
    for key in keys:
        dx = (key[0] + 0.5) * r - cx
        dy = (key[1] + 0.5) * r - cy
        dz = (key[2] + 0.5) * r - cz
        if dx * dx + dy * dy + dz * dz <= limit:
            out.add(VoxelKey(key[0], key[1], key[2]))
    return out
