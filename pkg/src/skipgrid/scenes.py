"""Synthetic scene and frame-log generators.

Everything here is seeded, so generated clouds and logs are fully
reproducible. Scenes are small indoor-scale geometries: enough to
exercise integration, ground detection, and the benchmark suites
without external datasets.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .posegraph import Pose, format_frame, format_opt

SCENE_NAMES = ("random", "corridor", "room")


def random_cloud(
    n: int,
    bounds: tuple[float, float] = (-4.0, 4.0),
    seed: int = 0,
) -> np.ndarray:
    """Uniform points in a cube."""
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    return rng.uniform(lo, hi, size=(n, 3))


def corridor(
    n: int,
    length: float = 12.0,
    width: float = 3.0,
    height: float = 2.5,
    noise: float = 0.005,
    with_roof: bool = True,
    seed: int = 0,
) -> np.ndarray:
    """Floor, two walls, and an optional roof along the x axis.

    The floor sits at z = 0, so the scene works for ground detection
    and ceiling-cutoff tests (roof points sit at z = height).
    """
    rng = np.random.default_rng(seed)
    parts = 4 if with_roof else 3
    counts = [n // parts] * parts
    counts[0] += n - sum(counts)  # floor absorbs the remainder

    def sheet(count, xs, ys, zs):
        pts = np.empty((count, 3))
        pts[:, 0] = rng.uniform(*xs, size=count) if isinstance(xs, tuple) else xs
        pts[:, 1] = rng.uniform(*ys, size=count) if isinstance(ys, tuple) else ys
        pts[:, 2] = rng.uniform(*zs, size=count) if isinstance(zs, tuple) else zs
        return pts

    half_w = width / 2.0
    pieces = [
        sheet(counts[0], (0.0, length), (-half_w, half_w), 0.0),  # floor
        sheet(counts[1], (0.0, length), -half_w, (0.0, height)),  # wall
        sheet(counts[2], (0.0, length), half_w, (0.0, height)),   # wall
    ]
    if with_roof:
        pieces.append(sheet(counts[3], (0.0, length), (-half_w, half_w), height))
    cloud = np.vstack(pieces)
    cloud += rng.normal(scale=noise, size=cloud.shape)
    return cloud


def room(
    n: int,
    floor_fraction: float = 0.7,
    size: float = 5.0,
    wall_height: float = 2.5,
    noise: float = 0.005,
    seed: int = 0,
) -> np.ndarray:
    """Square floor plus one wall, split floor_fraction / rest.

    Handy for dominant-plane tests: the floor holds the larger share.
    """
    rng = np.random.default_rng(seed)
    n_floor = int(round(n * floor_fraction))
    floor = np.empty((n_floor, 3))
    floor[:, 0] = rng.uniform(0.0, size, size=n_floor)
    floor[:, 1] = rng.uniform(0.0, size, size=n_floor)
    floor[:, 2] = 0.0
    wall = np.empty((n - n_floor, 3))
    wall[:, 0] = size
    wall[:, 1] = rng.uniform(0.0, size, size=n - n_floor)
    wall[:, 2] = rng.uniform(0.0, wall_height, size=n - n_floor)
    cloud = np.vstack([floor, wall])
    cloud += rng.normal(scale=noise, size=cloud.shape)
    return cloud


def voxel_lattice(
    nx: int, ny: int, nz: int, resolution: float,
    origin: tuple[int, int, int] = (0, 0, 0),
) -> np.ndarray:
    """One point per voxel center over a dense index block.

    Produces exactly nx * ny * nz distinct voxels when integrated.
    """
    ox, oy, oz = origin
    ix, iy, iz = np.meshgrid(
        np.arange(ox, ox + nx),
        np.arange(oy, oy + ny),
        np.arange(oz, oz + nz),
        indexing="ij",
    )
    keys = np.stack([ix, iy, iz], axis=-1).reshape(-1, 3)
    return (keys + 0.5) * resolution


def make_scene(name: str, n: int, seed: int = 0) -> np.ndarray:
    if name == "random":
        return random_cloud(n, seed=seed)
    if name == "corridor":
        return corridor(n, seed=seed)
    if name == "room":
        return room(n, seed=seed)
    raise ValueError(f"unknown scene {name!r}; choose from {SCENE_NAMES}")


def split_into_frames(
    cloud: np.ndarray,
    frames: int,
    seed: int = 0,
    step: float = 0.25,
) -> list[tuple[int, float, Pose, np.ndarray]]:
    """Slice a world-frame cloud into frames along a straight trajectory.

    Each frame's points are expressed in its own sensor frame, so
    applying the frame pose reproduces the world points exactly.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(cloud))
    chunks = np.array_split(order, frames)
    out = []
    for i, chunk in enumerate(chunks):
        pose = Pose(translation=(step * i, 0.0, 0.0))
        world = cloud[chunk]
        sensor = pose.inverse().apply(world)
        out.append((i, float(i) * 0.1, pose, sensor))
    return out


def frame_log_text(
    frames: list[tuple[int, float, Pose, np.ndarray]],
    optimized: Optional[list[tuple[int, Pose]]] = None,
) -> str:
    """Serialize frames, then any optimized-pose records, into one log."""
    parts = [
        format_frame(fid, ts, pose, pts) for fid, ts, pose, pts in frames
    ]
    for fid, pose in optimized or []:
        parts.append(format_opt(fid, pose))
    return "".join(parts)


def perturbed_poses(
    frames: list[tuple[int, float, Pose, np.ndarray]],
    magnitude: float = 0.05,
    seed: int = 0,
) -> list[tuple[int, Pose]]:
    """Translation-nudged poses for a subset of frames, as an optimizer would send."""
    rng = np.random.default_rng(seed)
    out = []
    for fid, _, pose, _ in frames:
        if rng.random() < 0.5:
            delta = rng.uniform(-magnitude, magnitude, size=3)
            out.append((fid, Pose(pose.rotation, pose.translation + delta)))
    return out
