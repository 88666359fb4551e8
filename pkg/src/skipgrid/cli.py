"""Command-line front end: dataset generation, map building and replay,
queries, 2D export, and the benchmark harness.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bench as bench_mod
from .baselines import measure_map_memory
from .core import MapConfig, VoxelGrid
from .fusion import OccupancySample
from .ground import (
    GroundDetectionError,
    GroundIntegrator,
    detect_ground,
    occupancy_grid,
    projection_grid,
    tile_height_map,
    write_occupancy_grid,
)
from .posegraph import FrameRecord, Pose, PoseHistory, read_frame_log
from .scenes import (
    SCENE_NAMES,
    frame_log_text,
    make_scene,
    perturbed_poses,
    split_into_frames,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


@dataclass
class RunConfig:
    """Validated knob set echoed into every report."""

    resolution: float = 0.05
    depth_x: int = 8
    depth_y: int = 8
    depth_z: int = 8
    workers: int = 1
    batch_bound: int = 4
    ground: bool = False
    ceiling: Optional[float] = None
    seed: int = 0

    def validate(self) -> None:
        self.map_config()  # MapConfig performs the range checks
        if self.batch_bound < 1:
            raise ValueError(f"batch_bound must be >= 1, got {self.batch_bound}")

    def map_config(self, oob_policy: str = "skip") -> MapConfig:
        return MapConfig(
            resolution=self.resolution,
            depth_x=self.depth_x,
            depth_y=self.depth_y,
            depth_z=self.depth_z,
            workers=self.workers,
            seed=self.seed,
            oob_policy=oob_policy,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, an optional config file, and CLI flags."""
    values = RunConfig().as_dict()
    path = getattr(args, "config", None)
    if path:
        with open(path, "r", encoding="utf-8") as f:
            overrides = json.load(f)
        unknown = set(overrides) - set(values)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(overrides)
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    config = RunConfig(**values)
    config.validate()
    return config


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig overrides")
    parser.add_argument("--resolution", "-r", type=float, default=None)
    parser.add_argument("--depth-x", dest="depth_x", type=int, default=None)
    parser.add_argument("--depth-y", dest="depth_y", type=int, default=None)
    parser.add_argument("--depth-z", dest="depth_z", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--batch-bound", dest="batch_bound", type=int,
                        default=None)
    parser.add_argument("--ground", action="store_const", const=True,
                        default=None, help="enable ground tracking")
    parser.add_argument("--ceiling", type=float, default=None,
                        help="drop obstacle points above this height")
    parser.add_argument("--seed", type=int, default=None)


# -- build ------------------------------------------------------------------

def build_from_events(
    events: list[tuple], config: RunConfig
) -> tuple[VoxelGrid, PoseHistory, dict]:
    """Replay a frame/optimized-pose event stream into a fresh map."""
    grid = VoxelGrid(config.map_config())
    history = PoseHistory(batch_bound=config.batch_bound)
    frame_times = []
    ground_status = "disabled"
    cycles = 0
    for event in events:
        start = time.perf_counter()
        if event[0] == "frame":
            _, fid, ts, pose, pts = event
            if config.ground and history.ground is None and ground_status == "disabled":
                world = pose.apply(pts)
                try:
                    model = detect_ground(
                        world,
                        sensor_origin=pose.translation,
                        seed=config.seed,
                    )
                    history.ground = GroundIntegrator(
                        model,
                        band=2.0 * config.resolution,
                        ceiling=config.ceiling,
                    )
                    ground_status = "active"
                except GroundDetectionError as exc:
                    ground_status = f"failed: {exc}"
                    print(f"ground detection failed, continuing in 3D: {exc}",
                          file=sys.stderr)
            history.submit_frame(
                FrameRecord(fid, ts, pts, pose_queue=[pose])
            )
        else:
            _, fid, pose = event
            history.submit_optimized_poses([(fid, pose)])
        history.integration_cycle(grid)
        cycles += 1
        frame_times.append((time.perf_counter() - start) * 1e3)
    reports = history.run_until_settled(grid)
    cycles += len(reports)

    memory = measure_map_memory(grid)
    stats = {
        "config": config.as_dict(),
        "frames": sum(1 for e in events if e[0] == "frame"),
        "optimized_pose_records": sum(1 for e in events if e[0] == "opt"),
        "cycles": cycles,
        "voxels": grid.voxel_count,
        "tiles": grid.tile_count,
        "bytes": memory.total_bytes,
        "memory_layout": memory.layout,
        "ground": ground_status,
        "per_event_ms": {
            "mean": float(np.mean(frame_times)) if frame_times else 0.0,
            "max": float(np.max(frame_times)) if frame_times else 0.0,
        },
    }
    return grid, history, stats


def _cmd_build(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    with open(args.log, "r", encoding="utf-8") as f:
        events = read_frame_log(f.read())
    grid, _, stats = build_from_events(events, config)
    prefix = args.out
    with open(f"{prefix}.map.txt", "w", encoding="ascii") as f:
        f.write(grid.dump())
    with open(f"{prefix}.tiles.txt", "w", encoding="ascii") as f:
        f.write(grid.tile_dump())
    with open(f"{prefix}.stats.json", "w", encoding="ascii") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"built {stats['voxels']} voxels, {stats['tiles']} tiles "
          f"from {stats['frames']} frames -> {prefix}.map.txt")
    return EXIT_OK


# -- gen ------------------------------------------------------------------------

def _cmd_gen(args: argparse.Namespace) -> int:
    cloud = make_scene(args.scene, args.points, seed=args.seed)
    frames = split_into_frames(cloud, args.frames, seed=args.seed)
    optimized = perturbed_poses(frames, seed=args.seed + 1) if args.opt else None
    text = frame_log_text(frames, optimized)
    with open(args.out, "w", encoding="ascii") as f:
        f.write(text)
    n_opt = len(optimized) if optimized else 0
    print(f"wrote {args.frames} frames ({args.points} points, "
          f"{n_opt} optimized poses) -> {args.out}")
    return EXIT_OK


# -- query ------------------------------------------------------------------------

def _load_grid(args: argparse.Namespace, config: RunConfig) -> VoxelGrid:
    with open(args.map, "r", encoding="utf-8") as f:
        grid = VoxelGrid.load(f.read(), config.map_config())
    tiles = getattr(args, "tiles", None)
    if tiles:
        with open(tiles, "r", encoding="utf-8") as f:
            grid.load_tiles(f.read())
    return grid


def _cmd_query(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    grid = _load_grid(args, config)
    if args.mode == "radius":
        results = grid.radius_search(args.center, args.radius)
    elif args.mode == "box":
        center = tuple(int(v) for v in args.center)
        results = grid.box_search(center, args.half)
    else:  # cell
        key = tuple(int(v) for v in args.index)
        payload = grid.get_voxel(key)
        if payload is None:
            print("miss")
        else:
            print(f"{key[0]} {key[1]} {key[2]} {payload.dump()}")
        return EXIT_OK
    for key, payload in results:
        print(f"{key.ix} {key.iy} {key.iz} {payload.dump()}")
    return EXIT_OK


# -- export2d --------------------------------------------------------------------

def _cmd_export2d(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if args.log:
        with open(args.log, "r", encoding="utf-8") as f:
            events = read_frame_log(f.read())
        grid, _, _ = build_from_events(events, config)
    else:
        if not args.map:
            raise UsageError("export2d needs --map or --log")
        grid = _load_grid(args, config)

    image, origin = occupancy_grid(grid)
    write_occupancy_grid(
        f"{args.out}.pgm", f"{args.out}.yaml", image, origin, config.resolution
    )
    written = [f"{args.out}.pgm", f"{args.out}.yaml"]
    if args.oracle:
        oracle_image, oracle_origin = projection_grid(grid)
        write_occupancy_grid(
            f"{args.out}.oracle.pgm", f"{args.out}.oracle.yaml",
            oracle_image, oracle_origin, config.resolution,
        )
        written.append(f"{args.out}.oracle.pgm")
    if args.heights:
        heights = tile_height_map(grid)
        with open(args.heights, "w", encoding="ascii") as f:
            for (ix, iy), h in sorted(heights.items()):
                f.write(f"{ix} {iy} {h:.9g}\n")
        written.append(args.heights)
    print("wrote " + ", ".join(written))
    return EXIT_OK


# -- bench --------------------------------------------------------------------------

def _cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    rows = bench_mod.run_bench(
        scene=args.scene,
        points=args.points,
        resolutions=tuple(args.resolutions),
        depths=tuple(args.depths),
        workers=config.workers,
        seed=config.seed,
    )
    report_config = dict(config.as_dict(), scene=args.scene, points=args.points,
                         resolutions=list(args.resolutions),
                         depths=list(args.depths))
    bench_mod.write_csv(args.out, rows, report_config)
    print(f"wrote {len(rows)} rows -> {args.out}")
    return EXIT_OK


# -- wiring ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="skipgrid",
                     description="sparse voxel mapping on nested skip lists")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a synthetic frame log")
    p.add_argument("--scene", choices=SCENE_NAMES, default="corridor")
    p.add_argument("--points", type=int, default=20000)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--opt", action="store_true",
                   help="append optimized-pose records")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("build", help="replay a frame log into map dumps")
    _add_config_flags(p)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("query", help="query a map dump")
    _add_config_flags(p)
    p.add_argument("--map", required=True)
    p.add_argument("--tiles")
    qsub = p.add_subparsers(dest="mode", required=True)
    q = qsub.add_parser("radius")
    q.add_argument("--center", type=float, nargs=3, required=True,
                   metavar=("X", "Y", "Z"))
    q.add_argument("--radius", type=float, required=True)
    q = qsub.add_parser("box")
    q.add_argument("--center", type=int, nargs=3, required=True,
                   metavar=("IX", "IY", "IZ"))
    q.add_argument("--half", type=int, nargs=3, required=True,
                   metavar=("HX", "HY", "HZ"))
    q = qsub.add_parser("cell")
    q.add_argument("--index", type=int, nargs=3, required=True,
                   metavar=("IX", "IY", "IZ"))
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("export2d", help="extract the 2D occupancy grid")
    _add_config_flags(p)
    p.add_argument("--map")
    p.add_argument("--tiles")
    p.add_argument("--log", help="build live from a frame log instead")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--oracle", action="store_true",
                   help="also write the full-3D projection grid")
    p.add_argument("--heights", help="write per-tile mean heights here")
    p.set_defaults(func=_cmd_export2d)

    p = sub.add_parser("bench", help="run the benchmark suites")
    _add_config_flags(p)
    p.add_argument("--scene", choices=SCENE_NAMES, default="corridor")
    p.add_argument("--points", type=int, default=20000)
    p.add_argument("--resolutions", type=float, nargs="+",
                   default=list(bench_mod.DEFAULT_RESOLUTIONS))
    p.add_argument("--depths", type=int, nargs="+",
                   default=list(bench_mod.DEFAULT_DEPTHS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:  # invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
