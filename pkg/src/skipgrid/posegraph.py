"""Pose history and re-integration of frames under revised poses.

Each sensor frame carries an append-only queue of poses. The first is
the live tracking pose, integrated as soon as possible; later entries
arrive asynchronously from an external pose optimizer. When a frame's
newest pose differs from the one whose contribution sits in the map,
the integrator erodes the old contribution and fuses the measurements
back under the newest pose, a bounded number of frames per cycle.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .core import Placement, VoxelGrid, erode_placement
from .fusion import ErosionUnderflowError, OccupancySample

ORTHONORMAL_TOL = 1e-6
POSE_EQ_TOL = 1e-12


class DuplicateFrameError(ValueError):
    """Submitted frame id is not strictly greater than all prior ids."""


class Pose:
    """Rigid transform: rotation matrix plus translation, meters."""

    __slots__ = ("rotation", "translation")

    def __init__(
        self,
        rotation: Optional[np.ndarray] = None,
        translation: Optional[Sequence[float]] = None,
    ) -> None:
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        t = (
            np.zeros(3)
            if translation is None
            else np.asarray(translation, dtype=np.float64)
        )
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be length 3, got {t.shape}")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"rotation not orthonormal (deviation {err:.2e})")
        self.rotation = R
        self.translation = t

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_quaternion(
        cls, translation: Sequence[float], quaternion: Sequence[float]
    ) -> "Pose":
        """Build from translation and (qx, qy, qz, qw)."""
        R = Rotation.from_quat(np.asarray(quaternion, dtype=np.float64))
        return cls(R.as_matrix(), translation)

    def quaternion(self) -> np.ndarray:
        """(qx, qy, qz, qw) for this rotation."""
        return Rotation.from_matrix(self.rotation).as_quat()

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points into the parent frame: R p + t."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -(Rt @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def approx_equal(self, other: "Pose", tol: float = POSE_EQ_TOL) -> bool:
        return (
            np.abs(self.rotation - other.rotation).max() <= tol
            and np.abs(self.translation - other.translation).max() <= tol
        )

    def __repr__(self) -> str:  # pragma: no cover
        t = self.translation
        return f"Pose(t=({t[0]:.3g}, {t[1]:.3g}, {t[2]:.3g}))"


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Apply a rigid transform to one point or an (N, 3) array."""
    return pose.apply(points)


@dataclass
class FrameRecord:
    """One sensor measurement with its pose queue.

    ``pose_queue`` is append-only. ``last_integrated`` indexes the pose
    whose contribution is currently fused in the map (None before the
    first integration); ``placement`` records exactly what was fused so
    erosion can invert it.
    """

    frame_id: int
    timestamp: float
    points: np.ndarray
    sample: OccupancySample = OccupancySample(1.0, 1.0)
    samples: Optional[Sequence[OccupancySample]] = None
    pose_queue: list[Pose] = field(default_factory=list)
    last_integrated: Optional[int] = None
    placement: Optional[Placement] = None
    fault: bool = False

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.samples is not None and len(self.samples) != len(self.points):
            raise ValueError(
                f"{len(self.samples)} samples for {len(self.points)} points"
            )

    def newest_pose_index(self) -> int:
        return len(self.pose_queue) - 1

    def point_sample(self, i: int) -> OccupancySample:
        return self.sample if self.samples is None else self.samples[i]


@dataclass
class CycleReport:
    """What one integration cycle did."""

    integrated: list[int] = field(default_factory=list)
    reintegrated: list[int] = field(default_factory=list)
    faulted: list[int] = field(default_factory=list)
    writes: int = 0

    @property
    def frames_touched(self) -> int:
        return len(self.integrated) + len(self.reintegrated)


class PoseHistory:
    """Frame queue manager and pose integrator.

    submit_frame / submit_optimized_poses may be called from any thread;
    integration_cycle must run on a single integrator thread and, per
    the map's concurrency model, not concurrently with map readers.
    """

    def __init__(
        self,
        batch_bound: int = 4,
        ground=None,
        navigable_min_hits: int = 3,
    ) -> None:
        if batch_bound < 1:
            raise ValueError(f"batch_bound must be >= 1, got {batch_bound}")
        self.batch_bound = batch_bound
        # optional ground pipeline: object with integrate(grid, points,
        # samples) -> Placement (see ground.GroundIntegrator)
        self.ground = ground
        self.navigable_min_hits = navigable_min_hits
        self._frames: dict[int, FrameRecord] = {}
        self._order: list[int] = []
        self._lock = threading.Lock()

    # -- submission -------------------------------------------------------

    def submit_frame(self, frame: FrameRecord) -> int:
        """Enqueue a frame carrying at least its live tracking pose."""
        if not frame.pose_queue:
            raise ValueError(f"frame {frame.frame_id} has no pose")
        with self._lock:
            if self._order and frame.frame_id <= self._order[-1]:
                raise DuplicateFrameError(
                    f"frame id {frame.frame_id} not greater than "
                    f"last id {self._order[-1]}"
                )
            self._frames[frame.frame_id] = frame
            self._order.append(frame.frame_id)
        return frame.frame_id

    def submit_optimized_poses(
        self, updates: Sequence[tuple[int, Pose]]
    ) -> int:
        """Append optimized poses to matching frames; unknown ids are
        rejected individually. Returns the number accepted."""
        accepted = 0
        with self._lock:
            for frame_id, pose in updates:
                frame = self._frames.get(frame_id)
                if frame is None:
                    continue
                frame.pose_queue.append(pose)
                accepted += 1
        return accepted

    # -- state inspection -----------------------------------------------------

    def frame(self, frame_id: int) -> FrameRecord:
        return self._frames[frame_id]

    def live_pose(self) -> Optional[Pose]:
        """Newest pose of the most recently submitted frame."""
        with self._lock:
            if not self._order:
                return None
            return self._frames[self._order[-1]].pose_queue[-1]

    def _is_stale(self, frame: FrameRecord) -> bool:
        if frame.last_integrated is None or frame.fault:
            return False
        newest = frame.newest_pose_index()
        if newest == frame.last_integrated:
            return False
        # an optimized pose identical to the integrated one is a no-op
        return not frame.pose_queue[newest].approx_equal(
            frame.pose_queue[frame.last_integrated]
        )

    def has_pending_work(self) -> bool:
        with self._lock:
            return any(
                (f.last_integrated is None and not f.fault) or self._is_stale(f)
                for f in self._frames.values()
            )

    # -- integration -------------------------------------------------------------

    def _fuse_frame(
        self, grid: VoxelGrid, frame: FrameRecord, pose: Pose
    ) -> Placement:
        pts = pose.apply(frame.points)
        if self.ground is not None:
            if frame.samples is None:
                samples = [frame.sample] * len(pts)
            else:
                samples = list(frame.samples)
            return self.ground.integrate(grid, pts, samples)
        placement = Placement()
        for i, p in enumerate(pts):
            s = frame.point_sample(i)
            key = grid.integrate_point(p, s)
            placement.voxel_actions.append((key, s))
        return placement

    def integration_cycle(self, grid: VoxelGrid) -> CycleReport:
        """Integrate up to batch_bound frames: never-integrated frames in
        submission order first, then stale frames nearest the live pose.
        """
        with self._lock:
            fresh = [
                self._frames[fid]
                for fid in self._order
                if self._frames[fid].last_integrated is None
                and not self._frames[fid].fault
            ]
            live = (
                self._frames[self._order[-1]].pose_queue[-1]
                if self._order
                else None
            )
            stale = [f for f in self._frames.values() if self._is_stale(f)]
            if live is not None:
                stale.sort(
                    key=lambda f: (
                        float(
                            np.linalg.norm(
                                f.pose_queue[f.last_integrated].translation
                                - live.translation
                            )
                        ),
                        f.frame_id,
                    )
                )
            selected = (fresh + stale)[: self.batch_bound]
            targets = [(f, f.newest_pose_index()) for f in selected]

        report = CycleReport()
        for frame, pose_index in targets:
            reintegration = frame.last_integrated is not None
            if reintegration:
                try:
                    erode_placement(
                        grid, frame.placement, self.navigable_min_hits
                    )
                    report.writes += frame.placement.writes
                except (ErosionUnderflowError, KeyError):
                    frame.fault = True
                    report.faulted.append(frame.frame_id)
                    continue
            placement = self._fuse_frame(
                grid, frame, frame.pose_queue[pose_index]
            )
            report.writes += placement.writes
            frame.placement = placement
            frame.last_integrated = pose_index
            if reintegration:
                report.reintegrated.append(frame.frame_id)
            else:
                report.integrated.append(frame.frame_id)
        return report

    def run_until_settled(
        self, grid: VoxelGrid, max_cycles: int = 1_000_000
    ) -> list[CycleReport]:
        """Run cycles until no frame is pending or stale."""
        reports = []
        for _ in range(max_cycles):
            if not self.has_pending_work():
                break
            reports.append(self.integration_cycle(grid))
        return reports


# -- frame log I/O --------------------------------------------------------------

def format_frame(
    frame_id: int, timestamp: float, pose: Pose, points: np.ndarray
) -> str:
    """Serialize one frame: header line then one point per line."""
    t = pose.translation
    q = pose.quaternion()
    lines = [
        f"FRAME {frame_id} {float(timestamp)!r} "
        f"{float(t[0])!r} {float(t[1])!r} {float(t[2])!r} "
        f"{float(q[0])!r} {float(q[1])!r} {float(q[2])!r} {float(q[3])!r}"
    ]
    for p in np.asarray(points).reshape(-1, 3):
        lines.append(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    return "\n".join(lines) + "\n"


def format_opt(frame_id: int, pose: Pose) -> str:
    t = pose.translation
    q = pose.quaternion()
    return (
        f"OPT {frame_id} "
        f"{float(t[0])!r} {float(t[1])!r} {float(t[2])!r} "
        f"{float(q[0])!r} {float(q[1])!r} {float(q[2])!r} {float(q[3])!r}\n"
    )


def _parse_pose(parts: Sequence[str], lineno: int) -> Pose:
    if len(parts) != 7:
        raise ValueError(
            f"frame log line {lineno}: expected tx ty tz qx qy qz qw"
        )
    vals = [float(v) for v in parts]
    return Pose.from_quaternion(vals[0:3], vals[3:7])


def read_frame_log(text: str) -> list[tuple]:
    """Parse an interleaved frame/optimized-pose log.

    Returns events in file order: ("frame", frame_id, timestamp, pose,
    points) and ("opt", frame_id, pose). Malformed lines raise
    ValueError naming the line number.
    """
    events: list[tuple] = []
    current: Optional[list] = None  # [id, timestamp, pose, point rows]

    def flush() -> None:
        nonlocal current
        if current is not None:
            pts = np.array(current[3], dtype=np.float64).reshape(-1, 3)
            events.append(("frame", current[0], current[1], current[2], pts))
            current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        try:
            if fields[0] == "FRAME":
                if len(fields) != 10:
                    raise ValueError("expected FRAME id ts tx ty tz qx qy qz qw")
                flush()
                current = [
                    int(fields[1]),
                    float(fields[2]),
                    _parse_pose(fields[3:10], lineno),
                    [],
                ]
            elif fields[0] == "OPT":
                if len(fields) != 9:
                    raise ValueError("expected OPT id tx ty tz qx qy qz qw")
                flush()
                events.append(
                    ("opt", int(fields[1]), _parse_pose(fields[2:9], lineno))
                )
            else:
                if current is None:
                    raise ValueError("point line before any FRAME header")
                if len(fields) != 3:
                    raise ValueError("expected 'x y z' point line")
                current[3].append([float(v) for v in fields])
        except ValueError as exc:
            msg = str(exc)
            if not msg.startswith("frame log line"):
                msg = f"frame log line {lineno}: {msg}"
            raise ValueError(msg) from None
    flush()
    return events
