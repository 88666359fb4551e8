"""Voxel payload contract and the weighted occupancy payload.

A payload accumulates weighted measurements: fusing a sample with
probability p and weight w moves the stored value to the weighted mean
of everything fused so far; eroding the same sample restores the prior
state exactly (up to float drift). A voxel whose weight drains to zero
carries no remaining evidence and signals its own deletion by returning
None from erode().
"""
from __future__ import annotations

from typing import NamedTuple, Optional, Protocol, runtime_checkable

WEIGHT_EPS = 1e-9


class ErosionUnderflowError(ValueError):
    """Raised when an erosion removes more weight than was ever fused."""


class OccupancySample(NamedTuple):
    """One weighted measurement: probability in [0, 1], weight > 0."""

    probability: float
    weight: float = 1.0


@runtime_checkable
class VoxelPayload(Protocol):
    """What the map requires of a voxel payload type."""

    nominal_bytes: int

    @classmethod
    def empty(cls) -> "VoxelPayload": ...

    def fuse(self, sample: OccupancySample) -> "VoxelPayload": ...

    def erode(self, sample: OccupancySample) -> Optional["VoxelPayload"]: ...

    def dump(self) -> str: ...

    @classmethod
    def parse(cls, text: str) -> "VoxelPayload": ...


class OccupancyVoxel(NamedTuple):
    """Occupancy probability with accumulated evidence weight."""

    probability: float
    weight: float

    # Nominal storage cost of the fields (two float64), used by the
    # memory model; see baselines.measure_map_memory.
    nominal_bytes = 16

    @classmethod
    def empty(cls) -> "OccupancyVoxel":
        return cls(0.0, 0.0)

    def fuse(self, sample: OccupancySample) -> "OccupancyVoxel":
        """Mix in one weighted sample; new weight is the sum of weights."""
        if sample.weight <= 0.0:
            raise ValueError(f"sample weight must be > 0, got {sample.weight}")
        w = self.weight + sample.weight
        p = (self.probability * self.weight
             + sample.probability * sample.weight) / w
        # clamp only guards against float drift; the weighted mean of
        # in-range samples is already in [0, 1]
        return OccupancyVoxel(min(max(p, 0.0), 1.0), w)

    def erode(self, sample: OccupancySample) -> Optional["OccupancyVoxel"]:
        """Exactly invert a prior fuse of ``sample``.

        Returns None when no weight remains (delete the voxel). Raises
        ErosionUnderflowError if the sample was never fused.
        """
        if sample.weight <= 0.0:
            raise ValueError(f"sample weight must be > 0, got {sample.weight}")
        w = self.weight - sample.weight
        if w < -WEIGHT_EPS:
            raise ErosionUnderflowError(
                f"eroding weight {sample.weight} from voxel holding only "
                f"{self.weight}"
            )
        if w <= WEIGHT_EPS:
            return None
        p = (self.probability * self.weight
             - sample.probability * sample.weight) / w
        return OccupancyVoxel(min(max(p, 0.0), 1.0), w)

    def dump(self) -> str:
        return f"{self.probability:.9g} {self.weight:.9g}"

    @classmethod
    def parse(cls, text: str) -> "OccupancyVoxel":
        parts = text.split()
        if len(parts) != 2:
            raise ValueError(f"expected 'P W', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))


def fuse(voxel: OccupancyVoxel, sample: OccupancySample) -> OccupancyVoxel:
    """Functional form of OccupancyVoxel.fuse."""
    return voxel.fuse(sample)


def erode(
    voxel: OccupancyVoxel, sample: OccupancySample
) -> Optional[OccupancyVoxel]:
    """Functional form of OccupancyVoxel.erode; None means delete."""
    return voxel.erode(sample)
