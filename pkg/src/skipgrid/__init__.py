"""Sparse voxel mapping on nested skip lists.

Three stacked ordered lists (x, then y, then z index) store only
occupied space, support box and radius search through ordered range
scans, carry 2D ground tiles at the middle level, and allow sensor
measurements to be eroded and re-fused when revised poses arrive.
"""
from .baselines import (
    DenseGrid,
    MemoryReport,
    ReferenceOctree,
    brute_radius,
    dense_grid_memory,
    measure_map_memory,
    mls_memory,
    octree_memory,
)
from .core import (
    KEY_MAX,
    KEY_MIN,
    IntegrationReport,
    MapConfig,
    Placement,
    TileData,
    VoxelGrid,
    VoxelKey,
    WorkspaceBoundsError,
    erode_placement,
    quantize,
    quantize_points,
    voxel_center,
)
from .fusion import (
    ErosionUnderflowError,
    OccupancySample,
    OccupancyVoxel,
    VoxelPayload,
)
from .ground import (
    GroundDetectionError,
    GroundIntegrator,
    GroundModel,
    PointLabel,
    classify,
    classify_points,
    detect_ground,
    integrate_classified,
    occupancy_grid,
    projection_grid,
    tile_height_map,
)
from .posegraph import (
    CycleReport,
    DuplicateFrameError,
    FrameRecord,
    Pose,
    PoseHistory,
    read_frame_log,
    transform_points,
)
from .skiplist import OpCounter, SkipList

__version__ = "0.1.0"

__all__ = [
    "DenseGrid",
    "MemoryReport",
    "ReferenceOctree",
    "brute_radius",
    "dense_grid_memory",
    "measure_map_memory",
    "mls_memory",
    "octree_memory",
    "KEY_MAX",
    "KEY_MIN",
    "IntegrationReport",
    "MapConfig",
    "Placement",
    "TileData",
    "VoxelGrid",
    "VoxelKey",
    "WorkspaceBoundsError",
    "erode_placement",
    "quantize",
    "quantize_points",
    "voxel_center",
    "ErosionUnderflowError",
    "OccupancySample",
    "OccupancyVoxel",
    "VoxelPayload",
    "GroundDetectionError",
    "GroundIntegrator",
    "GroundModel",
    "PointLabel",
    "classify",
    "classify_points",
    "detect_ground",
    "integrate_classified",
    "occupancy_grid",
    "projection_grid",
    "tile_height_map",
    "CycleReport",
    "DuplicateFrameError",
    "FrameRecord",
    "Pose",
    "PoseHistory",
    "read_frame_log",
    "transform_points",
    "OpCounter",
    "SkipList",
    "__version__",
]
