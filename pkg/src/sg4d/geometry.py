"""Pinhole back-projection, voxel occupancy, and per-entity 3D trajectories.

The camera model is a plain pinhole (fx, fy, cx, cy) with integer pixel
coordinates: a pixel at column u, row v with depth d back-projects to
((u-cx)*d/fx, (v-cy)*d/fy, d) in camera space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, InvalidThreshold, InvalidVoxelSize
from .model import EntityNode, MaskTube
from .overlap import rle_decode

DEFAULT_MAX_DEPTH = 20.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """4x4 row-major rigid transform; rotation orthonormal within 1e-6."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row must be (0, 0, 0, 1)")
        r = m[:3, :3]
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation block is not orthonormal")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(4))

    def inverse(self) -> "RigidTransform":
        r = self.matrix[:3, :3]
        t = self.matrix[:3, 3]
        out = np.eye(4)
        out[:3, :3] = r.T
        out[:3, 3] = -r.T @ t
        return RigidTransform(out)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self applied after other."""
        return RigidTransform(self.matrix @ other.matrix)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:3, :3].T + self.matrix[:3, 3]


@dataclass(frozen=True, eq=False)
class PointCloudFrame:
    """Colored point cloud: (M, 6) array of x, y, z, r, g, b.

    ``source_pixels`` optionally records the (row, col) each point came from.
    """

    points: np.ndarray
    source_pixels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 6)
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.source_pixels is not None:
            src = np.asarray(self.source_pixels, dtype=np.int64).reshape(-1, 2)
            if len(src) != len(pts):
                raise ValueError("source_pixels length mismatch")
            object.__setattr__(self, "source_pixels", src)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def rgb(self) -> np.ndarray:
        return self.points[:, 3:]


def depth_frame_to_points(
    depth: np.ndarray,
    rgb: np.ndarray,
    intrinsics: CameraIntrinsics,
    cam_to_world: RigidTransform,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> PointCloudFrame:
    """Back-project one RGB-D frame into a world-space colored point cloud.

    Pixels with depth 0 (missing) or depth above ``max_depth`` are dropped;
    the output is ordered by row-major scan of the retained pixels.
    """
    if max_depth <= 0:
        raise InvalidThreshold(f"max_depth must be positive, got {max_depth}")
    d = np.asarray(depth, dtype=np.float64)
    c = np.asarray(rgb)
    if d.shape != (intrinsics.height, intrinsics.width):
        raise DimensionMismatch(f"depth {d.shape} vs intrinsics {(intrinsics.height, intrinsics.width)}")
    if c.shape != (intrinsics.height, intrinsics.width, 3):
        raise DimensionMismatch(f"rgb {c.shape} vs intrinsics {(intrinsics.height, intrinsics.width, 3)}")

    valid = (d > 0) & (d <= max_depth)
    rows, cols = np.nonzero(valid)
    z = d[rows, cols]
    x = (cols - intrinsics.cx) * z / intrinsics.fx
    y = (rows - intrinsics.cy) * z / intrinsics.fy
    world = cam_to_world.apply(np.column_stack([x, y, z]))
    points = np.column_stack([world, c[rows, cols].astype(np.float64)])
    return PointCloudFrame(points, source_pixels=np.column_stack([rows, cols]))


def voxelize(frame: PointCloudFrame, voxel_size: float) -> list[tuple[int, int, int]]:
    """Occupied integer voxel coordinates, deduplicated and sorted."""
    if voxel_size <= 0:
        raise InvalidVoxelSize(f"voxel_size must be positive, got {voxel_size}")
    if len(frame) == 0:
        return []
    cells = np.floor(frame.xyz / voxel_size).astype(np.int64)
    unique = np.unique(cells, axis=0)
    return [tuple(int(v) for v in row) for row in unique]


@dataclass(frozen=True, eq=False)
class FrameGeometry:
    """Per-frame data needed to lift mask pixels into 3D."""

    depth: np.ndarray
    intrinsics: CameraIntrinsics
    cam_to_world: RigidTransform
    max_depth: float = math.inf


def _mask_frame_points(mask, geom: FrameGeometry) -> np.ndarray:
    """World-space points of a mask's valid-depth pixels, (N, 3)."""
    sel = rle_decode(mask)
    d = np.asarray(geom.depth, dtype=np.float64)
    if d.shape != sel.shape:
        raise DimensionMismatch(f"depth {d.shape} vs mask {sel.shape}")
    valid = sel & (d > 0) & (d <= geom.max_depth)
    rows, cols = np.nonzero(valid)
    if len(rows) == 0:
        return np.empty((0, 3))
    z = d[rows, cols]
    x = (cols - geom.intrinsics.cx) * z / geom.intrinsics.fx
    y = (rows - geom.intrinsics.cy) * z / geom.intrinsics.fy
    return geom.cam_to_world.apply(np.column_stack([x, y, z]))


def tube_points(entity: EntityNode, frames: Mapping[int, object]) -> dict[int, np.ndarray]:
    """World-space 3D points selected by the entity's tube, per frame.

    ``frames`` maps frame index to :class:`FrameGeometry` for mask tubes or
    to :class:`PointCloudFrame` for point tubes. Frames without geometry
    data or with zero valid-depth pixels are omitted.
    """
    out: dict[int, np.ndarray] = {}
    tube = entity.tube
    if isinstance(tube, MaskTube):
        for f in sorted(tube.frames):
            geom = frames.get(f)
            if geom is None:
                continue
            pts = _mask_frame_points(tube.frames[f], geom)
            if len(pts):
                out[f] = pts
    else:
        for f in sorted(tube.frames):
            cloud = frames.get(f)
            indices = tube.frames[f]
            if cloud is None or not indices:
                continue
            out[f] = cloud.xyz[np.asarray(indices, dtype=np.int64)]
    return out


def tube_trajectory(
    entity: EntityNode, frames: Mapping[int, object]
) -> dict[int, tuple[float, float, float]]:
    """Per-frame 3D centroid of the entity's tube (see :func:`tube_points`)."""
    return {
        f: tuple(float(v) for v in pts.mean(axis=0))
        for f, pts in tube_points(entity, frames).items()
    }
