"""Rigid 3D primitives: transforms, pinhole cameras, rays and yaw-rotated boxes.

All value types are frozen dataclasses holding plain tuples so that they
compare and hash by value. Batched helpers (``camera_rays``,
``intersect_rays_obb``, ``points_in_obb``) operate on numpy arrays and are
what the mask generators use internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

Vec3 = Tuple[float, float, float]

# absolute tolerance for geometric equalities, meters
ATOL = 1e-9


class BehindCameraError(ValueError):
    """Raised when projecting a point with non-positive camera depth."""


class GridIndexError(IndexError):
    """Raised for a feature-grid index outside the camera's grid."""


def as_vec3(values) -> Vec3:
    x, y, z = (float(v) for v in values)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError(f"non-finite vector component in {(x, y, z)}")
    return (x, y, z)


def wrap_yaw(angle: float) -> float:
    """Map an angle into [-pi, pi)."""
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    # fmod can round up to exactly pi for inputs just below -pi
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (row-major 3x3) followed by translation."""

    rotation: Tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    translation: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        rot = tuple(float(v) for v in self.rotation)
        if len(rot) != 9:
            raise ValueError("rotation must have 9 row-major entries")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", as_vec3(self.translation))
        r = self.matrix
        if not np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=ATOL):
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) <= 0.0:
            raise ValueError("rotation must have determinant +1")

    @classmethod
    def from_matrix(cls, rotation, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(tuple(np.asarray(rotation, dtype=float).ravel()), tuple(translation))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.rotation, dtype=float).reshape(3, 3)

    @property
    def offset(self) -> np.ndarray:
        return np.array(self.translation, dtype=float)

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        return np.asarray(points, dtype=float) @ self.matrix.T + self.offset

    def apply_vector(self, vectors) -> np.ndarray:
        """Rotate direction vectors of shape (..., 3); translation is ignored."""
        return np.asarray(vectors, dtype=float) @ self.matrix.T

    def inverse(self) -> "RigidTransform":
        r = self.matrix
        return RigidTransform.from_matrix(r.T, -(r.T @ self.offset))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return ``self * other`` (apply ``other`` first)."""
        r = self.matrix @ other.matrix
        return RigidTransform.from_matrix(r, self.matrix @ other.offset + self.offset)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point must lie on the sensor")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraRig:
    """A calibrated camera: intrinsics, camera-to-LiDAR extrinsics and feature stride.

    Camera frame convention is x right, y down, z forward.
    """

    id: int
    intrinsics: CameraIntrinsics
    cam_to_lidar: RigidTransform = field(default_factory=RigidTransform)
    feature_stride: int = 16

    def __post_init__(self):
        if int(self.feature_stride) < 1:
            raise ValueError("feature_stride must be a positive integer")

    @property
    def optical_center(self) -> Vec3:
        return self.cam_to_lidar.translation

    @property
    def grid_shape(self) -> Tuple[int, int]:
        """(rows, cols) of the feature grid."""
        s = self.feature_stride
        return math.ceil(self.intrinsics.height / s), math.ceil(self.intrinsics.width / s)

    def cell_pixel(self, i, j):
        """Full-resolution pixel center (u, v) of feature cell (i, j)."""
        s = self.feature_stride
        return s * (np.asarray(j) + 0.5), s * (np.asarray(i) + 0.5)


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))
        object.__setattr__(self, "direction", as_vec3(self.direction))
        if abs(math.sqrt(sum(c * c for c in self.direction)) - 1.0) > ATOL:
            raise ValueError("ray direction must be unit norm")

    @classmethod
    def toward(cls, origin, direction) -> "Ray":
        """Build a ray, normalizing ``direction``."""
        d = np.asarray(direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("zero-length ray direction")
        return cls(tuple(origin), tuple(d / n))

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        return np.array(self.origin) + t * np.array(self.direction)


@dataclass(frozen=True)
class OrientedBox3D:
    center: Vec3
    dims: Vec3  # length (local x), width (local y), height (z)
    yaw: float
    class_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        object.__setattr__(self, "dims", as_vec3(self.dims))
        object.__setattr__(self, "yaw", float(self.yaw))
        if min(self.dims) <= 0.0:
            raise ValueError(f"box dims must be strictly positive, got {self.dims}")
        if not (-math.pi <= self.yaw < math.pi):
            raise ValueError(f"yaw {self.yaw} outside [-pi, pi)")
        if int(self.class_id) < 0:
            raise ValueError("class_id must be non-negative")

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * np.array(self.dims)

    def to_local(self, points) -> np.ndarray:
        """Express world points in the box frame (centered, yaw removed)."""
        rel = np.asarray(points, dtype=float) - np.array(self.center)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x = c * rel[..., 0] + s * rel[..., 1]
        y = -s * rel[..., 0] + c * rel[..., 1]
        return np.stack([x, y, rel[..., 2]], axis=-1)

    def corners(self) -> np.ndarray:
        """The 8 corners, shape (8, 3)."""
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        local = signs * self.half_extents
        return local @ rotation_z(self.yaw).T + np.array(self.center)

    def footprint(self) -> np.ndarray:
        """Counter-clockwise ground-plane corners, shape (4, 2)."""
        hl, hw, _ = self.half_extents
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        return local @ rotation_z(self.yaw)[:2, :2].T + np.array(self.center[:2])


def point_in_obb(p, box: OrientedBox3D) -> bool:
    return bool(points_in_obb(np.asarray(p, dtype=float)[None], box)[0])


def points_in_obb(points: np.ndarray, box: OrientedBox3D) -> np.ndarray:
    """Closed containment test for points of shape (N, 3)."""
    local = box.to_local(points)
    return np.all(np.abs(local) <= box.half_extents, axis=-1)


def intersect_rays_obb(origins: np.ndarray, directions: np.ndarray, box: OrientedBox3D):
    """Batched slab test in the box frame.

    Parameters
    ----------
    origins, directions : ndarray, shape (N, 3)
        Ray origins and unit directions.
    box : OrientedBox3D

    Returns
    -------
    hit : ndarray of bool, shape (N,)
    t_near, t_far : ndarray, shape (N,)
        Parametric entry (clamped to 0) and exit; meaningful where ``hit``.

    Notes
    -----
    A ray counts as a hit only if the inside interval has positive length
    and ends in front of the origin, so face-grazing rays are misses.
    """
    o = box.to_local(origins)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = np.asarray(directions, dtype=float)
    d = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]], axis=-1)
    h = box.half_extents

    n = o.shape[0]
    t_enter = np.full(n, -np.inf)
    t_exit = np.full(n, np.inf)
    for axis in range(3):
        da, oa = d[:, axis], o[:, axis]
        moving = da != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (-h[axis] - oa) / da
            t1 = (h[axis] - oa) / da
        lo = np.where(moving, np.minimum(t0, t1), np.where(np.abs(oa) < h[axis], -np.inf, np.inf))
        hi = np.where(moving, np.maximum(t0, t1), np.where(np.abs(oa) < h[axis], np.inf, -np.inf))
        t_enter = np.maximum(t_enter, lo)
        t_exit = np.minimum(t_exit, hi)

    t_near = np.maximum(t_enter, 0.0)
    hit = t_exit > t_near
    return hit, t_near, t_exit


def intersect_ray_obb(ray: Ray, box: OrientedBox3D) -> Optional[Tuple[float, float]]:
    """Parametric interval ``(t_near, t_far)`` where ``ray`` is inside ``box``.

    Returns None when the ray misses or the box lies entirely behind the
    origin. An origin inside the box gives ``t_near == 0``.
    """
    hit, t_near, t_far = intersect_rays_obb(
        np.array([ray.origin]), np.array([ray.direction]), box
    )
    if not hit[0]:
        return None
    return float(t_near[0]), float(t_far[0])


def project(rig: CameraRig, p_cam) -> Tuple[float, float]:
    """Pinhole projection of a camera-frame point to pixel coordinates."""
    x, y, z = as_vec3(p_cam)
    if z <= 0.0:
        raise BehindCameraError(f"point {p_cam} is behind camera {rig.id}")
    k = rig.intrinsics
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy


def backproject_pixel_ray(rig: CameraRig, i: int, j: int) -> Ray:
    """LiDAR-frame ray through the center of feature cell (i, j)."""
    rows, cols = rig.grid_shape
    if not (0 <= i < rows and 0 <= j < cols):
        raise GridIndexError(f"cell ({i}, {j}) outside {rows}x{cols} grid of camera {rig.id}")
    origins, dirs = camera_rays(rig, np.array([i]), np.array([j]))
    return Ray(tuple(origins[0]), tuple(dirs[0]))


def camera_rays(rig: CameraRig, rows=None, cols=None):
    """Origins and unit directions for feature cells, shape (N, 3) each.

    With ``rows``/``cols`` omitted every cell of the grid is returned in
    row-major order.
    """
    if rows is None:
        n_rows, n_cols = rig.grid_shape
        rows, cols = np.divmod(np.arange(n_rows * n_cols), n_cols)
    u, v = rig.cell_pixel(rows, cols)
    k = rig.intrinsics
    d_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u, dtype=float)], axis=-1)
    d = rig.cam_to_lidar.apply_vector(d_cam)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    origins = np.broadcast_to(np.array(rig.optical_center), d.shape).copy()
    return origins, d
