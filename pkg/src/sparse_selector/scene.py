"""Synthetic multi-camera scenes and their JSON file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .geometry import (
    CameraIntrinsics,
    CameraRig,
    OrientedBox3D,
    RigidTransform,
    Vec3,
    as_vec3,
)

# Class taxonomy with (length, width, height) ranges in meters. The two
# small classes sit at indices 1 and 3 so that short class mixes such as
# [0.9, 0.1] pair a dominant large class with a rare small one.
CLASS_PRIORS = (
    ("car", (3.8, 5.0), (1.7, 2.1), (1.4, 1.9)),
    ("traffic_cone", (0.3, 0.5), (0.3, 0.5), (0.6, 1.0)),
    ("pedestrian", (0.5, 0.9), (0.5, 0.8), (1.5, 1.9)),
    ("bicycle", (1.5, 1.9), (0.5, 0.7), (1.0, 1.4)),
    ("truck", (6.0, 10.0), (2.3, 2.8), (2.8, 3.6)),
    ("bus", (10.0, 12.5), (2.8, 3.0), (3.2, 3.8)),
    ("trailer", (8.0, 12.0), (2.3, 2.8), (3.5, 4.0)),
    ("barrier", (1.8, 2.6), (0.4, 0.6), (0.9, 1.1)),
    ("motorcycle", (1.9, 2.3), (0.7, 0.9), (1.3, 1.6)),
    ("construction_vehicle", (5.0, 7.0), (2.5, 3.0), (3.0, 3.5)),
)
DEFAULT_CLASS_NAMES = tuple(p[0] for p in CLASS_PRIORS)

GROUND_Z = -1.8
EGO_CLEARANCE = 2.5  # no box footprint within this radius of the sensor origin


class SceneSchemaError(ValueError):
    """Scene file does not match the schema; ``path`` names the field."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SceneInvariantError(ValueError):
    """Scene file is well formed but violates a value invariant."""


@dataclass(frozen=True)
class SceneRegion:
    x_min: float = -54.0
    x_max: float = 54.0
    y_min: float = -54.0
    y_max: float = 54.0
    z_min: float = -5.0
    z_max: float = 3.0

    def __post_init__(self):
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise ValueError("region min must be below max on every axis")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def farthest_corner_distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        far = np.maximum(np.abs(self.lower - p), np.abs(self.upper - p))
        return float(np.linalg.norm(far))


@dataclass(frozen=True)
class GridSpec:
    """A token grid: a camera feature map or the BEV plane.

    BEV cell (i, j) has its center at ``origin + ((j + 0.5) * cell, (i + 0.5) * cell)``;
    rows run along y and columns along x.
    """

    kind: str
    rows: int
    cols: int
    cell_size: Optional[float] = None
    origin: Optional[Vec3] = None
    rig_id: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("camera", "bev"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have positive rows and cols")
        if self.kind == "bev":
            if self.cell_size is None or self.cell_size <= 0 or self.origin is None:
                raise ValueError("bev grid needs a positive cell_size and an origin")
            object.__setattr__(self, "origin", as_vec3(self.origin))
        elif self.rig_id is None:
            raise ValueError("camera grid needs a rig_id")

    @property
    def n_tokens(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def cell_centers(self) -> np.ndarray:
        """Metric (x, y) centers of all BEV cells, shape (rows, cols, 2)."""
        if self.kind != "bev":
            raise ValueError("cell centers are defined for bev grids only")
        jj, ii = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        x = self.origin[0] + (jj + 0.5) * self.cell_size
        y = self.origin[1] + (ii + 0.5) * self.cell_size
        return np.stack([x, y], axis=-1)

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        """BEV cell (i, j) containing metric point (x, y), clipped to the grid."""
        j = int(math.floor((x - self.origin[0]) / self.cell_size))
        i = int(math.floor((y - self.origin[1]) / self.cell_size))
        return min(max(i, 0), self.rows - 1), min(max(j, 0), self.cols - 1)

    @classmethod
    def for_rig(cls, rig: CameraRig) -> "GridSpec":
        rows, cols = rig.grid_shape
        return cls("camera", rows, cols, rig_id=rig.id)

    @classmethod
    def bev_for_region(cls, region: SceneRegion, cell_size: float = 0.6) -> "GridSpec":
        cols = int(round((region.x_max - region.x_min) / cell_size))
        rows = int(round((region.y_max - region.y_min) / cell_size))
        return cls("bev", rows, cols, cell_size=cell_size, origin=(region.x_min, region.y_min, region.z_min))


@dataclass(frozen=True)
class ClassDistribution:
    counts: Tuple[int, ...]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


@dataclass(frozen=True)
class Scene:
    region: SceneRegion
    boxes: Tuple[OrientedBox3D, ...]
    rigs: Tuple[CameraRig, ...]
    bev: GridSpec
    class_names: Tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "rigs", tuple(self.rigs))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        check_scene(self)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def rig(self, rig_id: int) -> CameraRig:
        for rig in self.rigs:
            if rig.id == rig_id:
                return rig
        raise KeyError(f"no camera with id {rig_id}")

    def camera_grid(self, rig_id: int) -> GridSpec:
        return GridSpec.for_rig(self.rig(rig_id))

    def with_boxes(self, boxes: Sequence[OrientedBox3D]) -> "Scene":
        return Scene(self.region, tuple(boxes), self.rigs, self.bev, self.class_names)


def check_scene(scene: Scene) -> None:
    """Raise SceneInvariantError on the first violated scene invariant."""
    region = scene.region
    c = len(scene.class_names)
    for k, box in enumerate(scene.boxes):
        if box.class_id >= c:
            raise SceneInvariantError(f"box {k}: class_id {box.class_id} >= {c} classes")
        if not region.contains(box.center):
            raise SceneInvariantError(f"box {k}: center {box.center} outside region")
    ids = [rig.id for rig in scene.rigs]
    if len(set(ids)) != len(ids):
        raise SceneInvariantError("camera ids must be unique")
    bev = scene.bev
    if bev.kind != "bev":
        raise SceneInvariantError("scene bev grid must be of kind 'bev'")
    if abs(bev.cols * bev.cell_size - (region.x_max - region.x_min)) > bev.cell_size:
        raise SceneInvariantError("bev cols * cell_size must span the region x extent")
    if abs(bev.rows * bev.cell_size - (region.y_max - region.y_min)) > bev.cell_size:
        raise SceneInvariantError("bev rows * cell_size must span the region y extent")


def surround_rigs(
    n_cameras: int = 6,
    fx: float = 400.0,
    fy: float = 400.0,
    width: int = 800,
    height: int = 320,
    feature_stride: int = 16,
    ring_radius: float = 1.0,
    mount_height: float = 0.0,
) -> Tuple[CameraRig, ...]:
    """Cameras evenly spaced on a ring, optical axes pointing outward and level."""
    intr = CameraIntrinsics(fx, fy, width / 2.0, height / 2.0, width, height)
    rigs = []
    for k in range(n_cameras):
        theta = 2.0 * math.pi * k / n_cameras
        fwd = np.array([math.cos(theta), math.sin(theta), 0.0])
        right = np.array([math.sin(theta), -math.cos(theta), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        rot = np.stack([right, down, fwd], axis=1)
        t = (ring_radius * fwd[0], ring_radius * fwd[1], mount_height)
        rigs.append(CameraRig(k, intr, RigidTransform.from_matrix(rot, t), feature_stride))
    return tuple(rigs)


def generate_scene(
    seed: int,
    n_boxes: int,
    class_mix: Sequence[float],
    n_cameras: int = 6,
    region: Optional[SceneRegion] = None,
    cell_size: float = 0.6,
) -> Scene:
    """Seeded synthetic scene.

    Classes are drawn first, in one ``rng.choice`` call, so the class counts
    can be replayed from ``np.random.default_rng(seed)`` alone. Box footprints
    lie fully inside the region x-y extent, clear of the ego area, and rest
    on a ground plane.
    """
    mix = np.asarray(class_mix, dtype=float)
    if mix.size == 0:
        raise ValueError("class_mix must not be empty")
    if mix.size > len(CLASS_PRIORS):
        raise ValueError(f"at most {len(CLASS_PRIORS)} classes are available")
    if np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-6:
        raise ValueError("class_mix must be non-negative and sum to 1")
    if n_boxes < 0:
        raise ValueError("n_boxes must be non-negative")
    if n_cameras < 1:
        raise ValueError("need at least one camera")
    region = region or SceneRegion()

    rng = np.random.default_rng(seed)
    classes = rng.choice(mix.size, size=n_boxes, p=mix / mix.sum())
    boxes = []
    for cls in classes:
        _, lr, wr, hr = CLASS_PRIORS[cls]
        dims = (rng.uniform(*lr), rng.uniform(*wr), rng.uniform(*hr))
        yaw = rng.uniform(-math.pi, math.pi)
        reach = 0.5 * math.hypot(dims[0], dims[1])
        while True:
            x = rng.uniform(region.x_min + reach, region.x_max - reach)
            y = rng.uniform(region.y_min + reach, region.y_max - reach)
            if math.hypot(x, y) > EGO_CLEARANCE + reach:
                break
        z = min(max(GROUND_Z + dims[2] / 2.0, region.z_min + dims[2] / 2.0), region.z_max - dims[2] / 2.0)
        boxes.append(OrientedBox3D((x, y, z), dims, yaw if yaw < math.pi else -math.pi, int(cls)))

    names = DEFAULT_CLASS_NAMES[: mix.size]
    return Scene(region, tuple(boxes), surround_rigs(n_cameras), GridSpec.bev_for_region(region, cell_size), names)


def gt_distribution(scene: Scene) -> ClassDistribution:
    counts = np.zeros(scene.n_classes, dtype=np.int64)
    for box in scene.boxes:
        counts[box.class_id] += 1
    return ClassDistribution(tuple(int(c) for c in counts))


# ---------------------------------------------------------------- file format

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["region", "class_names", "boxes", "cameras", "bev"],
    "properties": {
        "region": {
            "type": "object",
            "required": ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"],
            "properties": {k: {"type": "number"} for k in ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")},
        },
        "class_names": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "boxes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["center", "dims", "yaw", "class_id"],
                "properties": {
                    "center": _VEC3,
                    "dims": _VEC3,
                    "yaw": {"type": "number"},
                    "class_id": {"type": "integer", "minimum": 0},
                },
            },
        },
        "cameras": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "intrinsics", "cam_to_lidar", "feature_stride"],
                "properties": {
                    "id": {"type": "integer"},
                    "intrinsics": {
                        "type": "object",
                        "required": ["fx", "fy", "cx", "cy", "width", "height"],
                        "properties": {
                            "fx": {"type": "number"},
                            "fy": {"type": "number"},
                            "cx": {"type": "number"},
                            "cy": {"type": "number"},
                            "width": {"type": "integer", "minimum": 1},
                            "height": {"type": "integer", "minimum": 1},
                        },
                    },
                    "cam_to_lidar": {
                        "type": "object",
                        "required": ["rotation", "translation"],
                        "properties": {
                            "rotation": {"type": "array", "items": {"type": "number"}, "minItems": 9, "maxItems": 9},
                            "translation": _VEC3,
                        },
                    },
                    "feature_stride": {"type": "integer", "minimum": 1},
                },
            },
        },
        "bev": {
            "type": "object",
            "required": ["rows", "cols", "cell_size", "origin"],
            "properties": {
                "rows": {"type": "integer", "minimum": 1},
                "cols": {"type": "integer", "minimum": 1},
                "cell_size": {"type": "number", "exclusiveMinimum": 0},
                "origin": _VEC3,
            },
        },
    },
}


def scene_to_dict(scene: Scene) -> dict:
    r = scene.region
    return {
        "region": {
            "x_min": r.x_min, "x_max": r.x_max,
            "y_min": r.y_min, "y_max": r.y_max,
            "z_min": r.z_min, "z_max": r.z_max,
        },
        "class_names": list(scene.class_names),
        "boxes": [
            {"center": list(b.center), "dims": list(b.dims), "yaw": b.yaw, "class_id": int(b.class_id)}
            for b in scene.boxes
        ],
        "cameras": [
            {
                "id": rig.id,
                "intrinsics": {
                    "fx": rig.intrinsics.fx, "fy": rig.intrinsics.fy,
                    "cx": rig.intrinsics.cx, "cy": rig.intrinsics.cy,
                    "width": rig.intrinsics.width, "height": rig.intrinsics.height,
                },
                "cam_to_lidar": {
                    "rotation": list(rig.cam_to_lidar.rotation),
                    "translation": list(rig.cam_to_lidar.translation),
                },
                "feature_stride": rig.feature_stride,
            }
            for rig in scene.rigs
        ],
        "bev": {
            "rows": scene.bev.rows,
            "cols": scene.bev.cols,
            "cell_size": scene.bev.cell_size,
            "origin": list(scene.bev.origin),
        },
    }


def scene_to_json(scene: Scene) -> str:
    # json floats use repr, which round-trips float64 exactly
    return json.dumps(scene_to_dict(scene), indent=1) + "\n"


def scene_from_dict(data: dict) -> Scene:
    try:
        jsonschema.validate(data, SCENE_SCHEMA)
    except jsonschema.ValidationError as err:
        path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path).lstrip(".")
        raise SceneSchemaError(err.message, path) from None

    def build(what, fn):
        try:
            return fn()
        except ValueError as err:
            raise SceneInvariantError(f"{what}: {err}") from None

    r = data["region"]
    region = build("region", lambda: SceneRegion(**{k: float(r[k]) for k in SCENE_SCHEMA["properties"]["region"]["required"]}))
    boxes = [
        build(f"box {k}", lambda b=b: OrientedBox3D(tuple(b["center"]), tuple(b["dims"]), b["yaw"], b["class_id"]))
        for k, b in enumerate(data["boxes"])
    ]
    rigs = []
    for k, cam in enumerate(data["cameras"]):
        def make(cam=cam):
            intr = CameraIntrinsics(**cam["intrinsics"])
            ext = RigidTransform(tuple(cam["cam_to_lidar"]["rotation"]), tuple(cam["cam_to_lidar"]["translation"]))
            return CameraRig(cam["id"], intr, ext, cam["feature_stride"])
        rigs.append(build(f"camera {k}", make))
    b = data["bev"]
    bev = build("bev", lambda: GridSpec("bev", b["rows"], b["cols"], cell_size=float(b["cell_size"]), origin=tuple(b["origin"])))
    return Scene(region, tuple(boxes), tuple(rigs), bev, tuple(data["class_names"]))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(scene_to_json(scene), encoding="utf-8")


def load_scene(path) -> Scene:
    """Read a scene file.

    Raises
    ------
    OSError
        If the file cannot be read.
    SceneSchemaError
        If the JSON is malformed or does not match the schema.
    SceneInvariantError
        If a value violates an invariant (e.g. a box outside the region).
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise SceneSchemaError(f"invalid JSON: {err}", "") from None
    return scene_from_dict(data)
