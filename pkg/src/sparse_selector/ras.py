"""Ray-aware supervision masks for camera feature grids and the BEV plane.

A token is positive when the ray through its cell center hits any ground
truth box in front of the origin. Camera tokens use back-projected pixel
rays; BEV tokens use vertical rays starting at the region floor.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from .geometry import OrientedBox3D, camera_rays, intersect_rays_obb, points_in_obb
from .scene import GridSpec, Scene


class MaskFormatError(ValueError):
    """A mask dump could not be parsed."""


@dataclass(frozen=True, eq=False)
class SupervisionMask:
    grid: GridSpec
    values: np.ndarray  # (rows, cols) uint8 in {0, 1}
    modality: str  # "camera:<k>" or "bev"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.uint8)
        if values.shape != self.grid.shape:
            raise ValueError(f"mask shape {values.shape} does not match grid {self.grid.shape}")
        if np.any(values > 1):
            raise ValueError("mask values must be 0 or 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, SupervisionMask):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.modality == other.modality
            and np.array_equal(self.values, other.values)
        )

    @property
    def positive(self) -> np.ndarray:
        """Flat indices of positive tokens."""
        return np.flatnonzero(self.values.ravel())

    @property
    def foreground_fraction(self) -> float:
        return float(self.values.mean())


def grid_modality(grid: GridSpec) -> str:
    return "bev" if grid.kind == "bev" else f"camera:{grid.rig_id}"


def grid_rays(scene: Scene, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major ray origins and directions for every cell of ``grid``."""
    if grid.kind == "camera":
        return camera_rays(scene.rig(grid.rig_id))
    centers = grid.cell_centers().reshape(-1, 2)
    origins = np.column_stack([centers, np.full(len(centers), scene.region.z_min)])
    dirs = np.zeros_like(origins)
    dirs[:, 2] = 1.0
    return origins, dirs


def candidate_cells(scene: Scene, grid: GridSpec, box: OrientedBox3D) -> np.ndarray:
    """Flat indices of cells whose ray could meet ``box``.

    For BEV grids this is the window of cells under the footprint's
    axis-aligned bounds; camera grids are small enough to test in full.
    """
    if grid.kind != "bev":
        return np.arange(grid.n_tokens)
    fp = box.footprint()
    lo = (fp.min(axis=0) - np.array(grid.origin[:2])) / grid.cell_size - 0.5
    hi = (fp.max(axis=0) - np.array(grid.origin[:2])) / grid.cell_size - 0.5
    j0, i0 = np.maximum(np.floor(lo).astype(int), 0)
    j1, i1 = np.minimum(np.ceil(hi).astype(int), [grid.cols - 1, grid.rows - 1])
    if i1 < i0 or j1 < j0:
        return np.zeros(0, dtype=np.int64)
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    return (ii * grid.cols + jj).ravel()


def box_hits(scene: Scene, grid: GridSpec):
    """Yield ``(box_index, cells, t_near, t_far)`` for the cells each box's rays hit."""
    origins, dirs = grid_rays(scene, grid)
    for b, box in enumerate(scene.boxes):
        cells = candidate_cells(scene, grid, box)
        if cells.size == 0:
            continue
        hit, t0, t1 = intersect_rays_obb(origins[cells], dirs[cells], box)
        yield b, cells[hit], t0[hit], t1[hit]


def ras_mask(scene: Scene, grid: GridSpec) -> SupervisionMask:
    values = np.zeros(grid.n_tokens, dtype=bool)
    for _, cells, _, _ in box_hits(scene, grid):
        values[cells] = True
    return SupervisionMask(grid, values.reshape(grid.shape), grid_modality(grid))


def ras_camera_mask(scene: Scene, rig_id: int) -> SupervisionMask:
    return ras_mask(scene, scene.camera_grid(rig_id))


def ras_bev_mask(scene: Scene) -> SupervisionMask:
    return ras_mask(scene, scene.bev)


def ras_all_masks(scene: Scene, workers: int = 1) -> Dict[str, SupervisionMask]:
    """Masks for every camera plus the BEV grid, keyed by modality.

    ``workers`` only changes scheduling; results are identical.
    """
    grids = [scene.camera_grid(rig.id) for rig in scene.rigs] + [scene.bev]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            masks = list(pool.map(lambda g: ras_mask(scene, g), grids))
    else:
        masks = [ras_mask(scene, g) for g in grids]
    return {m.modality: m for m in masks}


def ras_owner_map(scene: Scene, grid: GridSpec) -> np.ndarray:
    """Index of the nearest box hit by each cell's ray, -1 for background.

    "Nearest" is the smallest entry parameter; ties go to the lower box index.
    """
    owner = np.full(grid.n_tokens, -1, dtype=np.int64)
    best = np.full(grid.n_tokens, np.inf)
    for b, cells, t0, _ in box_hits(scene, grid):
        closer = t0 < best[cells]
        owner[cells[closer]] = b
        best[cells[closer]] = t0[closer]
    return owner.reshape(grid.shape)


def ras_class_masks(scene: Scene, grid: GridSpec) -> np.ndarray:
    """Per-class masks, shape (C, rows, cols); a cell counts for every class it hits."""
    out = np.zeros((scene.n_classes, grid.n_tokens), dtype=bool)
    for b, cells, _, _ in box_hits(scene, grid):
        out[scene.boxes[b].class_id, cells] = True
    return out.reshape((scene.n_classes,) + grid.shape)


def ras_chords(scene: Scene, grid: GridSpec, t_max: float = np.inf) -> np.ndarray:
    """Longest inside-interval over all boxes per cell, restricted to [0, t_max]."""
    chord = np.zeros(grid.n_tokens)
    for _, cells, t0, t1 in box_hits(scene, grid):
        length = np.clip(np.minimum(t1, t_max) - t0, 0.0, None)
        chord[cells] = np.maximum(chord[cells], length)
    return chord.reshape(grid.shape)


# ------------------------------------------------------------------- oracles


def march_rays(
    origins: np.ndarray,
    dirs: np.ndarray,
    boxes: Sequence[OrientedBox3D],
    step: float,
    t_max,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample each ray at ``t = k * step`` for ``0 <= t <= t_max`` and test containment.

    Only samples inside a box's bounding sphere can be inside the box, so
    the march is restricted to those; the set of inside samples is the same
    as for an exhaustive march.

    Returns
    -------
    hit : (N,) bool
        Some sample lies inside some box.
    first : (N,) float
        Smallest inside-sample ``t`` over all boxes (inf if none).
    chord : (N,) float
        Longest per-box span ``last - first`` of inside samples.
    """
    if step <= 0:
        raise ValueError("march step must be positive")
    n = len(origins)
    t_max = np.broadcast_to(np.asarray(t_max, dtype=float), (n,))
    first = np.full(n, np.inf)
    chord = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    for box in boxes:
        center = np.array(box.center)
        radius = float(np.linalg.norm(box.half_extents)) + step
        rel = origins - center
        b = np.einsum("ij,ij->i", dirs, rel)
        disc = b * b - (np.einsum("ij,ij->i", rel, rel) - radius * radius)
        cand = np.flatnonzero(disc >= 0.0)
        if cand.size == 0:
            continue
        root = np.sqrt(disc[cand])
        lo = np.maximum(-b[cand] - root, 0.0)
        hi = np.minimum(-b[cand] + root, t_max[cand])
        k0 = np.floor(lo / step).astype(np.int64)
        k1 = np.floor(hi / step).astype(np.int64)
        # the floor of t_max / step is the last sample the full march takes
        k1 = np.minimum(k1, np.floor(t_max[cand] / step).astype(np.int64))
        counts = np.maximum(k1 - k0 + 1, 0)
        keep = counts > 0
        cand, k0, counts = cand[keep], k0[keep], counts[keep]
        if cand.size == 0:
            continue
        ray_idx = np.repeat(cand, counts)
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        t = (np.repeat(k0, counts) + offsets) * step
        pts = origins[ray_idx] + t[:, None] * dirs[ray_idx]
        inside = points_in_obb(pts, box)
        if not inside.any():
            continue
        r_in, t_in = ray_idx[inside], t[inside]
        box_first = np.full(n, np.inf)
        box_last = np.full(n, -np.inf)
        np.minimum.at(box_first, r_in, t_in)
        np.maximum.at(box_last, r_in, t_in)
        got = np.isfinite(box_first)
        hit |= got
        first = np.minimum(first, box_first)
        chord[got] = np.maximum(chord[got], box_last[got] - box_first[got])
    return hit, first, chord


def oracle_t_max(scene: Scene, origins: np.ndarray) -> np.ndarray:
    return np.array([scene.region.farthest_corner_distance(o) for o in origins])


def ras_oracle_camera_march(scene: Scene, rig_id: int, march_step: float):
    """Marching oracle for one camera: (mask, per-cell chord, t_max per cell)."""
    grid = scene.camera_grid(rig_id)
    origins, dirs = grid_rays(scene, grid)
    t_max = scene.region.farthest_corner_distance(origins[0])
    hit, _, chord = march_rays(origins, dirs, scene.boxes, march_step, t_max)
    mask = SupervisionMask(grid, hit.reshape(grid.shape), grid_modality(grid))
    return mask, chord.reshape(grid.shape), t_max


def ras_oracle_camera_mask(scene: Scene, rig_id: int, march_step: float) -> SupervisionMask:
    return ras_oracle_camera_march(scene, rig_id, march_step)[0]


def footprint_contains(footprint: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Point-in-convex-polygon test for a counter-clockwise polygon.

    Returns ``(inside, edge_distance)`` for points of shape (N, 2), where
    ``inside`` is strict and ``edge_distance`` is the distance to the
    nearest polygon edge segment.
    """
    inside = np.ones(len(points), dtype=bool)
    dist = np.full(len(points), np.inf)
    for a, b in zip(footprint, np.roll(footprint, -1, axis=0)):
        edge = b - a
        rel = points - a
        cross = edge[0] * rel[:, 1] - edge[1] * rel[:, 0]
        inside &= cross > 0.0
        s = np.clip(rel @ edge / (edge @ edge), 0.0, 1.0)
        dist = np.minimum(dist, np.linalg.norm(rel - s[:, None] * edge, axis=1))
    return inside, dist


def ras_oracle_bev_mask(scene: Scene) -> Tuple[SupervisionMask, np.ndarray]:
    """Footprint containment oracle: (mask, distance of each cell center to the nearest edge)."""
    grid = scene.bev
    centers = grid.cell_centers().reshape(-1, 2)
    values = np.zeros(len(centers), dtype=bool)
    dist = np.full(len(centers), np.inf)
    for box in scene.boxes:
        # a vertical ray from the floor only meets boxes that reach above it
        if box.center[2] + box.dims[2] / 2.0 <= scene.region.z_min:
            continue
        inside, d = footprint_contains(box.footprint(), centers)
        values |= inside
        dist = np.minimum(dist, d)
    return SupervisionMask(grid, values.reshape(grid.shape), "bev"), dist.reshape(grid.shape)


def mask_disagreements(
    analytic: np.ndarray,
    analytic_chord: np.ndarray,
    oracle: np.ndarray,
    oracle_chord: np.ndarray,
    min_chord: float,
) -> Tuple[int, int]:
    """Count cells where analytic and oracle masks differ.

    A cell is excluded as grazing when either side marks it positive but
    neither measures a chord of at least ``min_chord``.

    Returns
    -------
    (disagreements, excluded)
    """
    analytic = np.asarray(analytic, dtype=bool)
    oracle = np.asarray(oracle, dtype=bool)
    grazing = (analytic | oracle) & (np.maximum(analytic_chord, oracle_chord) < min_chord)
    differ = (analytic != oracle) & ~grazing
    return int(differ.sum()), int(grazing.sum())


# ------------------------------------------------------------------- mask IO


def format_mask(mask: SupervisionMask) -> str:
    rows = ["".join("1" if v else "0" for v in row) for row in mask.values]
    return f"RAS {mask.modality} {mask.grid.rows} {mask.grid.cols}\n" + "\n".join(rows) + "\n"


def write_mask(mask: SupervisionMask, path) -> None:
    Path(path).write_text(format_mask(mask), encoding="ascii")


def parse_mask(text: str) -> Tuple[str, np.ndarray]:
    """Parse a mask dump into ``(modality, values)``."""
    lines = text.splitlines()
    if not lines:
        raise MaskFormatError("empty mask file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "RAS":
        raise MaskFormatError(f"bad header {lines[0]!r}")
    try:
        rows, cols = int(head[2]), int(head[3])
    except ValueError:
        raise MaskFormatError(f"bad dimensions in header {lines[0]!r}") from None
    body = lines[1:]
    if rows < 1 or cols < 1 or len(body) != rows:
        raise MaskFormatError(f"expected {rows} rows, found {len(body)}")
    values = np.zeros((rows, cols), dtype=np.uint8)
    for i, line in enumerate(body):
        if len(line) != cols or set(line) - {"0", "1"}:
            raise MaskFormatError(f"row {i} must be {cols} characters of 0/1")
        values[i] = np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0")
    return head[1], values


def read_mask(path) -> Tuple[str, np.ndarray]:
    return parse_mask(Path(path).read_text(encoding="ascii"))
