"""Anchor sampling along camera rays and BEV verticals, and a fixed sinusoidal embedding.

The embedding stands in for a learned feature map: anchors are normalized
by the region extent, concatenated, and expanded into sin/cos features at
octave-spaced frequencies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import Ray
from .scene import SceneRegion

DEFAULT_ANCHORS = 16
DEFAULT_D_MIN = 1.0
DEFAULT_D_MAX = 54.0


@dataclass(frozen=True, eq=False)
class AnchorSequence:
    points: np.ndarray  # (d, 3), LiDAR frame
    source: str  # "camera:k:i:j", "bev:i:j", "bev" or "query"
    t: np.ndarray  # parametric position of each anchor (ray t or z)
    clamped: np.ndarray  # (d,) bool, point was moved onto the region boundary

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class PositionalEncoding:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def sample_camera_anchors(
    ray: Ray,
    d: int,
    region: SceneRegion,
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
    source: str = "camera",
) -> AnchorSequence:
    """``d`` evenly spaced anchors from ``d_min`` to ``d_max`` along ``ray``.

    Anchors that leave the region are clamped per axis onto its boundary
    and flagged in ``clamped``.
    """
    if d < 2:
        raise ValueError("camera rays need at least 2 anchors")
    if not 0.0 < d_min < d_max:
        raise ValueError("need 0 < d_min < d_max")
    t = d_min + np.arange(d) * ((d_max - d_min) / (d - 1))
    t[-1] = d_max
    raw = ray.at(t)
    pts = np.clip(raw, region.lower, region.upper)
    clamped = np.any(pts != raw, axis=1)
    return AnchorSequence(pts, source, t, clamped)


def sample_bev_anchors(cell_center, d: int, region: SceneRegion, source: str = "bev") -> AnchorSequence:
    """``d`` anchors on the vertical through a metric BEV cell center, bottom to top."""
    if d < 1:
        raise ValueError("need at least 1 anchor")
    x, y = (float(v) for v in cell_center)
    if d == 1:
        z = np.array([(region.z_min + region.z_max) / 2.0])
    else:
        z = region.z_min + np.arange(d) * ((region.z_max - region.z_min) / (d - 1))
        z[-1] = region.z_max
    pts = np.column_stack([np.full(d, x), np.full(d, y), z])
    return AnchorSequence(pts, source, z.copy(), np.zeros(d, dtype=bool))


def embed(anchors: AnchorSequence, embed_dim: int, region: SceneRegion) -> PositionalEncoding:
    """Sinusoidal features of the normalized, concatenated anchor coordinates.

    With ``F = max(1, embed_dim // (6 * d))`` frequencies, each coordinate
    ``q`` in [0, 1] contributes ``sin(q * pi * 2**m), cos(q * pi * 2**m)`` for
    ``m < F``; the result is cut or zero-padded to ``embed_dim``.
    """
    if embed_dim < 2:
        raise ValueError("embed_dim must be at least 2")
    q = ((anchors.points - region.lower) / region.extent).ravel()
    n_freq = max(1, embed_dim // (2 * q.size))
    angles = q[:, None] * (np.pi * 2.0 ** np.arange(n_freq))[None, :]
    feats = np.stack([np.sin(angles), np.cos(angles)], axis=-1).ravel()
    out = np.zeros(embed_dim)
    n = min(embed_dim, feats.size)
    out[:n] = feats[:n]
    return PositionalEncoding(out)


def query_anchor_pair(
    cam_ray: Ray,
    bev_cell,
    d: int,
    region: SceneRegion,
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
) -> Tuple[AnchorSequence, AnchorSequence]:
    """A query seen as a camera ray crossed with a BEV vertical."""
    return (
        sample_camera_anchors(cam_ray, d, region, d_min, d_max),
        sample_bev_anchors(bev_cell, d, region),
    )


def embed_query(pair: Tuple[AnchorSequence, AnchorSequence], embed_dim: int, region: SceneRegion) -> PositionalEncoding:
    """Concatenated encodings of the camera and BEV halves, ``2 * embed_dim`` long."""
    cam, bev = pair
    return PositionalEncoding(np.concatenate([embed(cam, embed_dim, region).values, embed(bev, embed_dim, region).values]))


def max_spacing(*sequences: AnchorSequence) -> float:
    return max(float(np.linalg.norm(np.diff(s.points, axis=0), axis=1).max(initial=0.0)) for s in sequences)


def min_pair_distance(a: AnchorSequence, b: AnchorSequence) -> float:
    diff = a.points[:, None, :] - b.points[None, :, :]
    return float(np.linalg.norm(diff, axis=-1).min())


def write_anchors_csv(sequences, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["source", "k", "x", "y", "z", "clamped"])
        for seq in sequences:
            for k, (p, c) in enumerate(zip(seq.points, seq.clamped)):
                out.writerow([seq.source, k, repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), int(c)])


def write_encoding_csv(pe: PositionalEncoding, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["component", "value"])
        for k, v in enumerate(pe.values):
            out.writerow([k, repr(float(v))])
