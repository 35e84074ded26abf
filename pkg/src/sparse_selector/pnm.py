"""Binary PGM (P5) / PPM (P6) writing and reading, plus mask/token renderings."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# overlay colours, one per (positive, kept) category
BACKGROUND = (0, 0, 0)
POSITIVE = (255, 255, 255)
KEPT_POSITIVE = (255, 64, 64)
KEPT_NEGATIVE = (64, 96, 255)


class PnmFormatError(ValueError):
    pass


def encode_pnm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError("PNM images must be uint8")
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"unsupported image shape {image.shape}")
    h, w = image.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes()


def write_pnm(image: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_pnm(image))


def decode_pnm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PnmFormatError("truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise PnmFormatError(f"unsupported magic {magic!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise PnmFormatError("only 8-bit images are supported")
    channels = 1 if magic == b"P5" else 3
    raster = np.frombuffer(data[pos:], dtype=np.uint8)
    if raster.size != w * h * channels:
        raise PnmFormatError(f"expected {w * h * channels} raster bytes, found {raster.size}")
    shape = (h, w) if channels == 1 else (h, w, 3)
    return raster.reshape(shape).copy()


def read_pnm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


def mask_image(values: np.ndarray, scale: int = 1) -> np.ndarray:
    img = np.where(np.asarray(values) > 0, 255, 0).astype(np.uint8)
    return np.kron(img, np.ones((scale, scale), dtype=np.uint8))


def overlay_image(values: np.ndarray, kept: np.ndarray, scale: int = 1) -> np.ndarray:
    """RGB image colouring each cell by whether it is positive and whether it was kept."""
    positive = np.asarray(values) > 0
    keep = np.zeros(positive.size, dtype=bool)
    keep[np.asarray(kept, dtype=np.int64)] = True
    keep = keep.reshape(positive.shape)
    img = np.zeros(positive.shape + (3,), dtype=np.uint8)
    img[positive & ~keep] = POSITIVE
    img[positive & keep] = KEPT_POSITIVE
    img[~positive & keep] = KEPT_NEGATIVE
    return np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
