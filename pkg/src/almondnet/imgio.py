"""8-bit image file I/O and small raster helpers.

PGM (binary P5) is the interchange format for golden-file tests because its
bytes are fully determined by the pixel array. PNG is accepted on the read
side for convenience and decoded through Pillow.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import AlmondNetError


class UnsupportedImage(AlmondNetError):
    pass


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a 2D uint8 array as binary PGM (P5, maxval 255)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise UnsupportedImage(f"PGM wants a 2D array, got shape {img.shape}")
    img = img.astype(np.uint8, copy=False)
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise UnsupportedImage(f"{path}: not a binary PGM file")
    # Header is three whitespace-separated tokens after the magic; '#'
    # starts a comment running to end of line.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedImage(f"{path}: truncated PGM header")
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise UnsupportedImage(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise UnsupportedImage(f"{path}: raster shorter than declared {w}x{h}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def read_image(path: str | Path) -> np.ndarray:
    """Read PGM or PNG. Returns HxW uint8 (gray) or HxWx3 uint8 (RGB)."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".pgm":
        return read_pgm(p)
    if suffix == ".png":
        from PIL import Image

        with Image.open(p) as im:
            if im.mode in ("L", "I;16", "I"):
                return np.asarray(im.convert("L"), dtype=np.uint8)
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    raise UnsupportedImage(f"{path}: unsupported format {suffix!r} (PGM/PNG only)")


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round half up and clamp to [0, 255]."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def resize_nearest(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize with pixel-center index mapping."""
    h, w = image.shape[:2]
    rows = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(np.int64)
    cols = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(np.int64)
    return image[rows][:, cols]
