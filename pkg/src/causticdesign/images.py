"""Grayscale image input/output: PGM (P2/P5) and PNG."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an 8-bit (or 16-bit) PGM image, P2 or P5, as a float array in [0, 1]."""
    data = Path(path).read_bytes()
    if not data[:2] in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file")
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(?:#[^\n]*\n)*\s*(\S+)", data[pos:])
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos += m.end()
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P2":
        values = np.array(data[pos:].split(), dtype=np.float64)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        values = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).astype(np.float64)
    if values.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, got {values.size}")
    return values.reshape(height, width) / maxval


def write_pgm(path: str | Path, image: np.ndarray, maxval: int = 255) -> None:
    """Write a float array (any nonnegative scale) as a binary P5 PGM."""
    img = np.asarray(image, dtype=np.float64)
    top = img.max()
    if top > 0:
        img = img / top
    pix = np.clip(np.round(img * maxval), 0, maxval).astype(np.uint8)
    header = f"P5\n{pix.shape[1]} {pix.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + pix.tobytes())


def read_grayscale(path: str | Path) -> np.ndarray:
    """Read a grayscale image (PGM or PNG) as floats in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def write_grayscale(path: str | Path, image: np.ndarray) -> None:
    """Write a float array as PGM or PNG depending on the extension."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, image)
        return
    from PIL import Image

    img = np.asarray(image, dtype=np.float64)
    top = img.max()
    if top > 0:
        img = img / top
    Image.fromarray(np.clip(np.round(img * 255), 0, 255).astype(np.uint8)).save(path)
