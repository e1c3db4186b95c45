"""Grayscale rendering of focused images to PGM/PNG."""

import numpy as np
from PIL import Image

from .focusing import FocusedImage


def to_grayscale(img: FocusedImage) -> np.ndarray:
    """Linear 8-bit mapping over [0, max]; depth increases downward (rows)."""
    data = img.data.astype(np.float64).T  # rows = depth, cols = scan position
    peak = data.max()
    if peak <= 0:
        return np.zeros(data.shape, dtype=np.uint8)
    return np.round(255.0 * data / peak).astype(np.uint8)


def write_pgm(path, gray: np.ndarray):
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5 {w} {h} 255\n".encode("ascii"))
        f.write(gray.tobytes())


def write_png(path, gray: np.ndarray):
    Image.fromarray(gray, mode="L").save(path)
