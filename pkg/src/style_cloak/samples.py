"""Deterministic painterly test images.

No artwork ships with the package; these procedurally generated canvases
(smooth color field, oriented brush strokes with bristle texture, canvas
grain) stand in for a corpus wherever the tests and demos need one.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .imaging import save_image

__all__ = ["synthetic_artwork", "write_corpus"]


def _color_field(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    field = np.empty((3, size, size))
    base = rng.uniform(0.2, 0.8, size=3)
    for c in range(3):
        acc = np.full((size, size), base[c])
        for _ in range(4):
            fx, fy = rng.uniform(0.3, 2.5, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.03, 0.12) * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
        field[c] = acc
    return field


def synthetic_artwork(seed: int, size: int = 224, strokes: int = 160) -> torch.Tensor:
    """A ``(3, size, size)`` float64 image in [0, 1], fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    img = _color_field(rng, size)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    palette = rng.uniform(0.0, 1.0, size=(6, 3))
    flow = rng.uniform(0, np.pi)

    for _ in range(strokes):
        cy, cx = rng.uniform(0, size, size=2)
        length = rng.uniform(0.04, 0.18) * size
        width = rng.uniform(0.008, 0.03) * size
        angle = flow + rng.normal(0, 0.5)
        color = np.clip(palette[rng.integers(len(palette))] + rng.normal(0, 0.08, size=3), 0, 1)

        u = (xx - cx) * np.cos(angle) + (yy - cy) * np.sin(angle)
        v = -(xx - cx) * np.sin(angle) + (yy - cy) * np.cos(angle)
        r = (u / length) ** 2 + (v / width) ** 2
        alpha = np.clip(1.5 - r, 0.0, 1.0) * rng.uniform(0.5, 0.9)
        bristle = 1.0 + 0.12 * np.sin(v * rng.uniform(1.5, 3.0) + rng.uniform(0, 6.28))
        img = img * (1 - alpha) + alpha * (color[:, None, None] * bristle)

    grain = rng.normal(0, 0.012, size=(1, size, size))
    img = img + grain
    return torch.from_numpy(np.clip(img, 0.0, 1.0))


def write_corpus(directory: str | Path, n: int = 20, size: int = 224, first_seed: int = 0) -> list[Path]:
    """Write ``n`` synthetic artworks as 16-bit PNGs named ``art_XX.png``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        p = directory / f"art_{i:02d}.png"
        save_image(synthetic_artwork(first_seed + i, size), p)
        paths.append(p)
    return paths
