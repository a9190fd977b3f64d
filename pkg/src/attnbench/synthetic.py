"""Synthetic two-class image corpus: bright disc vs blank background.

Used by the end-to-end tests and handy for smoke-testing the full pipeline
without any real data.  Class directories sort as blank < disc, so "disc" is
the positive class.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def make_disc_corpus(root: str | Path, n: int = 200, size: int = 64,
                     seed: int = 0) -> Path:
    """Write n PNGs (half per class) under root/{blank,disc}/ and return root.

    Blank images are low-intensity noise; disc images add a bright filled
    circle at a random position.  Deterministic for a given seed.
    """
    root = Path(root)
    rng = np.random.default_rng(int(seed))
    for cls in ("blank", "disc"):
        (root / cls).mkdir(parents=True, exist_ok=True)
    per_class = n // 2
    yy, xx = np.mgrid[0:size, 0:size]
    for i in range(per_class + (n - 2 * per_class)):
        _write(root / "blank" / f"blank_{i:04d}.png", _background(rng, size))
    for i in range(per_class):
        img = _background(rng, size)
        radius = rng.uniform(size * 0.15, size * 0.3)
        cy = rng.uniform(radius, size - radius)
        cx = rng.uniform(radius, size - radius)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
        img[mask] = rng.uniform(0.8, 1.0)
        _write(root / "disc" / f"disc_{i:04d}.png", img)
    return root


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(0.0, 0.2, size=(size, size))


def _write(path: Path, gray: np.ndarray) -> None:
    u8 = np.clip(np.rint(gray * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path)
