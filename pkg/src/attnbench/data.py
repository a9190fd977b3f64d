"""Directory-per-class image ingestion, deterministic 80/20 split, resize,
normalization, and batching.

Input layout: ``<root>/<class_name>/*.{png,jpg,jpeg}`` with exactly two class
directories.  Class names are sorted; the first gets label 0 and the second
label 1, and label 1 is treated as the positive class throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import ConfigurationError, IngestionError
from .tensor import Tensor

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

# in-memory decode cache is enabled below this footprint (float64 pixels)
CACHE_BUDGET_ELEMENTS = 2 ** 27


@dataclass(frozen=True)
class Sample:
    id: str
    relpath: str
    label: int
    split: str  # "train" | "val"


@dataclass
class DatasetManifest:
    root: Path
    classes: tuple[str, str]
    samples: list[Sample]
    split_seed: int
    resize: int

    def split(self, name: str) -> list[Sample]:
        if name not in ("train", "val"):
            raise ConfigurationError(f"unknown split {name!r}")
        return [s for s in self.samples if s.split == name]

    def counts(self) -> dict[str, int]:
        return {"train": len(self.split("train")), "val": len(self.split("val"))}

    def to_csv(self) -> str:
        lines = ["id,relative_path,label,split"]
        lines += [f"{s.id},{s.relpath},{s.label},{s.split}" for s in self.samples]
        return "\n".join(lines) + "\n"


def scan_and_split(root: str | Path, seed: int, fraction: float = 0.8,
                   resize: int = 224) -> DatasetManifest:
    """Scan a two-class directory tree and build a stratified split.

    Per class: file names are sorted, shuffled with the seeded generator, and
    the first floor(fraction * count) go to train, the remainder to val.
    Deterministic for a given (tree, seed).
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset root {root} is not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if len(class_dirs) != 2:
        names = [d.name for d in class_dirs]
        raise IngestionError(
            f"expected exactly 2 class directories under {root}, found {len(class_dirs)}: {names}")
    classes = (class_dirs[0].name, class_dirs[1].name)
    rng = np.random.default_rng(int(seed))
    samples: list[Sample] = []
    for label, cdir in enumerate(class_dirs):
        files = sorted(p.name for p in cdir.iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)
        if not files:
            raise IngestionError(f"class directory {cdir} contains no images")
        order = rng.permutation(len(files))
        n_train = int(np.floor(fraction * len(files)))
        split_of = {}
        for rank, idx in enumerate(order):
            split_of[files[idx]] = "train" if rank < n_train else "val"
        for name in files:
            samples.append(Sample(id="", relpath=f"{classes[label]}/{name}",
                                  label=label, split=split_of[name]))
    # stable ids from the corpus-wide sorted order
    width = max(4, len(str(len(samples))))
    samples = [Sample(id=f"s{i:0{width}d}", relpath=s.relpath, label=s.label, split=s.split)
               for i, s in enumerate(sorted(samples, key=lambda s: s.relpath))]
    return DatasetManifest(root=root, classes=classes, samples=samples,
                           split_seed=int(seed), resize=int(resize))


# ---------------------------------------------------------------------------
# decoding, resizing, normalization


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear interpolation with half-pixel centers and edge clamping.

    img: (H, W, C) float array; returns (out_h, out_w, C).
    """
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def normalize(img: np.ndarray, mean: tuple[float, ...], std: tuple[float, ...]) -> np.ndarray:
    """(3, S, S) in [0,1] -> per-channel (x - mean) / std."""
    m = np.asarray(mean, dtype=np.float64).reshape(3, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(3, 1, 1)
    return (img - m) / s


def denormalize(img: np.ndarray, mean: tuple[float, ...], std: tuple[float, ...]) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float64).reshape(3, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(3, 1, 1)
    return img * s + m


def load_image(path: str | Path, resize: int,
               mean: tuple[float, ...] = (0.5, 0.5, 0.5),
               std: tuple[float, ...] = (0.5, 0.5, 0.5)) -> np.ndarray:
    """Decode, convert to 3 channels, resize, scale to [0,1], normalize.

    Returns a (3, resize, resize) float64 array.  Raises IngestionError on
    decode failure; callers choose whether to skip or abort.
    """
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except Exception as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}") from exc
    arr = bilinear_resize(arr, resize, resize)
    return normalize(arr.transpose(2, 0, 1), mean, std)


@dataclass
class Batch:
    images: Tensor  # (N, 3, S, S) normalized
    labels: np.ndarray  # (N,) int in {0, 1}
    ids: list[str]


class ImageStore:
    """Decoded-image access for one manifest, with an optional in-memory cache.

    ``on_decode_error`` is "abort" (raise) or "skip" (warn and drop the sample
    for this pass).
    """

    def __init__(self, manifest: DatasetManifest,
                 mean: tuple[float, ...] = (0.5, 0.5, 0.5),
                 std: tuple[float, ...] = (0.5, 0.5, 0.5),
                 cache: str | bool = "auto",
                 on_decode_error: str = "abort"):
        self.manifest = manifest
        self.mean = tuple(mean)
        self.std = tuple(std)
        if on_decode_error not in ("abort", "skip"):
            raise ConfigurationError(f"on_decode_error must be abort|skip, got {on_decode_error!r}")
        self.on_decode_error = on_decode_error
        if cache == "auto" or cache is True:
            footprint = len(manifest.samples) * 3 * manifest.resize ** 2
            self.cache_enabled = cache is True or footprint <= CACHE_BUDGET_ELEMENTS
        else:
            self.cache_enabled = False
        self._cache: dict[str, np.ndarray] = {}

    def get(self, sample: Sample) -> np.ndarray | None:
        if sample.id in self._cache:
            return self._cache[sample.id]
        try:
            img = load_image(self.manifest.root / sample.relpath, self.manifest.resize,
                             self.mean, self.std)
        except IngestionError:
            if self.on_decode_error == "abort":
                raise
            log.warning("skipping undecodable image %s", sample.relpath)
            return None
        if self.cache_enabled:
            self._cache[sample.id] = img
        return img


def batches(store: ImageStore, split: str, batch_size: int,
            epoch_seed: int | None = None) -> Iterator[Batch]:
    """Yield batches covering the split exactly once.

    The train split is reshuffled from ``epoch_seed``; the val split keeps its
    manifest order regardless of the seed.  The final batch may be smaller.
    """
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    samples = store.manifest.split(split)
    if not samples:
        raise ConfigurationError(f"split {split!r} is empty")
    if split == "train" and epoch_seed is not None:
        order = np.random.default_rng(int(epoch_seed)).permutation(len(samples))
        samples = [samples[i] for i in order]
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        imgs, labels, ids = [], [], []
        for s in chunk:
            img = store.get(s)
            if img is None:
                continue
            imgs.append(img)
            labels.append(s.label)
            ids.append(s.id)
        if not imgs:
            continue
        yield Batch(images=Tensor(np.stack(imgs)),
                    labels=np.asarray(labels, dtype=np.int64),
                    ids=ids)
