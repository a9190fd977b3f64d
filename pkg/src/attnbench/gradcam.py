"""Class-activation heatmaps from the last convolutional features, overlay
rendering, and multi-model comparison panels.

The heatmap for class k is relu(sum_c w_c * A_c) where A is the final basic
block's output and w_c is the spatial mean of d(logit_k)/dA_c, min-max
normalized to [0, 1] (an identically zero map is kept as zeros).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import tensor as T
from .data import ImageStore, Sample, bilinear_resize, denormalize
from .errors import ContractError
from .resnet import ResNet18
from .tensor import Tape, Tensor


@dataclass
class Heatmap:
    values: np.ndarray  # (H', W') in [0, 1]
    class_index: int
    probability: float  # softmax probability of class_index


def feature_gradient(feats: Tensor) -> np.ndarray:
    """Gradient of a hooked feature map; only available once a backward pass
    from a chosen logit has run."""
    if feats.grad is None:
        raise ContractError("feature gradients unavailable before a backward pass")
    return feats.grad


def cam_from_features(features: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Weighted-sum activation map for one sample: features/grads are (K, H, W)."""
    if features.shape != grads.shape:
        raise ContractError(f"feature/gradient shapes differ: {features.shape} vs {grads.shape}")
    weights = grads.mean(axis=(1, 2))
    raw = np.maximum((weights[:, None, None] * features).sum(axis=0), 0.0)
    return normalize_map(raw)


def normalize_map(raw: np.ndarray) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    if hi > lo:
        return (raw - lo) / (hi - lo)
    return np.zeros_like(raw) if hi == 0.0 else np.ones_like(raw)


def gradcam(model: ResNet18, image: np.ndarray, class_index: int) -> Heatmap:
    """Heatmap plus softmax probability for one (3, S, S) normalized image."""
    if class_index not in (0, 1):
        raise ContractError(f"class_index must be 0 or 1, got {class_index}")
    x = Tensor(image[None])
    with Tape() as tape:
        logits, feats = model.forward_with_features(x, training=False)
        onehot = np.zeros((1, 2))
        onehot[0, class_index] = 1.0
        picked = T.tsum(T.mul(logits, Tensor(onehot)))
    tape.backward(picked)
    values = cam_from_features(feats.data[0], feature_gradient(feats)[0])
    prob = float(T.softmax(logits, axis=1).data[0, class_index])
    return Heatmap(values=values, class_index=class_index, probability=prob)


# ---------------------------------------------------------------------------
# rendering


def color_ramp(values: np.ndarray) -> np.ndarray:
    """Fixed 3-stop blue -> green -> red ramp: (H, W) in [0,1] -> (H, W, 3)."""
    t = np.clip(values, 0.0, 1.0)
    lower = t < 0.5
    r = np.where(lower, 0.0, 2.0 * t - 1.0)
    g = np.where(lower, 2.0 * t, 2.0 - 2.0 * t)
    b = np.where(lower, 1.0 - 2.0 * t, 0.0)
    return np.stack([r, g, b], axis=-1)


def quantize(img: np.ndarray) -> np.ndarray:
    """(H, W, 3) floats in [0,1] -> uint8."""
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def overlay(image: np.ndarray, heatmap: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend the color-ramped, bilinearly upsampled heatmap over the
    image.  image: (H, W, 3) floats in [0,1]; heatmap: (H', W') in [0,1].
    alpha 0 returns the original image byte-identically."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    h, w = image.shape[:2]
    up = bilinear_resize(heatmap[:, :, None].astype(np.float64), h, w)[:, :, 0]
    blended = (1.0 - alpha) * image + alpha * color_ramp(up)
    return quantize(blended)


def save_png(img_u8: np.ndarray, path: str | Path) -> None:
    Image.fromarray(img_u8, mode="RGB").save(path)


# ---------------------------------------------------------------------------
# comparison panels


@dataclass
class PanelEntry:
    model: str
    probability: float
    file: str


@dataclass
class Panel:
    sample_id: str
    class_index: int
    original: str
    entries: list[PanelEntry]


def make_panels(samples: list[Sample], models: dict[str, ResNet18], store: ImageStore,
                out_dir: str | Path, alpha: float = 0.5, class_mode: str = "truth",
                montage: bool = True) -> list[Panel]:
    """One overlay + probability per model per sample, heatmaps for the
    ground-truth class (class_mode "predicted" uses each model's argmax).
    Files: <sample_id>__original.png, <sample_id>__<model>.png, plus a
    researcher-facing montage; panels.jsonl indexes everything.
    """
    if class_mode not in ("truth", "predicted"):
        raise ContractError(f"class_mode must be truth|predicted, got {class_mode!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len({m.width_divisor for m in models.values()}) != 1:
        raise ContractError("panel models must share architecture width")
    panels: list[Panel] = []
    for sample in samples:
        image = store.get(sample)
        if image is None:
            continue
        display = np.clip(denormalize(image, store.mean, store.std), 0.0, 1.0).transpose(1, 2, 0)
        original_name = f"{sample.id}__original.png"
        save_png(quantize(display), out_dir / original_name)
        entries = []
        for label, model in models.items():
            if class_mode == "truth":
                cls = sample.label
            else:
                logits = model.forward(Tensor(image[None]), training=False)
                cls = int(np.argmax(logits.data[0]))
            hm = gradcam(model, image, cls)
            name = f"{sample.id}__{label}.png"
            save_png(overlay(display, hm.values, alpha), out_dir / name)
            entries.append(PanelEntry(model=label, probability=hm.probability, file=name))
        panel = Panel(sample_id=sample.id, class_index=sample.label,
                      original=original_name, entries=entries)
        panels.append(panel)
        if montage:
            _render_montage(panel, out_dir)
    index = out_dir / "panels.jsonl"
    with index.open("w") as fh:
        for p in panels:
            fh.write(json.dumps({
                "sample_id": p.sample_id,
                "class": p.class_index,
                "original": p.original,
                "models": [{"model": e.model, "p": e.probability, "file": e.file}
                           for e in p.entries],
            }, sort_keys=True) + "\n")
    return panels


def load_panels(index_path: str | Path) -> list[Panel]:
    panels = []
    for line in Path(index_path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        panels.append(Panel(
            sample_id=obj["sample_id"],
            class_index=int(obj["class"]),
            original=obj["original"],
            entries=[PanelEntry(model=m["model"], probability=float(m["p"]), file=m["file"])
                     for m in obj["models"]],
        ))
    return panels


def _render_montage(panel: Panel, out_dir: Path) -> None:
    """Unblinded side-by-side figure for the researcher (not served to reviewers)."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    n = 1 + len(panel.entries)
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.6))
    axes[0].imshow(Image.open(out_dir / panel.original))
    axes[0].set_title(f"input (class {panel.class_index})", fontsize=8)
    for ax, entry in zip(axes[1:], panel.entries):
        ax.imshow(Image.open(out_dir / entry.file))
        ax.set_title(f"{entry.model}\nP={100.0 * entry.probability:.1f}%", fontsize=8)
    for ax in axes:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_dir / f"{panel.sample_id}__montage.png", dpi=110,
                metadata={"Software": None})
    plt.close(fig)
