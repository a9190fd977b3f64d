"""Quantitative protocol: train each configured variant once per seed on a
fixed split, score validation AUC-ROC, persist per-run outputs, and aggregate
the mean-over-runs report."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import KINDS, AttentionSpec
from .config import ExperimentConfig, config_hash, serialize_config
from .data import DatasetManifest, ImageStore, scan_and_split
from .resnet import build_resnet18
from .training import FitResult, fit

log = logging.getLogger(__name__)

VARIANT_LABELS = {"none": "baseline", "se": "se", "cbam": "cbam", "gc": "gc"}


def variant_label(kind: str) -> str:
    return VARIANT_LABELS.get(kind, kind)


@dataclass
class VariantResult:
    kind: str
    seeds: tuple[int, ...]
    aucs: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def label(self) -> str:
        return variant_label(self.kind)


@dataclass
class EvalReport:
    variants: list[VariantResult]
    config_hash: str

    def baseline_mean(self) -> float | None:
        for v in self.variants:
            if v.kind == "none":
                return v.mean
        return None

    def delta(self, v: VariantResult) -> float | None:
        base = self.baseline_mean()
        if base is None or v.kind == "none":
            return None
        return v.mean - base


def run_dir(output: str | Path, kind: str, seed: int) -> Path:
    return Path(output) / "runs" / f"{variant_label(kind)}__seed{seed}"


def experiment_variants(cfg: ExperimentConfig) -> tuple[str, ...]:
    """Configured variants with the baseline always present (needed for the
    delta column of the report)."""
    kinds = tuple(cfg.model.attention)
    if "none" not in kinds:
        kinds = ("none",) + kinds
    return kinds


def make_store(cfg: ExperimentConfig, split_seed: int | None = None) -> ImageStore:
    manifest = scan_and_split(cfg.dataset.root,
                              seed=cfg.dataset.split_seed if split_seed is None else split_seed,
                              resize=cfg.dataset.resize)
    cache = {"auto": "auto", "on": True, "off": False}[cfg.dataset.cache]
    return ImageStore(manifest, mean=cfg.dataset.mean, std=cfg.dataset.std,
                      cache=cache, on_decode_error=cfg.dataset.on_decode_error)


def run_single(cfg: ExperimentConfig, kind: str, seed: int,
               store: ImageStore) -> FitResult:
    spec = AttentionSpec(kind=kind, reduction=cfg.model.reduction)
    model = build_resnet18(spec, rng_seed=seed, width_divisor=cfg.model.width_divisor)
    return fit(model, store, cfg.train, seed=seed)


def persist_run(cfg: ExperimentConfig, kind: str, seed: int, result: FitResult,
                out: Path, elapsed: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(serialize_config(cfg))
    (out / "epochs.csv").write_text(result.log_csv())
    result.model.save(out / "model.ckpt")
    payload = {
        "variant": variant_label(kind),
        "kind": kind,
        "seed": seed,
        "val_auc": result.final_auc(),
        "epochs": len(result.log),
        "final_train_loss": result.log[-1].train_loss,
        "config_hash": config_hash(cfg),
        "elapsed_seconds": round(elapsed, 3),
        "checkpoint": "model.ckpt",
        "log": "epochs.csv",
    }
    (out / "result.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig) -> EvalReport:
    """Train every (variant, seed) pair and return the aggregated report.

    The split is fixed across runs unless train.resplit_per_run is set, in
    which case each seed re-splits the corpus with that seed.
    """
    cfg.validate()
    output = Path(cfg.output)
    kinds = experiment_variants(cfg)
    seeds = tuple(cfg.train.seeds)
    chash = config_hash(cfg)

    shared_store = None if cfg.train.resplit_per_run else make_store(cfg)
    if shared_store is not None:
        (output).mkdir(parents=True, exist_ok=True)
        (output / "manifest.csv").write_text(shared_store.manifest.to_csv())

    variants: list[VariantResult] = []
    for kind in kinds:
        aucs = []
        for seed in seeds:
            store = shared_store if shared_store is not None else make_store(cfg, split_seed=seed)
            t0 = time.perf_counter()
            result = run_single(cfg, kind, seed, store)
            elapsed = time.perf_counter() - t0
            persist_run(cfg, kind, seed, result, run_dir(output, kind, seed), elapsed)
            log.info("%s seed %d: val AUC %.4f (%.1fs)",
                     variant_label(kind), seed, result.final_auc(), elapsed)
            aucs.append(result.final_auc())
        variants.append(VariantResult(kind=kind, seeds=seeds, aucs=tuple(aucs)))
    return EvalReport(variants=variants, config_hash=chash)
