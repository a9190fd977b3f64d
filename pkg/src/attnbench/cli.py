"""Command-line entry points.

Commands: train, eval, gradcam, review-serve, report, plus make-synthetic for
a self-contained demo corpus.  Flag values override config-file values, which
override defaults.  Configuration problems exit with status 2 before any
output file is written.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .data import scan_and_split
from .errors import ConfigurationError, EvaluationError, IngestionError
from .experiment import make_store, run_experiment, run_dir, variant_label
from .gradcam import make_panels
from .report import build_report, collect_runs, write_report
from .resnet import load_model
from .training import auc_roc, positive_scores

log = logging.getLogger("attnbench")


def _config_from_args(args) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    if getattr(args, "attention", None):
        overrides["model.attention"] = args.attention
    if getattr(args, "seeds", None):
        overrides["seeds"] = args.seeds
    if getattr(args, "epochs", None) is not None:
        overrides["train.epochs"] = str(args.epochs)
    if getattr(args, "output", None):
        overrides["output"] = args.output
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    cfg = load_config(args.config, overrides)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    report = run_experiment(cfg)
    write_report(report, cfg.output, with_figures=not args.no_figures, runs_root=cfg.output)
    for v in report.variants:
        delta = report.delta(v)
        extra = "" if delta is None else f" ({100 * delta:+.2f})"
        print(f"{v.label}: mean AUC-ROC {100 * v.mean:.2f}%{extra}")
    print(f"outputs under {cfg.output}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    model = load_model(args.checkpoint)
    store = make_store(cfg)
    scores, labels = positive_scores(model, store, args.split, cfg.train.batch_size)
    auc = auc_roc(scores, labels)
    print(f"{Path(args.checkpoint)}: {args.split} AUC-ROC {100 * auc:.2f}% "
          f"({len(labels)} samples)")
    return 0


def cmd_gradcam(args) -> int:
    cfg = _config_from_args(args)
    runs_root = Path(args.runs or cfg.output)
    models = {}
    for kind in ("none", "se", "cbam", "gc"):
        label = variant_label(kind)
        candidates = sorted((runs_root / "runs").glob(f"{label}__seed*/model.ckpt"))
        if args.seed is not None:
            candidates = [c for c in candidates
                          if c.parent.name == f"{label}__seed{args.seed}"]
        if candidates:
            models[label] = load_model(candidates[0])
    if not models:
        raise ConfigurationError(f"no checkpoints found under {runs_root}/runs")
    store = make_store(cfg)
    val = store.manifest.split("val")
    rng = np.random.default_rng(args.sample_seed)
    take = min(args.samples, len(val))
    picks = sorted(rng.choice(len(val), size=take, replace=False))
    samples = [val[i] for i in picks]
    out_dir = Path(args.out or (runs_root / "panels"))
    panels = make_panels(samples, models, store, out_dir, alpha=args.alpha,
                         class_mode=args.class_mode)
    print(f"wrote {len(panels)} panels x {len(models)} models to {out_dir}")
    return 0


def cmd_review_serve(args) -> int:
    from .review import serve
    serve(args.panels, args.store, port=args.port, host=args.host,
          show_probabilities=args.show_probabilities,
          blinding_seed=args.blinding_seed,
          ui_dir=args.ui)
    return 0


def cmd_report(args) -> int:
    report = build_report(collect_runs(args.runs))
    out_dir = Path(args.out or args.runs)
    files = write_report(report, out_dir, with_figures=not args.no_figures,
                         runs_root=args.runs)
    print((out_dir / "report.csv").read_text(), end="")
    print("wrote: " + ", ".join(str(f) for f in files))
    return 0


def cmd_make_synthetic(args) -> int:
    from .synthetic import make_disc_corpus
    root = make_disc_corpus(args.out, n=args.n, size=args.size, seed=args.seed)
    manifest = scan_and_split(root, seed=0)
    counts = manifest.counts()
    print(f"wrote {len(manifest.samples)} images under {root} "
          f"({counts['train']} train / {counts['val']} val at the default split)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnbench",
                                     description="attention benchmarking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, with_train_flags=False):
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        if with_train_flags:
            p.add_argument("--attention", help="comma list of variants, e.g. none,se,cbam,gc")
            p.add_argument("--seeds", help="comma list of training seeds")
            p.add_argument("--epochs", type=int)
            p.add_argument("--output", help="output directory")

    p = sub.add_parser("train", help="train configured variants and write the report")
    add_config_flags(p, with_train_flags=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val"], default="val")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcam", help="emit heatmap comparison panels")
    add_config_flags(p)
    p.add_argument("--runs", help="training output directory (default: config output)")
    p.add_argument("--out", help="panel output directory (default: <runs>/panels)")
    p.add_argument("--samples", type=int, default=6)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--seed", type=int, help="use checkpoints of this training seed")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--class-mode", choices=["truth", "predicted"], default="truth")
    p.set_defaults(fn=cmd_gradcam)

    p = sub.add_parser("review-serve", help="serve panels for blinded review")
    p.add_argument("--panels", required=True, help="panel directory (with panels.jsonl)")
    p.add_argument("--store", required=True, help="choice/blinding store directory")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--show-probabilities", action="store_true")
    p.add_argument("--blinding-seed", type=int, default=0)
    p.add_argument("--ui", help="serve this directory as the web client")
    p.set_defaults(fn=cmd_review_serve)

    p = sub.add_parser("report", help="merge persisted runs into the benchmark table")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", help="where to write report files (default: --runs)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("make-synthetic", help="generate the disc-vs-blank demo corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_make_synthetic)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
