"""Report assembly: merge persisted run outputs into the benchmark table
(CSV + JSON) and render summary figures."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .experiment import EvalReport, VariantResult

ROW_ORDER = ("baseline", "se", "cbam", "gc")


def collect_runs(runs_root: str | Path) -> list[dict]:
    """Read every runs/*/result.json under a training output directory."""
    root = Path(runs_root)
    runs_dir = root / "runs" if (root / "runs").is_dir() else root
    results = sorted(runs_dir.glob("*/result.json"))
    if not results:
        raise ConfigurationError(f"no run results found under {runs_dir}")
    return [json.loads(p.read_text()) for p in results]


def build_report(runs: list[dict]) -> EvalReport:
    by_variant: dict[str, dict[int, float]] = {}
    kinds: dict[str, str] = {}
    hashes = {r["config_hash"] for r in runs}
    for r in runs:
        by_variant.setdefault(r["variant"], {})[int(r["seed"])] = float(r["val_auc"])
        kinds[r["variant"]] = r.get("kind", r["variant"])
    variants = []
    labels = [l for l in ROW_ORDER if l in by_variant]
    labels += sorted(set(by_variant) - set(labels))
    for label in labels:
        runs_for = by_variant[label]
        seeds = tuple(sorted(runs_for))
        variants.append(VariantResult(kind=kinds[label], seeds=seeds,
                                      aucs=tuple(runs_for[s] for s in seeds)))
    chash = hashes.pop() if len(hashes) == 1 else "mixed"
    return EvalReport(variants=variants, config_hash=chash)


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def report_csv(report: EvalReport) -> str:
    n_tests = max(len(v.aucs) for v in report.variants)
    header = ["Model"] + [f"Test {i + 1}" for i in range(n_tests)] + ["Mean AUC-ROC", "Delta"]
    lines = [",".join(header)]
    for v in report.variants:
        cells = [v.label]
        cells += [_pct(a) for a in v.aucs] + [""] * (n_tests - len(v.aucs))
        cells.append(_pct(v.mean))
        delta = report.delta(v)
        cells.append("" if delta is None else f"{100.0 * delta:+.2f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def report_json(report: EvalReport) -> str:
    payload = {
        "config_hash": report.config_hash,
        "variants": [
            {
                "model": v.label,
                "kind": v.kind,
                "seeds": list(v.seeds),
                "auc_per_test": list(v.aucs),
                "mean_auc": v.mean,
                "delta_vs_baseline": report.delta(v),
            }
            for v in report.variants
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_report(report: EvalReport, out_dir: str | Path,
                 with_figures: bool = True, runs_root: str | Path | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / "report.csv"
    csv_path.write_text(report_csv(report))
    written.append(csv_path)
    json_path = out_dir / "report.json"
    json_path.write_text(report_json(report))
    written.append(json_path)
    if with_figures:
        written.append(render_auc_figure(report, out_dir / "report_auc.png"))
        if runs_root is not None:
            curves = render_curves_figure(runs_root, out_dir / "report_curves.png")
            if curves is not None:
                written.append(curves)
    return written


# ---------------------------------------------------------------------------
# figures (Agg backend; metadata stripped so re-renders are byte-stable)

_SAVE_KW = dict(dpi=120, metadata={"Software": None})


def _plt():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


def render_auc_figure(report: EvalReport, path: str | Path) -> Path:
    plt = _plt()
    labels = [v.label for v in report.variants]
    means = [100.0 * v.mean for v in report.variants]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    xs = np.arange(len(labels))
    ax.bar(xs, means, width=0.6, color="#4878b0", zorder=2)
    for i, v in enumerate(report.variants):
        ax.plot([i] * len(v.aucs), [100.0 * a for a in v.aucs], "o",
                color="#222222", ms=4, zorder=3)
    base = report.baseline_mean()
    if base is not None:
        ax.axhline(100.0 * base, color="#999999", lw=1, ls="--", zorder=1)
    ax.set_xticks(xs, labels)
    ax.set_ylabel("validation AUC-ROC (%)")
    lo = min(min(100.0 * a for a in v.aucs) for v in report.variants)
    ax.set_ylim(max(0.0, lo - 5.0), 100.5)
    ax.set_title("Mean AUC-ROC per model (dots: individual tests)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return Path(path)


def render_curves_figure(runs_root: str | Path, path: str | Path) -> Path | None:
    plt = _plt()
    root = Path(runs_root)
    runs_dir = root / "runs" if (root / "runs").is_dir() else root
    logs = sorted(runs_dir.glob("*/epochs.csv"))
    if not logs:
        return None
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for log_path in logs:
        rows = log_path.read_text().strip().splitlines()[1:]
        epochs = [int(r.split(",")[0]) for r in rows]
        aucs = [100.0 * float(r.split(",")[3]) for r in rows]
        ax.plot(epochs, aucs, lw=1.2, label=log_path.parent.name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation AUC-ROC (%)")
    ax.set_title("Validation AUC-ROC per epoch")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return Path(path)
