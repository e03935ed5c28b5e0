"""Run several experiment configs and collect their outputs in one directory."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig, write_config
from .engine import DivergenceError, MetricsRecord, run
from .output import PLOT_METRICS, emit_csv, emit_svg

__all__ = ["RunResult", "run_label", "run_one", "run_sweep"]

SUMMARY_COLUMNS = ("label", "status", "iter", "floats_values_only", "worst_loss", "mean_loss", "consensus_gap", "grad_norm_sq", "error")


@dataclass
class RunResult:
    label: str
    config: ExperimentConfig
    records: list[MetricsRecord]
    status: str = "ok"
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_label(cfg: ExperimentConfig) -> str:
    return f"{cfg.algo}-seed{cfg.seed}"


def run_one(cfg: ExperimentConfig, out_dir, label: str | None = None) -> RunResult:
    """Run one config into ``out_dir``: ``config.txt``, ``metrics.csv``, one SVG per metric."""
    out_dir = Path(out_dir)
    label = label or run_label(cfg)
    write_config(cfg, out_dir / "config.txt")
    try:
        records = run(cfg)
    except DivergenceError as exc:
        (out_dir / "error.txt").write_text(f"{exc}\n")
        return RunResult(label, cfg, [], "diverged", str(exc))
    except Exception as exc:  # noqa: BLE001 - reported per run
        (out_dir / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        return RunResult(label, cfg, [], "failed", f"{type(exc).__name__}: {exc}")
    emit_csv(records, out_dir / "metrics.csv")
    for metric in PLOT_METRICS:
        if any(getattr(r, metric) is not None for r in records):
            emit_svg({label: records}, out_dir / f"{metric}.svg", metric=metric)
    return RunResult(label, cfg, records)


def _unique_labels(configs):
    labels, seen = [], {}
    for cfg in configs:
        base = run_label(cfg)
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}-{seen[base]}")
    return labels


def run_sweep(configs: list[ExperimentConfig], out_dir, max_workers: int = 1, x_axis: str = "floats") -> list[RunResult]:
    """Run every config (in parallel across configs), then write combined plots and ``summary.csv``.

    A failed or diverged run is recorded in the summary and does not stop the others.
    """
    if not configs:
        raise ValueError("sweep needs at least one config")
    out_dir = Path(out_dir)
    labels = _unique_labels(configs)
    jobs = [(cfg, out_dir / label, label) for cfg, label in zip(configs, labels)]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(lambda job: run_one(*job), jobs))
    else:
        results = [run_one(*job) for job in jobs]

    good = {r.label: r.records for r in results if r.ok}
    if good:
        for metric in PLOT_METRICS:
            if any(getattr(rec, metric) is not None for recs in good.values() for rec in recs):
                emit_svg(good, out_dir / f"combined_{metric}.svg", x_axis=x_axis, metric=metric)
    with (out_dir / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for r in results:
            last = r.records[-1] if r.records else None
            row = [r.label, r.status]
            for key in SUMMARY_COLUMNS[2:-1]:
                value = getattr(last, key) if last else None
                row.append("" if value is None else ("%.17g" % value if isinstance(value, float) else value))
            writer.writerow(row + [r.error])
    return results
