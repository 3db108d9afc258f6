"""Variant-by-seed ablation runs and their convergence report."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import pandas as pd

from .._utils import atomic_write_json, resolve_output_dir
from ._config import RunConfig
from ._train import train

logger = logging.getLogger(__name__)

ABLATION_NAME = "ablation.json"
SUMMARY_NAME = "summary.csv"
CURVES_NAME = "curves.csv"


@dataclass
class AblationReport:
    """Outcome of :func:`run_ablation`.

    Attributes
    ----------
    runs : DataFrame
        One row per (variant, seed) run, in execution order: ``run``,
        ``variant``, ``seed``, ``run_dir``, ``epochs_to_threshold``,
        ``best_metric`` and ``final_metric``.
    summary : DataFrame
        Means over seeds per variant, in first-appearance order, plus the
        number of runs that reached the threshold.
    curves : DataFrame
        Validation metric per epoch, one column per run, indexed by epoch.
    metric_name : str
        Validation metric of the task.
    threshold : float
        Convergence threshold shared by every run.
    """

    runs: pd.DataFrame
    summary: pd.DataFrame
    curves: pd.DataFrame
    metric_name: str
    threshold: float

    def to_dict(self) -> Dict:
        def records(frame):
            return frame.astype(object).where(frame.notna(), None).to_dict(orient="records")

        return {
            "metric_name": self.metric_name,
            "threshold": self.threshold,
            "runs": records(self.runs),
            "summary": records(self.summary),
            "curves": records(self.curves.reset_index()),
        }


def _run_label(index: int, variant: str, seed: int) -> str:
    return f"{index:02d}_{variant}_seed{seed}"


def run_ablation(
    base_cfg: RunConfig, variants: Sequence[str], seeds: Sequence[int]
) -> AblationReport:
    """Train every (variant, seed) pair on the same data split.

    The report makes no pass/fail judgment; it tabulates the epoch at which each
    run first met the convergence threshold and its final test metric.

    Parameters
    ----------
    base_cfg : RunConfig
        Settings shared by all runs; ``variant``, ``seed`` and ``output_dir`` are
        replaced per run. ``split_seed`` is kept, so all runs see the same split.
    variants : sequence of str
        At least two variants of ``base_cfg.task``. Repeats are allowed.
    seeds : sequence of int
        At least one training seed.

    Returns
    -------
    report : AblationReport
        Also written below ``base_cfg.output_dir`` as ``ablation.json``,
        ``summary.csv`` and ``curves.csv``.
    """
    variants, seeds = list(variants), list(seeds)
    if len(variants) < 2:
        raise ValueError(f"run_ablation needs at least 2 variants, got {variants}")
    if not seeds:
        raise ValueError("run_ablation needs at least one seed")

    root = resolve_output_dir(base_cfg.output_dir).resolve()
    base = base_cfg.to_dict()
    rows: List[Dict] = []
    curves = {}
    threshold = None
    for index, (variant, seed) in enumerate((v, s) for v in variants for s in seeds):
        label = _run_label(index, variant, seed)
        run_dir = root / label
        cfg = RunConfig.from_dict(
            {**base, "variant": variant, "seed": seed, "output_dir": str(run_dir)}
        )
        logger.info(f"Ablation run {label} -> {run_dir}")
        manifest = train(cfg)
        threshold = manifest.threshold
        final = (manifest.final_metrics or {}).get(manifest.metric_name)
        rows.append(
            {
                "run": label,
                "variant": variant,
                "seed": seed,
                "run_dir": str(run_dir),
                "epochs_to_threshold": manifest.epochs_to_threshold,
                "best_metric": manifest.best_metric,
                "final_metric": final,
            }
        )
        curves[label] = pd.Series(
            [entry["val_metric"] for entry in manifest.history],
            index=[entry["epoch"] for entry in manifest.history],
        )

    runs = pd.DataFrame(rows)
    numeric = runs[["epochs_to_threshold", "best_metric", "final_metric"]].astype(float)
    grouped = numeric.groupby(runs["variant"], sort=False)
    summary = grouped.mean()
    summary["n_runs"] = grouped.size()
    summary["n_reached"] = grouped["epochs_to_threshold"].count()
    summary = summary.reset_index()

    curve_frame = pd.DataFrame(curves)
    curve_frame.index.name = "epoch"
    metric_name = base_cfg.metric[0]

    report = AblationReport(
        runs=runs,
        summary=summary,
        curves=curve_frame,
        metric_name=metric_name,
        threshold=threshold,
    )
    root.mkdir(parents=True, exist_ok=True)
    atomic_write_json(root / ABLATION_NAME, report.to_dict())
    summary.to_csv(root / SUMMARY_NAME, index=False)
    curve_frame.to_csv(root / CURVES_NAME)
    logger.info(f"Ablation report written to {root / ABLATION_NAME}")
    return report
