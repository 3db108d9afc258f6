"""Desk-scale end-to-end experiment and removal ablation.

Generates 600 synthetic 64x64 triplets (seed 7, 500 train / 100 test), trains
the segmenter, the MAE prior and the ``prior_ffc`` remover, then ablates the
three removal variants over two seeds. Results go to ``desk_experiment.json``
next to the run directories.

Usage::

    python validation/desk_experiment.py [output_dir] [--skip-ablation]
"""

import logging
import sys
import time
from pathlib import Path

from skshadow._utils import atomic_write_json
from skshadow.datasets import SynthConfig, synthesize, write_istd_layout
from skshadow.harness import RunConfig, run_ablation, train

N_SAMPLES = 600
TRAIN_FRACTION = 500 / 600
SEED = 7

EPOCHS = {"seg": 30, "mae": 40, "removal": 60}
SEG_IOU = 0.85
MAE_MSE = 0.02
REMOVAL_PSNR = 25.0
REMOVAL_GAIN = 5.0


def run_config(task, data_root, out_dir, **params):
    return RunConfig(
        task=task,
        dataset_root=str(data_root),
        output_dir=str(out_dir / task),
        epochs=EPOCHS[task],
        train_fraction=TRAIN_FRACTION,
        **params,
    )


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 and not sys.argv[1].startswith("-") else None
    out_dir = out_dir or Path(__file__).parents[0] / "desk_runs"
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        filename=out_dir / "desk_experiment.log",
        format="%(asctime)s:%(levelname)s:%(message)s",
        level=logging.INFO,
    )
    start = time.perf_counter()

    data_root = out_dir / "data"
    if not (data_root / "manifest.json").is_file():
        cfg = SynthConfig(size=64, count=N_SAMPLES, seed=SEED)
        write_istd_layout(synthesize(cfg), data_root, cfg.to_dict())

    seg = train(run_config("seg", data_root, out_dir))
    mae = train(run_config("mae", data_root, out_dir))
    removal = train(
        run_config(
            "removal",
            data_root,
            out_dir,
            variant="prior_ffc",
            prior_checkpoint=mae.best_checkpoint,
            segmenter_checkpoint=seg.best_checkpoint,
        )
    )

    removal_psnr = removal.final_metrics["psnr"]
    input_psnr = removal.baseline_metrics["psnr"]
    results = {
        "seg_iou": seg.best_metric,
        "mae_hidden_mse": mae.best_metric,
        "removal_psnr": removal_psnr,
        "input_psnr": input_psnr,
        "removal_psnr_predicted_masks": removal.final_metrics_predicted["psnr"],
        "removal_epochs_to_threshold": removal.epochs_to_threshold,
        "checks": {
            "seg_iou": seg.best_metric >= SEG_IOU,
            "mae_hidden_mse": mae.best_metric <= MAE_MSE,
            "removal_psnr": removal_psnr >= REMOVAL_PSNR,
            "removal_gain": removal_psnr - input_psnr >= REMOVAL_GAIN,
        },
    }
    logging.info(f"End-to-end results: {results}")

    if "--skip-ablation" not in sys.argv:
        base = run_config("removal", data_root, out_dir, prior_checkpoint=mae.best_checkpoint)
        base.output_dir = str(out_dir / "ablation")
        report = run_ablation(base, ["baseline", "prior", "prior_ffc"], [0, 1])
        results["ablation"] = report.to_dict()["summary"]
        results["checks"]["ablation_all_reached"] = bool(
            report.runs["epochs_to_threshold"].notna().all()
        )
        logging.info(f"Ablation summary:\n{report.summary.to_string(index=False)}")

    results["wall_clock_seconds"] = time.perf_counter() - start
    atomic_write_json(out_dir / "desk_experiment.json", results)
    for name, passed in results["checks"].items():
        print(f"{name}: {'pass' if passed else 'FAIL'}")


if __name__ == "__main__":
    main()
