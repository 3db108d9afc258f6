"""Command line entry point, ``skshadow <command> [options]``."""

import argparse
import json
import logging
from pathlib import Path

from .._utils import atomic_write_json, resolve_output_dir
from ..datasets import SynthConfig, load_istd_layout, synthesize, write_istd_layout
from ..image import load_image, load_mask, save_image, save_mask
from ..metrics import evaluate_dataset
from ..nn import generate_prior, predict_mask
from ..wavelet import SUBBANDS, haar_dwt2, rescale_band
from ._ablation import run_ablation
from ._checkpoint import load_model
from ._config import load_run_config
from ._pipeline import pipeline_infer, save_panel
from ._train import train

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s:%(levelname)s:%(message)s"

TRAIN_COMMANDS = {"train-seg": "seg", "train-mae": "mae", "train-removal": "removal"}


def _add_run_arguments(parser, task=None):
    """Flags mapped onto :class:`RunConfig` fields; unset flags default to None."""
    parser.add_argument("--config", default=None, help="JSON file with RunConfig fields.")
    if task is None:
        parser.add_argument("--task", choices=["seg", "mae", "removal"], default=None)
    parser.add_argument("--dataset", dest="dataset_root", default=None)
    parser.add_argument("--output", dest="output_dir", default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    parser.add_argument("--lr", dest="learning_rate", type=float, default=None)
    parser.add_argument("--min-lr", dest="min_learning_rate", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    parser.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    parser.add_argument("--num-workers", dest="num_workers", type=int, default=None)
    parser.add_argument("--hflip", action="store_true", default=None)
    parser.add_argument("--device", default=None)
    parser.add_argument("--threshold", dest="convergence_threshold", type=float, default=None)
    if task in (None, "seg"):
        parser.add_argument("--variant", default=None, help="plain or wavelet for seg")
    if task in (None, "removal"):
        if task == "removal":
            parser.add_argument(
                "--variant", choices=["baseline", "prior", "prior_ffc"], default=None
            )
        parser.add_argument("--mask-source", dest="mask_source", choices=["gt", "predicted"])
        parser.add_argument("--prior-checkpoint", dest="prior_checkpoint", default=None)
        parser.add_argument("--segmenter-checkpoint", dest="segmenter_checkpoint", default=None)
        parser.add_argument("--eval-space", dest="eval_space", choices=["lab", "rgb"])


_RUN_FIELDS = (
    "task",
    "dataset_root",
    "output_dir",
    "epochs",
    "batch_size",
    "learning_rate",
    "min_learning_rate",
    "seed",
    "split_seed",
    "train_fraction",
    "num_workers",
    "hflip",
    "device",
    "convergence_threshold",
    "variant",
    "mask_source",
    "prior_checkpoint",
    "segmenter_checkpoint",
    "eval_space",
)


def _run_config(args, task=None):
    overrides = {name: getattr(args, name, None) for name in _RUN_FIELDS}
    if task is not None:
        overrides["task"] = task
    return load_run_config(args.config, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skshadow", description="Shadow segmentation and removal experiments."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Write a synthetic dataset in ISTD layout.")
    gen.add_argument("--out", "--output", dest="output", required=True)
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--size", type=int, default=64)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--tint", action="store_true")
    gen.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)

    for command, task in TRAIN_COMMANDS.items():
        _add_run_arguments(sub.add_parser(command, help=f"Train the {task} network."), task)

    ev = sub.add_parser("eval", help="Region-wise metrics of shadow removal results.")
    ev.add_argument("--dataset", help="Dataset in ISTD layout; replaces --gt-dir/--mask-dir.")
    ev.add_argument("--gt-dir", dest="gt_dir", help="Shadow-free ground truth PNGs.")
    ev.add_argument("--mask-dir", dest="mask_dir", help="Shadow masks named like --gt-dir.")
    ev.add_argument(
        "--pred-dir", "--predictions", dest="pred_dir", help="Predicted PNGs named like the GT."
    )
    ev.add_argument("--removal", help="Removal checkpoint, run on the dataset's shadow images.")
    ev.add_argument("--prior", help="MAE checkpoint, for prior-using removal models.")
    ev.add_argument("--segmenter", help="Use predicted instead of ground truth masks.")
    ev.add_argument("--space", choices=["lab", "rgb"], default="lab")
    ev.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)
    ev.add_argument("--report", "--output", dest="report", required=True, help="Report JSON path.")

    inf = sub.add_parser("infer", help="Run the three-stage pipeline on one image.")
    inf.add_argument("--image", required=True)
    inf.add_argument("--segmenter")
    inf.add_argument("--prior")
    inf.add_argument("--removal", required=True)
    inf.add_argument("--mask", help="Use this mask instead of the segmenter.")
    inf.add_argument("--output", required=True, help="Directory for the outputs.")

    abl = sub.add_parser("ablate", help="Train several variants and seeds and compare.")
    _add_run_arguments(abl)
    abl.add_argument("--variants", nargs="+", required=True)
    abl.add_argument("--seeds", nargs="+", type=int, default=[0])

    seg = sub.add_parser("seg-infer", help="Predict a shadow mask.")
    seg.add_argument("--checkpoint", required=True)
    seg.add_argument("--image", required=True)
    seg.add_argument("--output", required=True)

    prior = sub.add_parser("gen-prior", help="Generate a contextual prior.")
    prior.add_argument("--checkpoint", required=True)
    prior.add_argument("--image", required=True)
    prior.add_argument("--mask", required=True)
    prior.add_argument("--output", required=True)

    wav = sub.add_parser("wavelet-dump", help="Write the Haar subbands of an image as PNGs.")
    wav.add_argument("--image", required=True)
    wav.add_argument("--levels", type=int, default=3)
    wav.add_argument("--output", required=True)
    return parser


def _gen_data(args):
    cfg = SynthConfig(
        size=args.size, count=args.count, seed=args.seed, tint=args.tint, n_jobs=args.n_jobs
    )
    root = resolve_output_dir(args.output)
    write_istd_layout(synthesize(cfg), root, manifest=cfg.to_dict())


def _directory_pairs(pred_dir, gt_dir, mask_dir):
    """(pred, gt, mask) of every PNG in ``gt_dir``, matched by file name."""
    pred_dir, gt_dir, mask_dir = Path(pred_dir), Path(gt_dir), Path(mask_dir)
    names = sorted(path.name for path in gt_dir.glob("*.png"))
    if not names:
        raise ValueError(f"No PNG images in {gt_dir}")
    return (
        (load_image(pred_dir / name), load_image(gt_dir / name), load_mask(mask_dir / name))
        for name in names
    )


def _eval(args):
    checkpoint = None
    if args.dataset is None:
        if args.gt_dir is None or args.mask_dir is None:
            raise ValueError("eval needs --dataset or both --gt-dir and --mask-dir")
        if args.pred_dir is None:
            raise ValueError("eval of --gt-dir images needs --pred-dir")
        pairs = _directory_pairs(args.pred_dir, args.gt_dir, args.mask_dir)
        dataset = str(args.gt_dir)
    else:
        triplets = list(load_istd_layout(args.dataset))
        if args.pred_dir is not None:
            preds = [load_image(Path(args.pred_dir) / f"{t.name}.png") for t in triplets]
        else:
            if args.removal is None:
                raise ValueError("eval needs --removal or --pred-dir")
            removal = load_model(args.removal, task="removal")
            prior = load_model(args.prior, task="mae") if args.prior else None
            segmenter = load_model(args.segmenter, task="seg") if args.segmenter else None
            preds = [
                pipeline_infer(
                    t.shadow_img,
                    segmenter=segmenter,
                    prior=prior,
                    removal=removal,
                    mask=None if args.segmenter else t.mask,
                ).output
                for t in triplets
            ]
            checkpoint = args.removal
        pairs = [(p, t.free_img, t.mask) for p, t in zip(preds, triplets)]
        dataset = str(args.dataset)
    report = evaluate_dataset(
        pairs, space=args.space, n_jobs=args.n_jobs, dataset=dataset, checkpoint=checkpoint
    )
    path = resolve_output_dir(args.report)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(path)
    logger.info(f"Report written to {path}")
    print(json.dumps(report.to_dict()["all"]))


def _infer(args):
    mask = load_mask(args.mask) if args.mask else None
    result = pipeline_infer(
        args.image, segmenter=args.segmenter, prior=args.prior, removal=args.removal, mask=mask
    )
    out = resolve_output_dir(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_mask(result.mask, out / "mask.png")
    if result.prior is not None:
        save_image(result.prior, out / "prior.png")
    save_image(result.output, out / "output.png")
    save_panel(result, out / "panel.png")


def _ablate(args):
    cfg = _run_config(args)
    report = run_ablation(cfg, args.variants, args.seeds)
    print(report.summary.to_string(index=False))


def _seg_infer(args):
    model = load_model(args.checkpoint, task="seg")
    mask = predict_mask(load_image(args.image), model)
    path = resolve_output_dir(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_mask(mask, path)


def _gen_prior(args):
    model = load_model(args.checkpoint, task="mae")
    prior = generate_prior(load_image(args.image), load_mask(args.mask), model)
    path = resolve_output_dir(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(prior, path)


def _wavelet_dump(args):
    pyramid = haar_dwt2(load_image(args.image), args.levels)
    out = resolve_output_dir(args.output)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for depth, level in enumerate(pyramid.levels, start=1):
        for band in SUBBANDS:
            name = f"level{depth}_{band}.png"
            save_image(rescale_band(level[band]), out / name)
            written[name] = list(level[band].shape)
    atomic_write_json(out / "subbands.json", written)


def _train(args):
    task = TRAIN_COMMANDS[args.command]
    manifest = train(_run_config(args, task))
    print(json.dumps({"status": manifest.status, "best_metric": manifest.best_metric}))


COMMANDS = {
    "gen-data": _gen_data,
    "eval": _eval,
    "infer": _infer,
    "ablate": _ablate,
    "seg-infer": _seg_infer,
    "gen-prior": _gen_prior,
    "wavelet-dump": _wavelet_dump,
    **{command: _train for command in TRAIN_COMMANDS},
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format=LOG_FORMAT,
        level=logging.DEBUG if args.verbose else logging.INFO,
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    COMMANDS[args.command](args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
