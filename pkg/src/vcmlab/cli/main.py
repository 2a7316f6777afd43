"""``vcmlab`` command-line interface."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .. import __version__
from ..codec import HyperpriorCodec, NetworkConfig, compress, decompress, load_codec
from ..datasets import make_shapes_dataset, save_dataset
from ..entropy import Bitstream
from ..errors import CodingError, ConfigError, DataError, FrozenViolationError, VcmError
from ..evaluation import RDCurve, bd_report, emit_report, evaluate_model
from ..task import load_task_net
from ..training import finetune, pretrain
from .config import DatasetDescriptor, ExperimentConfig, default_config_text
from .manifest import ExperimentManifest, new_run_dir

log = logging.getLogger("vcmlab")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_DATA, EXIT_FROZEN, EXIT_CODING = 0, 1, 2, 3, 4, 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(exc, FrozenViolationError):
        return EXIT_FROZEN
    if isinstance(exc, CodingError):
        return EXIT_CODING
    return EXIT_FAILURE


def _ladder(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad lambda ladder {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("empty lambda ladder")
    return values


# -- training -----------------------------------------------------------------

def cmd_pretrain(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if cfg.training.strategy != "mse":
        raise ConfigError(f"pretraining needs strategy 'mse', config has {cfg.training.strategy!r}")
    dataset = cfg.dataset.load()  # fails before any output is created
    net_cfg = NetworkConfig.toy() if cfg.training.network == "toy" else NetworkConfig.full()
    torch.manual_seed(cfg.training.seed)
    model = HyperpriorCodec(net_cfg)
    run = new_run_dir(cfg.experiment, "pretrain")
    result = pretrain(model, dataset, cfg.training, out_dir=run)
    final = result.history[-1] if result.history else None
    outputs = ["pretrain_log.jsonl"] if result.history else []
    manifest = ExperimentManifest(cfg.experiment, "pretrain", cfg.to_dict(), dataset.fingerprint(),
                                  checkpoints=["pretrain.pt"], outputs=outputs,
                                  points=[{"final_loss": final}] if final else [])
    path = manifest.seal(run)
    print(f"checkpoint {run / 'pretrain.pt'}")
    print(f"manifest {path}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.strategy:
        changes["strategy"] = args.strategy
    if args.lambda_ladder:
        changes["lambda_ladder"] = args.lambda_ladder
    if args.frame_mode:
        changes["frame_mode"] = args.frame_mode
    if args.epochs is not None:
        changes["finetune_epochs"] = args.epochs
    training = cfg.training.replace(**changes)
    cfg.training = training
    pretrained = args.pretrained or cfg.pretrained
    if not pretrained:
        raise ConfigError("finetuning needs a pretrained codec checkpoint (--pretrained or 'pretrained' in config)")
    dataset = cfg.dataset.load()
    net = load_task_net(args.task_net or cfg.task_net)
    model, _ = load_codec(pretrained)
    run = new_run_dir(cfg.experiment, f"finetune-{training.strategy}-{training.frame_mode}")
    results = finetune(model, dataset, net, training, out_dir=run)
    ckpts = [r.checkpoint.name for r in results]
    logs = [c.replace(".pt", "_log.jsonl") for c in ckpts]
    snapshot = {**cfg.to_dict(), "pretrained": str(pretrained), "task_net_fingerprint": net.fingerprint}
    manifest = ExperimentManifest(cfg.experiment, "finetune", snapshot, dataset.fingerprint(),
                                  checkpoints=ckpts, outputs=[l for l in logs if (run / l).exists()],
                                  points=[{"lam": r.lam, "final_loss": r.history[-1] if r.history else None}
                                          for r in results])
    path = manifest.seal(run)
    for c in ckpts:
        print(f"checkpoint {run / c}")
    print(f"manifest {path}")
    return EXIT_OK


# -- coding -------------------------------------------------------------------

def _read_image(path) -> torch.Tensor:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path).astype(np.float32)
    else:
        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"{path}: expected an RGB image, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1)[None]


def _write_image(path, x_hat: torch.Tensor):
    path = Path(path)
    arr = x_hat[0].permute(1, 2, 0).numpy()
    if path.suffix == ".npy":
        np.save(path, arr)
    else:
        Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)).save(path)


def cmd_compress(args) -> int:
    model, meta = load_codec(args.checkpoint)
    x = _read_image(args.image)
    stream = compress(model, x, float(meta.get("lam") or 0.0))
    data = stream.to_bytes()
    Path(args.bitstream).write_bytes(data)
    h, w = x.shape[-2:]
    print(f"bpp {stream.payload_bits / (h * w):.6f} ({len(data)} bytes, {stream.payload_bits} payload bits)")
    return EXIT_OK


def cmd_decompress(args) -> int:
    model, _ = load_codec(args.checkpoint)
    stream = Bitstream.from_bytes(Path(args.bitstream).read_bytes())
    x_hat = decompress(model, stream)
    _write_image(args.image, x_hat)
    h = stream.header
    print(f"decoded {h.width}x{h.height} bpp {stream.payload_bits / (h.width * h.height):.6f}")
    return EXIT_OK


# -- evaluation ---------------------------------------------------------------

def _eval_descriptor(args) -> tuple[DatasetDescriptor, str]:
    if args.dataset:
        return DatasetDescriptor(root=args.dataset, layout=args.layout, labeled_pattern=args.labeled_pattern), \
            args.experiment or "evaluation"
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        return cfg.eval_dataset or cfg.dataset, args.experiment or cfg.experiment
    raise ConfigError("evaluate needs --dataset or --config")


def cmd_evaluate(args) -> int:
    desc, experiment = _eval_descriptor(args)
    dataset = desc.load()
    net = load_task_net(args.task_net)
    anchor = RDCurve.load(args.anchor) if args.anchor else None
    run = new_run_dir(experiment, "evaluate")
    points, failures, baseline, outputs = [], [], None, []
    for k, ckpt in enumerate(args.checkpoints):
        rec_path = run / "records" / f"{k:02d}_{Path(ckpt).stem}.jsonl"
        result = evaluate_model(ckpt, dataset, net, records_path=rec_path, on_error="skip")
        points.append(result.point)
        failures += [{"checkpoint": str(ckpt), **f} for f in result.failures]
        baseline = baseline or result.baseline
        outputs.append(str(rec_path.relative_to(run)))
    curve = RDCurve(args.name, points)
    curve_path = curve.save(run / f"{args.name}.jsonl")
    baseline_path = run / "baseline.json"
    baseline_path.write_text(baseline.to_json("uncompressed") + "\n")
    files = emit_report([curve] if anchor is None else [anchor, curve], run / "report", anchor, baseline)
    outputs += [curve_path.name, baseline_path.name] + [str(p.relative_to(run)) for p in files.values()]
    manifest = ExperimentManifest(experiment, "evaluate",
                                  {"dataset": vars(desc), "checkpoints": [str(c) for c in args.checkpoints],
                                   "task_net": args.task_net, "anchor": args.anchor, "failures": failures},
                                  dataset.fingerprint(), outputs=outputs,
                                  points=[json.loads(p.to_json(args.name)) for p in curve.points])
    manifest.seal(run)
    print(f"curve {curve_path}")
    print(f"report {run / 'report'}")
    if failures:
        print(f"{len(failures)} image(s) failed:", file=sys.stderr)
        for f in failures:
            print(f"  {f['checkpoint']} {f['image']}: {f['error']}", file=sys.stderr)
        return EXIT_CODING
    return EXIT_OK


def _num(v, spec, suffix="") -> str:
    return "n/a" if v is None else format(v, spec) + suffix


def cmd_bd_report(args) -> int:
    anchor = RDCurve.load(args.anchor)
    tests = [RDCurve.load(p) for p in args.tests]
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    rows, failed = [], False
    for t in tests:
        for m in metrics:
            try:
                rep = bd_report(anchor, t, m)
            except KeyError as e:
                failed = True
                print(f"{t.name} {m}: {e}", file=sys.stderr)
                continue
            failed |= rep.error is not None
            rows.append(rep)
    unit = {True: "pp", False: "dB"}
    print(f"{'test':<24}{'metric':<10}{'BD quality':>14}{'BD rate':>12}  overlap (bpp)")
    for r in rows:
        q = _num(r.bd_quality, "+.2f", " " + unit[r.metric != "psnr_db"])
        rate = _num(r.bd_rate, "+.1f", "%")
        ov = "none" if r.overlap is None else f"[{r.overlap[0]:.4g}, {r.overlap[1]:.4g}]"
        print(f"{r.test:<24}{r.metric:<10}{q:>14}{rate:>12}  {ov}")
        if r.error:
            print(f"  ! {r.error}")
    if args.output:
        Path(args.output).write_text("".join(json.dumps({
            "anchor": r.anchor, "test": r.test, "metric": r.metric, "bd_quality": r.bd_quality,
            "bd_rate": r.bd_rate, "overlap": r.overlap, "error": r.error}, sort_keys=True) + "\n" for r in rows))
    return EXIT_DATA if failed else EXIT_OK


def cmd_config_init(args) -> int:
    text = default_config_text(args.preset)
    if args.output:
        out = Path(args.output)
        if out.exists() and not args.force:
            raise ConfigError(f"{out} exists; pass --force to replace it")
        out.write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_make_shapes(args) -> int:
    ds = make_shapes_dataset(args.sequences, seed=args.seed, size=args.size, num_frames=args.frames,
                             with_annotations=not args.no_annotations)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} sequences to {args.out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcmlab", description="Task-driven learned image compression toolkit.")
    p.add_argument("--version", action="version", version=f"vcmlab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads (1 for bitwise reruns)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pretrain", help="MSE rate-distortion pretraining")
    s.add_argument("config")
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("finetune", help="task-driven finetuning over a lambda ladder")
    s.add_argument("config")
    s.add_argument("--strategy", choices=("gt", "feature", "pseudo_gt"))
    s.add_argument("--lambda-ladder", type=_ladder, help="comma-separated, e.g. 16,8,4,2")
    s.add_argument("--frame-mode", choices=("labeled_only", "random_frame"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--pretrained", help="codec checkpoint to start from (overrides the config)")
    s.add_argument("--task-net", help="task network checkpoint (default: config, then the bundled one)")
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("compress", help="encode one image to a bitstream file")
    s.add_argument("checkpoint")
    s.add_argument("image")
    s.add_argument("bitstream")
    s.set_defaults(func=cmd_compress)

    s = sub.add_parser("decompress", help="decode a bitstream file to an image (.png or .npy)")
    s.add_argument("checkpoint")
    s.add_argument("bitstream")
    s.add_argument("image")
    s.set_defaults(func=cmd_decompress)

    s = sub.add_parser("evaluate", help="evaluate checkpoints through the bitstream and write a report")
    s.add_argument("checkpoints", nargs="+")
    s.add_argument("--dataset", help="dataset root")
    s.add_argument("--layout", default="sequence_folders", choices=("sequence_folders", "flat_images"))
    s.add_argument("--labeled-pattern", default=r"_labeled\.png$")
    s.add_argument("--config", help="take the evaluation dataset from an experiment config")
    s.add_argument("--task-net")
    s.add_argument("--anchor", help="curve file to compute BD values against")
    s.add_argument("--name", default="curve", help="name of the produced curve")
    s.add_argument("--experiment", help="experiment directory under the output root")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("bd-report", help="BD quality and BD rate of test curves against an anchor curve")
    s.add_argument("anchor")
    s.add_argument("tests", nargs="+")
    s.add_argument("--metrics", default="miou,wap")
    s.add_argument("--output", help="also write the rows as JSON lines")
    s.set_defaults(func=cmd_bd_report)

    s = sub.add_parser("config-init", help="print or write a config with every default filled in")
    s.add_argument("--preset", choices=("toy", "full"), default="toy")
    s.add_argument("-o", "--output")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_config_init)

    s = sub.add_parser("make-shapes", help="write a synthetic moving-shapes dataset")
    s.add_argument("out")
    s.add_argument("--sequences", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--frames", type=int, default=30)
    s.add_argument("--no-annotations", action="store_true")
    s.set_defaults(func=cmd_make_shapes)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        torch.set_num_threads(args.threads)
    try:
        return args.func(args)
    except (VcmError, FileNotFoundError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
