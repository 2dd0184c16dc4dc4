"""Command-line front end.

Subcommands: make-dataset, train, evaluate, hallucinate. Exit codes:
0 success, 1 empty input, 2 usage or configuration error, 3 data
precondition violated, 4 numeric abort during training.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import load_dataset, write_synthetic_dataset
from .errors import (
    ConfigError,
    DatasetStructureError,
    HallucError,
    InsufficientDiversityError,
    NumericError,
)
from .images import load_image
from .metrics import (
    PixelProjectionEmbedder,
    TableEmbedder,
    evaluate_corpus,
    format_report_table,
    lookup_sr_fn,
    write_report_csv,
)
from .training import Checkpoint, generator_sr_fn, hallucinate, rebuild_generator, train

EXIT_OK = 0
EXIT_EMPTY_INPUT = 1
EXIT_USAGE = 2
EXIT_DATA_PRECONDITION = 3
EXIT_NUMERIC = 4

log = logging.getLogger("halluc")


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="halluc",
        description="Identity-aware multi-scale face super-resolution toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"halluc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="write a synthetic identity/image folder tree")
    p.add_argument("--identities", type=_positive_int, required=True,
                   help="number of identities (subdirectories)")
    p.add_argument("--variations", type=_positive_int, required=True,
                   help="images per identity")
    p.add_argument("--size", type=_positive_int, required=True, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0, help="corpus seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--overwrite", action="store_true",
                   help="allow writing into a non-empty directory")

    p = sub.add_parser("train", help="run adversarial training from a config file")
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--out", required=True, help="output directory for checkpoints and log")
    p.add_argument("--data", default=None, help="dataset root (overrides config data.path)")
    p.add_argument("--seed", type=int, default=None, help="override training.seed")
    p.add_argument("--steps", type=int, default=None, help="override training.steps")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("evaluate", help="score a checkpoint over a dataset")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--data", required=True, help="dataset root folder")
    p.add_argument("--out", required=True, help="output directory for report files")
    p.add_argument("--hr-size", type=int, default=None,
                   help="HR crop size (default: from the checkpoint)")
    p.add_argument("--factor", type=int, default=None,
                   help="upscaling factor (must match the checkpoint)")
    p.add_argument("--embedder", default=None,
                   help="'pixel' for the built-in embedder, or an embedding table file")
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--pairs-per-side", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="verification pair sampling seed")
    p.add_argument("--debug-oracle", action="store_true",
                   help="replace the generator with the identity oracle (plumbing check)")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("hallucinate", help="super-resolve LR image files")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("inputs", nargs="+", help="LR image files or glob patterns")
    p.add_argument("--verbose", action="store_true")

    return parser


def cmd_make_dataset(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.overwrite:
        log.error("refusing to write into non-empty directory %s (use --overwrite)", out)
        return EXIT_USAGE
    write_synthetic_dataset(out, args.identities, args.variations, args.size, args.seed)
    print(f"wrote {args.identities} identities x {args.variations} variations to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.data is not None:
        cfg.data.path = args.data
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.steps is not None:
        cfg.training.steps = args.steps
    if not cfg.data.path:
        raise ConfigError("no dataset path: set data.path in the config or pass --data")

    dataset = load_dataset(cfg.data.path, cfg.data.hr_size, cfg.data.scale_factor)
    result = train(
        dataset,
        cfg.train_config(),
        args.out,
        generator_config=cfg.generator_config(),
        discriminator_config=cfg.discriminator_config(),
        extractor=cfg.feature_extractor(),
        resume_from=args.resume,
    )
    print(f"trained {result.checkpoint.step} steps; checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return EXIT_OK


def _make_embedder(spec: str | None, embed_dim: int):
    if spec is None or spec == "none":
        return None
    if spec == "pixel":
        return PixelProjectionEmbedder(dim=embed_dim)
    return TableEmbedder.from_file(spec)


def cmd_evaluate(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.is_file():
        raise ConfigError(f"checkpoint not found: {ckpt_path}")
    ckpt = Checkpoint.load(ckpt_path)
    gcfg = ckpt.generator_config
    hr_size = args.hr_size if args.hr_size is not None else gcfg.hr_size
    factor = args.factor if args.factor is not None else gcfg.scale_factor
    if factor != gcfg.scale_factor:
        raise ConfigError(
            f"requested factor {factor} does not match checkpoint factor {gcfg.scale_factor}"
        )
    if hr_size != gcfg.hr_size:
        raise ConfigError(
            f"requested hr_size {hr_size} does not match checkpoint hr_size {gcfg.hr_size}"
        )

    dataset = load_dataset(args.data, hr_size, factor)
    if args.debug_oracle:
        sr_fn = lookup_sr_fn(dataset)
    else:
        sr_fn = generator_sr_fn(rebuild_generator(ckpt))

    workers = int(os.environ.get("HALLUC_NUM_WORKERS", "1") or "1")
    report = evaluate_corpus(
        sr_fn,
        dataset,
        embedder=_make_embedder(args.embedder, args.embed_dim),
        seed=args.seed,
        pairs_per_side=args.pairs_per_side,
        max_workers=max(1, workers),
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv")
    table = format_report_table(report)
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    agg = report.aggregates
    line = f"mean psnr={agg['psnr']:.3f} dB ssim={agg['ssim']:.4f} fsim={agg['fsim']:.4f}"
    if report.identity is not None:
        line += f" auc={report.identity.auc:.4f}"
    print(line)
    return EXIT_OK


def cmd_hallucinate(args) -> int:
    paths: list[str] = []
    for pattern in args.inputs:
        if any(ch in pattern for ch in "*?["):
            paths.extend(sorted(glob.glob(pattern)))
        elif Path(pattern).is_file():
            paths.append(pattern)
    if not paths:
        log.error("no input images matched %s", args.inputs)
        return EXIT_EMPTY_INPUT
    lr = np.stack([load_image(p) for p in paths])
    names = [Path(p).stem for p in paths]
    written = hallucinate(args.checkpoint, lr, args.out, names=names)
    for path in written:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    handlers = {
        "make-dataset": cmd_make_dataset,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "hallucinate": cmd_hallucinate,
    }
    try:
        return handlers[args.command](args)
    except (InsufficientDiversityError, DatasetStructureError) as exc:
        log.error("%s", exc)
        return EXIT_DATA_PRECONDITION
    except NumericError as exc:
        log.error("numeric abort: %s", exc)
        return EXIT_NUMERIC
    except (ConfigError, HallucError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
