"""``fginpaint`` command line: train, infer, evaluate, gen-masks, make-foreground, make-toy-data."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import FIELD_TYPES, ConfigError, load_config

logger = logging.getLogger("fginpaint")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("config overrides (same names as the config file keys)")
    for name, kind in FIELD_TYPES.items():
        flag = "--" + name.replace("_", "-")
        aliases = [flag] if "_" not in name else [flag, "--" + name]
        if kind == "bool":
            group.add_argument(*aliases, dest=name, action=argparse.BooleanOptionalAction, default=None)
        elif kind.startswith("tuple"):
            group.add_argument(*aliases, dest=name, type=float, nargs=2, default=None, metavar=("B1", "B2"))
        else:
            conv = {"int": int, "float": float}.get(kind, str)
            group.add_argument(*aliases, dest=name, type=conv, default=None)


def cmd_train(args) -> int:
    from .train import train

    overrides = {k: getattr(args, k) for k in FIELD_TYPES if getattr(args, k) is not None}
    cfg = load_config(args.config, overrides)
    final = train(cfg)
    print(final)
    return 0


def cmd_infer(args) -> int:
    from .train import infer

    print(infer(args.ckpt, args.image, args.hole, args.out, composite=args.composite))
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_pairs, get_backend, write_reports
    from .plotting import plot_metric_reports

    kwargs = {"weights_path": args.backend_weights} if args.backend == "inception" else {"seed": args.seed}
    backend = get_backend(args.backend, **kwargs)
    reports = evaluate_pairs(args.gt, args.pred, args.fg, backend)
    config = {"gt": str(args.gt), "pred": str(args.pred), "fg": str(args.fg) if args.fg else None,
              "backend": args.backend, "seed": args.seed}
    paths = write_reports(reports, args.out, config)
    paths.append(plot_metric_reports(reports, Path(args.out) / "report.png"))
    for scope, rep in reports.items():
        agg = rep.aggregate
        print(f"{scope}: " + " ".join(f"{k}={v:.6g}" for k, v in agg.items()))
    for p in paths:
        print(p)
    return 0


def cmd_gen_masks(args) -> int:
    from .imaging import write_mask
    from .masks import StrokeConfig, generate_freeform_mask, mask_seeds

    h, w = args.size
    lo, hi = args.ratio
    if lo < 0.01 or hi > 0.60:
        logger.warning("ratio interval [%s, %s] leaves the 0.01-0.60 range used for training masks", lo, hi)
    cfg = StrokeConfig.scaled((h, w), target_ratio=(lo, hi))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, seed in enumerate(mask_seeds(args.seed, args.n)):
        write_mask(out / f"{i:05d}.png", generate_freeform_mask(seed, (h, w), cfg))
    print(f"wrote {args.n} masks to {out}")
    return 0


def cmd_make_foreground(args) -> int:
    from .imaging import write_mask
    from .masks import foreground_from_attributes, load_labels, read_attribute_map

    labels = load_labels(args.labels)
    include = [s.strip() for s in args.include.split(",") if s.strip()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = sorted(Path(args.attrs).glob("*.png"))
    empty = []
    for path in paths:
        fg = foreground_from_attributes(read_attribute_map(path, labels), include)
        if not fg.any():
            empty.append(path.stem)
        write_mask(out / path.name, fg)
    if empty:
        logger.warning("all-zero foreground for %s (rejected at ingestion)", ", ".join(empty))
    print(f"wrote {len(paths)} foreground masks to {out}")
    return 0


def cmd_make_toy_data(args) -> int:
    from .synthetic import make_toy_dataset

    print(make_toy_dataset(args.out, n=args.n, size=args.size, seed=args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fginpaint", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train generator and critic")
    p.add_argument("--config", type=Path, default=None, help="flat TOML run config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="inpaint one image with a checkpoint")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--hole", required=True, type=Path, help="binary PNG, 255 = valid")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--composite", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="global and foreground MSE/MAE/PSNR/SSIM/FID")
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--fg", type=Path, default=None)
    p.add_argument("--backend", default="tiny", choices=("tiny", "inception"))
    p.add_argument("--backend-weights", default=None, help="local Inception-v3 state dict")
    p.add_argument("--seed", type=int, default=0, help="seed of the tiny backend")
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-masks", help="free-form brush-stroke hole masks")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, nargs=2, default=(256, 256), metavar=("H", "W"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, nargs=2, default=(0.01, 0.60), metavar=("LO", "HI"))
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_masks)

    p = sub.add_parser("make-foreground", help="skin+hair masks from face-parsing label maps")
    p.add_argument("--attrs", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--include", default="skin,hair")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_make_foreground)

    p = sub.add_parser("make-toy-data", help="write a small procedural face dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"fginpaint: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
