"""Command-line entry point.

Subcommands: gen-data, train, translate, eval-fid, ablate, grad-check.
Exit codes: 0 success, 1 check failure, 2 configuration error, 3 I/O or
image-format error, 4 numeric abort (non-finite loss), 5 checkpoint or
geometry mismatch. Set DOMAINSWAP_OUT_ROOT to anchor every relative output
path under one directory.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, read_kv_file
from .data import (DomainSpec, generate_dataset, list_images, load_image,
                   save_image, write_png)
from .errors import (CheckpointError, ConfigError, ContractError,
                     ImageFormatError, NumericError, ShapeError, TrainingAbort)
from .fid import FeatureExtractor, evaluate_translation, extract_stats, fid, format_fid_table
from .networks import PlacementVariant
from .tensor import Tensor, no_grad
from .training import load_checkpoint, run_training
from .verification import TOLERANCE, gradient_suite

OUT_ROOT_ENV = "DOMAINSWAP_OUT_ROOT"

_DATASET_SPEC_KEYS = {
    "size": int, "count": int, "seed": int,
    "name_a": str, "name_b": str, "kind_a": str, "kind_b": str,
}
_DATASET_SPEC_DEFAULTS = {
    "name_a": "a", "name_b": "b",
    "kind_a": "striped-triangles", "kind_b": "shaded-ellipses",
}


def _out_path(path) -> Path:
    """Anchor relative output paths under DOMAINSWAP_OUT_ROOT when set."""
    path = Path(path)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in (("variant", "variant"), ("iters", "iters"), ("seed", "seed"),
                      ("data_root", "data_root"), ("out_dir", "out_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    cfg = cfg.apply_overrides(overrides)
    return cfg.apply_overrides({"out_dir": str(_out_path(cfg.out_dir))})


# -- subcommands ----------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise ConfigError(f"dataset spec file not found: {spec_path}")
    kv = read_kv_file(spec_path)
    unknown = sorted(set(kv) - set(_DATASET_SPEC_KEYS))
    if unknown:
        raise ConfigError(f"unknown dataset spec keys: {', '.join(unknown)}")
    for key in ("size", "count", "seed"):
        if key not in kv:
            raise ConfigError(f"dataset spec is missing required key {key!r}")
    values = dict(_DATASET_SPEC_DEFAULTS)
    for key, raw in kv.items():
        typ = _DATASET_SPEC_KEYS[key]
        try:
            values[key] = typ(raw)
        except ValueError as e:
            raise ConfigError(f"dataset spec key {key!r}: bad value {raw!r}") from e

    out_root = _out_path(args.out)
    for suffix, name_key, kind_key, seed_shift in (("a", "name_a", "kind_a", 0),
                                                   ("b", "name_b", "kind_b", 1)):
        spec = DomainSpec(name=values[name_key], kind=values[kind_key],
                          size=values["size"], count=values["count"],
                          seed=values["seed"] + seed_shift)
        paths = generate_dataset(spec, out_root)
        print(f"domain {suffix}: {len(paths)} images in {out_root / spec.name}")
    return 0


def _cmd_train(args) -> int:
    if args.resume:
        final = run_training(resume=args.resume, echo=args.echo)
        print(f"final checkpoint: {final}")
        return 0
    cfg = _load_run_config(args)
    if args.dump_config:
        sys.stdout.write(cfg.dump())
        return 0
    final = run_training(cfg, echo=args.echo)
    print(f"final checkpoint: {final}")
    return 0


def _cmd_translate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    model = state.model
    source_domain = 1 if args.direction == "1to2" else 2
    paths = list_images(args.input_dir)
    if not paths:
        raise ConfigError(f"no .png images found in {args.input_dir}")
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = model.config.image_size
    for i, path in enumerate(paths):
        x = load_image(path, dtype=model.dtype)
        xt = Tensor(x.data[None])
        tiles = [x.data]
        for j in range(args.n_styles):
            rng = np.random.default_rng((args.seed, 900, i, j))
            with no_grad():
                out = model.translate(xt, model.draw_style(rng), source_domain=source_domain)
            save_image(out, out_dir / f"{path.stem}_t{j}.png")
            tiles.append(out.data[0])
        if args.grid:
            grid = np.concatenate(tiles, axis=2)  # (3, size, (1 + n_styles) * size)
            v = (grid.astype(np.float64) + 1.0) * 127.5
            px = np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)
            write_png(out_dir / f"{path.stem}_grid.png", px)
    print(f"translated {len(paths)} images x {args.n_styles} styles into {out_dir}")
    return 0


def _cmd_eval_fid(args) -> int:
    extractor = FeatureExtractor()
    if args.checkpoint:
        state = load_checkpoint(args.checkpoint)
        source_domain = 1 if args.direction == "1to2" else 2
        report = evaluate_translation(state.model, args.source, args.target,
                                      n_styles=args.n_styles, seed=args.seed,
                                      source_domain=source_domain, extractor=extractor)
        for line in report.lines():
            print(line)
    else:
        from .data import load_image_dir
        source = load_image_dir(args.source)
        target = load_image_dir(args.target)
        baseline = fid(extract_stats(source, extractor), extract_stats(target, extractor))
        print(f"fid(source, target)     = {baseline:.6f}")
    return 0


def _cmd_ablate(args) -> int:
    base = _load_run_config(args)
    if args.dump_config:
        sys.stdout.write(base.dump())
        return 0
    extractor = FeatureExtractor()
    rows = []
    dataset = Path(base.data_root).name or base.data_root
    for variant in [v.value for v in PlacementVariant]:
        cfg = base.apply_overrides({
            "variant": variant,
            "out_dir": str(Path(base.out_dir) / variant),
        })
        final = run_training(cfg, echo=args.echo)
        state = load_checkpoint(final)
        report = evaluate_translation(
            state.model,
            Path(cfg.data_root) / cfg.domain_a,
            Path(cfg.data_root) / cfg.domain_b,
            n_styles=args.n_styles, seed=cfg.seed, extractor=extractor)
        rows.append({"dataset": dataset, "variant": variant,
                     "fid": report.translated_fid, "baseline": report.baseline_fid})
    print(format_fid_table(rows))
    return 0


def _cmd_grad_check(args) -> int:
    start = time.time()
    results = gradient_suite(n_seeds=args.seeds)
    failed = 0
    for name, err in results:
        ok = err < TOLERANCE
        failed += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'}  {name:<28} max rel err {err:.3e}")
    print(f"{len(results) - failed}/{len(results)} checks passed "
          f"({args.seeds} seeds, {time.time() - start:.1f}s)")
    return 1 if failed else 0


# -- parser / dispatch ---------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable; wins over the file)")
    p.add_argument("--variant", choices=[v.value for v in PlacementVariant],
                   help="attention placement variant")
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--data-root", dest="data_root", help="dataset root directory")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective config and exit")
    p.add_argument("--echo", action="store_true", help="echo log lines to stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="domainswap",
        description="Unpaired two-domain image translation with self-attention.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render the synthetic two-domain dataset")
    p.add_argument("spec", help="dataset spec file (size/count/seed key-value text)")
    p.add_argument("--out", default="data", help="output root directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a translation model")
    _add_config_flags(p)
    p.add_argument("--resume", help="checkpoint to resume from (its embedded config is used)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("translate", help="translate a directory of images")
    p.add_argument("checkpoint")
    p.add_argument("input_dir")
    p.add_argument("--direction", choices=["1to2", "2to1"], default="1to2")
    p.add_argument("--n-styles", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="translated")
    p.add_argument("--grid", action="store_true",
                   help="also save input|translations grids per image")
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("eval-fid", help="Frechet-distance report for two image sets")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--checkpoint", help="also score source translated by this model")
    p.add_argument("--direction", choices=["1to2", "2to1"], default="1to2")
    p.add_argument("--n-styles", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval_fid)

    p = sub.add_parser("ablate", help="train all four placement variants and compare")
    _add_config_flags(p)
    p.add_argument("--n-styles", type=int, default=1)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("grad-check", help="run the finite-difference verification suite")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=_cmd_grad_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ImageFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (NumericError, TrainingAbort) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (CheckpointError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 5


def entry():
    sys.exit(main())
