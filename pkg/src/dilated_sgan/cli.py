"""Command-line entry point: ``dsgan make-toy-data | train | generate | evaluate | compare``.

Exit codes: 0 on success, 1 for invalid configuration or arguments, 2 for a
failure while running.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_config, parse_override, write_config
from .data import PatchSampler, load_source, load_texture, make_toy_texture, save_png
from .evaluation import (
    compare_runs, emit_report, evaluate, format_report, load_report)
from .estimator import DilatedSGAN
from .training import generate

logger = logging.getLogger("dilated_sgan")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
SNAPSHOT = "config.toml"


def _overrides(args, names):
    out = {}
    for text in getattr(args, "set", None) or []:
        key, value = parse_override(text)
        out[key] = value
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    return out


def _source(config):
    if config.data_path:
        return load_source(config.data_path)
    return make_toy_texture(config.toy_kind, config.toy_height,
                            config.toy_width, config.toy_params,
                            config.toy_seed)


def _png_files(directory, key):
    if not os.path.isdir(directory):
        raise ConfigError(key, f"no such directory {directory}")
    files = sorted(glob.glob(os.path.join(directory, "*.png")))
    if not files:
        raise ConfigError(key, f"no PNG files in {directory}")
    return files


def cmd_make_toy_data(args):
    params = dict(parse_override(p) for p in args.param or [])
    try:
        source = make_toy_texture(args.kind, args.height, args.width, params,
                                  args.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError("make-toy-data", str(exc)) from None
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_png(source, args.out)
    logger.info("wrote %s (%dx%d)", args.out, source.height, source.width)


def cmd_train(args):
    config = load_config(args.config, _overrides(
        args, ["data_path", "output_dir", "epochs", "seed"]))
    if config.data_path and not os.path.exists(config.data_path):
        raise ConfigError("data_path", f"no such file {config.data_path}")
    out_dir = config.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    write_config(config, os.path.join(out_dir, SNAPSHOT))
    est = DilatedSGAN(**config.estimator_params(), out_dir=out_dir)
    est.fit(PatchSampler(_source(config), config.patch_size, config.seed))
    path = os.path.join(out_dir, "final.ckpt")
    est.save(path)
    logger.info("trained %d iterations; final checkpoint %s", est.n_iter_, path)


def _generate_images(config):
    ck = load_checkpoint(config.checkpoint)
    return ck, generate(ck, config.noise_height, config.noise_width,
                        config.count, config.generate_seed)


def cmd_generate(args):
    config = load_config(args.config, _overrides(
        args, ["checkpoint", "noise_height", "noise_width", "count",
               "generate_seed", "output_dir"]))
    if not config.checkpoint or not os.path.exists(config.checkpoint):
        raise ConfigError("checkpoint", f"no such file {config.checkpoint}")
    out_dir = config.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    write_config(config, os.path.join(out_dir, SNAPSHOT))
    _, images = _generate_images(config)
    width = max(3, len(str(len(images) - 1)))
    for i, img in enumerate(images):
        save_png(img, os.path.join(out_dir, f"sample_{i:0{width}d}.png"))
    logger.info("wrote %d images to %s", len(images), out_dir)


def cmd_evaluate(args):
    config = load_config(args.config, _overrides(
        args, ["real_dir", "synthetic_dir", "checkpoint", "count",
               "generate_seed", "noise_height", "noise_width", "output_dir"]))
    if config.synthetic_dir is None and config.checkpoint is None:
        raise ConfigError("synthetic_dir", "give --synthetic-dir or --checkpoint")
    real_files = _png_files(config.real_dir, "real_dir") if config.real_dir else None
    syn_files = (_png_files(config.synthetic_dir, "synthetic_dir")
                 if config.synthetic_dir else None)
    if syn_files is None and not os.path.exists(config.checkpoint):
        raise ConfigError("checkpoint", f"no such file {config.checkpoint}")
    out_dir = config.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    write_config(config, os.path.join(out_dir, SNAPSHOT))

    checkpoint_id = None
    if syn_files is not None:
        synthetic = [load_texture(f) for f in syn_files]
    else:
        ck, synthetic = _generate_images(config)
        checkpoint_id = f"{os.path.basename(config.checkpoint)}:{ck.identifier}"
    if real_files is not None:
        real = [load_texture(f) for f in real_files]
    else:
        size = synthetic[0].shape[0]
        sampler = PatchSampler(_source(config), size, config.seed)
        real = [sampler.sample() for _ in range(config.count)]
    report = evaluate(real, synthetic, config.metric_config(),
                      checkpoint=checkpoint_id)
    report.config.update({"run": config.to_dict()})
    emit_report(report, out_dir)
    if not args.quiet:
        print(format_report(report))


def cmd_compare(args):
    for path in (args.report_a, args.report_b):
        if not os.path.exists(path):
            raise ConfigError("report", f"no such report {path}")
    print(compare_runs(load_report(args.report_a), load_report(args.report_b),
                       names=(args.name_a, args.name_b)))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dsgan", description="Dilated spatial GAN for ergodic textures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy-data", help="write a procedural toy texture PNG")
    p.add_argument("--kind", choices=("stripes", "channels"), default="channels")
    p.add_argument("--height", type=int, default=2500)
    p.add_argument("--width", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="generator parameter, e.g. band_width=4")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_toy_data)

    def common(p):
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key")
        p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("train", help="train generator and discriminator")
    common(p)
    p.add_argument("--data", dest="data_path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="draw images from a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--noise-h", dest="noise_height", type=int)
    p.add_argument("--noise-w", dest="noise_width", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", dest="generate_seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="compare real and synthetic images")
    common(p)
    p.add_argument("--real-dir")
    p.add_argument("--synthetic-dir")
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", dest="generate_seed", type=int)
    p.add_argument("--noise-h", dest="noise_height", type=int)
    p.add_argument("--noise-w", dest="noise_width", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="side-by-side table of two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--name-a", default="run A")
    p.add_argument("--name-b", default="run B")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckpointError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
