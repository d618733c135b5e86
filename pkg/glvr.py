#!/usr/bin/env python
"""
glvr - Main Entry Point
Train small GANs, recover latent vectors from generated images, evaluate
resample criteria and explore the latent space from one command line.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

import config
from criteria.resample import parse_criterion
from errors import ConfigError, CriterionSyntaxError, GlvrError
from modules import gantrain, harness, latentops, recovery
from modules.datasets import RING, VARIANTS, SyntheticDataset, mean_mode_distance, mode_coverage
from modules.nets import load_checkpoint, save_checkpoint, decode_checkpoint
from rng import Xoshiro256pp, derive_seed
import storage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Stream and size of the post-training sample used for the mode metrics
EVAL_STREAM = 99
EVAL_SAMPLES = 1000


def setup_logging(level: str = config.LOG_LEVEL, log_file: Optional[str] = config.LOG_FILE):
    """Log to standard error, and to `log_file` when set; stdout stays free for tables."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=config.LOG_FORMAT,
                        handlers=handlers, force=True)


def criterion_arg(text: str):
    try:
        return parse_criterion(text)
    except CriterionSyntaxError as e:
        raise argparse.ArgumentTypeError(str(e))


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def resolve_seed(flag: Optional[int], fallback: Optional[int] = None) -> int:
    """--seed flag, then the config value, then GLVR_SEED, then 0."""
    for value in (flag, fallback, config.DEFAULT_SEED):
        if value is not None:
            return value
    return 0


def load_image(path) -> np.ndarray:
    """A GLVT tensor, or a PGM/PPM mapped back to [-1, 1] (colour as 3 x H x W)."""
    if str(path).lower().endswith((".pgm", ".ppm")):
        pixels = storage.read_image_pgm(path).astype(np.float64)
        values = pixels / 127.5 - 1.0
        return np.transpose(values, (2, 0, 1)) if values.ndim == 3 else values
    return storage.read_tensor(path)


# Commands

def cmd_train(args) -> int:
    cfg = storage.read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise ConfigError("training config must be a JSON object", key=args.config)
    for key in ("steps", "latent_dim", "batch_size", "lr"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if args.dataset is not None:
        cfg["dataset"] = args.dataset
    cfg["seed"] = resolve_seed(args.seed, cfg.get("seed"))
    train_cfg = gantrain.TrainConfig.from_dict(cfg)

    result = gantrain.train(train_cfg, args.progress_every)
    save_checkpoint(result.generator, args.out)
    if args.discriminator_out:
        save_checkpoint(result.discriminator, args.discriminator_out)
    if args.history:
        gantrain.write_loss_history(args.history, result.history)
    last = result.history[-1] if result.history else None
    if last is not None:
        print(f"step={last.step} d_loss={last.d_loss:.6f} g_loss={last.g_loss:.6f}")
    if train_cfg.dataset.variant == RING:
        rng = Xoshiro256pp(derive_seed(train_cfg.seed, EVAL_STREAM))
        samples = gantrain.generate(result.generator, rng, EVAL_SAMPLES)
        print(f"mean_mode_distance={mean_mode_distance(samples, train_cfg.dataset):.6f} "
              f"modes_covered={mode_coverage(samples, train_cfg.dataset)}/{train_cfg.dataset.modes}")
    logger.info(f"Saved generator to {args.out}")
    return EXIT_OK


def cmd_recover(args) -> int:
    G = load_checkpoint(args.model)
    x = load_image(args.image)
    cfg = recovery.RecoveryConfig(numiter=args.iters, lr=args.lr, seed=resolve_seed(args.seed),
                                  record_trace=bool(args.trace))
    result = recovery.recover(x, G, args.criterion, cfg, progress_every=args.progress_every)
    storage.write_tensor(args.out, result.z_approx)
    if args.trace:
        recovery.write_trace(args.trace, result.loss_trace)
    print(f"criterion={args.criterion.spec()} final_loss={result.final_loss!r} "
          f"resamples={result.total_resamples}")
    if args.z_true:
        z_true = storage.read_tensor(args.z_true)
        print(f"error={recovery.reconstruction_error(z_true, result.z_approx)!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    if args.trials is not None:
        cfg.trials = args.trials
    cfg.master_seed = resolve_seed(args.seed, cfg.master_seed)
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out = args.out
    if args.iters is not None:
        cfg.recovery = recovery.RecoveryConfig.from_dict({**cfg.recovery.to_dict(), "numiter": args.iters})
    _, table = harness.run_experiment(cfg, args.progress_every)
    sys.stdout.write(harness.render_table(table, args.format))
    return EXIT_OK


def _latent(path, rng: Xoshiro256pp, d: int) -> np.ndarray:
    if path:
        return storage.read_tensor(path).ravel()
    return gantrain.sample_prior(rng, d)


def cmd_interpolate(args) -> int:
    G = load_checkpoint(args.model)
    seed = resolve_seed(args.seed)
    rng = Xoshiro256pp(seed)
    z1 = _latent(args.z1, rng, G.input_dim)
    if args.mode == latentops.GREAT_CIRCLE:
        path = latentops.great_circle(z1, args.steps, seed=derive_seed(seed, 1))
    else:
        z2 = _latent(args.z2, rng, G.input_dim)
        path = latentops.interpolate(z1, z2, args.steps, args.mode)
    meta = latentops.write_path_outputs(G, path, args.out_dir)
    print(f"mode={meta['mode']} steps={meta['steps']} images={meta['images']} out={args.out_dir}")
    return EXIT_OK


def cmd_embed(args) -> int:
    G = load_checkpoint(args.model)
    if args.all_pairs:
        embeddings = latentops.embed_pairs(G, args.limit)
    else:
        if args.i is None or args.j is None:
            raise GlvrError("embed needs --i and --j, or --all-pairs", module="cli")
        embeddings = [(args.i, args.j, latentops.embed_compose(G, args.i, args.j))]
    latentops.write_embedding_outputs(embeddings, args.out_dir)
    print(f"pairs={len(embeddings)} out={args.out_dir}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    rng = Xoshiro256pp(resolve_seed(args.seed))
    if args.model:
        samples = gantrain.generate(load_checkpoint(args.model), rng, args.n)
    else:
        dataset = SyntheticDataset(variant=args.dataset, modes=args.modes, side=args.side)
        samples = dataset.sample(rng, args.n)
    storage.write_tensor(args.out, samples)
    print(f"samples={samples.shape[0]} dim={samples.shape[1]} out={args.out}")
    return EXIT_OK


def describe_file(path) -> dict:
    """Summary of a checkpoint or tensor file, chosen by its magic."""
    buf = storage.read_bytes(path)
    if buf[:4] == storage.MAGIC_CHECKPOINT:
        net = decode_checkpoint(buf, path)
        return {
            "type": "checkpoint",
            "kind": net.spec.kind,
            "layer_dims": list(net.spec.layer_dims),
            "hidden_activation": net.spec.hidden_activation,
            "output_activation": net.spec.output_activation,
            "seed": net.seed,
            "step": net.step,
            "parameters": int(sum(p.size for p in net.params())),
        }
    tensor = storage.decode_tensor(buf, path)
    return {
        "type": "tensor",
        "shape": list(tensor.shape),
        "min": float(tensor.min()) if tensor.size else None,
        "max": float(tensor.max()) if tensor.size else None,
        "mean": float(tensor.mean()) if tensor.size else None,
    }


def cmd_inspect(args) -> int:
    info = describe_file(args.path)
    if args.dump:
        print(json.dumps(info, indent=2, sort_keys=True))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glvr", description="GAN latent vector recovery")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level (GLVR_LOG_LEVEL)")
    parser.add_argument("--progress-every", type=int, default=config.PROGRESS_EVERY,
                        help="Progress log interval, 0 disables (GLVR_PROGRESS_EVERY)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="Train a generator/discriminator pair")
    p.add_argument("--config", help="Training config JSON")
    p.add_argument("--out", required=True, help="Generator checkpoint path")
    p.add_argument("--discriminator-out", help="Discriminator checkpoint path")
    p.add_argument("--history", help="Loss history CSV path")
    p.add_argument("--seed", type=int, help="Training seed (default GLVR_SEED)")
    p.add_argument("--steps", type=int)
    p.add_argument("--latent-dim", type=positive_int)
    p.add_argument("--batch-size", type=positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dataset", choices=VARIANTS)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("recover", help="Recover a latent vector for an image")
    p.add_argument("--model", required=True, help="Generator checkpoint")
    p.add_argument("--image", required=True, help="GLVT tensor or PGM/PPM image")
    p.add_argument("--criterion", type=criterion_arg, default=parse_criterion("disabled"),
                   help="disabled | hard:C | logistic:A,B | truncnorm:A")
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="Output tensor for the recovered latent")
    p.add_argument("--trace", help="Per-iteration loss trace CSV")
    p.add_argument("--z-true", help="Known latent tensor; prints the reconstruction error")
    p.set_defaults(handler=cmd_recover)

    p = sub.add_parser("evaluate", help="Run paired trials over several criteria")
    p.add_argument("--config", required=True, help="Experiment config JSON")
    p.add_argument("--trials", type=positive_int)
    p.add_argument("--seed", "--master-seed", dest="seed", type=int)
    p.add_argument("--iters", type=int, help="Override recovery.numiter")
    p.add_argument("--jobs", type=positive_int, help="Worker processes (GLVR_JOBS)")
    p.add_argument("--out", help="Output directory")
    p.add_argument("--format", choices=(harness.MARKDOWN, harness.CSV), default=harness.MARKDOWN)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("interpolate", help="Walk the latent space and render the path")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=latentops.PATH_MODES, default=latentops.SLERP)
    p.add_argument("--steps", type=positive_int, default=8)
    p.add_argument("--seed", type=int)
    p.add_argument("--z1", help="Start latent tensor (default: drawn from the seed)")
    p.add_argument("--z2", help="End latent tensor (default: drawn from the seed)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_interpolate)

    p = sub.add_parser("embed", help="Render G(e_i), G(e_j) and G(e_i + e_j)")
    p.add_argument("--model", required=True)
    p.add_argument("--i", type=positive_int)
    p.add_argument("--j", type=positive_int)
    p.add_argument("--all-pairs", action="store_true")
    p.add_argument("--limit", type=positive_int, help="Highest index for --all-pairs")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("gen-data", help="Sample a synthetic dataset or a generator")
    p.add_argument("--dataset", choices=VARIANTS, default="ring")
    p.add_argument("--modes", type=positive_int, default=8)
    p.add_argument("--side", type=positive_int, default=8)
    p.add_argument("--model", help="Sample this generator instead of a dataset")
    p.add_argument("--n", type=positive_int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("inspect", help="Describe a checkpoint or tensor file")
    p.add_argument("path")
    p.add_argument("--dump", action="store_true", help="Print the description as JSON")
    p.set_defaults(handler=cmd_inspect)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse a command line; usage errors exit with status 2."""
    return build_parser().parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    setup_logging(args.log_level.upper())
    try:
        return args.handler(args)
    except (GlvrError, OSError) as e:
        if isinstance(e, GlvrError):
            line = e.one_line()
        else:
            line = f"error: module=storage type={type(e).__name__} message={e}"
        logger.debug("command failed", exc_info=True)
        print(line, file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
