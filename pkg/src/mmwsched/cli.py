"""Command line entry point: ``mmwsched --config scenario.cfg --controller mab --mode train ...``"""
import argparse
import os
import sys

from .checkpoint import CheckpointError
from .config import ConfigError, ScenarioConfig, load_scenario
from .harness import CONTROLLER_KINDS, emit_delay_cdf, emit_metrics, parse_controller, test, train


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmwsched", description="Train or test mmWave scheduling controllers.")
    p.add_argument("--config", help="scenario file (key = value lines); defaults to the reference scenario")
    p.add_argument("--controller", default=None,
                   help="one of: %s (default: the scenario's controller)" % ", ".join(CONTROLLER_KINDS))
    p.add_argument("--mode", choices=("train", "test"), default="train")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: scenario seed)")
    p.add_argument("--iterations", type=int, default=None, help="training iterations (default: scenario value)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--checkpoint", default=None, help="checkpoint to load in test mode")
    p.add_argument("--realizations", type=int, default=None, help="test realizations (default: scenario value)")
    p.add_argument("--checkpoint-every", type=int, default=1, help="save a checkpoint every n iterations (0: last only)")
    p.add_argument("--quiet", action="store_true", help="do not print per-iteration rows")
    return p


def run(args) -> int:
    cfg = load_scenario(args.config) if args.config else ScenarioConfig()
    kind = args.controller or cfg.controller
    parse_controller(kind, cfg.mab)  # fail early on a bad name
    seed = cfg.seed if args.seed is None else args.seed
    for name in ("iterations", "realizations"):
        v = getattr(args, name)
        if v is not None and v < (0 if name == "iterations" else 1):
            raise ValueError("--%s must be %s" % (name, ">= 0" if name == "iterations" else ">= 1"))
    os.makedirs(args.out, exist_ok=True)
    log = (lambda r: None) if args.quiet else (
        lambda r: print("iter %d  delay %.2f ms  rate %.4f Gbps  blocked %.2f%%  queue %.1f"
                        % (r.iteration, r.avg_delay_ms, r.rate_gbps, r.blockage_pct, r.mean_queue_len), flush=True))
    if args.mode == "train":
        every = args.checkpoint_every if args.checkpoint_every > 0 else 0
        rows, ctl, hist = train(cfg, kind, seed, args.iterations, out_dir=args.out,
                                checkpoint_every=every or (args.iterations or cfg.iterations) or 1, on_row=log)
        if not rows:
            print("no iterations run; nothing written")
            return 0
    else:
        if args.checkpoint is None:
            raise ValueError("--mode test needs --checkpoint")
        rows, pooled, hist = test(cfg, kind, seed, args.realizations, checkpoint=args.checkpoint)
        for r in rows:
            log(r)
        print("pooled over %d realizations: delay %.2f ms  rate %.4f Gbps  blocked %.2f%%"
              % (len(rows), pooled.avg_delay_ms, pooled.rate_gbps, pooled.blockage_pct))
    emit_metrics(rows, os.path.join(args.out, "metrics.tsv"))
    emit_delay_cdf(hist, cfg.t_slot, os.path.join(args.out, "delay_cdf.tsv"))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print("mmwsched: error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
