"""``dfno`` command line: selftest, gen-data, train, infer, bench."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import load_config_file
from .errors import InvalidArgument
from .runtime import default_workers

COMMANDS = ("selftest", "gen-data", "train", "infer", "bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfno", description="Distributed Fourier neural operator toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="worker count (default: $DFNO_WORKERS or 1)")
    return parser


def _selftest(cfg, workers) -> int:
    from .selftest import run_selftest

    results = run_selftest(cfg)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return 1 if failed else 0


def _gen_data(cfg, workers) -> int:
    from .heat import gen_dataset

    gen_dataset(cfg.n_samples, cfg.grid, cfg.n_t, cfg.seed, cfg.out_dir, cfg.t_final)
    print(f"wrote {cfg.n_samples} samples to {cfg.out_dir}")
    return 0


def _train(cfg, workers) -> int:
    from .training import train_cmd

    def log(row):
        print(f"epoch {row[0]:3d}  train {row[1]:.6f}  val {row[2]:.6f}", flush=True)

    result = train_cmd(cfg, workers, log)
    print(f"partition {result['partition']}; wrote {cfg.out_dir}/loss.csv and {cfg.out_dir}/checkpoint")
    return 0


def _infer(cfg, workers) -> int:
    from .training import infer_cmd

    result = infer_cmd(cfg, workers)
    print(f"wrote {cfg.output} {result['output'].shape} in {result['seconds']:.3f} s")
    return 0


def _bench(cfg, workers) -> int:
    from .bench import bench_cmd

    def log(rec):
        print(f"{rec['series']:<8} p={rec['p']} {rec['phase']:<13} {rec['median_seconds']:.4e} s", flush=True)

    bench_cmd(cfg, workers, log)
    print(f"wrote {cfg.out_csv}")
    return 0


HANDLERS = {"selftest": _selftest, "gen-data": _gen_data, "train": _train, "infer": _infer, "bench": _bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        workers = args.workers if args.workers is not None else default_workers()
        if workers < 1:
            raise InvalidArgument(f"worker count must be >= 1, got {workers}")
        cfg = load_config_file(args.command, args.config, seed=args.seed)
        return HANDLERS[args.command](cfg, workers)
    except (ValueError, OSError) as exc:
        print(f"dfno {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
