"""Weak-scaling benchmark.

Rows follow a fixed schedule: worker counts double, and the partition
splits x, then y, then z in turn. In the spatial series the global input
grows with the partition so each worker keeps the same block. In the
temporal series the input stays fixed and the number of output timesteps
grows instead, so the per-worker output block is what stays constant.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .collectives import scatter
from .config import BenchConfig
from .errors import InvalidArgument
from .model import Tape, fno_backward, fno_forward, init_model, relative_lp_loss
from .partition import local_region, make_partition
from .runtime import allreduce_sum, launch
from .training import model_config

PHASES = ("inference", "train_forward", "backward")
SERIES = ("spatial", "temporal")
COLUMNS = ("series", "p", "partition", "input_shape", "output_shape", "phase", "median_seconds",
           "local_input_volume", "local_output_volume")


def scaling_partition(p: int, num_spatial: int = 3) -> tuple:
    """Partition for ``p = 2**k`` workers: x, y, z doubled round-robin."""
    if p < 1 or p & (p - 1):
        raise InvalidArgument(f"scaling rows need a power of two, got p={p}")
    split = [1] * num_spatial
    for i in range(p.bit_length() - 1):
        split[i % num_spatial] *= 2
    return (1, 1) + tuple(split) + (1,)


@dataclass(frozen=True)
class BenchRow:
    series: str
    p: int
    partition: tuple
    input_shape: tuple
    output_shape: tuple

    def local_volumes(self) -> tuple:
        """Per-worker block volumes of input and output (must be equal on all workers)."""
        part = make_partition(self.partition)
        vin = {local_region(part, r, self.input_shape).volume for r in range(self.p)}
        vout = {local_region(part, r, self.output_shape).volume for r in range(self.p)}
        if len(vin) != 1 or len(vout) != 1:
            raise InvalidArgument(f"row p={self.p}: uneven blocks {sorted(vin)} / {sorted(vout)}")
        return vin.pop(), vout.pop()


def scaling_rows(series: str, base: tuple, n_t: int, p_values) -> list:
    if series not in SERIES:
        raise InvalidArgument(f"unknown series {series!r}")
    rows = []
    for p in p_values:
        part = scaling_partition(p, len(base))
        if series == "spatial":
            space = tuple(n * k for n, k in zip(base, part[2:-1]))
            steps = n_t
        else:
            space = tuple(base)
            steps = n_t * p
        rows.append(BenchRow(series, p, part, (1, 1) + space + (1,), (1, 1) + space + (steps,)))
    return rows


def check_weak_scaling(rows) -> None:
    """Spatial rows hold the input block fixed; temporal rows hold the output block fixed."""
    for series in SERIES:
        sel = [r for r in rows if r.series == series]
        if not sel:
            continue
        which = 0 if series == "spatial" else 1
        vols = {r.local_volumes()[which] for r in sel}
        if len(vols) != 1:
            raise AssertionError(f"{series} series: per-worker volume not constant: {sorted(vols)}")


def _barrier(ctx, n):
    allreduce_sum(ctx, range(n), np.zeros(1))


def time_row(row: BenchRow, spec, warmup: int, reps: int, seed: int) -> dict:
    """Median wall time of each phase for one row."""
    cfg = model_config(spec, row.input_shape[2:-1], row.output_shape[-1], row.partition)
    model = init_model(cfg, seed)
    L = model.layout
    rng = np.random.default_rng([seed, row.p])
    a_full = rng.random(L.input_shape) + 0.5
    y_full = rng.random(L.output_shape) + 0.5

    def program(ctx):
        n = L.num_workers
        a = scatter(ctx.rank, a_full, L.p_x)
        y = scatter(ctx.rank, y_full, L.p_c)
        times = {ph: [] for ph in PHASES}
        for i in range(warmup + reps):
            _barrier(ctx, n)
            t0 = time.perf_counter()
            fno_forward(ctx, model, a)
            _barrier(ctx, n)
            t1 = time.perf_counter()
            tape = Tape()
            u = fno_forward(ctx, model, a, tape)
            _barrier(ctx, n)
            t2 = time.perf_counter()
            _, g = relative_lp_loss(ctx, u, y, with_grad=True)
            fno_backward(ctx, model, tape, g)
            _barrier(ctx, n)
            t3 = time.perf_counter()
            if i >= warmup:
                times["inference"].append(t1 - t0)
                times["train_forward"].append(t2 - t1)
                times["backward"].append(t3 - t2)
        return times

    times = launch(L.num_workers, program)[0]
    return {ph: statistics.median(v) for ph, v in times.items()}


def _fmt_shape(shape) -> str:
    return "x".join(str(n) for n in shape)


def bench_rows(cfg: BenchConfig) -> list:
    rows = []
    for series in cfg.series:
        rows += scaling_rows(series, tuple(cfg.spatial_base), cfg.n_t, cfg.p_values)
    return rows


def bench_cmd(cfg: BenchConfig, workers: int = 1, log=None) -> list:
    """Time every row; returns CSV records (dicts keyed by :data:`COLUMNS`)."""
    if cfg.warmup < 0 or cfg.reps < 5:
        raise InvalidArgument("need warmup >= 0 and at least 5 timed repetitions")
    too_big = [p for p in cfg.p_values if p > workers]
    if too_big:
        raise InvalidArgument(f"rows need {max(too_big)} workers, only {workers} available")
    rows = bench_rows(cfg)
    check_weak_scaling(rows)
    records = []
    for row in rows:
        medians = time_row(row, cfg.model, cfg.warmup, cfg.reps, cfg.seed)
        vin, vout = row.local_volumes()
        for phase in PHASES:
            rec = {
                "series": row.series,
                "p": row.p,
                "partition": _fmt_shape(row.partition),
                "input_shape": _fmt_shape(row.input_shape),
                "output_shape": _fmt_shape(row.output_shape),
                "phase": phase,
                "median_seconds": medians[phase],
                "local_input_volume": vin,
                "local_output_volume": vout,
            }
            records.append(rec)
            if log is not None:
                log(rec)
    if cfg.out_csv:
        write_csv(records, cfg.out_csv)
    return records


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(COLUMNS) + "\n")
        for rec in records:
            vals = [f"{rec[c]:.6e}" if c == "median_seconds" else str(rec[c]) for c in COLUMNS]
            f.write(",".join(vals) + "\n")


def read_csv(path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
