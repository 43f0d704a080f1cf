"""Training, checkpointing and inference on top of the distributed model.

Every worker reads only its own block of each sample from disk, runs the
forward pass, loss and backward pass, and applies Adam to the parameters it
holds (rank 0 also owns the affine weights). Loss values are identical on
all workers because they come out of a fixed-order all-reduce.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .collectives import DistributedTensor, gather
from .config import InferConfig, ModelSpec, TrainConfig
from .errors import InvalidArgument
from .heat import load_manifest, sample_name
from .model import FnoConfig, FnoModel, Tape, build_layout, fno_backward, fno_forward, init_model, relative_lp_loss
from .optim import AdamState, adam_step
from .partition import RegionBox, _prime_factors, local_region
from .runtime import launch
from .tensorfile import read_header, read_tensor, write_tensor


def default_partition(workers: int, num_spatial: int) -> tuple:
    """Spread ``workers`` over the spatial dims, largest prime factors first."""
    split = [1] * num_spatial
    for f in sorted(_prime_factors(workers), reverse=True):
        split[split.index(min(split))] *= f
    return (1, 1) + tuple(split) + (1,)


def resolve_partition(partition: Optional[Sequence[int]], workers: int, num_spatial: int) -> tuple:
    if partition is None:
        return default_partition(workers, num_spatial)
    partition = tuple(int(p) for p in partition)
    if len(partition) != num_spatial + 3:
        raise InvalidArgument(f"partition {partition} needs {num_spatial + 3} entries")
    if math.prod(partition) != workers:
        raise InvalidArgument(f"partition {partition} uses {math.prod(partition)} workers, {workers} available")
    return partition


def model_config(spec: ModelSpec, spatial_shape, n_t: int, partition, batch: int = 1) -> FnoConfig:
    return FnoConfig(spatial_shape=tuple(spatial_shape), out_timesteps=n_t, width=spec.width,
                     num_blocks=spec.num_blocks, modes=None if spec.modes is None else tuple(spec.modes),
                     activation=spec.activation, partition=tuple(partition), grid_channels=spec.grid_channels,
                     batch=batch, fft_backend=spec.fft_backend)


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(model: FnoModel, path, seed: int, extra: Optional[dict] = None) -> None:
    """One tensor file per parameter group plus ``manifest.json``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in model.parameter_names():
        fname = name + ".dfno"
        write_tensor(path / fname, model.get_global(name))
        files[name] = fname
    manifest = {"config": model.config.to_dict(), "seed": seed, "parameters": files}
    if extra:
        manifest.update(extra)
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path, partition: Optional[Sequence[int]] = None, fft_backend: Optional[str] = None,
                    batch: Optional[int] = None) -> FnoModel:
    """Load a checkpoint, re-sharding it for ``partition`` and ``batch`` if given."""
    path = Path(path)
    with open(path / "manifest.json") as f:
        manifest = json.load(f)
    doc = dict(manifest["config"])
    if partition is not None:
        doc["partition"] = tuple(partition)
    if fft_backend is not None:
        doc["fft_backend"] = fft_backend
    if batch is not None:
        doc["batch"] = int(batch)
    cfg = FnoConfig(**doc)
    model = FnoModel(cfg, build_layout(cfg), [dict() for _ in range(cfg.num_workers)])
    files = manifest["parameters"]
    missing = sorted(set(model.parameter_names()) - set(files))
    if missing:
        raise InvalidArgument(f"checkpoint lacks parameters {missing}")
    for name in model.parameter_names():
        model.set_global(name, read_tensor(path / files[name]))
    return model


# -- data --------------------------------------------------------------------------


def _sample_region(box: RegionBox) -> RegionBox:
    # files store one sample without the batch axis
    return RegionBox(box.ranges[1:])


def read_batch(paths: Sequence, box: Optional[RegionBox]) -> Optional[np.ndarray]:
    """Stack this worker's block of each file along the batch axis."""
    if box is None:
        return None
    sub = _sample_region(box)
    # the block's batch range picks which of the files this worker holds
    b = box.ranges[0]
    return np.stack([read_tensor(p, sub) for p in paths[b.start:b.stop]], axis=0)


def _check_dataset(data_dir, n_needed: int, grid_shape, n_t: int) -> None:
    d = Path(data_dir)
    for kind, shape in (("inputs", (1,) + tuple(grid_shape) + (1,)), ("targets", (1,) + tuple(grid_shape) + (n_t,))):
        with open(d / kind / sample_name(0), "rb") as f:
            dims = read_header(f).dims
        if dims != shape:
            raise InvalidArgument(f"{kind} files have shape {dims}, expected {shape}")
    last = d / "inputs" / sample_name(n_needed - 1)
    if not last.exists():
        raise InvalidArgument(f"dataset has fewer than {n_needed} samples")


# -- training ----------------------------------------------------------------------


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, 1, epoch]).permutation(n)


def train(cfg: TrainConfig, workers: int = 1, log=None) -> dict:
    """Run the training loop; returns the loss history and the trained model."""
    manifest = load_manifest(cfg.data_dir)
    grid = tuple(manifest["grid"])
    n_t = int(manifest["n_t"])
    bs = cfg.batch_size
    if cfg.n_train % bs or cfg.n_val % bs:
        raise InvalidArgument(f"n_train={cfg.n_train} and n_val={cfg.n_val} must be multiples of batch_size={bs}")
    _check_dataset(cfg.data_dir, cfg.n_train + cfg.n_val, grid, n_t)
    partition = resolve_partition(cfg.partition, workers, len(grid))
    fcfg = model_config(cfg.model, grid, n_t, partition, batch=bs)
    model = init_model(fcfg, cfg.seed)
    L = model.layout
    d = Path(cfg.data_dir)
    inputs = [d / "inputs" / sample_name(i) for i in range(cfg.n_train + cfg.n_val)]
    targets = [d / "targets" / sample_name(i) for i in range(cfg.n_train + cfg.n_val)]
    val_ids = list(range(cfg.n_train, cfg.n_train + cfg.n_val))

    def step_data(rank, ids):
        a = read_batch([inputs[i] for i in ids], local_region(L.p_x, rank, L.input_shape))
        y = read_batch([targets[i] for i in ids], local_region(L.p_c, rank, L.output_shape))
        return DistributedTensor(L.input_shape, L.p_x, a), DistributedTensor(L.output_shape, L.p_c, y)

    def program(ctx):
        state = AdamState(lr=cfg.lr)
        params = model.shards[ctx.rank]
        history = []
        for epoch in range(1, cfg.epochs + 1):
            order = _epoch_order(cfg.seed, epoch, cfg.n_train)
            train_losses = []
            for s in range(0, cfg.n_train, bs):
                a, y = step_data(ctx.rank, order[s:s + bs])
                tape = Tape()
                u = fno_forward(ctx, model, a, tape)
                loss, g = relative_lp_loss(ctx, u, y, with_grad=True)
                grads, _ = fno_backward(ctx, model, tape, g)
                adam_step(params, grads, state)
                train_losses.append(loss)
            val_losses = []
            for s in range(0, cfg.n_val, bs):
                a, y = step_data(ctx.rank, val_ids[s:s + bs])
                val_losses.append(relative_lp_loss(ctx, fno_forward(ctx, model, a), y))
            row = (epoch, float(np.mean(train_losses)), float(np.mean(val_losses)) if val_losses else float("nan"))
            history.append(row)
            if ctx.rank == 0 and log is not None:
                log(row)
        return history

    history = launch(L.num_workers, program)[0]
    return {"history": history, "model": model, "partition": partition}


def write_history(rows, path) -> None:
    with open(path, "w", newline="") as f:
        f.write("epoch,train_loss,val_loss\n")
        for epoch, tr, va in rows:
            f.write(f"{epoch},{tr:.17g},{va:.17g}\n")


def read_history(path) -> list:
    rows = []
    with open(path) as f:
        next(f)
        for line in f:
            e, tr, va = line.strip().split(",")
            rows.append((int(e), float(tr), float(va)))
    return rows


def train_cmd(cfg: TrainConfig, workers: int = 1, log=None) -> dict:
    """Train, then write ``loss.csv`` and ``checkpoint/`` under ``cfg.out_dir``."""
    result = train(cfg, workers, log)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_history(result["history"], out / "loss.csv")
    save_checkpoint(result["model"], out / "checkpoint", cfg.seed, {"epochs": cfg.epochs})
    return result


# -- inference ---------------------------------------------------------------------


def infer(model: FnoModel, path) -> np.ndarray:
    """Forward one sample file; input and result both omit the batch axis."""
    L = model.layout
    with open(path, "rb") as f:
        dims = read_header(f).dims
    if dims != L.input_shape[1:]:
        raise InvalidArgument(f"input file has shape {dims}, model expects {L.input_shape[1:]}")

    def program(ctx):
        a = read_batch([path], local_region(L.p_x, ctx.rank, L.input_shape))
        u = fno_forward(ctx, model, DistributedTensor(L.input_shape, L.p_x, a))
        return gather(ctx, u)

    u = launch(L.num_workers, program)[0]
    return u[0]


def infer_cmd(cfg: InferConfig, workers: int = 1) -> dict:
    with open(Path(cfg.checkpoint) / "manifest.json") as f:
        spatial = FnoConfig(**json.load(f)["config"]).spatial_shape
    partition = resolve_partition(cfg.partition, workers, len(spatial))
    model = load_checkpoint(cfg.checkpoint, partition, cfg.fft_backend, batch=1)
    start = time.perf_counter()
    u = infer(model, cfg.input)
    elapsed = time.perf_counter() - start
    write_tensor(cfg.output, u)
    return {"output": u, "seconds": elapsed, "partition": partition}
