"""Distributed Fourier neural operator.

Tensors use the layout ``(batch, channel, *space, time)``. The network is

    a (P_x) -> R -> time affine 1->n_t (P_t) -> R -> channel affine (P_c)
      -> R -> K blocks (P_b) -> R -> channel projection (P_c) -> u

where every affine weight lives on rank 0 (the root partition) and is
broadcast onto the data partition before use, and every block computes
``sigma(W nu + S nu)`` with ``S`` the distributed spectral convolution.
Spectral weights are sharded: each worker stores exactly the retained modes
that fall inside its block of the DFFT output partition.

Reverse mode runs on a worker-local :class:`Tape`. Each forward operation
pushes a closure applying its adjoint; broadcast adjoints sum-reduce weight
gradients onto rank 0, spectral gradients stay on their shard.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .collectives import (
    DistributedTensor,
    broadcast_adj,
    broadcast_fwd,
    repartition,
    repartition_adj,
    root_partition,
)
from .dfft import DfftPlan, dfft_adjoint, dfft_forward, dfft_inverse, plan_dfft
from .errors import InvalidArgument, InvalidState
from .fft import BACKENDS, use_backend
from .partition import Partition, RegionBox, local_region, make_partition, refactor_partition
from . import runtime


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(pre):
    return (pre > 0).astype(pre.dtype)


def _tanh_grad(pre):
    return 1.0 - np.tanh(pre) ** 2


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "identity": (lambda x: x, np.ones_like),
}


@dataclass
class FnoConfig:
    spatial_shape: tuple
    out_timesteps: int
    in_channels: int = 1
    out_channels: int = 1
    width: int = 20
    num_blocks: int = 4
    modes: Optional[tuple] = None
    activation: str = "relu"
    partition: Optional[tuple] = None
    grid_channels: bool = True
    batch: int = 1
    fft_backend: str = "native"

    def __post_init__(self):
        self.spatial_shape = tuple(int(n) for n in self.spatial_shape)
        d = len(self.spatial_shape)
        if d < 1:
            raise InvalidArgument("need at least one spatial dimension")
        if self.modes is None:
            self.modes = (8,) * (d + 1)
        self.modes = tuple(int(m) for m in self.modes)
        if self.partition is None:
            self.partition = (1,) * (d + 3)
        self.partition = tuple(int(p) for p in self.partition)
        if self.num_blocks < 1 or self.width < 1 or self.out_timesteps < 1:
            raise InvalidArgument("num_blocks, width and out_timesteps must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1 or self.batch < 1:
            raise InvalidArgument("channel counts and batch must be >= 1")
        if len(self.modes) != d + 1:
            raise InvalidArgument(f"need one mode count per spatial dim plus time, got {self.modes}")
        for n, m in zip(self.transform_sizes, self.modes):
            if not 1 <= m <= n // 2:
                raise InvalidArgument(f"mode count {m} outside [1, {n // 2}] for a dimension of size {n}")
        if len(self.partition) != d + 3:
            raise InvalidArgument(f"partition {self.partition} must have {d + 3} entries (N, C, space..., T)")
        if self.partition[0] != 1:
            raise InvalidArgument("the batch dimension is never partitioned")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if self.fft_backend not in BACKENDS:
            raise InvalidArgument(f"unknown fft backend {self.fft_backend!r}")

    @property
    def transform_sizes(self) -> tuple:
        return self.spatial_shape + (self.out_timesteps,)

    @property
    def num_grid_channels(self) -> int:
        return len(self.spatial_shape) + 1 if self.grid_channels else 0

    @property
    def num_workers(self) -> int:
        return math.prod(self.partition)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def retained_indices(n: int, m: int) -> np.ndarray:
    """Low positive and negative frequencies kept by the low-pass filter."""
    if not 1 <= m <= n // 2:
        raise InvalidArgument(f"mode count {m} outside [1, {n // 2}] for size {n}")
    return np.concatenate([np.arange(m), np.arange(n - m, n)])


def _owned_1d(rng, n: int, m: int):
    glob = np.arange(rng.start, rng.stop)
    keep = (glob < m) | (glob >= n - m)
    return np.nonzero(keep)[0], glob[keep]


def mode_ownership(box: RegionBox, modes: Sequence[int], sizes: Sequence[int], dims: Sequence[int]) -> list:
    """Retained modes inside ``box`` as ``(local index, global index)`` tuples over ``dims``."""
    for n, m in zip(sizes, modes):
        if not 1 <= m <= n // 2:
            raise InvalidArgument(f"mode count {m} exceeds half of {n}")
    per_dim = [_owned_1d(box.ranges[d], n, m) for d, n, m in zip(dims, sizes, modes)]
    out = []
    for combo in itertools.product(*[list(zip(loc, glo)) for loc, glo in per_dim]):
        out.append((tuple(int(c[0]) for c in combo), tuple(int(c[1]) for c in combo)))
    return out


@dataclass(frozen=True)
class OwnedModes:
    """Per transform dimension: local indices, global indices, positions in the retained list."""

    local: tuple
    glob: tuple
    pos: tuple

    @property
    def counts(self) -> tuple:
        return tuple(len(i) for i in self.local)

    @property
    def empty(self) -> bool:
        return any(c == 0 for c in self.counts)

    def index(self) -> tuple:
        return (slice(None), slice(None)) + np.ix_(*self.local)

    def global_index(self) -> tuple:
        return (slice(None), slice(None)) + np.ix_(*self.pos)


def owned_modes(box: Optional[RegionBox], modes, sizes, dims) -> OwnedModes:
    loc, glo, pos = [], [], []
    for d, n, m in zip(dims, sizes, modes):
        if box is None:
            l = g = np.zeros(0, dtype=np.intp)
        else:
            l, g = _owned_1d(box.ranges[d], n, m)
        loc.append(l)
        glo.append(g)
        pos.append(np.where(g < m, g, g - n + 2 * m))
    return OwnedModes(tuple(loc), tuple(glo), tuple(pos))


@dataclass
class Layout:
    """Partitions, shapes and the DFFT plan derived from a config."""

    config: FnoConfig
    input_shape: tuple
    lifted_shape: tuple
    feature_shape: tuple
    block_shape: tuple
    output_shape: tuple
    p_x: Partition
    p_t: Partition
    p_c: Partition
    p_b: Partition
    plan: DfftPlan
    owned: list = field(repr=False)

    @property
    def ndim(self) -> int:
        return len(self.input_shape)

    @property
    def time_dim(self) -> int:
        return self.ndim - 1

    @property
    def spatial_dims(self) -> tuple:
        return tuple(range(2, self.ndim - 1))

    @property
    def transform_dims(self) -> tuple:
        return self.spatial_dims + (self.time_dim,)

    @property
    def num_workers(self) -> int:
        return self.p_x.total_workers


def build_layout(config: FnoConfig) -> Layout:
    c = config
    S = c.spatial_shape
    input_shape = (c.batch, c.in_channels) + S + (1,)
    lifted_shape = (c.batch, c.in_channels) + S + (c.out_timesteps,)
    feature_shape = (c.batch, c.in_channels + c.num_grid_channels) + S + (c.out_timesteps,)
    block_shape = (c.batch, c.width) + S + (c.out_timesteps,)
    output_shape = (c.batch, c.out_channels) + S + (c.out_timesteps,)
    ndim = len(input_shape)
    T = ndim - 1
    spatial = list(range(2, T))

    p_x = make_partition(c.partition)
    p_t = refactor_partition(p_x, input_shape, [T], spatial)
    p_c = refactor_partition(p_t, lifted_shape, [1], spatial + [T])
    p_b = refactor_partition(p_x, block_shape, [1], spatial + [T])
    plan = plan_dfft(p_b, block_shape, spatial + [T], local_dims=(0, 1))
    out_part = plan.output_partition
    owned = []
    for r in range(p_b.total_workers):
        box = local_region(out_part, r, block_shape)
        owned.append(owned_modes(box, c.modes, c.transform_sizes, spatial + [T]))
    return Layout(c, input_shape, lifted_shape, feature_shape, block_shape, output_shape,
                  p_x, p_t, p_c, p_b, plan, owned)


# -- parameters --------------------------------------------------------------------


def affine_shapes(config: FnoConfig) -> dict:
    """Global shapes of all root-resident affine parameters."""
    c = config
    shapes = {
        "lift_t.W": (c.out_timesteps, 1),
        "lift_t.b": (c.out_timesteps,),
        "lift_c.W": (c.width, c.in_channels + c.num_grid_channels),
        "lift_c.b": (c.width,),
    }
    for k in range(c.num_blocks):
        shapes[f"block{k}.W"] = (c.width, c.width)
    shapes["proj.W"] = (c.out_channels, c.width)
    return shapes


def spectral_shape(config: FnoConfig) -> tuple:
    return (config.width, config.width) + tuple(2 * m for m in config.modes)


def parameter_count(config: FnoConfig, real: bool = False) -> int:
    """Closed-form count; complex spectral entries count once (twice if ``real``)."""
    c = config
    g = c.in_channels + c.num_grid_channels
    affine = 2 * c.out_timesteps + c.width * g + c.width + c.num_blocks * c.width ** 2 + c.out_channels * c.width
    spec = c.num_blocks * c.width ** 2 * math.prod(2 * m for m in c.modes)
    return affine + (2 if real else 1) * spec


@dataclass
class FnoModel:
    """Config, layout, and one parameter dict per rank.

    ``shards[0]`` holds the affine master copies (rank 0 is the root
    partition) and every ``shards[r]`` holds ``block{k}.R``, the spectral
    weights for the modes rank ``r`` owns, shaped ``(w, w, *owned_counts)``.
    """

    config: FnoConfig
    layout: Layout
    shards: list

    def get_global(self, name: str) -> np.ndarray:
        if name.endswith(".R"):
            return self._spectral_global(self.shards, name)
        return self.shards[0][name]

    def set_global(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value)
        if name.endswith(".R"):
            if value.shape != spectral_shape(self.config):
                raise InvalidArgument(f"{name}: expected {spectral_shape(self.config)}, got {value.shape}")
            for r, own in enumerate(self.layout.owned):
                self.shards[r][name] = np.array(value[own.global_index()], dtype=np.complex128)
        else:
            expected = affine_shapes(self.config)[name]
            if value.shape != expected:
                raise InvalidArgument(f"{name}: expected {expected}, got {value.shape}")
            self.shards[0][name] = np.array(value, dtype=np.float64)

    def parameter_names(self) -> list:
        names = list(affine_shapes(self.config))
        names += [f"block{k}.R" for k in range(self.config.num_blocks)]
        return names

    def global_parameters(self) -> dict:
        return {n: self.get_global(n) for n in self.parameter_names()}

    def _spectral_global(self, per_rank: Sequence[dict], name: str) -> np.ndarray:
        full = np.zeros(spectral_shape(self.config), dtype=np.complex128)
        for r, own in enumerate(self.layout.owned):
            if not own.empty and name in per_rank[r]:
                full[own.global_index()] = per_rank[r][name]
        return full

    def assemble(self, per_rank: Sequence[dict]) -> dict:
        """Global arrays from per-rank dicts shaped like ``shards`` (e.g. gradients)."""
        out = {}
        for name in self.parameter_names():
            if name.endswith(".R"):
                out[name] = self._spectral_global(per_rank, name)
            else:
                out[name] = per_rank[0].get(name, np.zeros(affine_shapes(self.config)[name]))
        return out

    def copy(self) -> "FnoModel":
        return FnoModel(self.config, self.layout, [{k: v.copy() for k, v in s.items()} for s in self.shards])

    def relayout(self, partition: Sequence[int]) -> "FnoModel":
        """Same parameters re-sharded for another input partition."""
        cfg = replace(self.config, partition=tuple(partition))
        out = FnoModel(cfg, build_layout(cfg), [dict() for _ in range(math.prod(partition))])
        for name, value in self.global_parameters().items():
            out.set_global(name, value)
        return out


def _spectral_shard(seed: int, block: int, config: FnoConfig, own: OwnedModes) -> np.ndarray:
    w = config.width
    scale = 1.0 / (w * w)
    shard = np.zeros((w, w) + own.counts, dtype=np.complex128)
    if own.empty:
        return shard
    m_last = config.modes[-1]
    # one stream per line along the last transform dim, keyed by global mode
    for prefix in itertools.product(*[range(len(g)) for g in own.glob[:-1]]):
        key = [int(own.glob[j][i]) for j, i in enumerate(prefix)]
        rng = np.random.default_rng([seed, 7919, block] + key)
        vals = rng.random((2, 2 * m_last, w, w))
        line = scale * (vals[0] + 1j * vals[1])
        sel = line[own.pos[-1]]
        shard[(slice(None), slice(None)) + tuple(prefix)] = np.moveaxis(sel, 0, -1)
    return shard


def init_model(config: FnoConfig, seed: int = 0) -> FnoModel:
    layout = build_layout(config)
    shards = [dict() for _ in range(layout.num_workers)]
    for i, (name, shape) in enumerate(affine_shapes(config).items()):
        fan_in = shape[1] if len(shape) == 2 else affine_shapes(config)[name[:-1] + "W"][1]
        s = math.sqrt(1.0 / fan_in)
        rng = np.random.default_rng([seed, 104729, i])
        shards[0][name] = rng.uniform(-s, s, size=shape)
    for k in range(config.num_blocks):
        for r, own in enumerate(layout.owned):
            shards[r][f"block{k}.R"] = _spectral_shard(seed, k, config, own)
    return FnoModel(config, layout, shards)


# -- tape --------------------------------------------------------------------------


class Tape:
    """Worker-local record of adjoint closures and parameter gradients."""

    def __init__(self):
        self.entries = []
        self.grads = {}
        self.replayed = False

    def push(self, fn) -> None:
        if self.replayed:
            raise InvalidState("tape already replayed")
        self.entries.append(fn)

    def accumulate(self, name: str, grad) -> None:
        if grad is None:
            return
        if name in self.grads:
            self.grads[name] = self.grads[name] + grad
        else:
            self.grads[name] = grad

    def backward(self, grad):
        if self.replayed:
            raise InvalidState("tape replayed twice")
        self.replayed = True
        for fn in reversed(self.entries):
            grad = fn(grad)
        return grad


# -- layers ------------------------------------------------------------------------


def _root_tensor(model: FnoModel, rank: int, name: str) -> DistributedTensor:
    shape = affine_shapes(model.config)[name]
    local = model.shards[0][name] if rank == 0 else None
    return DistributedTensor(shape, root_partition(len(shape)), local)


def _along(v: np.ndarray, dim: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[dim] = v.shape[0]
    return v.reshape(shape)


def affine_pointwise(ctx, x: DistributedTensor, W: DistributedTensor, b: Optional[DistributedTensor],
                     dim: int, tape: Optional[Tape] = None, name: str = "") -> DistributedTensor:
    """``(B W) x + B b`` contracted along ``dim``, which must not be distributed."""
    if x.partition.dims[dim] != 1:
        raise InvalidArgument(f"{name or 'affine'}: dimension {dim} is distributed over {x.partition.dims[dim]} workers")
    out_dim, in_dim = W.global_shape
    if x.global_shape[dim] != in_dim:
        raise InvalidArgument(f"{name or 'affine'}: weight {W.global_shape} cannot act on size {x.global_shape[dim]}")
    P = x.partition
    Wb = broadcast_fwd(ctx, W, P)
    bb = broadcast_fwd(ctx, b, P) if b is not None else None
    out_shape = x.global_shape[:dim] + (out_dim,) + x.global_shape[dim + 1:]
    if x.local is None:
        y = None
    else:
        Wl = Wb.local.reshape(out_dim, in_dim)
        y = np.moveaxis(np.tensordot(Wl, x.local, axes=(1, dim)), 0, dim)
        if bb is not None:
            y = y + _along(bb.local.reshape(out_dim), dim, y.ndim)
    out = DistributedTensor(out_shape, P, y)

    if tape is not None:
        xl = x.local

        def back(g: DistributedTensor) -> DistributedTensor:
            if xl is None:
                gx = None
                gW = np.zeros((out_dim, in_dim))
                gb = np.zeros(out_dim)
            else:
                Wl = Wb.local.reshape(out_dim, in_dim)
                gx = np.moveaxis(np.tensordot(Wl, g.local, axes=(0, dim)), 0, dim)
                other = [a for a in range(xl.ndim) if a != dim]
                gW = np.tensordot(g.local, xl, axes=(other, other))
                gb = g.local.sum(axis=tuple(other))
            gWd = DistributedTensor(Wb.global_shape, P, gW.reshape(Wb.local.shape) if Wb.local is not None else None)
            tape.accumulate(name + ".W", broadcast_adj(ctx, gWd, W.partition, W.global_shape).local)
            if bb is not None:
                gbd = DistributedTensor(bb.global_shape, P, gb.reshape(bb.local.shape) if bb.local is not None else None)
                tape.accumulate(name + ".b", broadcast_adj(ctx, gbd, b.partition, b.global_shape).local)
            return DistributedTensor(x.global_shape, P, gx)

        tape.push(back)
    return out


@dataclass
class SpectralWeights:
    """This rank's shard ``R[k]`` (``c_out x c_in`` per owned retained mode)."""

    local: np.ndarray
    owned: OwnedModes
    modes: tuple


def spectral_conv(ctx, v: DistributedTensor, weights: SpectralWeights, plan: DfftPlan,
                  tape: Optional[Tape] = None, name: str = "") -> DistributedTensor:
    """``Re F^-1 (R . F v)``; only workers owning retained modes multiply."""
    if v.partition.dims[1] != 1:
        raise InvalidArgument("spectral convolution needs the channel dimension local")
    X = dfft_forward(ctx, plan, v).tensor
    own = weights.owned
    R = weights.local
    Y = None
    if X.local is not None:
        Y = np.zeros_like(X.local)
        if not own.empty:
            idx = own.index()
            Y[idx] = np.einsum("oi...,bi...->bo...", R, X.local[idx])
    z = dfft_inverse(ctx, plan, X.with_local(Y))
    out = z.with_local(None if z.local is None else np.ascontiguousarray(z.local.real))

    if tape is not None:
        Xl = X.local

        def back(g: DistributedTensor) -> DistributedTensor:
            gY = dfft_forward(ctx, plan, g).tensor
            gX = None
            if gY.local is not None:
                gX = np.zeros_like(gY.local)
                gR = np.zeros_like(R)
                if not own.empty:
                    idx = own.index()
                    gYk = gY.local[idx]
                    gR = np.einsum("bo...,bi...->oi...", gYk, np.conj(Xl[idx]))
                    gX[idx] = np.einsum("oi...,bo...->bi...", np.conj(R), gYk)
                tape.accumulate(name + ".R", gR)
            gv = dfft_adjoint(ctx, plan, gY.with_local(gX))
            return gv.with_local(None if gv.local is None else np.ascontiguousarray(gv.local.real))

        tape.push(back)
    return out


def fno_block(ctx, model: FnoModel, v: DistributedTensor, k: int, tape: Optional[Tape] = None) -> DistributedTensor:
    L = model.layout
    act, act_grad = ACTIVATIONS[model.config.activation]
    name = f"block{k}"
    sub = Tape() if tape is not None else None
    lin = affine_pointwise(ctx, v, _root_tensor(model, ctx.rank, name + ".W"), None, 1, sub, name)
    own = L.owned[ctx.rank]
    shard = model.shards[ctx.rank].get(name + ".R")
    spec = spectral_conv(ctx, v, SpectralWeights(shard, own, model.config.modes), L.plan, sub, name)
    pre = None if v.local is None else lin.local + spec.local
    out = v.with_local(None if pre is None else act(pre))
    if tape is not None:
        lin_back, spec_back = sub.entries

        def back(g: DistributedTensor) -> DistributedTensor:
            gpre = g.with_local(None if pre is None else g.local * act_grad(pre))
            g1 = lin_back(gpre)
            g2 = spec_back(gpre)
            for key, val in sub.grads.items():
                tape.accumulate(key, val)
            sub.grads.clear()
            return g1.with_local(None if g1.local is None else g1.local + g2.local)

        tape.push(back)
    return out


def grid_features(box: RegionBox, shape: tuple, spatial_dims: Sequence[int], time_dim: int) -> np.ndarray:
    """Coordinate channels in [0, 1] for the block ``box`` of ``shape``."""
    dims = list(spatial_dims) + [time_dim]
    local = box.shape
    feats = []
    for d in dims:
        coord = np.linspace(0.0, 1.0, shape[d])[box.ranges[d].start:box.ranges[d].stop]
        view = [1] * len(shape)
        view[d] = len(coord)
        full = list(local)
        full[1] = 1
        feats.append(np.broadcast_to(coord.reshape(view), full))
    return np.concatenate(feats, axis=1) if feats else np.zeros(local[:1] + (0,) + local[2:])


def _reshard(ctx, x: DistributedTensor, dest: Partition, tape: Optional[Tape]) -> DistributedTensor:
    src = x.partition
    y = repartition(ctx, x, dest)
    if tape is not None:
        tape.push(lambda g: repartition_adj(ctx, g, src))
    return y


def fno_forward(ctx, model: FnoModel, a: DistributedTensor, tape: Optional[Tape] = None) -> DistributedTensor:
    L = model.layout
    c = model.config
    if a.global_shape != L.input_shape:
        raise InvalidArgument(f"input: expected shape {L.input_shape}, got {a.global_shape}")
    if a.partition.dims != L.p_x.dims:
        raise InvalidArgument(f"input: expected partition {L.p_x.dims}, got {a.partition.dims}")
    a.check(ctx.rank)
    rank = ctx.rank
    with use_backend(c.fft_backend):
        x = _reshard(ctx, a, L.p_t, tape)
        x = affine_pointwise(ctx, x, _root_tensor(model, rank, "lift_t.W"), _root_tensor(model, rank, "lift_t.b"),
                             L.time_dim, tape, "lift_t")
        x = _reshard(ctx, x, L.p_c, tape)
        if c.grid_channels:
            if x.local is not None:
                box = x.region(rank)
                feats = grid_features(box, x.global_shape, L.spatial_dims, L.time_dim)
                x = DistributedTensor(L.feature_shape, L.p_c, np.concatenate([x.local, feats], axis=1))
            else:
                x = DistributedTensor(L.feature_shape, L.p_c, None)
            if tape is not None:
                cin = c.in_channels
                tape.push(lambda g: DistributedTensor(
                    L.lifted_shape, L.p_c, None if g.local is None else np.ascontiguousarray(g.local[:, :cin])))
        x = affine_pointwise(ctx, x, _root_tensor(model, rank, "lift_c.W"), _root_tensor(model, rank, "lift_c.b"),
                             1, tape, "lift_c")
        x = _reshard(ctx, x, L.p_b, tape)
        for k in range(c.num_blocks):
            x = fno_block(ctx, model, x, k, tape)
        x = _reshard(ctx, x, L.p_c, tape)
        u = affine_pointwise(ctx, x, _root_tensor(model, rank, "proj.W"), None, 1, tape, "proj")
    return u


def fno_backward(ctx, model: FnoModel, tape: Tape, grad_u: DistributedTensor):
    """Replay ``tape``; returns ``(parameter grads on this rank, input gradient on P_x)``."""
    with use_backend(model.config.fft_backend):
        ga = tape.backward(grad_u)
    grads = dict(tape.grads)
    return grads, ga


# -- loss --------------------------------------------------------------------------


def _group(x: DistributedTensor):
    return range(x.partition.total_workers)


def relative_lp_loss(ctx, y: DistributedTensor, target: DistributedTensor, p: float = 2,
                     with_grad: bool = False):
    """``||y - target||_p / ||target||_p`` on every worker; optionally d/dy too."""
    if y.global_shape != target.global_shape or y.partition.dims != target.partition.dims:
        raise InvalidArgument(f"loss operands differ: {y.global_shape} on {y.partition.dims} "
                              f"vs {target.global_shape} on {target.partition.dims}")
    if y.local is None:
        sums = np.zeros(2)
    else:
        r = y.local - target.local
        sums = np.array([np.sum(np.abs(r) ** p), np.sum(np.abs(target.local) ** p)])
    tot = runtime.allreduce_sum(ctx, _group(y), sums)
    num = tot[0] ** (1.0 / p)
    den = tot[1] ** (1.0 / p)
    if den == 0.0:
        raise ZeroDivisionError("relative loss with a zero target")
    loss = float(num / den)
    if not with_grad:
        return loss
    if y.local is None:
        g = None
    elif num == 0.0:
        g = np.zeros_like(y.local)
    else:
        r = y.local - target.local
        g = np.sign(r) * np.abs(r) ** (p - 1) / (num ** (p - 1) * den)
    return loss, y.with_local(g)
