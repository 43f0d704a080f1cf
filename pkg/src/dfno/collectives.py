"""Distributed tensors and the two core parallel primitives.

Both primitives are linear operators with explicit adjoints:

* broadcast ``B_{P->Q}`` copies each source block to every destination worker
  in its copy group; the adjoint sums the copies back (fixed rank order);
* repartition ``R_{P->Q}`` redistributes an unchanged global tensor; the
  adjoint is the reverse repartition.

A broadcast result is modelled as a tiled global tensor: along a copied
dimension of size ``n`` with ``k`` destination workers its global extent is
``n * k`` and every block is a copy. That keeps the usual block
decomposition valid for broadcast outputs and makes the adjoint the familiar
"sum the tiles".
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import runtime
from .errors import InvalidArgument
from .partition import (
    Partition,
    RegionBox,
    broadcast_compatible,
    local_region,
    make_partition,
    transfer_plan,
)


@dataclass
class DistributedTensor:
    """This rank's view of a global tensor decomposed over ``partition``.

    ``local`` is ``None`` on ranks outside the partition.
    """

    global_shape: tuple
    partition: Partition
    local: Optional[np.ndarray]

    def __post_init__(self):
        self.global_shape = tuple(int(n) for n in self.global_shape)
        if len(self.global_shape) != self.partition.ndim:
            raise InvalidArgument(f"shape {self.global_shape} does not match partition {self.partition.dims}")

    @property
    def ndim(self) -> int:
        return len(self.global_shape)

    @property
    def dtype(self):
        return None if self.local is None else self.local.dtype

    def region(self, rank: int) -> Optional[RegionBox]:
        if not self.partition.contains(rank):
            return None
        return local_region(self.partition, rank, self.global_shape)

    def check(self, rank: int) -> "DistributedTensor":
        box = self.region(rank)
        if box is None:
            if self.local is not None:
                raise InvalidArgument(f"rank {rank} is outside {self.partition} but holds data")
        elif self.local is None or tuple(self.local.shape) != box.shape:
            got = None if self.local is None else self.local.shape
            raise InvalidArgument(f"rank {rank}: local block {got} does not match box {box.shape}")
        return self

    def with_local(self, local) -> "DistributedTensor":
        return DistributedTensor(self.global_shape, self.partition, local)


def scatter(rank: int, array: np.ndarray, partition: Partition) -> DistributedTensor:
    """Slice a globally known array down to ``rank``'s block (no communication)."""
    array = np.asarray(array)
    box = local_region(partition, rank, array.shape) if partition.contains(rank) else None
    local = None if box is None else np.array(array[box.slices()], copy=True)
    return DistributedTensor(array.shape, partition, local)


def zeros(rank: int, global_shape, partition: Partition, dtype=np.float64) -> DistributedTensor:
    if not partition.contains(rank):
        return DistributedTensor(global_shape, partition, None)
    box = local_region(partition, rank, global_shape)
    return DistributedTensor(global_shape, partition, np.zeros(box.shape, dtype=dtype))


_root_lock = threading.Lock()
_roots = {}


def root_partition(ndim: int) -> Partition:
    """The shared single-worker partition of a given rank count."""
    with _root_lock:
        if ndim not in _roots:
            _roots[ndim] = make_partition((1,) * ndim)
        return _roots[ndim]


# -- repartition -----------------------------------------------------------------

_plan_lock = threading.Lock()
_plans = {}


def _plan(source: Partition, dest: Partition, shape: tuple):
    key = (source.dims, dest.dims, shape)
    with _plan_lock:
        plan = _plans.get(key)
    if plan is None:
        plan = transfer_plan(source, dest, shape)
        with _plan_lock:
            _plans.setdefault(key, plan)
    return plan


def repartition(ctx, x: DistributedTensor, dest: Partition) -> DistributedTensor:
    if dest.ndim != x.ndim:
        raise InvalidArgument(f"cannot repartition {x.ndim}-d tensor onto {dest.dims}")
    if dest.dims == x.partition.dims:
        return DistributedTensor(x.global_shape, dest, x.local)
    plan = _plan(x.partition, dest, x.global_shape)
    out = runtime.exchange(ctx, plan, x.local, dtype=x.dtype)
    return DistributedTensor(x.global_shape, dest, out)


def repartition_adj(ctx, g: DistributedTensor, source: Partition) -> DistributedTensor:
    """Adjoint of ``repartition(·, Q)``: the reverse repartition ``Q -> P``."""
    return repartition(ctx, g, source)


def gather(ctx, x: DistributedTensor, root: int = 0) -> Optional[np.ndarray]:
    """Whole global tensor on rank 0 (``None`` elsewhere). ``root`` must be 0."""
    if root != 0:
        raise InvalidArgument("gather targets rank 0, the single worker of the root partition")
    return repartition(ctx, x, root_partition(x.ndim)).local


def allgather(ctx, x: DistributedTensor) -> np.ndarray:
    """Whole global tensor on every launched worker."""
    full = gather(ctx, x)
    return runtime.share(ctx, range(ctx.num_workers), 0, full)


# -- broadcast -------------------------------------------------------------------


def _descriptor(source: Partition, dest: Partition):
    desc = broadcast_compatible(source, dest)
    if desc is None:
        raise InvalidArgument(f"partitions {source.dims} -> {dest.dims} violate the broadcast rule")
    return desc


def broadcast_shape(shape: Sequence[int], source: Partition, dest: Partition) -> tuple:
    """Global shape of ``B_{source->dest}`` applied to a tensor of ``shape``."""
    desc = _descriptor(source, dest)
    padded = (1,) * desc.pad + tuple(shape)
    return tuple(n * q if cp else n for n, q, cp in zip(padded, dest.dims, desc.copied))


def broadcast_fwd(ctx, x: DistributedTensor, dest: Partition) -> DistributedTensor:
    desc = _descriptor(x.partition, dest)
    out_shape = broadcast_shape(x.global_shape, x.partition, dest)
    channel = ("bcast", x.partition.dims, dest.dims, x.global_shape)
    seq = ctx.next_seq("broadcast", channel)
    rank = ctx.rank
    mine = None
    if x.partition.contains(rank):
        x.check(rank)
        for q in desc.copy_group(rank):
            if q == rank:
                mine = x.local
            else:
                ctx.send(q, runtime.Message("broadcast", channel, seq, None, np.ascontiguousarray(x.local)))
    if not dest.contains(rank):
        return DistributedTensor(out_shape, dest, None)
    src = desc.source_rank(rank)
    block = mine if src == rank else ctx.recv(src, "broadcast", channel, seq).payload
    box = local_region(dest, rank, out_shape)
    return DistributedTensor(out_shape, dest, np.array(block, copy=True).reshape(box.shape))


def broadcast_adj(ctx, g: DistributedTensor, source: Partition, source_shape: Sequence[int]) -> DistributedTensor:
    """Sum-reduce each copy group back onto its source worker."""
    desc = _descriptor(source, g.partition)
    source_shape = tuple(source_shape)
    if broadcast_shape(source_shape, source, g.partition) != g.global_shape:
        raise InvalidArgument(f"gradient shape {g.global_shape} does not come from {source_shape}")
    channel = ("bcast-adj", source.dims, g.partition.dims, source_shape)
    rank = ctx.rank
    result = None
    src_of_me = desc.source_rank(rank) if g.partition.contains(rank) else None
    # non-root contributions are buffered sends, so do them before any root receive
    if src_of_me is not None and src_of_me != rank:
        runtime.reduce_sum(ctx, desc.copy_group(src_of_me), src_of_me, g.local, channel)
    if source.contains(rank):
        group = desc.copy_group(rank)
        local = g.local if src_of_me == rank else None
        result = runtime.reduce_sum(ctx, group, rank, local, channel)
        box = local_region(source, rank, source_shape)
        result = result.reshape(box.shape)
    return DistributedTensor(source_shape, source, result)


# -- linear operator view ---------------------------------------------------------


@dataclass
class LinearOp:
    """A distributed linear map with its adjoint, for adjoint testing."""

    name: str
    in_partition: Partition
    in_shape: tuple
    out_partition: Partition
    out_shape: tuple
    forward: Callable = field(repr=False)
    adjoint: Callable = field(repr=False)

    @property
    def num_workers(self) -> int:
        return max(self.in_partition.total_workers, self.out_partition.total_workers)


def identity_op(partition: Partition, shape) -> LinearOp:
    shape = tuple(shape)
    return LinearOp("identity", partition, shape, partition, shape, lambda ctx, x: x, lambda ctx, y: y)


def repartition_op(source: Partition, dest: Partition, shape) -> LinearOp:
    shape = tuple(shape)
    return LinearOp(
        f"repartition {source.dims}->{dest.dims}", source, shape, dest, shape,
        lambda ctx, x: repartition(ctx, x, dest),
        lambda ctx, y: repartition_adj(ctx, y, source),
    )


def broadcast_op(source: Partition, dest: Partition, shape) -> LinearOp:
    shape = tuple(shape)
    return LinearOp(
        f"broadcast {source.dims}->{dest.dims}", source, shape, dest, broadcast_shape(shape, source, dest),
        lambda ctx, x: broadcast_fwd(ctx, x, dest),
        lambda ctx, y: broadcast_adj(ctx, y, source, shape),
    )


def inner(ctx, a: DistributedTensor, b: DistributedTensor, group=None) -> complex:
    """Global ``<a, b>`` (conjugate-linear in ``a``), fixed-order reduction."""
    group = range(ctx.num_workers) if group is None else group
    if a.local is None:
        part = np.zeros(1, dtype=np.complex128)
    else:
        part = np.array([np.vdot(a.local, b.local)], dtype=np.complex128)
    return complex(runtime.allreduce_sum(ctx, group, part)[0])


def norm(ctx, a: DistributedTensor, group=None) -> float:
    return math.sqrt(inner(ctx, a, a, group).real)


def _random(rng, shape, complex_):
    x = rng.standard_normal(shape)
    if complex_:
        x = x + 1j * rng.standard_normal(shape)
    return x


def adjoint_check(op: LinearOp, seed: int = 0, complex_: bool = False, num_workers: Optional[int] = None) -> float:
    """``|<Ax, y> - <x, A^T y>| / (||Ax|| ||y||)`` for seeded random ``x``, ``y``."""
    rng = np.random.default_rng(seed)
    x = _random(rng, op.in_shape, complex_)
    y = _random(rng, op.out_shape, complex_)
    n = num_workers or op.num_workers

    def program(ctx):
        xd = scatter(ctx.rank, x, op.in_partition)
        yd = scatter(ctx.rank, y, op.out_partition)
        ax = op.forward(ctx, xd)
        aty = op.adjoint(ctx, yd)
        lhs = inner(ctx, ax, yd)
        rhs = inner(ctx, xd, aty)
        return lhs, rhs, norm(ctx, ax), norm(ctx, yd)

    lhs, rhs, nax, ny = runtime.launch(n, program)[0]
    if lhs == rhs:
        return 0.0
    return abs(lhs - rhs) / (nax * ny)
