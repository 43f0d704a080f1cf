"""Distributed separable FFT: repartitions interleaved with local FFTs.

A plan has one or two stages. Stage ``j`` repartitions the data onto a grid
that is 1 along the stage's dimensions ``I_j`` and then transforms those
dimensions locally. With a multi-worker input that is distributed along the
transform dimensions, the last ``n // 2`` transform dimensions go first and
the remaining ones second (for ``(x, y, t)``: time, then space).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .collectives import DistributedTensor, repartition
from .errors import InvalidArgument, PlanError
from .fft import local_fft
from .partition import Partition, TransferPlan, refactor_partition, transfer_plan


@dataclass(frozen=True)
class Stage:
    dims: tuple
    partition: Partition
    transfer: TransferPlan


@dataclass(frozen=True)
class DfftPlan:
    partition: Partition
    global_shape: tuple
    transform_dims: tuple
    stages: tuple

    @property
    def output_partition(self) -> Partition:
        return self.stages[-1].partition if self.stages else self.partition


@dataclass
class SpectralField:
    """Frequency-domain data plus the dimensions already transformed."""

    tensor: DistributedTensor
    transformed: tuple

    @property
    def local(self):
        return self.tensor.local


def split_transform_dims(transform_dims: Sequence[int]) -> tuple:
    dims = tuple(transform_dims)
    k = len(dims) // 2
    if k == 0:
        return (dims,)
    return dims[len(dims) - k:], dims[:len(dims) - k]


def plan_dfft(
    partition: Partition,
    global_shape: Sequence[int],
    transform_dims: Sequence[int],
    local_dims: Sequence[int] = (),
) -> DfftPlan:
    """Build the stage chain for transforming ``transform_dims``.

    ``local_dims`` are never handed displaced workers (the spectral
    convolution keeps batch and channel whole). Displaced workers prefer the
    other transform dimensions and fall back to any remaining dimension.
    """
    global_shape = tuple(int(n) for n in global_shape)
    if len(global_shape) != partition.ndim:
        raise InvalidArgument(f"shape {global_shape} does not match partition {partition.dims}")
    tdims = tuple(int(d) for d in transform_dims)
    if not tdims:
        return DfftPlan(partition, global_shape, (), ())
    if len(set(tdims)) != len(tdims) or any(not 0 <= d < partition.ndim for d in tdims):
        raise InvalidArgument(f"bad transform dims {tdims} for {partition.ndim}-d data")
    keep = set(int(d) for d in local_dims)

    if all(partition.dims[d] == 1 for d in tdims):
        groups = (tdims,)
    else:
        groups = split_transform_dims(tdims)

    stages = []
    current = partition
    for group in groups:
        others = [d for d in tdims if d not in group]
        rest = [d for d in range(partition.ndim) if d not in tdims and d not in keep]
        try:
            target = refactor_partition(current, global_shape, group, others)
        except PlanError:
            target = refactor_partition(current, global_shape, group, others + rest)
        stages.append(Stage(tuple(group), target, transfer_plan(current, target, global_shape)))
        current = target
    return DfftPlan(partition, global_shape, tdims, tuple(stages))


def _check_input(plan: DfftPlan, x: DistributedTensor, partition: Partition):
    if x.global_shape != plan.global_shape or x.partition.dims != partition.dims:
        raise InvalidArgument(
            f"tensor {x.global_shape} on {x.partition.dims} does not match plan {plan.global_shape} on {partition.dims}"
        )


def _local(x: DistributedTensor, dims, inverse: bool) -> DistributedTensor:
    for d in dims:
        if x.partition.dims[d] != 1:
            raise InvalidArgument(f"dimension {d} is distributed over {x.partition.dims[d]} workers")
    if x.local is None:
        return x
    return x.with_local(local_fft(x.local, dims, inverse=inverse))


def _as_complex(x: DistributedTensor) -> DistributedTensor:
    if x.local is None or np.iscomplexobj(x.local):
        return x
    return x.with_local(x.local.astype(np.complex128))


def dfft_forward(ctx, plan: DfftPlan, x: DistributedTensor) -> SpectralField:
    _check_input(plan, x, plan.partition)
    y = _as_complex(x)
    done = ()
    for st in plan.stages:
        y = repartition(ctx, y, st.partition)
        y = _local(y, st.dims, inverse=False)
        done += st.dims
    return SpectralField(y, done)


def dfft_inverse(ctx, plan: DfftPlan, X) -> DistributedTensor:
    t = X.tensor if isinstance(X, SpectralField) else X
    _check_input(plan, t, plan.output_partition)
    y = _as_complex(t)
    for i in range(len(plan.stages) - 1, -1, -1):
        st = plan.stages[i]
        y = _local(y, st.dims, inverse=True)
        prev = plan.stages[i - 1].partition if i > 0 else plan.partition
        y = repartition(ctx, y, prev)
    return y


def dfft_adjoint(ctx, plan: DfftPlan, g) -> DistributedTensor:
    """Adjoint of :func:`dfft_forward`, composed stage by stage in reverse.

    Each local DFT matrix is symmetric, so its adjoint is applied as
    ``conj(F conj(g))``; repartition adjoints are reverse repartitions.
    """
    t = g.tensor if isinstance(g, SpectralField) else g
    _check_input(plan, t, plan.output_partition)
    y = _as_complex(t)
    for i in range(len(plan.stages) - 1, -1, -1):
        st = plan.stages[i]
        if y.local is not None:
            y = y.with_local(np.conj(_local(y.with_local(np.conj(y.local)), st.dims, inverse=False).local))
        prev = plan.stages[i - 1].partition if i > 0 else plan.partition
        y = repartition(ctx, y, prev)
    return y
