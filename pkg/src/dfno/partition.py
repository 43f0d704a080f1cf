"""Communication-free partition algebra.

A :class:`Partition` is a Cartesian grid of workers. Combined with a global
tensor shape it assigns every worker a contiguous block of the global index
space (balanced, larger blocks first). Everything here is pure: no worker
context is needed, so plans can be built once and shared by all workers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

from .errors import InvalidArgument, PlanError

_ids = itertools.count()


@dataclass(frozen=True)
class Partition:
    """Cartesian worker grid. Ranks map to coordinates in row-major order."""

    dims: tuple
    id: int = field(default_factory=lambda: next(_ids), compare=False)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def total_workers(self) -> int:
        return math.prod(self.dims)

    @property
    def is_single(self) -> bool:
        return self.total_workers == 1

    def coords(self, rank: int) -> tuple:
        if not 0 <= rank < self.total_workers:
            raise InvalidArgument(f"rank {rank} outside partition {self.dims}")
        out = []
        for d in reversed(self.dims):
            rank, c = divmod(rank, d)
            out.append(c)
        return tuple(reversed(out))

    def rank_of(self, coords: Sequence[int]) -> int:
        if len(coords) != self.ndim:
            raise InvalidArgument(f"coordinate {tuple(coords)} has wrong length for {self.dims}")
        rank = 0
        for c, d in zip(coords, self.dims):
            if not 0 <= c < d:
                raise InvalidArgument(f"coordinate {tuple(coords)} outside {self.dims}")
            rank = rank * d + c
        return rank

    def contains(self, rank: int) -> bool:
        return 0 <= rank < self.total_workers

    def __repr__(self):
        return f"Partition({'x'.join(map(str, self.dims))}, id={self.id})"


def make_partition(dims: Sequence[int]) -> Partition:
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise InvalidArgument("partition needs at least one dimension")
    if any(d < 1 for d in dims):
        raise InvalidArgument(f"partition dims must be >= 1, got {dims}")
    return Partition(dims)


class IndexRange(NamedTuple):
    start: int
    stop: int

    def __len__(self):
        return self.stop - self.start

    def intersect(self, other: "IndexRange") -> "IndexRange":
        lo = max(self.start, other.start)
        hi = min(self.stop, other.stop)
        return IndexRange(lo, max(lo, hi))


@dataclass(frozen=True)
class RegionBox:
    """One :class:`IndexRange` per tensor dimension, in global coordinates."""

    ranges: tuple

    @property
    def shape(self) -> tuple:
        return tuple(len(r) for r in self.ranges)

    @property
    def volume(self) -> int:
        return math.prod(self.shape)

    @property
    def start(self) -> tuple:
        return tuple(r.start for r in self.ranges)

    def is_empty(self) -> bool:
        return self.volume == 0

    def intersect(self, other: "RegionBox") -> "RegionBox":
        return RegionBox(tuple(a.intersect(b) for a, b in zip(self.ranges, other.ranges)))

    def slices(self, origin: Optional["RegionBox"] = None) -> tuple:
        """Slices selecting this box out of an array whose [0,...] sits at ``origin``."""
        off = origin.start if origin is not None else (0,) * len(self.ranges)
        return tuple(slice(r.start - o, r.stop - o) for r, o in zip(self.ranges, off))

    def contains_box(self, other: "RegionBox") -> bool:
        return all(a.start <= b.start and b.stop <= a.stop for a, b in zip(self.ranges, other.ranges))

    def sort_key(self) -> tuple:
        return tuple(x for r in self.ranges for x in r)

    @classmethod
    def full(cls, shape: Sequence[int]) -> "RegionBox":
        return cls(tuple(IndexRange(0, int(n)) for n in shape))


def block_range(global_size: int, num_blocks: int, block_index: int) -> IndexRange:
    """Balanced contiguous block: the first ``n % p`` blocks get one extra element."""
    if global_size < 0 or num_blocks < 1:
        raise InvalidArgument(f"bad decomposition of {global_size} into {num_blocks}")
    if not 0 <= block_index < num_blocks:
        raise InvalidArgument(f"block {block_index} outside [0, {num_blocks})")
    q, r = divmod(global_size, num_blocks)
    start = block_index * q + min(block_index, r)
    return IndexRange(start, start + q + (1 if block_index < r else 0))


def local_region(partition: Partition, rank: int, global_shape: Sequence[int]) -> RegionBox:
    if len(global_shape) != partition.ndim:
        raise InvalidArgument(
            f"shape {tuple(global_shape)} has {len(global_shape)} dims, partition {partition.dims} has {partition.ndim}"
        )
    coords = partition.coords(rank)
    return RegionBox(tuple(block_range(n, p, c) for n, p, c in zip(global_shape, partition.dims, coords)))


# -- broadcast ----------------------------------------------------------------


@dataclass(frozen=True)
class BroadcastDescriptor:
    """How a source partition maps onto a broadcast destination.

    ``source_dims`` is the source grid left-padded with ones to the
    destination rank. ``copied[d]`` is true where data is replicated
    (source count 1, destination count > 1).
    """

    source: Partition
    dest: Partition
    source_dims: tuple
    copied: tuple

    @property
    def pad(self) -> int:
        return self.dest.ndim - self.source.ndim

    @property
    def matched(self) -> tuple:
        return tuple(not c for c in self.copied)

    def source_rank(self, dest_rank: int) -> int:
        """The unique source worker whose block ``dest_rank`` receives."""
        qc = self.dest.coords(dest_rank)
        pc = tuple(0 if cp else c for c, cp in zip(qc, self.copied))
        return self.source.rank_of(pc[self.pad:])

    def copy_group(self, source_rank: int) -> list:
        """Destination ranks that hold copies of ``source_rank``'s block, ascending."""
        return [q for q in range(self.dest.total_workers) if self.source_rank(q) == source_rank]

    def copy_factor(self) -> int:
        return math.prod(q for q, cp in zip(self.dest.dims, self.copied) if cp)


def broadcast_compatible(source: Partition, dest: Partition) -> Optional[BroadcastDescriptor]:
    """Trailing-aligned broadcast rule; ``None`` means incompatible."""
    if source.ndim > dest.ndim:
        return None
    padded = (1,) * (dest.ndim - source.ndim) + source.dims
    copied = []
    for p, q in zip(padded, dest.dims):
        if p == q:
            copied.append(False)
        elif p == 1:
            copied.append(True)
        else:
            return None
    return BroadcastDescriptor(source, dest, padded, tuple(copied))


# -- repartition planning -------------------------------------------------------


@dataclass(frozen=True)
class TransferPlan:
    """Block intersections realising a repartition ``source -> dest``.

    ``sends[r]`` / ``recvs[r]`` list ``(peer, box)`` for worker ``r`` (boxes in
    global coordinates), sorted by peer then box. Ranks outside a partition
    have no entry on that side.
    """

    source: Partition = field(compare=False)
    dest: Partition = field(compare=False)
    global_shape: tuple
    sends: dict
    recvs: dict

    @property
    def num_workers(self) -> int:
        return max(self.source.total_workers, self.dest.total_workers)

    def is_self_only(self) -> bool:
        return all(peer == r for r, items in self.sends.items() for peer, _ in items)


def _overlaps_1d(n: int, p: int, q: int) -> list:
    """All (source block, dest block, overlap range) with nonempty overlap."""
    out = []
    for i in range(p):
        a = block_range(n, p, i)
        for j in range(q):
            ov = a.intersect(block_range(n, q, j))
            if len(ov):
                out.append((i, j, ov))
    return out


def transfer_plan(source: Partition, dest: Partition, global_shape: Sequence[int]) -> TransferPlan:
    global_shape = tuple(int(n) for n in global_shape)
    if not (source.ndim == dest.ndim == len(global_shape)):
        raise InvalidArgument(
            f"repartition needs matching dimensionality: {source.dims} -> {dest.dims} over {global_shape}"
        )
    sends = {r: [] for r in range(source.total_workers)}
    recvs = {r: [] for r in range(dest.total_workers)}
    per_dim = [_overlaps_1d(n, p, q) for n, p, q in zip(global_shape, source.dims, dest.dims)]
    for combo in itertools.product(*per_dim):
        s = source.rank_of([c[0] for c in combo])
        r = dest.rank_of([c[1] for c in combo])
        box = RegionBox(tuple(c[2] for c in combo))
        sends[s].append((r, box))
        recvs[r].append((s, box))
    for table in (sends, recvs):
        for items in table.values():
            items.sort(key=lambda it: (it[0], it[1].sort_key()))
    return TransferPlan(source, dest, global_shape, sends, recvs)


# -- worker re-factoring ---------------------------------------------------------


def _prime_factors(n: int) -> list:
    out, f = [], 2
    while f * f <= n:
        while n % f == 0:
            out.append(f)
            n //= f
        f += 1
    if n > 1:
        out.append(n)
    return sorted(out, reverse=True)


def refactor_partition(
    partition: Partition,
    global_shape: Sequence[int],
    clear: Sequence[int],
    candidates: Optional[Sequence[int]] = None,
) -> Partition:
    """Move all workers off dimensions ``clear`` while keeping the worker count.

    The displaced worker count is split into prime factors (largest first);
    each factor goes to the candidate dimension with the largest current
    per-worker extent (``ceil(n / count)``), ties to the later dimension.
    A factor may only land where ``count * factor <= n``. If the partition
    is already 1 on every cleared dimension it is returned unchanged.
    """
    clear = set(int(d) for d in clear)
    if all(partition.dims[d] == 1 for d in clear):
        return partition
    if candidates is None:
        candidates = [d for d in range(partition.ndim) if d not in clear]
    candidates = [d for d in candidates if d not in clear]
    dims = list(partition.dims)
    moved = 1
    for d in clear:
        moved *= dims[d]
        dims[d] = 1
    for f in _prime_factors(moved):
        best = None
        for d in candidates:
            n = global_shape[d]
            if dims[d] * f > n:
                continue
            key = (-(-n // dims[d]), d)
            if best is None or key > best[0]:
                best = (key, d)
        if best is None:
            raise PlanError(
                f"cannot place factor {f} of {moved} displaced workers from dims {sorted(clear)} "
                f"of {partition.dims} over shape {tuple(global_shape)}"
            )
        dims[best[1]] *= f
    return make_partition(dims)
