"""Deterministic in-process multi-worker execution.

:func:`launch` runs one program per rank on its own thread. Workers talk only
through a shared :class:`Runtime` mailbox: sends are buffered and never block,
receives block until the matching message arrives. Every message is keyed by
``(tag, channel, seq, src, dst)``. Channels are structural (partition grids,
global shape, group), so partition objects built independently on each worker
still line up. Each worker keeps its own per-channel sequence counter, so two workers that disagree about the order of collectives
end up waiting for keys nobody will ever send. The runtime notices when every
live worker is waiting on an absent key and raises :class:`ProtocolError` in
all of them instead of hanging.

The :class:`Message` type is the transport seam: a networked backend only has
to move these between processes.
"""

from __future__ import annotations

import os
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, LaunchError, ProtocolError
from .partition import RegionBox, TransferPlan, local_region

TAGS = ("broadcast", "reduce", "repartition")


def default_workers() -> int:
    raw = os.environ.get("DFNO_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"DFNO_WORKERS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InvalidArgument(f"DFNO_WORKERS must be a positive integer, got {raw!r}")
    return n


@dataclass
class Message:
    tag: str
    channel: tuple
    seq: int
    box: Optional[RegionBox]
    payload: np.ndarray

    def __post_init__(self):
        if self.tag not in TAGS:
            raise InvalidArgument(f"unknown message tag {self.tag!r}")
        if self.box is not None and self.payload.size != self.box.volume:
            raise ProtocolError(
                f"payload of {self.payload.size} scalars does not fill box of volume {self.box.volume}"
            )


class _Cancelled(Exception):
    pass


class Runtime:
    """Mailbox shared by all workers of one launch."""

    def __init__(self, num_workers: int):
        self.num_workers = num_workers
        self._cond = threading.Condition()
        self._mail = {}
        self._waiting = {}
        self._finished = set()
        self._deadlock: Optional[str] = None
        self.cancelled = False

    def post(self, src: int, dst: int, msg: Message) -> None:
        key = (msg.tag, msg.channel, msg.seq, src, dst)
        with self._cond:
            if key in self._mail:
                raise ProtocolError(f"duplicate message {key}")
            self._mail[key] = msg
            self._cond.notify_all()

    def take(self, rank: int, src: int, tag: str, channel: tuple, seq: int) -> Message:
        key = (tag, channel, seq, src, rank)
        with self._cond:
            while key not in self._mail:
                if self.cancelled:
                    raise _Cancelled()
                if self._deadlock is not None:
                    raise ProtocolError(self._deadlock)
                self._waiting[rank] = key
                self._check_deadlock()
                if self._deadlock is None:
                    self._cond.wait(timeout=1.0)
                self._waiting.pop(rank, None)
            return self._mail.pop(key)

    def _check_deadlock(self):
        live = self.num_workers - len(self._finished)
        if len(self._waiting) < live:
            return
        if any(k in self._mail for k in self._waiting.values()):
            return
        lines = [f"rank {r} waits for {k[0]} on {k[1]} seq {k[2]} from rank {k[3]}"
                 for r, k in sorted(self._waiting.items())]
        pending = [f"{k[0]} on {k[1]} seq {k[2]} {k[3]}->{k[4]}" for k in sorted(self._mail, key=repr)]
        self._deadlock = "collective sequence mismatch: " + "; ".join(lines)
        if pending:
            self._deadlock += " | unmatched: " + "; ".join(pending)
        self._cond.notify_all()

    def finish(self, rank: int) -> None:
        with self._cond:
            self._finished.add(rank)
            if self._waiting:
                self._check_deadlock()
            self._cond.notify_all()

    def cancel(self) -> None:
        with self._cond:
            self.cancelled = True
            self._cond.notify_all()

    def leftovers(self) -> list:
        with self._cond:
            return sorted(self._mail, key=repr)


class WorkerContext:
    """Per-rank handle: rank, known partitions, and collective sequence counters."""

    def __init__(self, runtime: Runtime, rank: int):
        self.runtime = runtime
        self.rank = rank
        self.partitions = {}
        self._seq = defaultdict(int)

    @property
    def num_workers(self) -> int:
        return self.runtime.num_workers

    def register(self, *partitions) -> None:
        for p in partitions:
            self.partitions[p.id] = p

    def next_seq(self, tag: str, channel: tuple) -> int:
        key = (tag, channel)
        s = self._seq[key]
        self._seq[key] = s + 1
        return s

    def send(self, dst: int, msg: Message) -> None:
        if dst == self.rank:
            raise ProtocolError("self-sends bypass the mailbox")
        self.runtime.post(self.rank, dst, msg)

    def recv(self, src: int, tag: str, channel: tuple, seq: int) -> Message:
        return self.runtime.take(self.rank, src, tag, channel, seq)


def launch(num_workers: int, program: Callable[..., Any], *args, **kwargs) -> list:
    """Run ``program(ctx, *args, **kwargs)`` once per rank; results in rank order."""
    if num_workers < 1:
        raise InvalidArgument(f"num_workers must be >= 1, got {num_workers}")
    rt = Runtime(num_workers)
    results = [None] * num_workers
    failures = []
    lock = threading.Lock()

    def run(rank):
        ctx = WorkerContext(rt, rank)
        try:
            results[rank] = program(ctx, *args, **kwargs)
        except _Cancelled:
            pass
        except BaseException as exc:  # noqa: BLE001 - re-raised from launch
            with lock:
                failures.append((rank, exc))
            rt.cancel()
        finally:
            rt.finish(rank)

    if num_workers == 1:
        run(0)
    else:
        threads = [threading.Thread(target=run, args=(r,), name=f"dfno-worker-{r}", daemon=True)
                   for r in range(num_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    if failures:
        # a sequence mismatch surfaces in every waiting rank; report the lowest
        protocol = [f for f in failures if isinstance(f[1], ProtocolError)]
        rank, exc = min(protocol) if protocol else failures[0]
        raise LaunchError(rank, exc) from exc
    left = rt.leftovers()
    if left:
        raise LaunchError(-1, ProtocolError(f"{len(left)} messages never received, first: {left[0]}"))
    return results


# -- collectives built on the mailbox --------------------------------------------


def exchange(ctx: WorkerContext, plan: TransferPlan, local: Optional[np.ndarray], dtype=None) -> Optional[np.ndarray]:
    """Carry out ``plan`` for this rank; returns the assembled destination block.

    ``local`` is this rank's source block (``None`` if the rank is outside the
    source partition). Returns ``None`` for ranks outside the destination.
    """
    rank = ctx.rank
    channel = (plan.source.dims, plan.dest.dims, plan.global_shape)
    seq = ctx.next_seq("repartition", channel)
    src_box = None
    if rank in plan.sends:
        src_box = local_region(plan.source, rank, plan.global_shape)
        if local is None or tuple(local.shape) != src_box.shape:
            got = None if local is None else tuple(local.shape)
            raise InvalidArgument(f"rank {rank}: local block {got} does not match source box {src_box.shape}")
        dtype = local.dtype
    own = {}
    for peer, box in plan.sends.get(rank, ()):
        block = local[box.slices(src_box)]
        if peer == rank:
            own[box] = block
        else:
            ctx.send(peer, Message("repartition", channel, seq, box, np.ascontiguousarray(block)))
    if rank not in plan.recvs:
        return None
    dst_box = local_region(plan.dest, rank, plan.global_shape)
    received = []
    for peer, box in plan.recvs[rank]:
        if peer == rank:
            block = own.pop(box)
        else:
            msg = ctx.recv(peer, "repartition", channel, seq)
            if msg.box != box:
                raise ProtocolError(f"rank {rank}: expected box {box} from {peer}, got {msg.box}")
            block = msg.payload.reshape(box.shape)
        received.append((box, block))
    if dtype is None:
        dtype = received[0][1].dtype if received else np.float64
    out = np.empty(dst_box.shape, dtype=dtype)
    for box, block in received:
        out[box.slices(dst_box)] = block
    return out


def reduce_sum(ctx: WorkerContext, group: Sequence[int], root: int, local: Optional[np.ndarray],
               channel: tuple = ()) -> Optional[np.ndarray]:
    """Sum ``local`` over ``group`` onto ``root`` in ascending rank order.

    Members of ``group`` and ``root`` must all call this. The root's own
    buffer only counts if the root is in the group.
    """
    group = tuple(sorted(group))
    channel = (group, root) + tuple(channel)
    if ctx.rank not in group and ctx.rank != root:
        raise ProtocolError(f"rank {ctx.rank} is neither in group {group} nor root {root}")
    seq = ctx.next_seq("reduce", channel)
    if ctx.rank != root:
        ctx.send(root, Message("reduce", channel, seq, None, np.ascontiguousarray(local)))
        return None
    acc = None
    for r in group:
        buf = local if r == root else ctx.recv(r, "reduce", channel, seq).payload
        if acc is None:
            acc = np.array(buf, copy=True)
        else:
            if buf.shape != acc.shape:
                raise ProtocolError(f"reduce length mismatch: rank {r} sent {buf.shape}, expected {acc.shape}")
            acc = acc + buf
    return acc


def share(ctx: WorkerContext, group: Sequence[int], root: int, value: Optional[np.ndarray]) -> np.ndarray:
    """Copy ``value`` from ``root`` to every member of ``group``."""
    group = tuple(sorted(group))
    channel = (group, root, "share")
    seq = ctx.next_seq("broadcast", channel)
    if ctx.rank == root:
        value = np.ascontiguousarray(value)
        for r in group:
            if r != root:
                ctx.send(r, Message("broadcast", channel, seq, None, value))
        return value
    return ctx.recv(root, "broadcast", channel, seq).payload


def allreduce_sum(ctx: WorkerContext, group: Sequence[int], local: np.ndarray) -> np.ndarray:
    """Fixed-order sum that every group member receives identically."""
    root = min(group)
    total = reduce_sum(ctx, group, root, local)
    return share(ctx, group, root, total)
