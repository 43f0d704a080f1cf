import numpy as np
import pytest

from dfno.errors import InvalidArgument, LaunchError, ProtocolError
from dfno.partition import make_partition, transfer_plan
from dfno.runtime import Message, allreduce_sum, default_workers, exchange, launch, reduce_sum, share


def test_launch_returns_results_in_rank_order():
    assert launch(4, lambda ctx: ctx.rank * 10) == [0, 10, 20, 30]
    assert launch(1, lambda ctx, k: ctx.rank + k, 5) == [5]


def test_launch_rejects_zero_workers():
    with pytest.raises(InvalidArgument):
        launch(0, lambda ctx: None)


def test_worker_exception_is_wrapped_with_rank():
    def prog(ctx):
        if ctx.rank == 2:
            raise ValueError("boom")
        return ctx.rank

    with pytest.raises(LaunchError) as info:
        launch(3, prog)
    assert info.value.rank == 2
    assert isinstance(info.value.original, ValueError)


def test_mismatched_collectives_raise_protocol_error():
    def prog(ctx):
        if ctx.rank == 0:
            return allreduce_sum(ctx, [0, 1], np.ones(1))
        return reduce_sum(ctx, [0, 1], 1, np.ones(1))

    with pytest.raises(LaunchError) as info:
        launch(2, prog)
    assert isinstance(info.value.original, ProtocolError)


def test_unreceived_message_is_reported():
    def prog(ctx):
        if ctx.rank == 0:
            ctx.send(1, Message("broadcast", ("x",), 0, None, np.zeros(1)))

    with pytest.raises(LaunchError) as info:
        launch(2, prog)
    assert isinstance(info.value.original, ProtocolError)


def test_payload_must_fill_box():
    from dfno.partition import RegionBox

    with pytest.raises(ProtocolError):
        Message("repartition", (), 0, RegionBox.full((2, 2)), np.zeros(3))
    with pytest.raises(InvalidArgument):
        Message("gossip", (), 0, None, np.zeros(1))


def test_reduce_is_ascending_and_root_gets_sum():
    def prog(ctx):
        return reduce_sum(ctx, [0, 1, 2, 3], 2, np.array([float(ctx.rank + 1)]))

    out = launch(4, prog)
    assert out[2][0] == 10.0 and out[0] is None


def test_reduce_length_mismatch():
    def prog(ctx):
        return reduce_sum(ctx, [0, 1], 0, np.ones(ctx.rank + 1))

    with pytest.raises(LaunchError):
        launch(2, prog)


def test_allreduce_identical_bits_everywhere():
    vals = np.random.default_rng(0).standard_normal(5)

    def prog(ctx):
        return allreduce_sum(ctx, range(5), np.array([vals[ctx.rank]]))

    out = launch(5, prog)
    assert len({o.tobytes() for o in out}) == 1
    assert out[0][0] == ((((vals[0] + vals[1]) + vals[2]) + vals[3]) + vals[4])


def test_share_copies_root_value():
    out = launch(3, lambda ctx: share(ctx, [0, 1, 2], 1, np.arange(3.0) if ctx.rank == 1 else None))
    assert all(np.array_equal(o, np.arange(3.0)) for o in out)


def test_exchange_with_empty_blocks():
    shape = (2, 3)
    src, dst = make_partition((4, 1)), make_partition((1, 3))
    plan = transfer_plan(src, dst, shape)
    x = np.arange(6.0).reshape(shape)

    def prog(ctx):
        from dfno.partition import local_region

        local = x[local_region(src, ctx.rank, shape).slices()]
        return exchange(ctx, plan, local)

    out = launch(4, prog)
    assert np.array_equal(np.concatenate(out[:3], axis=1), x)
    assert out[3] is None


def test_default_workers(monkeypatch):
    monkeypatch.delenv("DFNO_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("DFNO_WORKERS", "4")
    assert default_workers() == 4
    monkeypatch.setenv("DFNO_WORKERS", "zero")
    with pytest.raises(InvalidArgument):
        default_workers()
