import numpy as np
import pytest

from dfno.checks import dfft_case
from dfno.collectives import adjoint_check, LinearOp, scatter, gather
from dfno.dfft import dfft_adjoint, dfft_forward, dfft_inverse, plan_dfft, split_transform_dims
from dfno.errors import InvalidArgument, PlanError
from dfno.partition import make_partition
from dfno.runtime import launch


def test_split_puts_trailing_half_first():
    assert split_transform_dims((2, 3, 4)) == ((4,), (2, 3))
    assert split_transform_dims((2, 3, 4, 5)) == ((4, 5), (2, 3))
    assert split_transform_dims((2,)) == ((2,),)


def test_example_layout_stages():
    plan = plan_dfft(make_partition((1, 1, 2, 2, 2)), (1, 20, 32, 32, 16), (2, 3, 4), local_dims=(0, 1))
    assert [s.dims for s in plan.stages] == [(4,), (2, 3)]
    assert [s.partition.dims for s in plan.stages] == [(1, 1, 2, 4, 1), (1, 1, 1, 1, 8)]


def test_single_stage_when_already_local():
    plan = plan_dfft(make_partition((1, 4, 1, 1)), (1, 8, 6, 6), (2, 3))
    assert len(plan.stages) == 1 and plan.output_partition.dims == (1, 4, 1, 1)


def test_no_room_raises():
    with pytest.raises(PlanError):
        plan_dfft(make_partition((1, 1, 4)), (1, 2, 8), (2,))


def test_bad_dims_rejected():
    with pytest.raises(InvalidArgument):
        plan_dfft(make_partition((1, 2)), (4, 4), (1, 1))


@pytest.mark.parametrize("shape,grid", [
    ((1, 2, 15, 8), (1, 1, 3, 2)),
    ((1, 1, 60, 6), (1, 1, 2, 3)),
    ((1, 2, 4, 6, 16), (1, 1, 2, 2, 2)),
    ((2, 1, 16, 15, 4), (1, 1, 2, 1, 4)),
])
@pytest.mark.parametrize("backend", ["native", "numpy"])
def test_matches_sequential_fft(shape, grid, backend):
    res = dfft_case(shape, grid, tuple(range(2, len(shape))), seed=3, backend=backend)
    assert res["forward"] < 1e-10
    assert res["roundtrip"] < 1e-10
    assert res["unitarity"] < 1e-12


def test_separable_axis_by_axis():
    shape = (1, 1, 6, 8)
    x = np.random.default_rng(5).standard_normal(shape)
    ref = np.fft.fft(np.fft.fft(x, axis=2, norm="ortho"), axis=3, norm="ortho")
    assert dfft_case(shape, (1, 1, 2, 2), (2, 3), seed=5)["forward"] < 1e-10
    P = make_partition((1, 1, 2, 2))
    plan = plan_dfft(P, shape, (2, 3))

    def prog(ctx):
        return gather(ctx, dfft_forward(ctx, plan, scatter(ctx.rank, x, P)).tensor)

    assert np.allclose(launch(4, prog)[0], ref, atol=1e-13)


def test_adjoint_matches_inverse_for_unitary_transform():
    shape = (1, 2, 6, 4, 5)
    P = make_partition((1, 1, 2, 2, 1))
    plan = plan_dfft(P, shape, (2, 3, 4), local_dims=(0, 1))
    op = LinearOp("dfft", P, shape, plan.output_partition, shape,
                  lambda ctx, x: dfft_forward(ctx, plan, x).tensor,
                  lambda ctx, y: dfft_adjoint(ctx, plan, y))
    assert adjoint_check(op, complex_=True) < 1e-12
    y = np.random.default_rng(2).standard_normal(shape) + 0j

    def prog(ctx):
        yd = scatter(ctx.rank, y, plan.output_partition)
        return gather(ctx, dfft_adjoint(ctx, plan, yd)), gather(ctx, dfft_inverse(ctx, plan, yd))

    a, b = launch(4, prog)[0]
    assert np.allclose(a, b, atol=1e-13)
