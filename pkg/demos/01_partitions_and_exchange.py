"""Partitions, repartition and broadcast on simulated workers.

Run: python3 demos/01_partitions_and_exchange.py
"""

import numpy as np

from dfno.collectives import gather, repartition, repartition_op, broadcast_op, adjoint_check, scatter
from dfno.partition import local_region, make_partition
from dfno.runtime import launch

# A 2x3 worker grid over a 5x7 array. Blocks are balanced, larger ones first.
shape = (5, 7)
grid = make_partition((2, 3))
for rank in range(grid.total_workers):
    box = local_region(grid, rank, shape)
    r, c = box.ranges
    print(f"rank {rank} at {grid.coords(rank)} holds rows {r.start}:{r.stop} cols {c.start}:{c.stop}")

# Move the array from the 2x3 grid to a 3x1 grid and gather it back on rank 0.
x = np.arange(35.0).reshape(shape)
dest = make_partition((3, 1))


def program(ctx):
    t = scatter(ctx.rank, x, grid)
    return gather(ctx, repartition(ctx, t, dest))


print("round trip through repartition exact:", np.array_equal(launch(6, program)[0], x))

# Both operators come with adjoints; <F x, y> should equal <x, F* y>.
ops = [repartition_op(grid, dest, shape), broadcast_op(make_partition((1, 3)), grid, (1, 7))]
for op in ops:
    print(f"{op.name:<40} adjoint mismatch {adjoint_check(op, seed=3):.2e}")
