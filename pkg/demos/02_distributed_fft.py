"""A distributed 3D FFT compared against numpy.fft.

Run: python3 demos/02_distributed_fft.py
"""

import numpy as np

from dfno.collectives import gather, scatter
from dfno.dfft import dfft_forward, dfft_inverse, plan_dfft
from dfno.partition import make_partition
from dfno.runtime import launch

# (batch, channel, x, y, z) split 2x2x2 over space; 15 points along z takes the Bluestein path.
shape = (1, 2, 8, 6, 15)
grid = make_partition((1, 1, 2, 2, 2))
plan = plan_dfft(grid, shape, (2, 3, 4))
for st in plan.stages:
    print(f"stage: transform dims {st.dims} on workers {st.partition.dims}")

x = np.random.default_rng(0).standard_normal(shape)


def program(ctx):
    X = dfft_forward(ctx, plan, scatter(ctx.rank, x, grid))
    back = dfft_inverse(ctx, plan, X)
    return gather(ctx, X.tensor), gather(ctx, back)


X, back = launch(8, program)[0]
ref = np.fft.fftn(x, axes=(2, 3, 4), norm="ortho")
print(f"max |DFFT - numpy.fft| = {np.abs(X - ref).max():.2e}")
print(f"round trip error      = {np.abs(back.real - x).max():.2e}")
print(f"norm ratio            = {np.linalg.norm(X) / np.linalg.norm(x):.15f}")
