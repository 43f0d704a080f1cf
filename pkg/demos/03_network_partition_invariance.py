"""The same network evaluated on several worker layouts gives the same answer.

Run: python3 demos/03_network_partition_invariance.py
"""

import numpy as np

from dfno.checks import forward_gathered, relative_error
from dfno.model import FnoConfig, init_model, parameter_count

cfg = FnoConfig(spatial_shape=(8, 8, 8), out_timesteps=6, width=6, num_blocks=2, modes=(3, 3, 3, 3))
model = init_model(cfg, seed=0)
print("input", model.layout.input_shape, "-> output", model.layout.output_shape)
print("real parameters:", parameter_count(cfg, real=True))

a = np.random.default_rng(1).random(model.layout.input_shape)
base = forward_gathered(model, a)
for part in [(1, 1, 2, 1, 1, 1), (1, 1, 2, 2, 1, 1), (1, 1, 2, 2, 2, 1), (1, 1, 1, 2, 1, 2)]:
    # relayout re-shards the spectral weights; the affine weights stay on rank 0
    out = forward_gathered(model.relayout(part), a)
    print(f"partition {part}: deviation from 1 worker {relative_error(out, base):.2e}")
