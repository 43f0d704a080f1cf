"""Weak-scaling rows at desk scale, with a short timed run.

Run: python3 demos/05_weak_scaling.py
"""

import json
import tempfile
from pathlib import Path

from dfno.bench import bench_cmd, scaling_rows
from dfno.config import load_config

# Spatial rows grow the grid with the workers; temporal rows grow the number of output steps.
for series in ("spatial", "temporal"):
    for row in scaling_rows(series, (32, 32, 32), 20, [1, 2, 4, 8]):
        vin, vout = row.local_volumes()
        print(f"{series:<8} p={row.p} {row.partition} in {row.input_shape} out {row.output_shape} "
              f"per-worker in/out {vin}/{vout}")

out = Path(tempfile.mkdtemp(prefix="dfno-bench-")) / "bench.csv"
cfg = load_config("bench", json.dumps({
    "out_csv": str(out), "spatial_base": [8, 8, 8], "n_t": 4, "p_values": [1, 2, 4], "warmup": 1, "reps": 5,
    "model": {"width": 4, "num_blocks": 2, "modes": [2, 2, 2, 2]}}))
bench_cmd(cfg, workers=4, log=lambda r: print(f"{r['series']:<8} p={r['p']} {r['phase']:<13} "
                                              f"{r['median_seconds'] * 1e3:.1f} ms"))
print("csv written to", out)
