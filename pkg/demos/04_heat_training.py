"""Generate a small heat-equation dataset, train on 4 workers, run inference.

Run: python3 demos/04_heat_training.py [workdir]
Takes about a minute on one core.
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from dfno.config import load_config
from dfno.heat import gen_dataset
from dfno.tensorfile import read_tensor
from dfno.training import infer_cmd, train_cmd

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="dfno-demo-"))
data = work / "heat"

# 40 conductivity fields on a 16x16 grid, each with an 8-step diffusion history.
gen_dataset(40, 16, 8, seed=0, out_dir=data)
print("dataset in", data)

cfg = load_config("train", json.dumps({
    "data_dir": str(data), "out_dir": str(work / "run"), "n_train": 32, "n_val": 8, "epochs": 8,
    "batch_size": 2, "lr": 3e-3, "model": {"width": 8, "num_blocks": 2, "modes": [4, 4, 4]}}))
result = train_cmd(cfg, workers=4, log=lambda r: print(f"epoch {r[0]}: train {r[1]:.4f} val {r[2]:.4f}"))
print("trained on partition", result["partition"])

# The checkpoint is stored whole, so inference may use a different layout.
sample = data / "inputs" / "sample_00039.dfno"
icfg = load_config("infer", json.dumps({
    "checkpoint": str(work / "run" / "checkpoint"), "input": str(sample),
    "output": str(work / "pred.dfno"), "partition": [1, 1, 1, 2, 1]}))
pred = infer_cmd(icfg, workers=2)["output"]
target = read_tensor(data / "targets" / "sample_00039.dfno")
print(f"held-out sample relative error {np.linalg.norm(pred - target) / np.linalg.norm(target):.3f}")
