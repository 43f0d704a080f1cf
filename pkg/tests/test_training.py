import json

import numpy as np
import pytest

from dfno.config import load_config
from dfno.errors import InvalidArgument
from dfno.heat import gen_dataset
from dfno.model import init_model
from dfno.training import (
    default_partition,
    infer_cmd,
    load_checkpoint,
    read_history,
    resolve_partition,
    train_cmd,
)

MODEL = {"width": 4, "num_blocks": 2, "modes": [2, 2, 2]}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("heat")
    gen_dataset(6, 8, 4, seed=3, out_dir=d)
    return d


def _cfg(data, out, **kw):
    doc = {"data_dir": str(data), "out_dir": str(out), "n_train": 4, "n_val": 2, "epochs": 2, "model": MODEL}
    doc.update(kw)
    return load_config("train", json.dumps(doc))


def test_default_partition_spreads_over_space():
    assert default_partition(4, 2) == (1, 1, 2, 2, 1)
    assert default_partition(6, 3) == (1, 1, 3, 2, 1, 1)
    with pytest.raises(InvalidArgument):
        resolve_partition((1, 1, 2, 1, 1), 4, 2)


def test_history_independent_of_worker_count(data, tmp_path):
    one = train_cmd(_cfg(data, tmp_path / "one"), workers=1)["history"]
    four = train_cmd(_cfg(data, tmp_path / "four"), workers=4)["history"]
    for a, b in zip(one, four):
        assert a[0] == b[0]
        assert abs(a[1] - b[1]) <= 1e-10 * a[1] and abs(a[2] - b[2]) <= 1e-10 * a[2]
    rows = read_history(tmp_path / "one" / "loss.csv")
    assert [r[0] for r in rows] == [1, 2]


def test_rerun_is_byte_identical(data, tmp_path):
    train_cmd(_cfg(data, tmp_path / "a", partition=[1, 1, 2, 1, 1]), workers=2)
    train_cmd(_cfg(data, tmp_path / "b", partition=[1, 1, 2, 1, 1]), workers=2)
    assert (tmp_path / "a" / "loss.csv").read_bytes() == (tmp_path / "b" / "loss.csv").read_bytes()
    for f in sorted((tmp_path / "a" / "checkpoint").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "checkpoint" / f.name).read_bytes()


def test_zero_learning_rate_keeps_initial_parameters(data, tmp_path):
    cfg = _cfg(data, tmp_path / "z", epochs=1, lr=0.0, seed=4)
    model = train_cmd(cfg, workers=1)["model"]
    init = init_model(model.config, seed=4)
    for name in model.parameter_names():
        assert model.get_global(name).tobytes() == init.get_global(name).tobytes()


def test_batches_must_divide(data, tmp_path):
    with pytest.raises(InvalidArgument):
        train_cmd(_cfg(data, tmp_path / "x", batch_size=3), workers=1)


def test_batch_of_two(data, tmp_path):
    hist = train_cmd(_cfg(data, tmp_path / "b2", batch_size=2, epochs=1), workers=1)["history"]
    assert np.isfinite(hist[0][1]) and np.isfinite(hist[0][2])


def test_inference_after_batched_training(data, tmp_path):
    train_cmd(_cfg(data, tmp_path / "b2", batch_size=2, epochs=1), workers=2)
    sample = data / "inputs" / "sample_00005.dfno"
    cfg = load_config("infer", json.dumps({"checkpoint": str(tmp_path / "b2" / "checkpoint"),
                                           "input": str(sample), "output": str(tmp_path / "u.dfno")}))
    assert infer_cmd(cfg, 2)["output"].shape == (1, 8, 8, 4)


def test_missing_samples(data, tmp_path):
    with pytest.raises(InvalidArgument):
        train_cmd(_cfg(data, tmp_path / "m", n_train=10), workers=1)


def test_checkpoint_inference_across_layouts(data, tmp_path):
    train_cmd(_cfg(data, tmp_path / "run"), workers=1)
    ck = tmp_path / "run" / "checkpoint"
    sample = data / "inputs" / "sample_00005.dfno"
    outs = []
    for workers in (1, 4):
        cfg = load_config("infer", json.dumps({"checkpoint": str(ck), "input": str(sample),
                                               "output": str(tmp_path / f"u{workers}.dfno")}))
        res = infer_cmd(cfg, workers)
        assert res["output"].shape == (1, 8, 8, 4) and res["seconds"] >= 0
        outs.append(res["output"])
    assert np.linalg.norm(outs[0] - outs[1]) <= 1e-8 * np.linalg.norm(outs[0])
    again = infer_cmd(cfg, 4)["output"]
    assert again.tobytes() == outs[1].tobytes()


def test_mismatched_checkpoint(data, tmp_path):
    train_cmd(_cfg(data, tmp_path / "run"), workers=1)
    ck = tmp_path / "run" / "checkpoint"
    manifest = json.loads((ck / "manifest.json").read_text())
    manifest["config"]["width"] = 5
    (ck / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(InvalidArgument):
        load_checkpoint(ck)
    sample = data / "targets" / "sample_00000.dfno"
    manifest["config"]["width"] = 4
    (ck / "manifest.json").write_text(json.dumps(manifest))
    cfg = load_config("infer", json.dumps({"checkpoint": str(ck), "input": str(sample),
                                           "output": str(tmp_path / "u.dfno")}))
    with pytest.raises(InvalidArgument):
        infer_cmd(cfg, 1)
