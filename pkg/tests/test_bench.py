import json

import pytest

from dfno.bench import (
    COLUMNS,
    PHASES,
    BenchRow,
    bench_cmd,
    check_weak_scaling,
    read_csv,
    scaling_partition,
    scaling_rows,
)
from dfno.config import load_config
from dfno.errors import InvalidArgument


def test_partitions_split_x_y_z_in_turn():
    assert [scaling_partition(p) for p in (1, 2, 4, 8, 16, 512)] == [
        (1, 1, 1, 1, 1, 1), (1, 1, 2, 1, 1, 1), (1, 1, 2, 2, 1, 1), (1, 1, 2, 2, 2, 1),
        (1, 1, 4, 2, 2, 1), (1, 1, 8, 8, 8, 1)]
    with pytest.raises(InvalidArgument):
        scaling_partition(6)


def test_full_scale_rows():
    spatial = scaling_rows("spatial", (64, 64, 64), 20, [1, 2, 4, 8, 16])
    assert [r.input_shape for r in spatial] == [
        (1, 1, 64, 64, 64, 1), (1, 1, 128, 64, 64, 1), (1, 1, 128, 128, 64, 1),
        (1, 1, 128, 128, 128, 1), (1, 1, 256, 128, 128, 1)]
    assert all(r.output_shape[-1] == 20 for r in spatial)
    temporal = scaling_rows("temporal", (64, 64, 64), 20, [1, 2, 4, 8])
    assert [r.output_shape for r in temporal] == [
        (1, 1, 64, 64, 64, 20), (1, 1, 64, 64, 64, 40), (1, 1, 64, 64, 64, 80), (1, 1, 64, 64, 64, 160)]
    assert all(r.input_shape == (1, 1, 64, 64, 64, 1) for r in temporal)


def test_desk_scale_p1_row():
    row = scaling_rows("spatial", (32, 32, 32), 20, [1])[0]
    assert row.input_shape == (1, 1, 32, 32, 32, 1) and row.output_shape == (1, 1, 32, 32, 32, 20)


def test_weak_scaling_volumes():
    rows = scaling_rows("spatial", (32, 32, 32), 20, [1, 2, 4, 8]) + scaling_rows("temporal", (32, 32, 32), 20,
                                                                                   [1, 2, 4, 8])
    check_weak_scaling(rows)
    assert {r.local_volumes()[0] for r in rows if r.series == "spatial"} == {32 ** 3}
    assert {r.local_volumes()[1] for r in rows if r.series == "temporal"} == {32 ** 3 * 20}
    broken = [BenchRow("spatial", 1, (1, 1, 1, 1, 1, 1), (1, 1, 8, 8, 8, 1), (1, 1, 8, 8, 8, 4)),
              BenchRow("spatial", 2, (1, 1, 2, 1, 1, 1), (1, 1, 8, 8, 8, 1), (1, 1, 8, 8, 8, 4))]
    with pytest.raises(AssertionError):
        check_weak_scaling(broken)


def _small(tmp_path, **kw):
    doc = {"out_csv": str(tmp_path / "b.csv"), "spatial_base": [8, 8, 8], "n_t": 4, "p_values": [1, 2],
           "warmup": 1, "reps": 5, "model": {"width": 4, "num_blocks": 1, "modes": [2, 2, 2, 2]}}
    doc.update(kw)
    return load_config("bench", json.dumps(doc))


def test_bench_csv(tmp_path):
    recs = bench_cmd(_small(tmp_path), workers=2)
    rows = read_csv(tmp_path / "b.csv")
    assert list(rows[0]) == list(COLUMNS)
    assert len(rows) == len(recs) == 2 * 2 * len(PHASES)
    assert {r["phase"] for r in rows} == set(PHASES)
    assert all(float(r["median_seconds"]) > 0 for r in rows)


def test_bench_needs_enough_workers(tmp_path):
    with pytest.raises(InvalidArgument):
        bench_cmd(_small(tmp_path, p_values=[1, 4]), workers=2)
    with pytest.raises(InvalidArgument):
        bench_cmd(_small(tmp_path, reps=3), workers=2)
