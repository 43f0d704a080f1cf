import json

import numpy as np
import pytest

from dfno.errors import InvalidArgument
from dfno.heat import check_sample, gen_dataset, heat_step, initial_bump, load_sample, simulate, stable_dt


def test_uniform_field_is_steady():
    kappa = np.exp(np.random.default_rng(0).standard_normal((10, 10)) * 0.3)
    u = np.full((10, 10), 2.5)
    assert np.array_equal(heat_step(u, kappa, stable_dt(kappa, 0.1), 0.1), u)


def test_mass_conserved_and_max_decreases():
    rng = np.random.default_rng(1)
    kappa = np.exp(rng.standard_normal((12, 12)) * 0.5)
    u = np.zeros((12, 12))
    u[5, 6] = 1.0
    h = 1 / 12
    dt = stable_dt(kappa, h)
    prev = u
    for _ in range(20):
        nxt = heat_step(prev, kappa, dt, h)
        assert abs(nxt.sum() - prev.sum()) < 1e-12
        assert nxt.max() <= prev.max() + 1e-15 and nxt.min() >= -1e-15
        prev = nxt
    assert prev.max() < 1.0


def test_matches_uniform_laplacian():
    # for constant kappa the update is the 5-point Laplacian with mirrored edges
    u = np.random.default_rng(2).standard_normal((6, 7))
    h, k, dt = 0.5, 1.3, 0.01
    p = np.pad(u, 1, mode="edge")
    lap = (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * u) / h ** 2
    assert np.allclose(heat_step(u, np.full_like(u, k), dt, h), u + dt * k * lap, atol=1e-14)


def test_stability_limit_enforced():
    kappa = np.ones((4, 4))
    with pytest.raises(InvalidArgument):
        heat_step(np.zeros((4, 4)), kappa, 0.26, 1.0)
    heat_step(np.zeros((4, 4)), kappa, 0.25, 1.0)


def test_dataset_shapes_determinism_and_invariants(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    gen_dataset(4, 16, 3, seed=7, out_dir=a)
    gen_dataset(4, 16, 3, seed=7, out_dir=b)
    for sub in ("inputs", "targets"):
        for f in sorted((a / sub).iterdir()):
            assert f.read_bytes() == (b / sub / f.name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["n_samples"] == 4 and manifest["seed"] == 7
    for i in range(4):
        kappa, u = load_sample(a, i)
        assert kappa.shape == (1, 16, 16, 1) and u.shape == (1, 16, 16, 3)
        assert check_sample(kappa[0, :, :, 0], u[0])
        assert np.sum(u[0, :, :, -1]) == pytest.approx(np.sum(initial_bump(16)), rel=1e-12)


def test_dataset_argument_checks(tmp_path):
    with pytest.raises(InvalidArgument):
        gen_dataset(1, 4, 3, 0, tmp_path)
    with pytest.raises(InvalidArgument):
        gen_dataset(1, 8, 1, 0, tmp_path)


def test_frames_spread_out():
    u = simulate(np.ones((16, 16)), 4, t_final=0.01)
    peaks = u.max(axis=(0, 1))
    assert np.all(np.diff(peaks) < 0)
