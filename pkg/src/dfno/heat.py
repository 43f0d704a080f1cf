"""Synthetic training data: variable-coefficient heat equation.

Each sample maps a positive diffusivity field ``kappa(x, y)`` to the
evolution ``u(x, y, t)`` of a fixed Gaussian bump under
``u_t = div(kappa grad u)`` with insulated boundaries, solved by explicit
finite differences.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidArgument
from .tensorfile import read_tensor, write_tensor


def stable_dt(kappa: np.ndarray, h: float) -> float:
    return h * h / (2 * kappa.ndim * float(np.max(kappa)))


def heat_step(u: np.ndarray, kappa: np.ndarray, dt: float, h: float) -> np.ndarray:
    """One explicit step of ``u + dt * div(kappa grad u)``.

    Face diffusivities are arithmetic means of the neighbouring cells; no
    flux crosses the outer boundary, so ``sum(u)`` is conserved.
    """
    if u.shape != kappa.shape:
        raise InvalidArgument(f"u {u.shape} and kappa {kappa.shape} differ")
    if dt > stable_dt(kappa, h) * (1 + 1e-12):
        raise InvalidArgument(f"dt={dt} violates the explicit stability bound {stable_dt(kappa, h)}")
    du = np.zeros_like(u)
    for ax in range(u.ndim):
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        flux = 0.5 * (kappa[lo] + kappa[hi]) * (u[hi] - u[lo])
        du[lo] += flux
        du[hi] -= flux
    return u + (dt / (h * h)) * du


def sample_kappa(rng: np.random.Generator, n: int, smoothing: float = 3.0, amplitude: float = 0.7) -> np.ndarray:
    noise = gaussian_filter(rng.standard_normal((n, n)), smoothing, mode="wrap")
    noise /= noise.std()
    return np.exp(amplitude * noise)


def initial_bump(n: int, width: float = 0.1) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n
    x, y = np.meshgrid(c, c, indexing="ij")
    return np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * width ** 2))


def simulate(kappa: np.ndarray, n_t: int, t_final: float = 0.01) -> np.ndarray:
    """``u`` at ``n_t`` equally spaced times in ``(0, t_final]``, shaped ``(n, n, n_t)``."""
    n = kappa.shape[0]
    h = 1.0 / n
    u = initial_bump(n)
    frame_dt = t_final / n_t
    steps = int(np.ceil(frame_dt / stable_dt(kappa, h)))
    dt = frame_dt / steps
    frames = []
    for _ in range(n_t):
        for _ in range(steps):
            u = heat_step(u, kappa, dt, h)
        frames.append(u)
    return np.stack(frames, axis=-1)


def sample_name(i: int) -> str:
    return f"sample_{i:05d}.dfno"


def gen_dataset(n_samples: int, n: int, n_t: int, seed: int, out_dir, t_final: float = 0.01) -> dict:
    """Write ``inputs/`` (1, n, n, 1) and ``targets/`` (1, n, n, n_t) plus ``manifest.json``."""
    if n < 8 or n_t < 2:
        raise InvalidArgument(f"need n >= 8 and n_t >= 2, got n={n}, n_t={n_t}")
    out = Path(out_dir)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    (out / "targets").mkdir(parents=True, exist_ok=True)
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        kappa = sample_kappa(rng, n)
        u = simulate(kappa, n_t, t_final)
        write_tensor(out / "inputs" / sample_name(i), kappa[None, :, :, None])
        write_tensor(out / "targets" / sample_name(i), u[None])
    manifest = {
        "n_samples": n_samples,
        "grid": [n, n],
        "n_t": n_t,
        "seed": seed,
        "t_final": t_final,
        "input_shape": [1, n, n, 1],
        "target_shape": [1, n, n, n_t],
        "initial_condition": "gaussian bump, width 0.1, centred",
        "kappa": "exp(0.7 * unit-variance gaussian-smoothed noise, sigma 3 cells, periodic)",
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def check_sample(kappa: np.ndarray, u: np.ndarray, tol: float = 1e-12) -> bool:
    """Positivity of ``kappa`` and the maximum principle for ``u``."""
    u0 = initial_bump(u.shape[-3] if u.ndim >= 3 else u.shape[0])
    return bool(np.all(kappa > 0) and u.max() <= u0.max() + tol and u.min() >= u0.min() - tol)


def load_manifest(data_dir) -> dict:
    with open(os.path.join(data_dir, "manifest.json")) as f:
        return json.load(f)


def load_sample(data_dir, i: int):
    d = Path(data_dir)
    return read_tensor(d / "inputs" / sample_name(i)), read_tensor(d / "targets" / sample_name(i))
