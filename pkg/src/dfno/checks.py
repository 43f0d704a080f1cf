"""Randomized correctness checks against independent oracles.

Each check returns the largest discrepancy it saw; callers compare it with a
tolerance. The oracles never touch the distributed code paths:
``numpy.fft`` for transforms, :mod:`dfno.reference` for the network,
central differences for gradients and plain slicing for file regions.
"""

from __future__ import annotations

import math
import os
import tempfile
from typing import Optional, Sequence

import numpy as np

from .collectives import (
    LinearOp,
    adjoint_check,
    broadcast_op,
    gather,
    repartition_op,
    scatter,
)
from .dfft import dfft_forward, dfft_inverse, plan_dfft
from .errors import PlanError
from .fft import use_backend
from .model import (
    FnoConfig,
    SpectralWeights,
    Tape,
    fno_backward,
    fno_forward,
    init_model,
    owned_modes,
    relative_lp_loss,
    retained_indices,
    spectral_conv,
)
from .partition import IndexRange, RegionBox, local_region, make_partition
from .reference import reference_forward
from .runtime import launch
from .tensorfile import read_tensor, write_tensor


def relative_error(a, b) -> float:
    scale = max(np.linalg.norm(np.ravel(b)), 1e-300)
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / scale)


def random_grid(rng, ndim: int, max_workers: int = 8) -> tuple:
    """Random worker grid with at most ``max_workers`` workers."""
    dims = [1] * ndim
    for _ in range(int(rng.integers(0, 4))):
        d = int(rng.integers(ndim))
        f = int(rng.choice([2, 3]))
        if math.prod(dims) * f <= max_workers:
            dims[d] *= f
    return tuple(dims)


# -- adjoints ----------------------------------------------------------------------


def _corrupt(op: LinearOp) -> LinearOp:
    def adjoint(ctx, y):
        z = op.adjoint(ctx, y)
        return z if z.local is None else z.with_local(z.local * 1.001)

    return LinearOp(op.name + " (corrupted)", op.in_partition, op.in_shape, op.out_partition, op.out_shape,
                    op.forward, adjoint)


def random_ops(seed: int, max_workers: int = 8, max_dim: int = 12) -> list:
    """One random repartition and one random broadcast."""
    rng = np.random.default_rng([seed, 31])
    ndim = int(rng.integers(1, 5))
    shape = tuple(int(n) for n in rng.integers(1, max_dim + 1, size=ndim))
    src = make_partition(random_grid(rng, ndim, max_workers))
    dst = make_partition(random_grid(rng, ndim, max_workers))
    ops = [repartition_op(src, dst, shape)]

    # broadcast: destination grid, source keeps a trailing subset or 1s
    dest = random_grid(rng, ndim, max_workers)
    s_nd = int(rng.integers(1, ndim + 1))
    sdims = tuple(q if rng.random() < 0.5 else 1 for q in dest[ndim - s_nd:])
    bshape = tuple(int(n) for n in rng.integers(1, max_dim + 1, size=s_nd))
    ops.append(broadcast_op(make_partition(sdims), make_partition(dest), bshape))
    return ops


def adjoint_sweep(num_seeds: int = 50, max_workers: int = 8, max_dim: int = 12,
                  corrupt: bool = False, first_seed: int = 0) -> float:
    worst = 0.0
    for seed in range(first_seed, first_seed + num_seeds):
        for op in random_ops(seed, max_workers, max_dim):
            if corrupt:
                op = _corrupt(op)
            worst = max(worst, adjoint_check(op, seed=seed))
    return worst


# -- distributed FFT ---------------------------------------------------------------


def dfft_case(shape: Sequence[int], grid: Sequence[int], transform_dims: Sequence[int], seed: int = 0,
              backend: Optional[str] = None) -> dict:
    """Forward error, round-trip error and norm drift for one layout."""
    shape = tuple(shape)
    rng = np.random.default_rng([seed, 53])
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    part = make_partition(grid)
    plan = plan_dfft(part, shape, transform_dims)
    expected = np.fft.fftn(x, axes=tuple(transform_dims), norm="ortho")

    def program(ctx):
        with use_backend(backend or "native"):
            xd = scatter(ctx.rank, x, part)
            X = dfft_forward(ctx, plan, xd).tensor
            back = dfft_inverse(ctx, plan, X)
            return gather(ctx, X), gather(ctx, back)

    X, back = launch(part.total_workers, program)[0]
    return {
        "forward": relative_error(X, expected),
        "roundtrip": relative_error(back, x),
        "unitarity": float(abs(np.linalg.norm(X) - np.linalg.norm(x)) / np.linalg.norm(x)),
    }


def dfft_sweep(num_seeds: int = 20, sizes=(4, 6, 8, 15, 16, 60), max_workers: int = 8,
               max_volume: int = 20000) -> dict:
    worst = {"forward": 0.0, "roundtrip": 0.0, "unitarity": 0.0}
    for seed in range(num_seeds):
        rng = np.random.default_rng([seed, 59])
        nt = int(rng.integers(1, 4))
        while True:
            tshape = tuple(int(rng.choice(sizes)) for _ in range(nt))
            if 2 * math.prod(tshape) <= max_volume:
                break
        shape = (1, 2) + tshape
        grid = (1, 1) + random_grid(rng, nt, max_workers)
        try:
            plan_dfft(make_partition(grid), shape, tuple(range(2, 2 + nt)))
        except PlanError:
            # no room for the displaced workers; such layouts are rejected up front
            continue
        res = dfft_case(shape, grid, tuple(range(2, 2 + nt)), seed)
        for k in worst:
            worst[k] = max(worst[k], res[k])
    return worst


# -- spectral convolution ----------------------------------------------------------


def spectral_oracle(v: np.ndarray, R: np.ndarray, modes, dims) -> np.ndarray:
    """Sequential ``Re F^-1 (R . F v)`` on whole arrays."""
    dims = tuple(dims)
    X = np.fft.fftn(v, axes=dims, norm="ortho")
    idx = (slice(None), slice(None)) + np.ix_(*[retained_indices(v.shape[d], m) for d, m in zip(dims, modes)])
    Y = np.zeros_like(X)
    Y[idx] = np.einsum("oi...,bi...->bo...", R, X[idx])
    return np.fft.ifftn(Y, axes=dims, norm="ortho").real


def spectral_case(shape: Sequence[int], grid: Sequence[int], modes: Sequence[int], seed: int = 0) -> float:
    """Distributed spectral convolution vs :func:`spectral_oracle`; dims 2.. are transformed."""
    shape = tuple(shape)
    rng = np.random.default_rng([seed, 61])
    dims = tuple(range(2, len(shape)))
    w = shape[1]
    v = rng.standard_normal(shape)
    R = rng.standard_normal((w, w) + tuple(2 * m for m in modes)) + 1j * rng.standard_normal(
        (w, w) + tuple(2 * m for m in modes))
    part = make_partition(grid)
    plan = plan_dfft(part, shape, dims, local_dims=(0, 1))
    sizes = tuple(shape[d] for d in dims)

    def program(ctx):
        box = None
        if ctx.rank < plan.output_partition.total_workers:
            box = local_region(plan.output_partition, ctx.rank, shape)
        own = owned_modes(box, modes, sizes, dims)
        shard = R[own.global_index()]
        out = spectral_conv(ctx, scatter(ctx.rank, v, part), SpectralWeights(shard, own, tuple(modes)), plan)
        return gather(ctx, out)

    got = launch(part.total_workers, program)[0]
    return relative_error(got, spectral_oracle(v, R, modes, dims))


# -- whole network -----------------------------------------------------------------


def forward_gathered(model, a: np.ndarray) -> np.ndarray:
    L = model.layout

    def program(ctx):
        return gather(ctx, fno_forward(ctx, model, scatter(ctx.rank, a, L.p_x)))

    return launch(L.num_workers, program)[0]


def partition_invariance(config: FnoConfig, partitions: Sequence[Sequence[int]], seed: int = 0) -> dict:
    """Relative error of each layout's output against the sequential reference."""
    model = init_model(config, seed)
    a = np.random.default_rng([seed, 67]).random(model.layout.input_shape)
    ref = reference_forward(model, a)
    out = {}
    for part in partitions:
        m = model.relayout(part)
        out[tuple(part)] = relative_error(forward_gathered(m, a), ref)
    return out


def loss_and_gradients(model, a: np.ndarray, target: np.ndarray):
    """Relative L2 loss plus global parameter and input gradients."""
    L = model.layout

    def program(ctx):
        x = scatter(ctx.rank, a, L.p_x)
        tape = Tape()
        u = fno_forward(ctx, model, x, tape)
        loss, g = relative_lp_loss(ctx, u, scatter(ctx.rank, target, u.partition), with_grad=True)
        grads, ga = fno_backward(ctx, model, tape, g)
        return loss, grads, gather(ctx, ga)

    res = launch(L.num_workers, program)
    return res[0][0], model.assemble([r[1] for r in res]), res[0][2]


def loss_only(model, a: np.ndarray, target: np.ndarray) -> float:
    L = model.layout

    def program(ctx):
        u = fno_forward(ctx, model, scatter(ctx.rank, a, L.p_x))
        return relative_lp_loss(ctx, u, scatter(ctx.rank, target, u.partition))

    return launch(L.num_workers, program)[0]


def _kink_pattern(model, a: np.ndarray):
    """Signs of every block pre-activation (``None`` for smooth activations)."""
    if model.config.activation != "relu":
        return None
    _, saved = reference_forward(model, a, keep=True)
    return np.concatenate([saved[f"pre{k}"].ravel() > 0 for k in range(model.config.num_blocks)])


def _crosses_kink(base, *cases) -> bool:
    if base is None:
        return False
    return any(not np.array_equal(base, _kink_pattern(m, x)) for m, x in cases)


def gradient_check(config: FnoConfig, seed: int = 0, eps: float = 1e-6, directions: int = 3,
                   max_redraws: int = 20) -> dict:
    """Directional central differences vs adjoint gradients, per parameter group and input.

    Complex parameters follow the ``dL/dRe + i dL/dIm`` convention, so the
    directional derivative along ``d`` is ``Re(vdot(g, d))``. A direction
    whose stencil moves any ReLU pre-activation across zero is redrawn
    (up to ``max_redraws`` times), since the loss is not differentiable
    along it.
    """
    model = init_model(config, seed)
    L = model.layout
    rng = np.random.default_rng([seed, 71])
    a = rng.random(L.input_shape) + 0.5
    target = rng.random(L.output_shape) + 0.5
    _, grads, ga = loss_and_gradients(model, a, target)
    base = _kink_pattern(model, a)
    errs = {}
    for name in model.parameter_names():
        theta = model.get_global(name)
        worst = 0.0
        for _ in range(directions):
            for _ in range(max_redraws + 1):
                d = rng.standard_normal(theta.shape)
                if np.iscomplexobj(theta):
                    d = d + 1j * rng.standard_normal(theta.shape)
                plus, minus = model.copy(), model.copy()
                plus.set_global(name, theta + eps * d)
                minus.set_global(name, theta - eps * d)
                if not _crosses_kink(base, (plus, a), (minus, a)):
                    break
            fd = (loss_only(plus, a, target) - loss_only(minus, a, target)) / (2 * eps)
            an = float(np.real(np.vdot(grads[name], d)))
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
        errs[name] = worst
    worst = 0.0
    for _ in range(directions):
        for _ in range(max_redraws + 1):
            d = rng.standard_normal(a.shape)
            if not _crosses_kink(base, (model, a + eps * d), (model, a - eps * d)):
                break
        fd = (loss_only(model, a + eps * d, target) - loss_only(model, a - eps * d, target)) / (2 * eps)
        an = float(np.vdot(ga, d).real)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    errs["input"] = worst
    return errs


# -- files -------------------------------------------------------------------------


def random_region(rng, shape) -> RegionBox:
    ranges = []
    for n in shape:
        a, b = sorted(int(v) for v in rng.integers(0, n + 1, size=2))
        ranges.append(IndexRange(a, b))
    return RegionBox(tuple(ranges))


def file_roundtrip(trials: int = 100, seed: int = 0, directory: Optional[str] = None) -> int:
    """Number of mismatches over random (shape, chunk, region) triples."""
    rng = np.random.default_rng([seed, 73])
    bad = 0
    with tempfile.TemporaryDirectory(dir=directory) as tmp:
        path = os.path.join(tmp, "t.dfno")
        for _ in range(trials):
            nd = int(rng.integers(1, 5))
            shape = tuple(int(n) for n in rng.integers(1, 9, size=nd))
            chunks = tuple(int(rng.integers(1, n + 2)) for n in shape)
            x = rng.standard_normal(shape)
            if rng.random() < 0.5:
                x = x + 1j * rng.standard_normal(shape)
            write_tensor(path, x, chunks)
            full = read_tensor(path)
            if full.dtype != x.dtype or full.tobytes() != x.tobytes():
                bad += 1
            box = random_region(rng, shape)
            part = read_tensor(path, box)
            if part.shape != box.shape or part.tobytes() != np.ascontiguousarray(x[box.slices()]).tobytes():
                bad += 1
    return bad
