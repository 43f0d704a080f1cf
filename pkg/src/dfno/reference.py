"""Undistributed FNO on whole arrays, used as the oracle for the distributed one.

No partitions, no runtime: ``numpy.fft`` does the transforms and the
retained modes are selected with plain index arrays. Gradients are written
out by hand in :func:`reference_backward`.
"""

from __future__ import annotations

import numpy as np

from .model import ACTIVATIONS, FnoModel, retained_indices


def _affine(W, b, x, dim):
    y = np.moveaxis(np.tensordot(W, x, axes=(1, dim)), 0, dim)
    if b is not None:
        shape = [1] * y.ndim
        shape[dim] = -1
        y = y + b.reshape(shape)
    return y


def _affine_back(W, x, g, dim):
    other = [a for a in range(x.ndim) if a != dim]
    gx = np.moveaxis(np.tensordot(W, g, axes=(0, dim)), 0, dim)
    return gx, np.tensordot(g, x, axes=(other, other)), g.sum(axis=tuple(other))


def _grid(shape):
    nd = len(shape)
    feats = []
    for d in range(2, nd):
        view = [1] * nd
        view[d] = shape[d]
        c = np.linspace(0.0, 1.0, shape[d]).reshape(view)
        feats.append(np.broadcast_to(c, (shape[0], 1) + shape[2:]))
    return np.concatenate(feats, axis=1)


def _mode_index(cfg):
    return (slice(None), slice(None)) + np.ix_(*[retained_indices(n, m) for n, m in zip(cfg.transform_sizes, cfg.modes)])


def _sconv(R, v, cfg, axes):
    idx = _mode_index(cfg)
    X = np.fft.fftn(v, axes=axes, norm="ortho")
    Y = np.zeros_like(X)
    Y[idx] = np.einsum("oi...,bi...->bo...", R, X[idx])
    return np.fft.ifftn(Y, axes=axes, norm="ortho").real, X


def reference_forward(model: FnoModel, a: np.ndarray, keep: bool = False):
    cfg = model.config
    p = model.global_parameters()
    act = ACTIVATIONS[cfg.activation][0]
    nd = a.ndim
    axes = tuple(range(2, nd))
    saved = {"a": a}
    x = _affine(p["lift_t.W"], p["lift_t.b"], a, nd - 1)
    if cfg.grid_channels:
        x = np.concatenate([x, _grid(x.shape)], axis=1)
    saved["feat"] = x
    v = _affine(p["lift_c.W"], p["lift_c.b"], x, 1)
    for k in range(cfg.num_blocks):
        saved[f"v{k}"] = v
        spec, X = _sconv(p[f"block{k}.R"], v, cfg, axes)
        pre = _affine(p[f"block{k}.W"], None, v, 1) + spec
        saved[f"X{k}"] = X
        saved[f"pre{k}"] = pre
        v = act(pre)
    saved["vK"] = v
    u = _affine(p["proj.W"], None, v, 1)
    return (u, saved) if keep else u


def reference_backward(model: FnoModel, a: np.ndarray, grad_u: np.ndarray):
    """Gradients of ``<grad_u, u(a)>`` for every parameter and for ``a``."""
    cfg = model.config
    p = model.global_parameters()
    act_grad = ACTIVATIONS[cfg.activation][1]
    _, s = reference_forward(model, a, keep=True)
    nd = a.ndim
    axes = tuple(range(2, nd))
    idx = _mode_index(cfg)
    grads = {}
    g, grads["proj.W"], _ = _affine_back(p["proj.W"], s["vK"], grad_u, 1)
    for k in reversed(range(cfg.num_blocks)):
        gpre = g * act_grad(s[f"pre{k}"])
        v = s[f"v{k}"]
        g_lin, grads[f"block{k}.W"], _ = _affine_back(p[f"block{k}.W"], v, gpre, 1)
        gY = np.fft.fftn(gpre, axes=axes, norm="ortho")
        gYk = gY[idx]
        R = p[f"block{k}.R"]
        grads[f"block{k}.R"] = np.einsum("bo...,bi...->oi...", gYk, np.conj(s[f"X{k}"][idx]))
        gX = np.zeros_like(gY)
        gX[idx] = np.einsum("oi...,bo...->bi...", np.conj(R), gYk)
        g = g_lin + np.fft.ifftn(gX, axes=axes, norm="ortho").real
    g, grads["lift_c.W"], grads["lift_c.b"] = _affine_back(p["lift_c.W"], s["feat"], g, 1)
    g = g[:, :cfg.in_channels]
    ga, grads["lift_t.W"], grads["lift_t.b"] = _affine_back(p["lift_t.W"], a, g, nd - 1)
    return grads, ga
