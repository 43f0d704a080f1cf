"""Adam, applied to whatever parameters a worker holds locally."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _real_view(a: np.ndarray) -> np.ndarray:
    # complex entries become (re, im) pairs so each component gets its own moments
    return a.view(np.float64) if np.iscomplexobj(a) else a


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """Bias-corrected Adam update of ``params`` (in place) for every key in ``grads``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in sorted(grads):
        p = params[name]
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise InvalidArgument(f"{name}: gradient {g.shape} does not match parameter {p.shape}")
        if np.iscomplexobj(p) != np.iscomplexobj(g):
            g = g.astype(p.dtype)
        pr, gr = _real_view(p), _real_view(np.ascontiguousarray(g))
        if name not in state.m:
            state.m[name] = np.zeros_like(pr)
            state.v[name] = np.zeros_like(pr)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * gr
        v *= b2
        v += (1.0 - b2) * gr * gr
        pr -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
