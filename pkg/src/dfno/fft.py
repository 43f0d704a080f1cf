"""Local (single-worker) orthonormal FFTs.

The ``"native"`` backend is an iterative radix-2 Cooley-Tukey transform for
power-of-two lengths and Bluestein's chirp-z algorithm (built on the same
radix-2 core) for every other length. ``"numpy"`` defers to ``numpy.fft``
(pocketfft) and exists for speed in long training runs; both are unitary
with ``1/sqrt(n)`` per transformed axis in each direction.
"""

from __future__ import annotations

import functools
import threading
from typing import Iterable

import numpy as np

from .errors import InvalidArgument

BACKENDS = ("native", "numpy")
_state = threading.local()


def get_backend() -> str:
    return getattr(_state, "backend", "native")


def set_backend(name: str) -> None:
    """Select the local FFT backend for the calling thread."""
    if name not in BACKENDS:
        raise InvalidArgument(f"unknown FFT backend {name!r}; choose from {BACKENDS}")
    _state.backend = name


class use_backend:
    """Context manager form of :func:`set_backend`."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        self.prev = get_backend()
        set_backend(self.name)

    def __exit__(self, *exc):
        set_backend(self.prev)


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@functools.lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@functools.lru_cache(maxsize=None)
def _twiddles(n: int) -> tuple:
    out = []
    m = 1
    while m < n:
        out.append(np.exp(-1j * np.pi * np.arange(m) / m))
        m *= 2
    return tuple(out)


def _radix2(x: np.ndarray) -> np.ndarray:
    """Unnormalised forward DFT along the last axis; length must be a power of two."""
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = x[..., _bitrev(n)].reshape(-1, n)
    b = y.shape[0]
    m = 1
    for w in _twiddles(n):
        y = y.reshape(b, n // (2 * m), 2, m)
        even = y[:, :, 0, :]
        odd = y[:, :, 1, :] * w
        y = np.stack((even + odd, even - odd), axis=2)
        m *= 2
    return y.reshape(lead + (n,))


@functools.lru_cache(maxsize=None)
def _chirp(n: int) -> tuple:
    k = np.arange(n)
    # k^2 mod 2n keeps the phase argument small for long transforms
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 1).bit_length() if n > 1 else 1
    kernel = np.zeros(m, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    if n > 1:
        kernel[m - n + 1:] = np.conj(chirp[1:])[::-1]
    return chirp, _radix2(kernel), m


def _bluestein(x: np.ndarray) -> np.ndarray:
    """Unnormalised forward DFT of arbitrary length along the last axis."""
    n = x.shape[-1]
    chirp, kernel_hat, m = _chirp(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = _radix2(_radix2(a) * kernel_hat)
    # the second forward transform computes m * ifft reversed in index
    conv = np.roll(conv[..., ::-1], 1, axis=-1) / m
    return conv[..., :n] * chirp


def dft(x: np.ndarray) -> np.ndarray:
    """Unnormalised forward DFT along the last axis (native backend)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n <= 1:
        return x.copy()
    return _radix2(x) if _is_pow2(n) else _bluestein(x)


def _fft_axis(x: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
    n = x.shape[axis]
    if n == 0:
        return x.astype(np.complex128)
    moved = np.moveaxis(x, axis, -1)
    if inverse:
        y = np.conj(dft(np.conj(moved)))
    else:
        y = dft(moved)
    return np.moveaxis(y / np.sqrt(n), -1, axis)


def local_fft(buffer: np.ndarray, axes: Iterable[int], inverse: bool = False) -> np.ndarray:
    """Orthonormal multidimensional DFT of ``buffer`` over ``axes``."""
    axes = tuple(sorted(set(int(a) for a in axes)))
    x = np.asarray(buffer, dtype=np.complex128)
    if not axes:
        return x.copy()
    for a in axes:
        if not -x.ndim <= a < x.ndim:
            raise InvalidArgument(f"axis {a} out of range for {x.ndim}-d block")
    if get_backend() == "numpy" or x.size == 0:
        if x.size == 0:
            return x.copy()
        f = np.fft.ifftn if inverse else np.fft.fftn
        return f(x, axes=axes, norm="ortho")
    for a in axes:
        x = _fft_axis(x, a, inverse)
    return x
