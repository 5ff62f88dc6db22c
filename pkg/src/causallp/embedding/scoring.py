"""Scoring functions and their analytic gradients.

All functions broadcast over leading axes; the last axis holds vector
components. ComplEx vectors store ``d`` real parts followed by ``d``
imaginary parts.
"""

from __future__ import annotations

import enum

import numpy as np

from ..errors import LengthMismatch


class ModelKind(str, enum.Enum):
    TRANSE = "TransE"
    DISTMULT = "DistMult"
    COMPLEX = "ComplEx"
    HOLE = "HolE"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        lowered = str(value).lower()
        for kind in cls:
            if kind.value.lower() == lowered:
                return kind
        raise ValueError(f"unknown model kind {value!r}")

    def width(self, dim: int) -> int:
        return 2 * dim if self is ModelKind.COMPLEX else dim


def _check_lengths(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise LengthMismatch(f"vector lengths differ: {a.shape[-1]} vs {b.shape[-1]}")


def circular_correlation_naive(a, b):
    """``out[k] = sum_i a[i] * b[(i + k) % d]`` by direct summation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_lengths(a, b)
    d = a.shape[-1]
    idx = (np.arange(d)[:, None] + np.arange(d)[None, :]) % d  # idx[k, i] = i + k
    return np.einsum("...i,...ki->...k", a, b[..., idx])


def circular_correlation(a, b):
    """Circular correlation through the real FFT, O(d log d)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_lengths(a, b)
    d = a.shape[-1]
    return np.fft.irfft(np.conj(np.fft.rfft(a)) * np.fft.rfft(b), n=d)


def circular_convolution(a, b):
    """``out[m] = sum_k a[k] * b[(m - k) % d]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_lengths(a, b)
    d = a.shape[-1]
    return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=d)


def _stable_norm(v):
    # rescale first so tiny differences do not underflow to a zero norm
    scale = np.max(np.abs(v), axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return scale[..., 0] * np.linalg.norm(v / safe, axis=-1)


def score(kind, h, r, t):
    """Raw plausibility score of ``(h, r, t)``; higher is more plausible."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.TRANSE:
        return -_stable_norm(h + r - t)
    if kind is ModelKind.DISTMULT:
        return np.sum(r * (h * t), axis=-1)  # h * t first keeps the score exactly symmetric
    if kind is ModelKind.COMPLEX:
        d = h.shape[-1] // 2
        hr, hi = h[..., :d], h[..., d:]
        rr, ri = r[..., :d], r[..., d:]
        tr, ti = t[..., :d], t[..., d:]
        return np.sum(hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr, axis=-1)
    return np.sum(r * circular_correlation(h, t), axis=-1)


def score_grad(kind, h, r, t):
    """Score and its gradients ``(s, ds/dh, ds/dr, ds/dt)``.

    ``h`` and ``t`` must share one shape; ``r`` may broadcast against them.
    Gradients come back at the full shape of ``h``.
    """
    kind = ModelKind.parse(kind)
    if kind is ModelKind.TRANSE:
        delta = h + r - t
        norm = np.linalg.norm(delta, axis=-1)
        unit = delta / np.maximum(norm, 1e-12)[..., None]
        return -norm, -unit, -unit, unit
    if kind is ModelKind.DISTMULT:
        ht = h * t
        return np.einsum("...i,...i->...", r, ht), r * t, ht, h * r
    if kind is ModelKind.COMPLEX:
        d = h.shape[-1] // 2
        rr, ri = r[..., :d], r[..., d:]
        r1 = np.concatenate([rr, rr], axis=-1)
        r2 = np.concatenate([ri, -ri], axis=-1)
        hs = np.concatenate([h[..., d:], h[..., :d]], axis=-1)  # halves swapped
        ts = np.concatenate([t[..., d:], t[..., :d]], axis=-1)
        dh = r1 * t + r2 * ts
        dt = r1 * h - r2 * hs
        p, q = h * t, h * ts
        dr = np.concatenate([p[..., :d] + p[..., d:], q[..., :d] - q[..., d:]], axis=-1)
        # the score is linear in h, so s = <h, ds/dh>
        return np.einsum("...i,...i->...", h, dh), dh, dr, dt
    fh, fr, ft = np.fft.rfft(h), np.fft.rfft(r), np.fft.rfft(t)
    n = h.shape[-1]
    corr = np.fft.irfft(np.conj(fh) * ft, n=n)
    s = np.sum(r * corr, axis=-1)
    return s, np.fft.irfft(np.conj(fr) * ft, n=n), corr, np.fft.irfft(fr * fh, n=n)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))
