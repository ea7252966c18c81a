"""Single-image x2 super-resolution with a bilateral total-variation prior.

The energy follows the robust multiframe formulation of Farsiu et al. 2004,
restricted to one frame and a 2x2 block-mean decimation (the same forward
model the acquisition simulator uses): an L1 data term plus L1 penalties on
differences against all shifts within a window, geometrically decayed.
Both L1 terms are smoothed as sqrt(t^2 + eps^2) so gradients are defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .acquisition import downscale_by_two
from .image import Image

__all__ = ["SrParams", "degrade", "btv_superresolve", "sr_objective"]

_L1_EPS = 1e-6


@dataclass(frozen=True)
class SrParams:
    lam: float = 0.05        # prior weight
    alpha: float = 0.6       # spatial decay per shift step
    window: int = 2          # shift radius P
    step: float = 0.2        # initial gradient step
    max_iters: int = 200
    tol: float = 1e-6        # objective-improvement stopping tolerance

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.step <= 0:
            raise ValueError("step must be > 0")


def degrade(high: Image) -> Image:
    """Forward model of the low-resolution acquisition: 2x2 block means.
    Requires even dimensions (so degradation and upsampling are inverses in
    size)."""
    h, w = high.shape
    if h % 2 or w % 2:
        raise ValueError(f"degrade needs even dimensions, got {w}x{h}")
    return downscale_by_two(high)


def _phi(t):
    return np.sqrt(t * t + _L1_EPS * _L1_EPS) - _L1_EPS


def _phi_prime(t):
    return t / np.sqrt(t * t + _L1_EPS * _L1_EPS)


def _shift_slices(l, m, shape):
    """Overlap slices such that x[a] - x[b] is the (l, m)-shift difference."""
    h, w = shape
    ay = slice(max(l, 0), h + min(l, 0))
    by = slice(max(-l, 0), h + min(-l, 0))
    ax = slice(max(m, 0), w + min(m, 0))
    bx = slice(max(-m, 0), w + min(-m, 0))
    return (ay, ax), (by, bx)


def _shifts(window):
    return [(l, m)
            for l in range(-window, window + 1)
            for m in range(-window, window + 1)
            if (l, m) != (0, 0)]


def _energy(x, y, params: SrParams) -> float:
    h2, w2 = y.shape
    blocks = x.reshape(h2, 2, w2, 2).mean(axis=(1, 3))
    total = float(_phi(blocks - y).sum())
    for l, m in _shifts(params.window):
        (ay, ax), (by, bx) = _shift_slices(l, m, x.shape)
        diff = x[ay, ax] - x[by, bx]
        total += params.lam * (params.alpha ** (abs(l) + abs(m))) \
            * float(_phi(diff).sum())
    return total


def _gradient(x, y, params: SrParams) -> np.ndarray:
    h2, w2 = y.shape
    blocks = x.reshape(h2, 2, w2, 2).mean(axis=(1, 3))
    psi = _phi_prime(blocks - y)
    g = np.repeat(np.repeat(psi, 2, axis=0), 2, axis=1) * 0.25
    for l, m in _shifts(params.window):
        (ay, ax), (by, bx) = _shift_slices(l, m, x.shape)
        w = params.lam * (params.alpha ** (abs(l) + abs(m)))
        psi = _phi_prime(x[ay, ax] - x[by, bx]) * w
        g[ay, ax] += psi
        g[by, bx] -= psi
    return g


def sr_objective(x: Image, y: Image, params: SrParams = SrParams()) -> float:
    """Energy of a high-resolution candidate against the low-res input:
    smoothed-L1 data term plus the bilateral-TV prior."""
    if x.shape != (2 * y.height, 2 * y.width):
        raise ValueError(
            f"candidate {x.shape} is not twice the low-res size {y.shape}")
    return _energy(x.data, y.data, params)


def _descend(low: np.ndarray, params: SrParams):
    """Projected gradient descent from the bicubic upsample; returns the
    final iterate and the accepted-objective trace."""
    x = np.clip(ndimage.zoom(low, 2.0, order=3, mode="mirror", grid_mode=True),
                0.0, 1.0)
    f = _energy(x, low, params)
    trace = [f]
    step = params.step
    for _ in range(params.max_iters):
        g = _gradient(x, low, params)
        accepted = False
        for _ in range(20):
            cand = np.clip(x - step * g, 0.0, 1.0)
            fc = _energy(cand, low, params)
            if fc < f:
                improvement = f - fc
                x, f = cand, fc
                trace.append(f)
                step = min(step * 1.3, params.step)
                accepted = True
                break
            step *= 0.5
        if not accepted or improvement < params.tol:
            break
    return x, trace


def btv_superresolve(low: Image, params: SrParams = SrParams()) -> Image:
    """Upscale a low-resolution image by 2 in each dimension by minimizing
    the bilateral-TV energy, starting from a bicubic upsample. Iterates are
    clamped to [0, 1]; the objective never increases over accepted steps."""
    x, _ = _descend(low.data, params)
    return Image(x)
