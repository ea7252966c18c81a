"""Synthetic ground-truth frames: droplet-like closed structures and
membrane-like curves over a mildly textured background.

A desk-scale stand-in for real microscope frames, with deterministic
rendering per seed so benchmark runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import Image, gaussian_smooth

__all__ = ["PhantomSpec", "generate_phantom"]


@dataclass(frozen=True)
class PhantomSpec:
    width: int = 256
    height: int = 256
    density: float = 1.0        # background texture granularity multiplier
    droplets: int = 10
    curves: int = 5
    contrast_low: float = 0.15
    contrast_high: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ValueError("phantom dimensions must be at least 64x64")
        if not 0 <= self.contrast_low < self.contrast_high <= 1:
            raise ValueError("need 0 <= contrast_low < contrast_high <= 1")
        if self.droplets < 0 or self.curves < 0:
            raise ValueError("droplets and curves must be >= 0")


def _generator(spec: PhantomSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([spec.seed, 0x9e3779b9])))


def _sample_geometry(spec: PhantomSpec):
    """Droplet and curve parameters drawn deterministically from the seed.

    Droplets: center, base radius, boundary harmonics (radius as a function
    of angle), rim width. Curves: a start point, direction, length, and a
    sinusoidal lateral wobble.
    """
    gen = _generator(spec)
    w, h = spec.width, spec.height
    rmax = min(w, h) / 8.0
    droplets = []
    for _ in range(spec.droplets):
        r0 = gen.uniform(6.0, rmax)
        margin = r0 * 1.4 + 3.0
        droplets.append({
            "cx": gen.uniform(margin, w - margin),
            "cy": gen.uniform(margin, h - margin),
            "r0": r0,
            "amps": gen.normal(0.0, 0.05, 3),    # harmonics 2..4
            "phases": gen.uniform(0, 2 * math.pi, 3),
            "rim": gen.uniform(1.4, 2.4),
        })
    curves = []
    for _ in range(spec.curves):
        angle = gen.uniform(0, math.pi)
        curves.append({
            "x0": gen.uniform(0.1 * w, 0.9 * w),
            "y0": gen.uniform(0.1 * h, 0.9 * h),
            "dx": math.cos(angle),
            "dy": math.sin(angle),
            "length": gen.uniform(0.4, 0.9) * min(w, h),
            "amp": gen.uniform(4.0, 16.0),
            "freq": gen.uniform(0.5, 2.0),
            "phase": gen.uniform(0, 2 * math.pi),
            "width": gen.uniform(1.2, 2.0),
        })
    return droplets, curves


def _droplet_radius(d, theta):
    r = np.full_like(theta, d["r0"])
    for k, (a, p) in enumerate(zip(d["amps"], d["phases"]), start=2):
        r += d["r0"] * a * np.cos(k * theta + p)
    return r


def _soft_band(x, width):
    """1 inside |x| < width, linear falloff over one pixel outside."""
    return np.clip(width + 1.0 - np.abs(x), 0.0, 1.0) * (np.abs(x) < width + 1.0)


def generate_phantom(spec: PhantomSpec) -> Image:
    """Render the phantom: textured background, bright anti-aliased droplet
    rims with clear (dark) interiors, and bright membrane curves."""
    gen = _generator(spec)
    droplets, curves = _sample_geometry(spec)
    w, h = spec.width, spec.height
    lo, hi = spec.contrast_low, spec.contrast_high
    mid = 0.5 * (lo + hi)

    # background: band-limited noise at two scales around the mid level
    noise = gen.random((h, w))
    coarse = gaussian_smooth(Image(noise), 6.0 / max(spec.density, 1e-3)).data
    fine = gaussian_smooth(Image(gen.random((h, w))), 1.5).data
    bg = mid + 0.35 * (hi - lo) * (coarse - coarse.mean()) / max(coarse.std(), 1e-9) * 0.5
    bg += 0.12 * (hi - lo) * (fine - fine.mean()) / max(fine.std(), 1e-9) * 0.5
    canvas = bg

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rim_level = hi
    interior_level = lo
    for d in droplets:
        dx = xx - d["cx"]
        dy = yy - d["cy"]
        dist = np.hypot(dx, dy)
        theta = np.arctan2(dy, dx)
        boundary = _droplet_radius(d, theta)
        signed = dist - boundary
        rim = _soft_band(signed, d["rim"])
        inside = np.clip(-(signed + d["rim"]), 0.0, 1.0)
        canvas = canvas * (1 - inside) + interior_level * inside
        canvas = canvas * (1 - rim) + rim_level * rim

    for c in curves:
        n = max(int(c["length"] * 3), 8)
        t = np.linspace(0.0, 1.0, n)
        along = t * c["length"]
        wob = c["amp"] * np.sin(2 * math.pi * c["freq"] * t + c["phase"])
        px = c["x0"] + along * c["dx"] - wob * c["dy"]
        py = c["y0"] + along * c["dy"] + wob * c["dx"]
        # splat anti-aliased disks along the path
        rad = c["width"]
        span = int(math.ceil(rad)) + 1
        for x0, y0 in zip(px, py):
            ix, iy = int(round(x0)), int(round(y0))
            if ix < -span or ix >= w + span or iy < -span or iy >= h + span:
                continue
            xs = slice(max(ix - span, 0), min(ix + span + 1, w))
            ys = slice(max(iy - span, 0), min(iy + span + 1, h))
            du = xx[ys, xs] - x0
            dv = yy[ys, xs] - y0
            cov = np.clip(rad + 0.5 - np.hypot(du, dv), 0.0, 1.0)
            canvas[ys, xs] = canvas[ys, xs] * (1 - cov) + rim_level * cov

    return Image(np.clip(canvas, 0.0, 1.0))
