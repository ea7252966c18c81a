"""Acquisition simulation: shot noise, beam-current blur, dwell-time budgets,
frame synthesis, downscaling, and random sparse scans.

All randomness flows through numpy's PCG64 generator so that a given seed
reproduces the same acquisition on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .image import Image, SparseImage, gaussian_smooth

__all__ = [
    "ELECTRON_CHARGE", "ScanBudget", "BeamModel", "SeededRng",
    "electrons_per_pixel", "beam_blur_sigma", "simulate_frame",
    "synthesize_combined_frame", "downscale_by_two", "sparse_scan",
    "average_dwell",
]

ELECTRON_CHARGE = 1.602176634e-19  # coulombs

# expected counts below this are sampled by CDF inversion, above by a
# rounded normal approximation (error below 16-bit quantization there)
POISSON_INVERSION_CUTOFF = 30.0


@dataclass(frozen=True)
class ScanBudget:
    """Dwell-time budget of one acquisition strategy.

    The quantity held constant across strategies is the average dwell per
    pixel of the full frame: dwell_per_sampled_pixel * sampled_fraction.
    """

    dwell_per_sampled_pixel: float  # microseconds
    sampled_fraction: float         # in (0, 1]
    beam_current: float             # nanoamperes
    pixel_size: float = 5.0         # nanometers

    def __post_init__(self):
        if self.dwell_per_sampled_pixel <= 0:
            raise ValueError("dwell_per_sampled_pixel must be > 0")
        if not 0 < self.sampled_fraction <= 1:
            raise ValueError("sampled_fraction must be in (0, 1]")
        if self.beam_current < 0:
            raise ValueError("beam_current must be >= 0")


@dataclass(frozen=True)
class BeamModel:
    """Virtual spot size as a power law of beam current:
    sigma(I) = sigma_ref * (I / current_ref) ** exponent, in pixels."""

    sigma_ref: float = 0.4      # pixels at the reference current
    current_ref: float = 0.1    # nanoamperes
    exponent: float = 0.5

    def __post_init__(self):
        if self.sigma_ref < 0:
            raise ValueError("sigma_ref must be >= 0")
        if self.current_ref <= 0:
            raise ValueError("current_ref must be > 0")


class SeededRng:
    """Deterministic random source (PCG64 behind numpy's Generator).

    Identical seeds yield identical streams on every platform. Deriving a
    child with `child(tag)` mixes the tag into the seed material, giving
    independent reproducible substreams.
    """

    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            self.seed_sequence = seed
        else:
            self.seed_sequence = np.random.SeedSequence(int(seed))
        self.generator = np.random.Generator(np.random.PCG64(self.seed_sequence))

    def child(self, *tags: int) -> "SeededRng":
        entropy = self.seed_sequence.entropy
        base = list(entropy) if isinstance(entropy, (list, tuple)) else [entropy]
        return SeededRng(np.random.SeedSequence(base + list(tags)))

    def __repr__(self):
        return f"SeededRng(entropy={self.seed_sequence.entropy})"


def electrons_per_pixel(current: float, dwell: float) -> float:
    """Expected electron count for a dwell at a beam current:
    N = (current nA) * (dwell us) / elementary charge."""
    if current < 0 or dwell < 0:
        raise ValueError("current and dwell must be >= 0")
    return (current * 1e-9) * (dwell * 1e-6) / ELECTRON_CHARGE


def beam_blur_sigma(current: float, model: BeamModel) -> float:
    """Gaussian blur width (pixels) induced by the virtual spot at a current."""
    if current <= 0:
        raise ValueError(f"current must be > 0, got {current}")
    return model.sigma_ref * (current / model.current_ref) ** model.exponent


def _poisson(lam: np.ndarray, uniforms: np.ndarray,
             normals: np.ndarray) -> np.ndarray:
    """Poisson draws: CDF inversion below the cutoff, rounded normal above.

    One uniform and one normal are consumed per element regardless of which
    branch applies, so the stream layout is independent of the data.
    """
    counts = np.empty(lam.shape, dtype=np.float64)

    big = lam >= POISSON_INVERSION_CUTOFF
    if big.any():
        lb = lam[big]
        counts[big] = np.maximum(np.rint(lb + np.sqrt(lb) * normals[big]), 0.0)

    small = ~big
    if small.any():
        ls = lam[small]
        u = uniforms[small]
        k = np.zeros(ls.shape, dtype=np.float64)
        term = np.exp(-ls)          # P(X = 0)
        cdf = term.copy()
        active = u > cdf            # pixels whose count exceeds the cdf so far
        i = 0
        # bounded: P(X > 200) is negligible for lambda < 30
        while active.any() and i < 200:
            i += 1
            k[active] += 1
            term = term * ls / i
            cdf += term
            active = u > cdf
        counts[small] = k

    return counts


def simulate_frame(truth: Image, budget: ScanBudget, beam: BeamModel,
                   rng: SeededRng) -> Image:
    """Simulate one raster acquisition of the truth image.

    Pipeline: blur the truth with the beam's spot sigma, then draw per-pixel
    electron counts k ~ Poisson(N * intensity) and output k / N clamped to
    [0, 1], where N = electrons_per_pixel(current, dwell).
    """
    n_electrons = electrons_per_pixel(budget.beam_current,
                                      budget.dwell_per_sampled_pixel)
    if n_electrons <= 0:
        raise NumericalError("degenerate budget: zero expected electrons per pixel")
    sigma = beam_blur_sigma(budget.beam_current, beam)
    blurred = gaussian_smooth(truth, sigma)
    lam = n_electrons * blurred.data
    gen = rng.generator
    uniforms = gen.random(lam.shape)
    normals = gen.standard_normal(lam.shape)
    counts = _poisson(lam, uniforms, normals)
    return Image(np.clip(counts / n_electrons, 0.0, 1.0))


def synthesize_combined_frame(frame_a: Image, dwell_a: float,
                              frame_b: Image, dwell_b: float) -> Image:
    """Dose-weighted mean of two frames of the same scene:
    (dwell_a * a + dwell_b * b) / (dwell_a + dwell_b)."""
    if frame_a.shape != frame_b.shape:
        raise ValueError(f"frame dimensions differ: {frame_a.shape} vs {frame_b.shape}")
    total = dwell_a + dwell_b
    if total <= 0:
        raise ValueError("total dwell must be > 0")
    wa, wb = dwell_a / total, dwell_b / total
    return Image(wa * frame_a.data + wb * frame_b.data)


def downscale_by_two(image: Image) -> Image:
    """Non-overlapping 2x2 block means; a trailing odd row/column is dropped."""
    h, w = image.shape
    if h < 2 or w < 2:
        raise ValueError(f"image must be at least 2x2, got {w}x{h}")
    h2, w2 = h // 2, w // 2
    d = image.data[:2 * h2, :2 * w2]
    blocks = d.reshape(h2, 2, w2, 2)
    return Image(blocks.mean(axis=(1, 3)))


def sparse_scan(frame: Image, fraction: float, rng: SeededRng) -> SparseImage:
    """Randomly sample exactly round(fraction * w * h) pixels of the frame,
    uniformly without replacement; unsampled pixels are masked out."""
    if not 0 <= fraction <= 1:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    h, w = frame.shape
    npix = h * w
    count = int(round(fraction * npix))
    chosen = rng.generator.permutation(npix)[:count]
    mask = np.zeros(npix, dtype=bool)
    mask[chosen] = True
    return SparseImage(frame, mask.reshape(h, w))


def average_dwell(budget: ScanBudget) -> float:
    """Average dwell time per full-frame pixel (microseconds)."""
    return budget.dwell_per_sampled_pixel * budget.sampled_fraction
