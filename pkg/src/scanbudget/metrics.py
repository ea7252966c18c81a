"""Full-reference image quality metrics and ROI aggregation.

Implements PSNR, SSIM (Wang et al.), CW-SSIM (Sampat et al., here over a
complex Gabor filterbank), and PSNR-HVS-M (Ponomarenko et al., DCT contrast
masking + CSF weighting), all on [0, 1] images, plus mean/sigma aggregation
over regions of interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dctn
from scipy.signal import fftconvolve

from .hvs_constants import CSF_WEIGHTS, MASK_WEIGHTS
from .image import Image, Rect, crop

__all__ = [
    "METRIC_NAMES", "SsimParams", "CwSsimParams", "MetricReport",
    "psnr", "ssim", "cw_ssim", "psnr_hvs_m", "evaluate_rois",
]

METRIC_NAMES = ("psnr", "psnr_hvs_m", "ssim", "cw_ssim")

PSNR_CAP_DB = 100.0
_MSE_FLOOR = 1e-10


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be > 0")


@dataclass(frozen=True)
class CwSsimParams:
    scales: int = 2
    orientations: int = 4
    window_size: int = 7
    k: float = 0.01
    base_wavelength: float = 4.0  # pixels; doubles per scale

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be > 0")


def _check_pair(a: Image, b: Image) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB for MAX = 1, capped at 100 dB."""
    _check_pair(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


# ---------------------------------------------------------------------------
# SSIM

def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    d = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(d * d) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _window_stats(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted window means of x for every valid window position."""
    views = sliding_window_view(x, w.shape)
    return np.tensordot(views, w, axes=([2, 3], [0, 1]))


def ssim(a: Image, b: Image, p: SsimParams = SsimParams()) -> float:
    """Mean structural similarity over Gaussian-weighted sliding windows."""
    _check_pair(a, b)
    size = p.window_size
    if a.height < size or a.width < size:
        raise ValueError(f"image smaller than the {size}x{size} SSIM window")
    w = _gaussian_window(size, p.window_sigma)
    x, y = a.data, b.data
    c1 = (p.k1 * p.dynamic_range) ** 2
    c2 = (p.k2 * p.dynamic_range) ** 2
    mu_x = _window_stats(x, w)
    mu_y = _window_stats(y, w)
    var_x = _window_stats(x * x, w) - mu_x * mu_x
    var_y = _window_stats(y * y, w) - mu_y * mu_y
    cov = _window_stats(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# CW-SSIM

def _gabor_bank(p: CwSsimParams) -> list[np.ndarray]:
    """Complex Gabor kernels: `scales` octave-spaced frequencies times
    `orientations` directions, DC-free and unit-energy."""
    kernels = []
    for s in range(p.scales):
        wavelength = p.base_wavelength * (2.0 ** s)
        sigma = 0.56 * wavelength
        r = int(math.ceil(3.0 * sigma))
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
        envelope = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
        for o in range(p.orientations):
            theta = math.pi * o / p.orientations
            phase = (2.0 * math.pi / wavelength) * (
                xx * math.cos(theta) + yy * math.sin(theta))
            g = envelope * np.exp(1j * phase)
            g -= envelope * (g.sum() / envelope.sum())  # kill DC response
            g /= np.sqrt(np.sum(np.abs(g) ** 2))
            kernels.append(g)
    return kernels


def _box_sums(x: np.ndarray, size: int) -> np.ndarray:
    return sliding_window_view(x, (size, size)).sum(axis=(-2, -1))


def cw_ssim(a: Image, b: Image, p: CwSsimParams = CwSsimParams()) -> float:
    """Complex-wavelet SSIM: per subband and sliding window,
    (2|sum c_a conj(c_b)| + K) / (sum |c_a|^2 + sum |c_b|^2 + K),
    averaged over windows then subbands. Robust to small translations
    because a rigid shift only rotates local coefficient phase."""
    _check_pair(a, b)
    kernels = _gabor_bank(p)
    win = p.window_size
    scores = []
    for g in kernels:
        if a.height < g.shape[0] + win - 1 or a.width < g.shape[1] + win - 1:
            raise ValueError(
                f"image {a.width}x{a.height} too small for a {g.shape[0]}x"
                f"{g.shape[0]} subband kernel with a {win}x{win} window")
        ca = fftconvolve(a.data, g, mode="valid")
        cb = fftconvolve(b.data, g, mode="valid")
        cross = ca * np.conj(cb)
        mag2_a = ca.real ** 2 + ca.imag ** 2
        mag2_b = cb.real ** 2 + cb.imag ** 2
        num = 2.0 * np.hypot(_box_sums(cross.real, win),
                             _box_sums(cross.imag, win)) + p.k
        den = _box_sums(mag2_a, win) + _box_sums(mag2_b, win) + p.k
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# PSNR-HVS-M

def _pad_to_blocks(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    ph = (-h) % 8
    pw = (-w) % 8
    if ph or pw:
        x = np.pad(x, ((0, ph), (0, pw)), mode="symmetric")
    return x


def _blocks(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    return x.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _masking_energy(blocks: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    """Contrast-masking normalizer per block (the reference's maskeff):
    weighted non-DC coefficient energy scaled by how evenly the block's
    variance spreads over its four quadrants."""
    w = MASK_WEIGHTS.copy()
    w[0, 0] = 0.0
    energy = np.einsum("...kl,kl->...", coefs * coefs, w)

    def _vari(z):
        # sample variance times element count, as in the reference code
        return z.var(axis=(-2, -1), ddof=1) * (z.shape[-1] * z.shape[-2])

    total = _vari(blocks)
    quads = (_vari(blocks[..., :4, :4]) + _vari(blocks[..., :4, 4:]) +
             _vari(blocks[..., 4:, 4:]) + _vari(blocks[..., 4:, :4]))
    with np.errstate(divide="ignore", invalid="ignore"):
        spread = np.where(total != 0, quads / total, 0.0)
    return np.sqrt(energy * spread) / 32.0


def psnr_hvs_m(a: Image, b: Image) -> float:
    """PSNR over CSF-weighted DCT coefficient differences with
    between-coefficient contrast masking, in dB, capped at 100.

    Non-multiple-of-8 dimensions are mirror-padded before blocking.
    """
    _check_pair(a, b)
    xa = _blocks(_pad_to_blocks(a.data))
    xb = _blocks(_pad_to_blocks(b.data))
    ca = dctn(xa, type=2, norm="ortho", axes=(-2, -1))
    cb = dctn(xb, type=2, norm="ortho", axes=(-2, -1))
    mask = np.maximum(_masking_energy(xa, ca), _masking_energy(xb, cb))
    u = np.abs(ca - cb)
    with np.errstate(divide="ignore"):
        thresh = mask[..., None, None] / MASK_WEIGHTS
    masked = np.maximum(u - thresh, 0.0)
    masked[..., 0, 0] = u[..., 0, 0]  # DC difference is never masked
    weighted = masked * CSF_WEIGHTS
    mse = float(np.mean(weighted * weighted))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


# ---------------------------------------------------------------------------
# ROI aggregation

@dataclass
class MetricReport:
    """Per-ROI metric table with mean and population sigma per metric.

    `winner` flags are filled in by the benchmark harness when comparing
    methods (best mean, plus anything within one sigma of it).
    """

    metric_names: tuple[str, ...]
    per_roi: np.ndarray  # (n_rois, n_metrics)
    winner: dict[str, bool] = field(default_factory=dict)

    @property
    def means(self) -> dict[str, float]:
        return {m: float(v) for m, v in
                zip(self.metric_names, self.per_roi.mean(axis=0))}

    @property
    def sigmas(self) -> dict[str, float]:
        return {m: float(v) for m, v in
                zip(self.metric_names, self.per_roi.std(axis=0))}


def evaluate_rois(gt: Image, recon: Image, rois: list[Rect],
                  ssim_params: SsimParams = SsimParams(),
                  cw_params: CwSsimParams = CwSsimParams()) -> MetricReport:
    """Compute all four metrics on each ROI crop pair."""
    _check_pair(gt, recon)
    if not rois:
        raise ValueError("at least one ROI is required")
    rows = np.empty((len(rois), len(METRIC_NAMES)), dtype=np.float64)
    for i, roi in enumerate(rois):
        ga = crop(gt, roi)
        ra = crop(recon, roi)
        rows[i] = (psnr(ga, ra), psnr_hvs_m(ga, ra),
                   ssim(ga, ra, ssim_params), cw_ssim(ga, ra, cw_params))
    return MetricReport(metric_names=METRIC_NAMES, per_roi=rows)
