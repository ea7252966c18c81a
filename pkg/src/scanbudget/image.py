"""Dense image container, patch machinery, smoothing, and PGM codecs.

Intensities are normalized float64 values in [0, 1] throughout the package;
files on disk are binary PGM ("P5") with maxval 255 or 65535. Sparse images
are stored as a value/mask PGM pair because PGM has no not-a-number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import CodecError

__all__ = [
    "Image", "SparseImage", "Rect", "PatchSet",
    "load_image", "save_image", "save_sparse", "load_sparse",
    "gaussian_smooth", "extract_patches", "assemble_patches", "crop",
]


class Image:
    """Immutable 2-D grayscale raster, row-major, intensities in [0, 1].

    Values are clamped into [0, 1] at construction; non-finite input is
    rejected. The backing array is marked read-only so instances are safe
    to share across threads.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"image data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        np.clip(arr, 0.0, 1.0, out=arr)
        arr.flags.writeable = False
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Image({self.width}x{self.height})"


class SparseImage:
    """An Image plus a boolean sampling mask (True = pixel was scanned).

    Intensities at unsampled positions are meaningless and are ignored by
    every consumer in this package.
    """

    __slots__ = ("image", "mask")

    def __init__(self, image: Image, mask):
        m = np.array(mask, dtype=bool, copy=True)
        if m.shape != image.shape:
            raise ValueError(f"mask shape {m.shape} != image shape {image.shape}")
        m.flags.writeable = False
        self.image = image
        self.mask = m

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape

    @property
    def sampled_count(self) -> int:
        return int(self.mask.sum())

    def __repr__(self):
        return f"SparseImage({self.width}x{self.height}, {self.sampled_count} sampled)"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle: offsets (x, y), extents (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect extents must be >= 1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rect offsets must be >= 0, got ({self.x}, {self.y})")


@dataclass
class PatchSet:
    """Square patches extracted from an image on a regular grid.

    positions[i] is the (x, y) top-left corner of patch i; patches[i] is its
    row-major pixel vector of length patch_size**2. `known` carries per-pixel
    observation masks when the source was sparse, else None.
    """

    patch_size: int
    positions: np.ndarray  # (n, 2) int, columns (x, y)
    patches: np.ndarray    # (n, patch_size**2) float64
    known: np.ndarray | None = None  # (n, patch_size**2) bool

    def __post_init__(self):
        p = self.patch_size
        if self.patches.shape != (len(self.positions), p * p):
            raise ValueError("patch array shape inconsistent with positions/patch_size")
        if self.known is not None and self.known.shape != self.patches.shape:
            raise ValueError("known-mask shape inconsistent with patches")

    def __len__(self):
        return len(self.positions)


# ---------------------------------------------------------------------------
# PGM codec (binary "P5", maxval 255 or 65535, 16-bit samples big-endian)

def _read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM; returns (uint array h x w, maxval)."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise
    if raw[:2] != b"P5":
        raise CodecError(f"{path}: not a binary PGM (magic {raw[:2]!r})")
    # header tokens: width, height, maxval; '#' starts a comment to end of line
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(raw):
            raise CodecError(f"{path}: truncated header")
        c = raw[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise CodecError(f"{path}: malformed header tokens {tokens}") from None
    if maxval not in (255, 65535):
        raise CodecError(f"{path}: unsupported maxval {maxval}")
    if width < 1 or height < 1:
        raise CodecError(f"{path}: bad dimensions {width}x{height}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = width * height * dtype.itemsize
    body = raw[pos:pos + need]
    if len(body) < need:
        raise CodecError(f"{path}: truncated pixel data ({len(body)} of {need} bytes)")
    values = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return values.astype(np.uint16), maxval


def load_image(path) -> Image:
    """Load a binary PGM as a normalized Image (stored value / maxval)."""
    values, maxval = _read_pgm(path)
    return Image(values.astype(np.float64) / maxval)


def save_image(image: Image, path, depth: int = 16) -> None:
    """Write an Image as binary PGM; stored value = round(intensity * maxval)."""
    if depth == 8:
        maxval, dtype = 255, np.dtype("u1")
    elif depth == 16:
        maxval, dtype = 65535, np.dtype(">u2")
    else:
        raise ValueError(f"depth must be 8 or 16, got {depth}")
    samples = np.rint(image.data * maxval).astype(dtype)
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(samples.tobytes())


def save_sparse(sparse: SparseImage, value_path, mask_path, depth: int = 16) -> None:
    """Write a SparseImage as a value PGM (unsampled pixels as 0) plus a
    {0, 255} mask PGM (255 = sampled)."""
    values = np.where(sparse.mask, sparse.image.data, 0.0)
    save_image(Image(values), value_path, depth=depth)
    maskvals = np.where(sparse.mask, 255, 0).astype("u1")
    header = f"P5\n{sparse.width} {sparse.height}\n255\n".encode("ascii")
    with open(mask_path, "wb") as f:
        f.write(header)
        f.write(maskvals.tobytes())


def load_sparse(value_path, mask_path) -> SparseImage:
    """Inverse of save_sparse. Mask samples must be exactly 0 or 255."""
    image = load_image(value_path)
    maskvals, maxval = _read_pgm(mask_path)
    if maxval != 255:
        raise CodecError(f"{mask_path}: mask PGM must have maxval 255")
    if maskvals.shape != image.shape:
        raise CodecError(
            f"mask dimensions {maskvals.shape} != value dimensions {image.shape}")
    bad = (maskvals != 0) & (maskvals != 255)
    if bad.any():
        raise CodecError(f"{mask_path}: mask contains values other than 0/255")
    return SparseImage(image, maskvals == 255)


# ---------------------------------------------------------------------------
# Smoothing

def gaussian_smooth(image: Image, sigma: float) -> Image:
    """Separable Gaussian smoothing with mirror-reflected borders.

    The discrete kernel is w(d) proportional to exp(-d^2 / (2 sigma^2)) for
    d in [-r, r], r = ceil(3 sigma), normalized to sum 1. sigma = 0 returns
    the input unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return image
    r = math.ceil(3 * sigma)
    d = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    w /= w.sum()
    out = ndimage.correlate1d(image.data, w, axis=0, mode="mirror")
    out = ndimage.correlate1d(out, w, axis=1, mode="mirror")
    return Image(out)


# ---------------------------------------------------------------------------
# Patch machinery

def _grid_starts(dim: int, patch: int, stride: int) -> list[int]:
    """Regular stride grid plus a final flush position reaching the far edge."""
    starts = list(range(0, dim - patch + 1, stride))
    if starts[-1] != dim - patch:
        starts.append(dim - patch)
    return starts


def extract_patches(source: Image | SparseImage, patch_size: int,
                    stride: int) -> PatchSet:
    """Extract all square patches on the stride grid (edge-flush extras
    included so the grid always covers the image). Sparse sources attach
    per-pixel known-masks; their unsampled values are zeroed."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    sparse = isinstance(source, SparseImage)
    data = source.image.data if sparse else source.data
    h, wd = data.shape
    p = patch_size
    if p < 1 or p > min(h, wd):
        raise ValueError(f"patch size {p} does not fit a {wd}x{h} image")
    ys = _grid_starts(h, p, stride)
    xs = _grid_starts(wd, p, stride)
    positions = np.array([(x, y) for y in ys for x in xs], dtype=np.int64)
    n = len(positions)
    patches = np.empty((n, p * p), dtype=np.float64)
    known = np.empty((n, p * p), dtype=bool) if sparse else None
    mask = source.mask if sparse else None
    for i, (x, y) in enumerate(positions):
        block = data[y:y + p, x:x + p]
        if sparse:
            kb = mask[y:y + p, x:x + p]
            patches[i] = (block * kb).reshape(-1)
            known[i] = kb.reshape(-1)
        else:
            patches[i] = block.reshape(-1)
    return PatchSet(patch_size=p, positions=positions, patches=patches, known=known)


def assemble_patches(patches: PatchSet, width: int, height: int) -> Image:
    """Rebuild an image by averaging all patch values covering each pixel.

    Raises if any target pixel is uncovered.
    """
    p = patches.patch_size
    acc = np.zeros((height, width), dtype=np.float64)
    cnt = np.zeros((height, width), dtype=np.int64)
    for (x, y), vec in zip(patches.positions, patches.patches):
        if x < 0 or y < 0 or x + p > width or y + p > height:
            raise ValueError(f"patch at ({x}, {y}) exceeds {width}x{height} target")
        acc[y:y + p, x:x + p] += vec.reshape(p, p)
        cnt[y:y + p, x:x + p] += 1
    if (cnt == 0).any():
        n = int((cnt == 0).sum())
        raise ValueError(f"{n} target pixels are not covered by any patch")
    return Image(acc / cnt)


def crop(image: Image, roi: Rect) -> Image:
    """Exact sub-raster copy of the region of interest."""
    if roi.x + roi.w > image.width or roi.y + roi.h > image.height:
        raise ValueError(
            f"roi {roi} exceeds image bounds {image.width}x{image.height}")
    return Image(image.data[roi.y:roi.y + roi.h, roi.x:roi.x + roi.w])
