"""Exemplar-based inpainting: iterative whole-patch insertion from a
dictionary trained on uncorrupted images, matched by masked L2 cost.

Candidate regions sit on a half-patch-stride grid; the region holding the
most originally scanned pixels is filled first (ties resolved row-major),
and matching only ever uses originally scanned pixels so synthetic fills
cannot propagate errors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CodecError
from .image import Image, SparseImage, extract_patches, _grid_starts

__all__ = [
    "PatchDictionary", "EbiParams", "build_dictionary", "best_match",
    "ebi_inpaint", "save_dictionary", "load_dictionary",
]

_PDC_MAGIC = b"PDC1"


class PatchDictionary:
    """A bank of square patch atoms with values in [0, 1]."""

    __slots__ = ("patch_size", "atoms", "provenance")

    def __init__(self, patch_size: int, atoms, provenance: str = ""):
        a = np.array(atoms, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("dictionary needs at least one atom (2-D array)")
        if a.shape[1] != patch_size * patch_size:
            raise ValueError(
                f"atom length {a.shape[1]} != patch_size^2 = {patch_size ** 2}")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary atoms must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("dictionary atom values must lie in [0, 1]")
        a.flags.writeable = False
        self.patch_size = patch_size
        self.atoms = a
        self.provenance = provenance

    def __len__(self):
        return self.atoms.shape[0]


@dataclass(frozen=True)
class EbiParams:
    patch_size: int = 8
    min_known: int = 1           # fewest scanned pixels a region may match on
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if self.min_known < 1:
            raise ValueError("min_known must be >= 1")


def build_dictionary(images, patch_size: int, stride: int, max_atoms: int,
                     rng) -> PatchDictionary:
    """All grid patches of the given images; a seeded uniform subsample keeps
    at most max_atoms of them."""
    if not images:
        raise ValueError("need at least one training image")
    if max_atoms < 1:
        raise ValueError("max_atoms must be >= 1")
    chunks = []
    for img in images:
        ps = extract_patches(img, patch_size, stride)
        chunks.append(ps.patches)
    atoms = np.concatenate(chunks, axis=0)
    if len(atoms) > max_atoms:
        gen = getattr(rng, "generator", rng)
        keep = np.sort(gen.permutation(len(atoms))[:max_atoms])
        atoms = atoms[keep]
    return PatchDictionary(patch_size, atoms,
                           provenance=f"{len(images)} training image(s), "
                                      f"stride {stride}")


def best_match(dictionary: PatchDictionary, target, known) -> tuple[int, float]:
    """Atom minimizing the summed squared difference over known pixels.

    Ties go to the lowest atom index. Returns (index, cost) with the cost
    recomputed directly for the winner.
    """
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    m = np.asarray(known, dtype=bool).reshape(-1)
    if t.shape[0] != dictionary.patch_size ** 2 or m.shape != t.shape:
        raise ValueError("target/known size does not match the dictionary patch")
    if not m.any():
        raise ValueError("target has no known pixels to match on")
    atoms = dictionary.atoms
    mf = m.astype(np.float64)
    tm = t * mf
    # expanded |a - t|^2 over known pixels locates the near-minimal atoms;
    # ties are then resolved on exactly recomputed costs (BLAS reductions do
    # not give bitwise-equal results for identical rows)
    approx = (atoms * atoms) @ mf - 2.0 * (atoms @ tm) + tm @ t
    slack = 1e-9 * (1.0 + abs(float(approx.min())))
    cand = np.nonzero(approx <= approx.min() + slack)[0]
    exact = ((atoms[cand] - t) ** 2 * mf).sum(axis=1)
    idx = int(cand[np.argmin(exact)])
    return idx, float(exact.min())


def _region_grid(h: int, w: int, p: int):
    """Patch-aligned candidate regions on a half-patch stride covering the
    frame, in row-major order."""
    stride = max(p // 2, 1)
    return [(x, y) for y in _grid_starts(h, p, stride)
            for x in _grid_starts(w, p, stride)]


def ebi_inpaint(sparse: SparseImage, dictionary: PatchDictionary,
                params: EbiParams) -> Image:
    """Fill every missing pixel by repeatedly inserting the best-matching
    atom into the candidate region with the most originally scanned pixels.

    Originally scanned pixels are never modified. Regions whose scanned-pixel
    count is below min_known (or iterations beyond the safety cap) leave
    their pixels to a natural-neighbor fallback, with a warning.
    """
    if dictionary.patch_size != params.patch_size:
        raise ValueError("dictionary patch size differs from params.patch_size")
    if sparse.sampled_count == 0:
        raise ValueError("cannot inpaint an empty sampling mask")
    h, w = sparse.shape
    p = params.patch_size
    if p > min(h, w):
        raise ValueError(f"patch size {p} does not fit a {w}x{h} image")
    observed = sparse.mask
    out = sparse.image.data.copy()
    filled = observed.copy()
    if filled.all():
        return Image(out)

    regions = _region_grid(h, w, p)
    counts = np.array([observed[y:y + p, x:x + p].sum() for x, y in regions])
    # static priority: scanned-pixel count desc, then row-major position
    order = sorted(range(len(regions)), key=lambda i: (-counts[i], i))

    iterations = 0
    capped = False
    for i in order:
        x, y = regions[i]
        region_filled = filled[y:y + p, x:x + p]
        if region_filled.all():
            continue
        if counts[i] < params.min_known:
            break  # all remaining candidates hold even fewer scanned pixels
        if iterations >= params.max_iterations:
            capped = True
            break
        iterations += 1
        region_obs = observed[y:y + p, x:x + p]
        target = np.where(region_obs, out[y:y + p, x:x + p], 0.0)
        idx, _ = best_match(dictionary, target, region_obs)
        atom = dictionary.atoms[idx].reshape(p, p)
        missing = ~region_filled
        out[y:y + p, x:x + p][missing] = atom[missing]
        region_filled[missing] = True

    if not filled.all():
        reason = ("iteration cap reached" if capped
                  else f"regions with fewer than {params.min_known} scanned pixels")
        warnings.warn(f"exemplar inpainting left {int((~filled).sum())} pixels "
                      f"unfilled ({reason}); falling back to natural neighbor",
                      RuntimeWarning)
        from .interpolation import interpolate
        fallback = interpolate(SparseImage(Image(out), filled), "nn")
        out = fallback.data.copy()

    out = np.where(observed, sparse.image.data, out)
    return Image(out)


# ---------------------------------------------------------------------------
# Dictionary file: b"PDC1\n<patch_size> <n_atoms>\n" + little-endian float32

def save_dictionary(dictionary: PatchDictionary, path) -> None:
    with open(path, "wb") as f:
        f.write(_PDC_MAGIC +
                f"\n{dictionary.patch_size} {len(dictionary)}\n".encode("ascii"))
        f.write(dictionary.atoms.astype("<f4").tobytes())


def load_dictionary(path) -> PatchDictionary:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(_PDC_MAGIC + b"\n"):
        raise CodecError(f"{path}: not a PDC1 dictionary file")
    header_end = raw.index(b"\n", len(_PDC_MAGIC) + 1)
    try:
        patch_size, count = (int(t)
                             for t in raw[len(_PDC_MAGIC) + 1:header_end].split())
    except ValueError:
        raise CodecError(f"{path}: malformed PDC1 header") from None
    body = raw[header_end + 1:]
    if len(body) != patch_size * patch_size * count * 4:
        raise CodecError(f"{path}: truncated atom data")
    atoms = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return PatchDictionary(patch_size, atoms.reshape(count, -1),
                           provenance=f"loaded from {path}")
