"""Beta-process factor analysis inpainting via Gibbs sampling.

Masked patches are modeled as x_i = D (z_i * s_i) + noise with binary atom
usage z drawn from per-atom beta-process probabilities (finite-K
approximation, following Zhou et al. 2012), weights s and dictionary D
Gaussian, and gamma priors on the noise and weight precisions. Only observed
pixels enter any likelihood, so the sampler learns its dictionary from the
sparse data itself. The reconstruction averages per-sweep posterior patch
means over the collection phase and restores measured pixels verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .ebi import PatchDictionary
from .image import (
    Image, PatchSet, SparseImage, assemble_patches, extract_patches,
)

__all__ = ["BpfaParams", "BpfaState", "bpfa_inpaint", "gibbs_sweep",
           "bpfa_dictionary"]


@dataclass(frozen=True)
class BpfaParams:
    n_atoms: int = 128          # K
    patch_size: int = 8
    stride: int = 2
    burn_in: int = 40
    collect: int = 40
    beta_a0: float = 1.0        # beta-process prior strength
    beta_b0: float = 1.0
    noise_c0: float = 1e-6      # gamma prior on the noise precision
    noise_d0: float = 1e-6
    weight_e0: float = 1e-6     # gamma prior on the weight precision
    weight_f0: float = 1e-6

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.burn_in < 1 or self.collect < 1:
            raise ValueError("burn_in and collect must be >= 1")
        for name in ("beta_a0", "beta_b0", "noise_c0", "noise_d0",
                     "weight_e0", "weight_f0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class BpfaState:
    """Chain state. Layouts are atom-major: D rows are atoms (K x P),
    z and s are (K x N) over patches."""

    dictionary: np.ndarray      # (K, P)
    z: np.ndarray               # (K, N) uint8
    s: np.ndarray               # (K, N)
    pi: np.ndarray              # (K,)
    gamma_eps: float            # noise precision
    gamma_s: float              # weight precision

    def patch_means(self) -> np.ndarray:
        """Posterior mean of every patch, (N, P): D'(z*s) per patch."""
        w = np.where(self.z.astype(bool), self.s, 0.0)
        return w.T @ self.dictionary

    def validate(self) -> None:
        assert set(np.unique(self.z)) <= {0, 1}
        assert ((self.pi >= 0) & (self.pi <= 1)).all()
        assert self.gamma_eps > 0 and self.gamma_s > 0
        assert np.isfinite(self.dictionary).all() and np.isfinite(self.s).all()


def _initial_state(params: BpfaParams, n_patches: int, patch_dim: int,
                   gen: np.random.Generator) -> BpfaState:
    """Chain start: prior-scale dictionary, nothing active, usage
    probabilities at their prior mean, and a deliberately coarse noise
    precision (sigma 0.5) so activation anneals from strong structure to
    detail instead of cascading everywhere in the first sweep."""
    k = params.n_atoms
    pi0 = params.beta_a0 / (params.beta_a0 + params.beta_b0 * (k - 1)) \
        if k > 1 else 0.5
    return BpfaState(
        dictionary=gen.standard_normal((k, patch_dim)) / np.sqrt(patch_dim),
        z=np.zeros((k, n_patches), dtype=np.uint8),
        s=np.zeros((k, n_patches)),
        pi=np.full(k, pi0),
        gamma_eps=4.0,
        gamma_s=1.0,
    )


def _masked_arrays(observations: PatchSet):
    x = np.ascontiguousarray(observations.patches)          # (N, P)
    if observations.known is not None:
        m = np.ascontiguousarray(observations.known, dtype=np.float64)
        x = x * m
    else:
        m = np.ones_like(x)
    return x, m


def _sweep_inplace(x, m, state: BpfaState, params: BpfaParams,
                   gen: np.random.Generator) -> None:
    """One full Gibbs sweep, mutating `state`. Update order: dictionary rows,
    then (z, s) per atom, then pi, then the two precisions. The random
    stream layout is fixed: (K,P) normals, (K,N) uniforms, (K,N) normals,
    K beta draws, 2 gamma draws."""
    k, n = state.z.shape
    w = np.where(state.z.astype(bool), state.s, 0.0)         # (K, N)
    r = m * (x - w.T @ state.dictionary)                     # (N, P)

    dict_normals = gen.standard_normal((k, state.dictionary.shape[1]))
    zs_uniforms = gen.random((k, n))
    zs_normals = gen.standard_normal((k, n))

    kernels.bpfa_sample_dictionary(r, m, w, state.dictionary,
                                   state.gamma_eps, dict_normals)
    kernels.bpfa_sample_zs(r, m, w, state.dictionary, state.z, state.s,
                           state.pi, state.gamma_eps, state.gamma_s,
                           zs_uniforms, zs_normals)

    counts = state.z.sum(axis=1).astype(np.float64)
    a = params.beta_a0 / params.n_atoms + counts
    b = params.beta_b0 * (params.n_atoms - 1) / params.n_atoms + (n - counts)
    state.pi = gen.beta(a, b)

    shape_s = params.weight_e0 + 0.5 * k * n
    rate_s = params.weight_f0 + 0.5 * float((state.s * state.s).sum())
    state.gamma_s = float(gen.gamma(shape_s, 1.0 / rate_s))

    observed = float(m.sum())
    shape_e = params.noise_c0 + 0.5 * observed
    rate_e = params.noise_d0 + 0.5 * float((r * r).sum())
    state.gamma_eps = float(gen.gamma(shape_e, 1.0 / rate_e))


def gibbs_sweep(state: BpfaState, observations: PatchSet, params: BpfaParams,
                rng) -> BpfaState:
    """One Gibbs sweep over all conditionals; returns a new state."""
    x, m = _masked_arrays(observations)
    if state.z.shape != (params.n_atoms, x.shape[0]):
        raise ValueError(
            f"state is {state.z.shape}, observations need "
            f"({params.n_atoms}, {x.shape[0]})")
    if state.dictionary.shape[1] != x.shape[1]:
        raise ValueError("state patch dimension != observation patch dimension")
    new = BpfaState(dictionary=state.dictionary.copy(), z=state.z.copy(),
                    s=state.s.copy(), pi=state.pi.copy(),
                    gamma_eps=state.gamma_eps, gamma_s=state.gamma_s)
    gen = getattr(rng, "generator", rng)
    _sweep_inplace(x, m, new, params, gen)
    return new


def bpfa_inpaint(sparse: SparseImage, params: BpfaParams, rng,
                 copy_observed: bool = True) -> Image:
    """Reconstruct a sparse scan by Gibbs sampling on its masked patches.

    Runs burn_in + collect sweeps; the output overlap-averages the posterior
    patch means accumulated over the collection phase. Measured pixels are
    written back verbatim unless copy_observed is False.
    """
    if sparse.sampled_count == 0:
        raise ValueError("cannot inpaint an empty sampling mask")
    ps = extract_patches(sparse, params.patch_size, params.stride)
    x, m = _masked_arrays(ps)
    gen = getattr(rng, "generator", rng)
    state = _initial_state(params, x.shape[0], x.shape[1], gen)
    for _ in range(params.burn_in):
        _sweep_inplace(x, m, state, params, gen)
    accum = np.zeros_like(x)
    for _ in range(params.collect):
        _sweep_inplace(x, m, state, params, gen)
        accum += state.patch_means()
    accum /= params.collect
    recon = assemble_patches(
        PatchSet(ps.patch_size, ps.positions, accum),
        sparse.width, sparse.height)
    if not copy_observed:
        return recon
    return Image(np.where(sparse.mask, sparse.image.data, recon.data))


def bpfa_dictionary(state: BpfaState, patch_size: int) -> PatchDictionary:
    """Export the learned atoms for inspection, each rescaled affinely to
    [0, 1] (constant atoms map to 0.5)."""
    atoms = state.dictionary.copy()
    lo = atoms.min(axis=1, keepdims=True)
    hi = atoms.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span.reshape(-1) == 0
    span[flat.reshape(-1, 1)] = 1.0
    scaled = (atoms - lo) / span
    scaled[flat] = 0.5
    return PatchDictionary(patch_size, scaled,
                           provenance=f"bpfa run, {atoms.shape[0]} atoms")
