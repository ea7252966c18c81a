"""Analysis-operator learning and operator-regularized restoration.

An overcomplete operator (k rows of unit norm, k > patch dimension) is
trained so that its response to natural patches is sparse, in the spirit of
geometric analysis operator learning (Hawe et al. 2013), then used as a
patch prior: denoising solves a quadratic-fidelity problem, inpainting pins
observed pixels as hard constraints. The sparsity surrogate is the smoothed
absolute value rho(t) = sqrt(t^2 + eps^2) - eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CodecError
from .image import Image, PatchSet, SparseImage, assemble_patches, extract_patches

__all__ = [
    "AnalysisOperator", "GoalParams", "difference_operator", "learn_operator",
    "operator_denoise", "operator_inpaint", "save_operator", "load_operator",
]

_AOP_MAGIC = b"AOP1"


class AnalysisOperator:
    """k x n analysis operator with unit-norm rows, k > n."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.float64, copy=True)
        if m.ndim != 2:
            raise ValueError("operator must be a 2-D matrix")
        k, n = m.shape
        if k <= n:
            raise ValueError(f"operator must be overcomplete (k > n), got {k}x{n}")
        if not np.all(np.isfinite(m)):
            raise ValueError("operator contains non-finite entries")
        norms = np.linalg.norm(m, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValueError("operator rows must have unit Euclidean norm")
        m.flags.writeable = False
        self.matrix = m

    @property
    def n_filters(self) -> int:
        return self.matrix.shape[0]

    @property
    def patch_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def patch_size(self) -> int:
        p = int(round(self.matrix.shape[1] ** 0.5))
        if p * p != self.matrix.shape[1]:
            raise ValueError("operator patch dimension is not a perfect square")
        return p


@dataclass(frozen=True)
class GoalParams:
    lam: float = 0.05          # regularization weight (denoising)
    eps: float = 1e-4          # sparsity surrogate smoothing
    max_iters: int = 150
    tol: float = 1e-9          # objective-improvement stopping tolerance
    patch_size: int = 8
    stride: int = 4
    rank_weight: float = 0.01  # log-det full-rank penalty (learning only)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


def _rho(t, eps):
    return np.sqrt(t * t + eps * eps) - eps


def _rho_prime(t, eps):
    return t / np.sqrt(t * t + eps * eps)


def difference_operator(patch_size: int) -> AnalysisOperator:
    """Normalized first-difference rows (horizontal and vertical neighbors
    inside the patch); a hand-built gradient-sparsity operator."""
    p = patch_size
    rows = []
    for y in range(p):
        for x in range(p - 1):
            r = np.zeros(p * p)
            r[y * p + x] = -1.0
            r[y * p + x + 1] = 1.0
            rows.append(r)
    for y in range(p - 1):
        for x in range(p):
            r = np.zeros(p * p)
            r[y * p + x] = -1.0
            r[(y + 1) * p + x] = 1.0
            rows.append(r)
    m = np.asarray(rows) / np.sqrt(2.0)
    return AnalysisOperator(m)


# ---------------------------------------------------------------------------
# Learning

def _normalize_rows(m):
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def _project_rows(m):
    """Learning constraint set: zero-mean (brightness-invariant filters,
    so reconstruction penalties cannot punish the unknown patch offset)
    and unit-norm rows."""
    return _normalize_rows(m - m.mean(axis=1, keepdims=True))


def _learn_objective(omega, x, eps, rank_weight):
    sparsity = _rho(omega @ x, eps).sum() / x.shape[1]
    sign, logdet = np.linalg.slogdet(omega.T @ omega)
    if sign <= 0:
        return np.inf, sparsity
    return sparsity - rank_weight * logdet, sparsity


def _learn(x, k, params: GoalParams, rng) -> tuple[np.ndarray, list[float]]:
    n, count = x.shape
    omega = _project_rows(rng.standard_normal((k, n)))
    f, _ = _learn_objective(omega, x, params.eps, params.rank_weight)
    history = [f]
    best, best_f = omega, f
    step = 1.0
    for _ in range(params.max_iters):
        a = omega @ x
        grad = (_rho_prime(a, params.eps) @ x.T) / count
        gram_inv = np.linalg.inv(omega.T @ omega)
        grad -= params.rank_weight * 2.0 * (omega @ gram_inv)
        accepted = False
        for _ in range(30):
            cand = _project_rows(omega - step * grad)
            fc, _ = _learn_objective(cand, x, params.eps, params.rank_weight)
            if fc < f:
                omega, f = cand, fc
                step = min(step * 1.5, 10.0)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        history.append(f)
        if f < best_f:
            best, best_f = omega, f
        if len(history) > 2 and history[-2] - history[-1] < params.tol:
            break
    return best, history


def learn_operator(training: PatchSet, k: int, params: GoalParams,
                   rng) -> AnalysisOperator:
    """Learn a k-row unit-norm operator whose response to the training
    patches is maximally sparse (projected gradient descent with a log-det
    full-rank penalty). Training patches should be mean-subtracted.

    `rng` is a SeededRng (or anything exposing .generator).
    """
    x = np.ascontiguousarray(training.patches.T)  # (n, N)
    n = x.shape[0]
    if k <= n:
        raise ValueError(f"k must exceed the patch dimension ({k} <= {n})")
    if x.shape[1] < k:
        raise ValueError(f"need at least k={k} training patches, got {x.shape[1]}")
    gen = getattr(rng, "generator", rng)
    omega, _ = _learn(x, k, params, gen)
    return AnalysisOperator(omega)


# ---------------------------------------------------------------------------
# Batched nonlinear conjugate gradients over patch columns

def _batched_ncg(x0, objective, gradient, free, max_iters, tol, step0=1.0):
    """Minimize independent per-column objectives simultaneously
    (Polak-Ribiere nonlinear CG with Armijo backtracking).

    `objective(x, cols)` and `gradient(x, cols)` evaluate the given column
    subset; `free` (or None) masks the coordinates allowed to move. Each
    column's objective never increases; columns that stop improving leave
    the active set, so late iterations only touch the hard stragglers."""
    x = x0.copy()
    active = np.arange(x.shape[1])
    xa = x.copy()
    fa = objective(xa, active)
    g = gradient(xa, active)
    if free is not None:
        g = g * free
    d = -g
    gg = (g * g).sum(axis=0)
    for _ in range(max_iters):
        gd = (g * d).sum(axis=0)
        bad = gd >= 0
        if bad.any():  # restart non-descent columns along steepest descent
            d[:, bad] = -g[:, bad]
            gd = (g * d).sum(axis=0)
        t = np.full(active.size, step0)
        accepted = np.zeros(active.size, dtype=bool)
        fc = fa.copy()
        xc = xa.copy()
        live = gd < 0
        for _ in range(30):
            todo = np.nonzero(live & ~accepted)[0]
            if todo.size == 0:
                break
            trial = xa[:, todo] + t[todo][None, :] * d[:, todo]
            ft = objective(trial, active[todo])
            ok = ft <= fa[todo] + 1e-4 * t[todo] * gd[todo]
            sel = todo[ok]
            if sel.size:
                xc[:, sel] = trial[:, ok]
                fc[sel] = ft[ok]
                accepted[sel] = True
            t[todo[~ok]] *= 0.5
        x[:, active[accepted]] = xc[:, accepted]
        keep = np.nonzero(accepted & (fa - fc >= tol))[0]
        if keep.size == 0:
            break
        active = active[keep]
        xa = np.ascontiguousarray(xc[:, keep])
        fa = fc[keep]
        g_old = g[:, keep]
        g = gradient(xa, active)
        if free is not None:
            free = free[:, keep]
            g = g * free
        beta = np.maximum(0.0, (g * (g - g_old)).sum(axis=0)
                          / np.maximum(gg[keep], 1e-300))
        d = -g + beta[None, :] * d[:, keep]
        gg = (g * g).sum(axis=0)
    return x


def operator_denoise(image: Image, op: AnalysisOperator,
                     params: GoalParams) -> Image:
    """Patchwise denoising: min_x 0.5 ||x - y||^2 + lam * sum rho(Omega x),
    overlap-averaged. lam = 0 returns the input exactly."""
    if params.lam == 0:
        return image
    ps = extract_patches(image, params.patch_size, params.stride)
    y = np.ascontiguousarray(ps.patches.T)  # (n, N)
    om = op.matrix
    lam, eps = params.lam, params.eps

    def objective(x, cols):
        return (0.5 * ((x - y[:, cols]) ** 2).sum(axis=0)
                + lam * _rho(om @ x, eps).sum(axis=0))

    def gradient(x, cols):
        return (x - y[:, cols]) + lam * (om.T @ _rho_prime(om @ x, eps))

    x = _batched_ncg(y, objective, gradient, None, params.max_iters, params.tol)
    out = PatchSet(ps.patch_size, ps.positions, np.ascontiguousarray(x.T))
    return assemble_patches(out, image.width, image.height)


def operator_inpaint(sparse: SparseImage, op: AnalysisOperator,
                     params: GoalParams) -> Image:
    """Patchwise inpainting: min_x sum rho(Omega x) subject to x = y on the
    observed pixels (hard constraint), overlap-averaged; observed pixels are
    restored verbatim in the final image."""
    if sparse.sampled_count == 0:
        raise ValueError("cannot inpaint an empty sampling mask")
    if sparse.mask.all():
        return Image(sparse.image.data)
    ps = extract_patches(sparse, params.patch_size, params.stride)
    y = np.ascontiguousarray(ps.patches.T)        # (n, N), unobserved zeroed
    known = np.ascontiguousarray(ps.known.T)      # (n, N) bool
    free = (~known).astype(np.float64)
    om = op.matrix
    eps = params.eps

    # start missing coordinates at the mean of each patch's observed pixels
    counts = known.sum(axis=0)
    means = np.where(counts > 0, y.sum(axis=0) / np.maximum(counts, 1), 0.5)
    x0 = np.where(known, y, means[None, :])

    def objective(x, cols):
        return _rho(om @ x, eps).sum(axis=0)

    def gradient(x, cols):
        return om.T @ _rho_prime(om @ x, eps)

    x = _batched_ncg(x0, objective, gradient, free, params.max_iters, params.tol)
    out = PatchSet(ps.patch_size, ps.positions, np.ascontiguousarray(x.T))
    assembled = assemble_patches(out, sparse.width, sparse.height)
    merged = np.where(sparse.mask, sparse.image.data, assembled.data)
    return Image(merged)


# ---------------------------------------------------------------------------
# Operator file format: b"AOP1\n<k> <n>\n" + row-major little-endian float64

def save_operator(op: AnalysisOperator, path) -> None:
    k, n = op.matrix.shape
    with open(path, "wb") as f:
        f.write(_AOP_MAGIC + f"\n{k} {n}\n".encode("ascii"))
        f.write(op.matrix.astype("<f8").tobytes())


def load_operator(path) -> AnalysisOperator:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(_AOP_MAGIC + b"\n"):
        raise CodecError(f"{path}: not an AOP1 operator file")
    header_end = raw.index(b"\n", len(_AOP_MAGIC) + 1)
    try:
        k, n = (int(t) for t in raw[len(_AOP_MAGIC) + 1:header_end].split())
    except ValueError:
        raise CodecError(f"{path}: malformed AOP1 header") from None
    body = raw[header_end + 1:]
    if len(body) != k * n * 8:
        raise CodecError(f"{path}: truncated operator data")
    m = np.frombuffer(body, dtype="<f8").reshape(k, n)
    return AnalysisOperator(m)
