"""Dense defocus map: matting-Laplacian propagation of the sparse values.

The matting Laplacian is assembled from local color statistics of the
guidance image over every interior 3x3 window; locally affine functions of
the guidance lie in its null space, so sparse values spread along color
structure. The dense map solves

    (L + D) x = gamma * b

where D is diagonal with gamma at the support pixels and b carries the
filtered sparse values. The system is symmetric positive definite, solved
with Jacobi-preconditioned conjugate gradients.
"""

import math

import numpy as np
import scipy.sparse as sparse
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import distance_transform_edt

from .edges import PatchSample
from .errors import InputError, NumericError
from .image import luma
from .sparse_map import SparseDefocusMap

WINDOW = 3  # matting window side; |w| = 9


def matting_laplacian(guide, eps):
    """Sparse symmetric PSD matting Laplacian of (h, w, 3) guidance."""
    guide = np.asarray(guide, dtype=np.float64)
    if guide.ndim != 3 or guide.shape[2] != 3:
        raise InputError("matting_laplacian expects (h, w, 3) guidance")
    if not np.all(np.isfinite(guide)):
        raise InputError("guidance contains non-finite values")
    h, w = guide.shape[:2]
    if h < WINDOW or w < WINDOW:
        raise InputError(f"guidance must be at least {WINDOW}x{WINDOW}")
    if eps <= 0:
        raise InputError("eps must be > 0")
    n = h * w
    area = WINDOW * WINDOW

    idx = np.arange(n).reshape(h, w)
    win = sliding_window_view(idx, (WINDOW, WINDOW)).reshape(-1, area)
    colors = guide.reshape(n, 3)[win]                      # (nw, 9, 3)
    mu = colors.mean(axis=1, keepdims=True)
    d = colors - mu
    cov = np.matmul(d.transpose(0, 2, 1), d) / area        # biased covariance
    inv = np.linalg.inv(cov + (eps / area) * np.eye(3))
    quad = np.matmul(np.matmul(d, inv), d.transpose(0, 2, 1))
    vals = np.eye(area) - (1.0 + quad) / area

    rows = np.repeat(win, area, axis=1).ravel()
    cols = np.tile(win, (1, area)).ravel()
    return sparse.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def conjugate_gradient(A, b, x0, tol, max_iter):
    """Jacobi-preconditioned CG for SPD systems.

    Convergence: ||r|| < tol * ||b||. Every 10 iterations the quadratic
    objective 0.5 x'Ax - b'x is checked; CG decreases it monotonically, so
    an increase signals a broken (non-SPD) system and raises NumericError,
    as does hitting the iteration cap.
    """
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NumericError("system diagonal must be positive for Jacobi CG")
    inv_diag = 1.0 / diag
    x = x0.astype(np.float64).copy()
    r = b - A @ x
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    phi_prev = math.inf
    for k in range(max_iter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        if k % 10 == 0 and k > 0:
            phi = 0.5 * float(x @ (A @ x)) - float(b @ x)
            if phi > phi_prev + 1e-10 * (1.0 + abs(phi_prev)):
                raise NumericError("CG objective increased; system is not SPD")
            phi_prev = phi
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    residual = float(np.linalg.norm(r)) / bnorm
    raise NumericError(f"CG did not converge in {max_iter} iterations "
                       f"(relative residual {residual:.3e})")


def solve_propagation(L, smap, cfg):
    """Dense map from the sparse one; output clamped to the sigma ladder."""
    if smap.count == 0:
        raise InputError("propagation needs a nonempty support")
    h, w = smap.sigma.shape
    n = h * w
    if L.shape != (n, n):
        raise InputError("Laplacian size does not match the map")
    support = smap.mask.ravel().astype(np.float64)
    gamma = cfg.gamma
    A = (L + sparse.diags(gamma * support)).tocsr()
    b = gamma * smap.sigma.ravel()
    # constants are in L's null space, so the support mean is a cheap start
    x0 = np.full(n, smap.sigma[smap.mask].mean())
    x = conjugate_gradient(A, b, x0, cfg.cg_tol, max_iter=10 * n)
    lo = cfg.sigma_min
    hi = cfg.sigma_max()
    return np.clip(x.reshape(h, w), lo, hi)


def add_random_seeds(smap, edges, img, model, cfg, rng, threads=1):
    """Classification seeds on a jittered grid inside edge-free regions.

    Pixels farther than seed_r_min from every detected edge get a large-
    scale patch classification each, filling in homogeneous areas the edge
    sampler cannot reach. Returns an augmented copy of the sparse map.
    """
    from .sparse_map import classify_to_sparse

    gen = rng.generator if hasattr(rng, "generator") else rng
    dist = distance_transform_edt(edges.labels == 0)
    h, w = smap.sigma.shape
    size = cfg.patch_large
    half = size // 2
    grid = max(1, cfg.seed_grid)
    jitter = cfg.seed_jitter
    data = img.data

    samples = []
    for gy in range(grid // 2, h, grid):
        for gx in range(grid // 2, w, grid):
            y = gy + int(gen.integers(-jitter, jitter + 1)) if jitter else gy
            x = gx + int(gen.integers(-jitter, jitter + 1)) if jitter else gx
            if not (half <= y < h - half and half <= x < w - half):
                continue
            if dist[y, x] <= cfg.seed_r_min:
                continue
            rgb = data[y - half:y + half + 1, x - half:x + half + 1]
            samples.append(PatchSample(x=x, y=y, scale="large", rgb=rgb,
                                       gray=luma(rgb), edge_strength=0.0))
    if not samples:
        return smap

    seeded = classify_to_sparse(model, samples, (h, w), threads=threads)
    sigma = smap.sigma.copy()
    conf = smap.conf.copy()
    mask = smap.mask.copy()
    new = seeded.mask & ~mask
    sigma[new] = seeded.sigma[new]
    conf[new] = seeded.conf[new]
    mask |= new
    return SparseDefocusMap(sigma=sigma, conf=conf, mask=mask)
