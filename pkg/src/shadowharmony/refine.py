"""Confidence-driven refinement of the correction map."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import LinearOperator, cg

from .exceptions import InputError
from .imaging import ImageBuf, local_stats, patch_stats

logger = logging.getLogger(__name__)

SINGULAR_REG = 1e-8


@dataclass(frozen=True)
class RefineConfig:
    lambda_s: float = 10.0
    sigma_m: float = 0.2
    cg_tol: float = 1e-8
    cg_max_iters: int = 2000

    def __post_init__(self):
        if self.lambda_s < 0:
            raise InputError("lambda_s must be non-negative")
        if self.sigma_m <= 0:
            raise InputError("sigma_m must be positive")


def gaussian(x, sigma):
    return np.exp(-(np.asarray(x, dtype=np.float64) ** 2) / sigma**2)


def affinity(initial, p, q, sigma_m=0.2):
    """Gaussian of the distance between the mean colors of patches ``p`` and ``q``."""
    mp, _ = patch_stats(initial, p)
    mq, _ = patch_stats(initial, q)
    return float(gaussian(np.linalg.norm(mp - mq), sigma_m))


def neighbour_edges(targets, shape):
    """Index pairs (i, j) of 4-connected entries, each unordered pair once."""
    grid = np.full(shape, -1, dtype=np.int64)
    grid[targets[:, 1], targets[:, 0]] = np.arange(len(targets))
    pairs = []
    for a, b in ((grid[:, :-1], grid[:, 1:]), (grid[:-1, :], grid[1:, :])):
        keep = (a >= 0) & (b >= 0)
        pairs.append(np.stack([a[keep], b[keep]], axis=1))
    return np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)


def patch_affinities(initial, targets, edges, sigma_m, patch_size=5):
    data = initial.data if isinstance(initial, ImageBuf) else np.asarray(initial, dtype=np.float64)
    mean, _, _ = local_stats(data, patch_size // 2)
    colors = mean[targets[:, 1], targets[:, 0]]
    d = np.linalg.norm(colors[edges[:, 0]] - colors[edges[:, 1]], axis=1)
    return gaussian(d, sigma_m)


def refine_energy(values, original, conf, edges, weights, lambda_s):
    """Data plus smoothness energy of one parameter channel.

    ``edges`` lists unordered neighbour pairs and ``weights`` their affinity;
    the smoothness term visits each pair from both ends, weighted by the
    visiting patch's ``1 - conf``.
    """
    i, j = edges[:, 0], edges[:, 1]
    diff2 = (values[i] - values[j]) ** 2
    smooth = ((1.0 - conf[i]) + (1.0 - conf[j])) * weights * diff2
    return float((conf * (values - original) ** 2).sum() + lambda_s * smooth.sum())


def refine_system(conf, edges, weights, lambda_s):
    """Symmetric system matrix whose solve minimizes ``refine_energy``.

    Returns the sparse matrix and a flag telling whether some connected group
    of patches has no confidence at all (the matrix is then singular).
    """
    n = len(conf)
    i, j = edges[:, 0], edges[:, 1]
    w = lambda_s * ((1.0 - conf[i]) + (1.0 - conf[j])) * weights
    off = sparse.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
    degree = np.bincount(i, weights=w, minlength=n) + np.bincount(j, weights=w, minlength=n)
    matrix = (sparse.diags(conf + degree) + off).tocsr()
    linked = w > 0
    graph = sparse.coo_matrix((np.ones(int(linked.sum())), (i[linked], j[linked])), shape=(n, n))
    n_groups, labels = csgraph.connected_components(graph, directed=False)
    anchored = np.zeros(n_groups, dtype=bool)
    anchored[labels[conf > 0]] = True
    return matrix, not anchored.all()


def _solve(matrix, rhs, guess, cfg):
    diag = matrix.diagonal()
    precond = LinearOperator(matrix.shape, matvec=lambda v: v / diag, dtype=np.float64)
    x, info = cg(matrix, rhs, x0=guess, rtol=cfg.cg_tol, atol=0.0, maxiter=cfg.cg_max_iters, M=precond)
    if info > 0:
        logger.warning("conjugate gradient stopped after %d iterations without converging", info)
    return x


def refine_color(cmap, initial, cfg=None, patch_size=5):
    """Propagate color parameters from confident patches to unreliable ones.

    Each active gain/bias channel is the minimizer of ``refine_energy`` for
    that channel; confidence and texture scale are returned unchanged.
    """
    cfg = cfg or RefineConfig()
    if len(cmap) == 0:
        return cmap
    conf = np.clip(cmap.confidence, 0.0, 1.0)
    edges = neighbour_edges(cmap.targets, cmap.shape)
    weights = patch_affinities(initial, cmap.targets, edges, cfg.sigma_m, patch_size)
    matrix, singular = refine_system(conf, edges, weights, cfg.lambda_s)
    reg = np.zeros(len(conf))
    if singular:
        warnings.warn("refinement system is singular; regularizing toward the initial estimates", RuntimeWarning)
        reg[:] = SINGULAR_REG
        matrix = (matrix + sparse.diags(reg)).tocsr()

    gain, bias = cmap.gain.copy(), cmap.bias.copy()
    for c in cmap.model.active_channels:
        for table, enabled in ((gain, cmap.model.gain_channels[c]), (bias, cmap.model.bias_channels[c])):
            if not enabled:
                continue
            original = table[:, c].copy()
            table[:, c] = _solve(matrix, (conf + reg) * original, original, cfg)
    return cmap.replace(gain=gain, bias=bias)


def refine_texture(cmap):
    """Blend texture scale toward 1 where confidence is low."""
    conf = cmap.confidence
    return cmap.replace(texture_scale=conf * cmap.texture_scale + (1.0 - conf))
