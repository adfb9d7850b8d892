"""Independent brute-force reference implementations used by the tests.

Nothing here calls into the package's numerical code; each oracle recomputes
its quantity directly from the definitions with plain numpy.
"""

import numpy as np


def patch_block(data, x, y, half):
    return data[y - half:y + half + 1, x - half:x + half + 1].reshape(-1, data.shape[2])


def guided_distance(cur, ini, q, beta, gamma, gain_range, bias_range):
    """Guided distance of already-gathered patches; ``q`` may carry a leading batch axis."""
    q = np.asarray(q, dtype=np.float64)
    k = cur.shape[0]
    appearance = np.sqrt(((cur - q) ** 2).sum(axis=(-1, -2)) / (3 * k))
    nl = ini[:, 0]
    snn = (nl * nl).sum()
    g = (q[..., 0] * nl).sum(axis=-1) / snn if snn > 1e-12 else np.ones(q.shape[:-2])
    g = np.clip(g, *gain_range)
    ba = np.clip((q[..., 1] - ini[:, 1]).mean(axis=-1), *bias_range)
    bb = np.clip((q[..., 2] - ini[:, 2]).mean(axis=-1), *bias_range)
    fitted = np.stack(
        [np.multiply.outer(g, nl), ini[:, 1] + np.asarray(ba)[..., None], ini[:, 2] + np.asarray(bb)[..., None]],
        axis=-1,
    )
    guide = np.sqrt(((fitted - q) ** 2).sum(axis=(-1, -2)) / (3 * k))
    penalty = np.abs(g - 1.0) + np.abs(ba) + np.abs(bb)
    return appearance + beta * guide + gamma * penalty


def full_source_centers(mask, half):
    h, w = mask.shape
    centers = []
    for y in range(half, h - half):
        for x in range(half, w - half):
            if not mask[y - half:y + half + 1, x - half:x + half + 1].any():
                centers.append((x, y))
    return np.array(centers)


def exhaustive_field(cur, ini, src, mask, half, beta, gamma, gain_range, bias_range):
    """Per target pixel (row-major over the mask), the minimum distance over every integer source patch."""
    centers = full_source_centers(mask, half)
    stack = np.stack([patch_block(src, x, y, half) for x, y in centers])
    ys, xs = np.nonzero(mask)
    best = np.empty(len(xs))
    for i, (x, y) in enumerate(zip(xs, ys)):
        d = guided_distance(patch_block(cur, x, y, half), patch_block(ini, x, y, half), stack,
                            beta, gamma, gain_range, bias_range)
        best[i] = d.min()
    return best


def dense_refine(values, conf, targets, shape, image, lambda_s, sigma_m, half):
    """Minimizer of the refinement energy via an explicit dense normal-equation solve."""
    n = len(values)
    index = {(int(x), int(y)): i for i, (x, y) in enumerate(targets)}
    h, w = image.shape[:2]
    means = []
    for x, y in targets:
        block = image[max(0, y - half):min(h, y + half + 1), max(0, x - half):min(w, x + half + 1)]
        means.append(block.reshape(-1, image.shape[2]).mean(axis=0))
    means = np.array(means)
    A = np.diag(np.asarray(conf, dtype=np.float64))
    for (x, y), i in index.items():
        for nx, ny in ((x + 1, y), (x, y + 1)):
            j = index.get((nx, ny))
            if j is None:
                continue
            a = np.exp(-np.sum((means[i] - means[j]) ** 2) / sigma_m**2)
            wij = lambda_s * ((1 - conf[i]) + (1 - conf[j])) * a
            A[i, i] += wij
            A[j, j] += wij
            A[i, j] -= wij
            A[j, i] -= wij
    return np.linalg.solve(A, conf * values)


def grid_confidence_residual(nv, sv, gain_range, bias_range, step=1e-3):
    """Minimum RMS residual of ``(g*N_L, N_a+b_a, N_b+b_b)`` against ``S`` over a parameter grid."""
    k = len(nv)
    gains = np.arange(gain_range[0], gain_range[1] + step / 2, step)
    biases = np.arange(bias_range[0], bias_range[1] + step / 2, step)
    # the squared residual separates by channel, so each grid is searched on its own
    rl = ((np.multiply.outer(gains, nv[:, 0]) - sv[:, 0]) ** 2).sum(1).min()
    ra = ((nv[:, 1] + biases[:, None] - sv[:, 1]) ** 2).sum(1).min()
    rb = ((nv[:, 2] + biases[:, None] - sv[:, 2]) ** 2).sum(1).min()
    return float(np.sqrt((rl + ra + rb) / (3 * k)))


def exhaustive_argmin(cur, ini, src, mask, half, beta, gamma, gain_range, bias_range):
    """Like ``exhaustive_field`` but also returns the winning source centre per target."""
    centers = full_source_centers(mask, half)
    stack = np.stack([patch_block(src, x, y, half) for x, y in centers])
    ys, xs = np.nonzero(mask)
    best = np.empty(len(xs))
    where = np.empty((len(xs), 2), dtype=np.int64)
    for i, (x, y) in enumerate(zip(xs, ys)):
        d = guided_distance(patch_block(cur, x, y, half), patch_block(ini, x, y, half), stack,
                            beta, gamma, gain_range, bias_range)
        j = int(np.argmin(d))
        best[i], where[i] = d[j], centers[j]
    return best, where
