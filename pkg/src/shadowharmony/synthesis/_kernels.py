"""Compiled inner loops for patch matching and voting.

Field entries are stored as parallel arrays; ``geo`` packs the geometric part
of each match as columns (source x, source y, rotation, scale, reflected) and
``photo`` the photometric part (gain L, bias a, bias b, distance).
"""

import math

import numpy as np
from numba import config, njit, prange

if config.THREADING_LAYER == "default":
    config.THREADING_LAYER = "workqueue"

SX, SY, ROT, SCALE, REFL = 0, 1, 2, 3, 4
GAIN, BIAS_A, BIAS_B, DIST = 0, 1, 2, 3

# params layout: beta, gamma, gain_lo, gain_hi, bias_lo, bias_hi
# search layout: rot_lo, rot_hi, scale_lo, scale_hi, allow_reflection


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _uniform(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    return float(_mix(state[0]) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def seed_state(seed, stream):
    state = np.empty(1, dtype=np.uint64)
    state[0] = _mix(np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(stream))
    return state


@njit(cache=True, inline="always")
def _sample(img, valid, x, y, out):
    """Bilinear sample of all channels at (x, y); False when any tap leaves ``valid``."""
    h, w = valid.shape
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    if fx < 1e-9:
        fx = 0.0
    elif fx > 1.0 - 1e-9:
        fx = 0.0
        x0 += 1
    if fy < 1e-9:
        fy = 0.0
    elif fy > 1.0 - 1e-9:
        fy = 0.0
        y0 += 1
    x0 = int(x0)
    y0 = int(y0)
    x1 = x0 + 1 if fx > 0.0 else x0
    y1 = y0 + 1 if fy > 0.0 else y0
    if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
        return False
    if not (valid[y0, x0] and valid[y0, x1] and valid[y1, x0] and valid[y1, x1]):
        return False
    for c in range(img.shape[2]):
        top = (1.0 - fx) * img[y0, x0, c] + fx * img[y0, x1, c]
        bot = (1.0 - fx) * img[y1, x0, c] + fx * img[y1, x1, c]
        out[c] = (1.0 - fy) * top + fy * bot
    return True


@njit(cache=True, inline="always")
def _matrix(rot, scale, refl):
    c = math.cos(rot) * scale
    s = math.sin(rot) * scale
    f = -1.0 if refl > 0.5 else 1.0
    return c * f, -s, s * f, c


@njit(cache=True)
def patch_cost(cur, ini, src, srcvalid, tx, ty, sx, sy, rot, scale, refl, half, params, out):
    """Guided patch distance; writes (gain, bias_a, bias_b, dist) into ``out``."""
    beta, gamma = params[0], params[1]
    h, w = srcvalid.shape
    m00, m01, m10, m11 = _matrix(rot, scale, refl)
    q = np.empty(3)
    n = 0
    s1 = 0.0
    snn = 0.0
    snq = 0.0
    sqq = 0.0
    sda = 0.0
    sdda = 0.0
    sdb = 0.0
    sddb = 0.0
    for dy in range(-half, half + 1):
        py = ty + dy
        if py < 0 or py >= h:
            continue
        for dx in range(-half, half + 1):
            px = tx + dx
            if px < 0 or px >= w:
                continue
            qx = sx + m00 * dx + m01 * dy
            qy = sy + m10 * dx + m11 * dy
            if not _sample(src, srcvalid, qx, qy, q):
                out[3] = np.inf
                return
            for c in range(3):
                d = cur[py, px, c] - q[c]
                s1 += d * d
            nl = ini[py, px, 0]
            snn += nl * nl
            snq += nl * q[0]
            sqq += q[0] * q[0]
            da = ini[py, px, 1] - q[1]
            db = ini[py, px, 2] - q[2]
            sda += da
            sdda += da * da
            sdb += db
            sddb += db * db
            n += 1
    g = snq / snn if snn > 1e-12 else 1.0
    g = min(max(g, params[2]), params[3])
    ba = min(max(-sda / n, params[4]), params[5])
    bb = min(max(-sdb / n, params[4]), params[5])
    res = (g * g * snn - 2.0 * g * snq + sqq) + (sdda + 2.0 * ba * sda + n * ba * ba)
    res += sddb + 2.0 * bb * sdb + n * bb * bb
    if res < 0.0:
        res = 0.0
    out[0] = g
    out[1] = ba
    out[2] = bb
    out[3] = (
        math.sqrt(s1 / (3.0 * n))
        + beta * math.sqrt(res / (3.0 * n))
        + gamma * (abs(g - 1.0) + abs(ba) + abs(bb))
    )


@njit(cache=True, parallel=True)
def field_costs(cur, ini, src, srcvalid, targets, geo, photo, half, params):
    """Recompute photometric parameters and distance for every entry."""
    for i in prange(targets.shape[0]):
        out = np.empty(4)
        patch_cost(
            cur, ini, src, srcvalid, targets[i, 0], targets[i, 1],
            geo[i, SX], geo[i, SY], geo[i, ROT], geo[i, SCALE], geo[i, REFL],
            half, params, out,
        )
        photo[i, GAIN] = out[0]
        photo[i, BIAS_A] = out[1]
        photo[i, BIAS_B] = out[2]
        photo[i, DIST] = out[3]


@njit(cache=True, inline="always")
def _try(cur, ini, src, srcvalid, targets, geo, photo, i, sx, sy, rot, scale, refl, half, params, out):
    patch_cost(cur, ini, src, srcvalid, targets[i, 0], targets[i, 1], sx, sy, rot, scale, refl, half, params, out)
    if out[3] < photo[i, DIST]:
        geo[i, SX] = sx
        geo[i, SY] = sy
        geo[i, ROT] = rot
        geo[i, SCALE] = scale
        geo[i, REFL] = refl
        photo[i, GAIN] = out[0]
        photo[i, BIAS_A] = out[1]
        photo[i, BIAS_B] = out[2]
        photo[i, DIST] = out[3]


@njit(cache=True)
def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@njit(cache=True)
def pm_sweep(cur, ini, src, srcvalid, targets, index, geo, photo, half, params, search, state, reverse):
    """One scanline sweep of propagation plus random search; only strict improvements are kept."""
    n = targets.shape[0]
    h, w = srcvalid.shape
    out = np.empty(4)
    rot_lo, rot_hi = search[0], search[1]
    scale_lo, scale_hi = search[2], search[3]
    allow_refl = search[4] > 0.5
    rot_span = rot_hi - rot_lo
    full_circle = rot_span >= 2.0 * math.pi - 1e-9
    log_scale_span = math.log(scale_hi / scale_lo)
    step = -1 if reverse else 1
    radius0 = float(max(h, w))
    for k in range(n):
        i = n - 1 - k if reverse else k
        tx = targets[i, 0]
        ty = targets[i, 1]
        # propagation from the already-visited horizontal and vertical neighbours
        for axis in range(2):
            nx = tx - step if axis == 0 else tx
            ny = ty if axis == 0 else ty - step
            if nx < 0 or ny < 0 or nx >= w or ny >= h:
                continue
            j = index[ny, nx]
            if j < 0:
                continue
            m00, m01, m10, m11 = _matrix(geo[j, ROT], geo[j, SCALE], geo[j, REFL])
            ox = tx - nx
            oy = ty - ny
            _try(
                cur, ini, src, srcvalid, targets, geo, photo, i,
                geo[j, SX] + m00 * ox + m01 * oy, geo[j, SY] + m10 * ox + m11 * oy,
                geo[j, ROT], geo[j, SCALE], geo[j, REFL], half, params, out,
            )
        # random search with exponentially shrinking window
        radius = radius0
        while radius >= 1.0:
            frac = radius / radius0
            # window clipped to the image so no draw is wasted off the source
            xlo = max(geo[i, SX] - radius, 0.0)
            xhi = min(geo[i, SX] + radius, w - 1.0)
            ylo = max(geo[i, SY] - radius, 0.0)
            yhi = min(geo[i, SY] + radius, h - 1.0)
            cx = float(math.floor(xlo + _uniform(state) * (xhi - xlo) + 0.5))
            cy = float(math.floor(ylo + _uniform(state) * (yhi - ylo) + 0.5))
            crot = geo[i, ROT]
            if rot_span > 0.0:
                crot = crot + (2.0 * _uniform(state) - 1.0) * 0.5 * rot_span * frac
                if full_circle:
                    crot = _wrap_angle(crot)
                else:
                    crot = min(max(crot, rot_lo), rot_hi)
            cscale = geo[i, SCALE]
            if log_scale_span > 0.0:
                cscale = cscale * math.exp((2.0 * _uniform(state) - 1.0) * 0.5 * log_scale_span * frac)
                cscale = min(max(cscale, scale_lo), scale_hi)
            crefl = geo[i, REFL]
            if allow_refl and _uniform(state) < 0.5 * frac:
                crefl = 1.0 - crefl
            _try(cur, ini, src, srcvalid, targets, geo, photo, i, cx, cy, crot, cscale, crefl, half, params, out)
            radius *= 0.5


@njit(cache=True)
def vote_field(src, srcvalid, tmask, targets, geo, photo, half, acc, cnt):
    """Accumulate the source samples of every match onto target pixels; samples off the source are skipped."""
    h, w = tmask.shape
    q = np.empty(src.shape[2])
    for i in range(targets.shape[0]):
        tx = targets[i, 0]
        ty = targets[i, 1]
        m00, m01, m10, m11 = _matrix(geo[i, ROT], geo[i, SCALE], geo[i, REFL])
        for dy in range(-half, half + 1):
            py = ty + dy
            if py < 0 or py >= h:
                continue
            for dx in range(-half, half + 1):
                px = tx + dx
                if px < 0 or px >= w or not tmask[py, px]:
                    continue
                if _sample(src, srcvalid, geo[i, SX] + m00 * dx + m01 * dy, geo[i, SY] + m10 * dx + m11 * dy, q):
                    for c in range(src.shape[2]):
                        acc[py, px, c] += q[c]
                    cnt[py, px] += 1.0


@njit(cache=True)
def sample_patches(src, srcvalid, targets, geo, half, values, valid):
    """Resampled source patch content per entry, aligned with target offsets."""
    h, w = srcvalid.shape
    q = np.empty(src.shape[2])
    for i in range(targets.shape[0]):
        tx = targets[i, 0]
        ty = targets[i, 1]
        m00, m01, m10, m11 = _matrix(geo[i, ROT], geo[i, SCALE], geo[i, REFL])
        k = 0
        for dy in range(-half, half + 1):
            for dx in range(-half, half + 1):
                py = ty + dy
                px = tx + dx
                ok = False
                if py >= 0 and py < h and px >= 0 and px < w:
                    ok = _sample(src, srcvalid, geo[i, SX] + m00 * dx + m01 * dy, geo[i, SY] + m10 * dx + m11 * dy, q)
                valid[i, k] = ok
                for c in range(src.shape[2]):
                    values[i, k, c] = q[c] if ok else 0.0
                k += 1
