"""Compiled per-keypoint loops for the SIFT stages.

Everything here works in octave pixel coordinates on float64 arrays.  Gradients
are central differences with the y axis pointing up, so angles run
counter-clockwise as the image is displayed.
"""
import math

import numpy as np
from numba import njit

ORI_BINS = 36
DESC_WIDTH = 4
DESC_BINS = 8
DESC_LEN = DESC_WIDTH * DESC_WIDTH * DESC_BINS
ORI_SIGMA_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0 * ORI_SIGMA_FACTOR
DESC_SCALE_FACTOR = 3.0
DESC_MAG_CLIP = 0.2
MAX_INTERP_STEPS = 5


@njit(cache=True)
def _solve3(h, g):
    # Cramer's rule; returns (ok, x) for h @ x = g
    a, b, c = h[0, 0], h[0, 1], h[0, 2]
    d, e, f = h[1, 0], h[1, 1], h[1, 2]
    p, q, r = h[2, 0], h[2, 1], h[2, 2]
    det = a * (e * r - f * q) - b * (d * r - f * p) + c * (d * q - e * p)
    out = np.zeros(3)
    if det == 0.0 or not math.isfinite(det):
        return False, out
    out[0] = (g[0] * (e * r - f * q) - b * (g[1] * r - f * g[2]) + c * (g[1] * q - e * g[2])) / det
    out[1] = (a * (g[1] * r - f * g[2]) - g[0] * (d * r - f * p) + c * (d * g[2] - g[1] * p)) / det
    out[2] = (a * (e * g[2] - g[1] * q) - b * (d * g[2] - g[1] * p) + g[0] * (d * q - e * p)) / det
    return True, out


@njit(cache=True)
def _derivatives(dog, layer, r, c, grad, hess):
    prev = dog[layer - 1]
    cur = dog[layer]
    nxt = dog[layer + 1]
    v2 = 2.0 * cur[r, c]
    grad[0] = (cur[r, c + 1] - cur[r, c - 1]) * 0.5
    grad[1] = (cur[r + 1, c] - cur[r - 1, c]) * 0.5
    grad[2] = (nxt[r, c] - prev[r, c]) * 0.5
    dxx = cur[r, c + 1] + cur[r, c - 1] - v2
    dyy = cur[r + 1, c] + cur[r - 1, c] - v2
    dss = nxt[r, c] + prev[r, c] - v2
    dxy = (cur[r + 1, c + 1] - cur[r + 1, c - 1] - cur[r - 1, c + 1] + cur[r - 1, c - 1]) * 0.25
    dxs = (nxt[r, c + 1] - nxt[r, c - 1] - prev[r, c + 1] + prev[r, c - 1]) * 0.25
    dys = (nxt[r + 1, c] - nxt[r - 1, c] - prev[r + 1, c] + prev[r - 1, c]) * 0.25
    hess[0, 0] = dxx
    hess[0, 1] = dxy
    hess[0, 2] = dxs
    hess[1, 0] = dxy
    hess[1, 1] = dyy
    hess[1, 2] = dys
    hess[2, 0] = dxs
    hess[2, 1] = dys
    hess[2, 2] = dss


@njit(cache=True)
def refine_extrema(dog, layers, rows, cols, n_layers, contrast_threshold, edge_threshold):
    """Quadratic sub-pixel refinement plus contrast and edge rejection.

    Returns per-candidate arrays ``(keep, layer_int, row_int, col_int,
    layer_off, row_off, col_off, value)``.
    """
    n = layers.shape[0]
    n_dog, h, w = dog.shape
    keep = np.zeros(n, dtype=np.bool_)
    out_l = np.zeros(n, dtype=np.int64)
    out_r = np.zeros(n, dtype=np.int64)
    out_c = np.zeros(n, dtype=np.int64)
    off_l = np.zeros(n)
    off_r = np.zeros(n)
    off_c = np.zeros(n)
    value = np.zeros(n)
    grad = np.zeros(3)
    hess = np.zeros((3, 3))
    edge_limit = (edge_threshold + 1.0) ** 2 / edge_threshold
    final_thresh = contrast_threshold / n_layers
    for i in range(n):
        layer, r, c = layers[i], rows[i], cols[i]
        converged = False
        x = np.zeros(3)
        for _ in range(MAX_INTERP_STEPS):
            _derivatives(dog, layer, r, c, grad, hess)
            ok, sol = _solve3(hess, grad)
            if not ok:
                break
            x[0] = -sol[0]
            x[1] = -sol[1]
            x[2] = -sol[2]
            if abs(x[0]) < 0.5 and abs(x[1]) < 0.5 and abs(x[2]) < 0.5:
                converged = True
                break
            if abs(x[0]) > 1e6 or abs(x[1]) > 1e6 or abs(x[2]) > 1e6:
                break
            c += int(np.round(x[0]))
            r += int(np.round(x[1]))
            layer += int(np.round(x[2]))
            if layer < 1 or layer > n_layers or c < 1 or c >= w - 1 or r < 1 or r >= h - 1:
                break
        if not converged:
            continue
        _derivatives(dog, layer, r, c, grad, hess)
        contrast = dog[layer, r, c] + 0.5 * (grad[0] * x[0] + grad[1] * x[1] + grad[2] * x[2])
        if abs(contrast) < final_thresh:
            continue
        tr = hess[0, 0] + hess[1, 1]
        det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[0, 1]
        if det <= 0.0 or tr * tr >= edge_limit * det:
            continue
        keep[i] = True
        out_l[i] = layer
        out_r[i] = r
        out_c[i] = c
        off_l[i] = x[2]
        off_r[i] = x[1]
        off_c[i] = x[0]
        value[i] = contrast
    return keep, out_l, out_r, out_c, off_l, off_r, off_c, value


@njit(cache=True)
def orientation_histograms(gauss, layer_idx, rows, cols, scales):
    """Smoothed 36-bin gradient orientation histogram for each keypoint."""
    n = rows.shape[0]
    _, h, w = gauss.shape
    hists = np.zeros((n, ORI_BINS))
    raw = np.zeros(ORI_BINS)
    tmp = np.zeros(ORI_BINS)
    for k in range(n):
        img = gauss[layer_idx[k]]
        sig = ORI_SIGMA_FACTOR * scales[k]
        radius = int(np.round(ORI_RADIUS_FACTOR * scales[k]))
        denom = -1.0 / (2.0 * sig * sig)
        raw[:] = 0.0
        yk, xk = rows[k], cols[k]
        for dy in range(-radius, radius + 1):
            y = yk + dy
            if y <= 0 or y >= h - 1:
                continue
            for dx in range(-radius, radius + 1):
                if dx * dx + dy * dy > radius * radius:
                    continue
                x = xk + dx
                if x <= 0 or x >= w - 1:
                    continue
                gx = img[y, x + 1] - img[y, x - 1]
                gy = img[y - 1, x] - img[y + 1, x]
                mag = math.sqrt(gx * gx + gy * gy)
                ang = math.degrees(math.atan2(gy, gx))
                b = int(np.round(ang * ORI_BINS / 360.0)) % ORI_BINS
                raw[b] += math.exp((dx * dx + dy * dy) * denom) * mag
        for _ in range(2):
            for b in range(ORI_BINS):
                tmp[b] = 0.25 * raw[(b - 1) % ORI_BINS] + 0.5 * raw[b] + 0.25 * raw[(b + 1) % ORI_BINS]
            raw[:] = tmp
        hists[k] = raw
    return hists


@njit(cache=True)
def descriptors(gauss, layer_idx, rows, cols, scales, angles):
    """128-d gradient descriptors; ``valid[k]`` is False when the window leaves the image."""
    n = rows.shape[0]
    _, h, w = gauss.shape
    d = DESC_WIDTH
    nb = DESC_BINS
    out = np.zeros((n, DESC_LEN))
    valid = np.zeros(n, dtype=np.bool_)
    hist = np.zeros((d + 2, d + 2, nb + 2))
    two_pi = 2.0 * math.pi
    bins_per_rad = nb / two_pi
    exp_scale = -1.0 / (0.5 * d * d)
    for k in range(n):
        img = gauss[layer_idx[k]]
        yk, xk = rows[k], cols[k]
        hist_width = DESC_SCALE_FACTOR * scales[k]
        theta = math.radians(angles[k])
        ct = math.cos(theta)
        st = math.sin(theta)
        half_extent = 0.5 * d * hist_width * (abs(ct) + abs(st))
        if xk - half_extent < 1.0 or xk + half_extent > w - 2.0 or yk - half_extent < 1.0 or yk + half_extent > h - 2.0:
            continue
        radius = int(np.round(hist_width * math.sqrt(2.0) * (d + 1) * 0.5))
        cos_t = ct / hist_width
        sin_t = st / hist_width
        hist[:, :, :] = 0.0
        for i in range(-radius, radius + 1):
            y = yk + i
            if y <= 0 or y >= h - 1:
                continue
            for j in range(-radius, radius + 1):
                x = xk + j
                if x <= 0 or x >= w - 1:
                    continue
                # offset (j, -i) in y-up coordinates, rotated into the keypoint frame
                u = j * cos_t - i * sin_t
                v = -j * sin_t - i * cos_t
                rbin = v + 0.5 * d - 0.5
                cbin = u + 0.5 * d - 0.5
                if rbin <= -1.0 or rbin >= d or cbin <= -1.0 or cbin >= d:
                    continue
                gx = img[y, x + 1] - img[y, x - 1]
                gy = img[y - 1, x] - img[y + 1, x]
                mag = math.sqrt(gx * gx + gy * gy) * math.exp((u * u + v * v) * exp_scale)
                rel = math.atan2(gy, gx) - theta
                rel = rel % two_pi
                obin = rel * bins_per_rad
                r0 = int(math.floor(rbin))
                c0 = int(math.floor(cbin))
                o0 = int(math.floor(obin))
                fr = rbin - r0
                fc = cbin - c0
                fo = obin - o0
                o0 = o0 % nb
                for dr in range(2):
                    wr = fr if dr else 1.0 - fr
                    for dc in range(2):
                        wc = fc if dc else 1.0 - fc
                        for do in range(2):
                            wo = fo if do else 1.0 - fo
                            hist[r0 + 1 + dr, c0 + 1 + dc, o0 + do] += mag * wr * wc * wo
        vec = out[k]
        for r in range(d):
            for c in range(d):
                hist[r + 1, c + 1, 0] += hist[r + 1, c + 1, nb]
                hist[r + 1, c + 1, 1] += hist[r + 1, c + 1, nb + 1]
                for o in range(nb):
                    vec[(r * d + c) * nb + o] = hist[r + 1, c + 1, o]
        norm = math.sqrt(np.sum(vec * vec))
        if norm == 0.0:
            continue
        for t in range(DESC_LEN):
            vec[t] = min(vec[t] / norm, DESC_MAG_CLIP)
        norm = math.sqrt(np.sum(vec * vec))
        for t in range(DESC_LEN):
            vec[t] /= norm
        valid[k] = True
    return out, valid
