"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import map_coordinates
from scipy.optimize import lsq_linear


def patch(stack, x, y, r):
    return np.asarray(stack, dtype=np.float64)[y - r:y + r + 1, x - r:x + r + 1]


def gain_bias_oracle(s, t, bounds):
    """Box-constrained least squares for t ~ g*s + b via scipy's bounded solver."""
    A = np.stack([s.ravel(), np.ones(s.size)], axis=1)
    res = lsq_linear(A, t.ravel(), bounds=([bounds[0], bounds[2]], [bounds[1], bounds[3]]), method="bvls",
                     tol=1e-14)
    g, b = res.x
    return g, b, float(np.sum((t.ravel() - A @ res.x) ** 2))


def distance_oracle(stack, weights, target, source, r, gainbias=False, is_label=None, mismatch_cost=1.0,
                    bounds=(0.9, 1.1, -0.05, 0.05)):
    """Double loop over patch pixels and channels."""
    stack = np.asarray(stack, dtype=np.float64)
    nch = stack.shape[2]
    is_label = np.zeros(nch, bool) if is_label is None else np.asarray(is_label)
    T = patch(stack, *target, r)
    S = patch(stack, *source, r)
    total = 0.0
    gains, biases = [1.0] * 3, [0.0] * 3
    for c in range(nch):
        if c < 3 and gainbias:
            g, b, e = gain_bias_oracle(S[:, :, c], T[:, :, c], bounds)
            gains[c], biases[c] = g, b
            total += weights[c] * e
            continue
        acc = 0.0
        for j in range(2 * r + 1):
            for i in range(2 * r + 1):
                if is_label[c]:
                    acc += mismatch_cost**2 if S[j, i, c] != T[j, i, c] else 0.0
                else:
                    acc += (T[j, i, c] - S[j, i, c]) ** 2
        total += weights[c] * acc
    return total, np.array(gains), np.array(biases)


def exhaustive_nn(img, hole, r, valid, targets):
    """Exact nearest valid source for every target centre (RGB SSD, weights 1/3)."""
    img = np.asarray(img, dtype=np.float64)
    win = sliding_window_view(img, (2 * r + 1, 2 * r + 1), axis=(0, 1))  # (H-2r, W-2r, C, P, P)
    flat = win.reshape(win.shape[0], win.shape[1], -1)
    ty, tx = np.nonzero(targets)
    sy, sx = np.nonzero(valid)
    T = flat[ty - r, tx - r]
    S = flat[sy - r, sx - r]
    d = (T**2).sum(1)[:, None] + (S**2).sum(1)[None, :] - 2 * T @ S.T
    return np.maximum(d.min(axis=1), 0.0) / 3.0


def vote_oracle(stack, hole, nnf, r, gainbias):
    stack = np.asarray(stack, dtype=np.float64)
    acc = np.zeros(stack.shape[:2] + (3,))
    cnt = np.zeros(stack.shape[:2])
    ys, xs, sy, sx = nnf.source_centers()
    for y, x, syy, sxx in zip(ys, xs, sy, sx):
        j, i = y - nnf.y0, x - nnf.x0
        for v in range(-r, r + 1):
            for u in range(-r, r + 1):
                if not hole[y + v, x + u]:
                    continue
                s = stack[syy + v, sxx + u, :3]
                if gainbias:
                    s = nnf.gb[j, i, :3] * s + nnf.gb[j, i, 3:]
                acc[y + v, x + u] += s
                cnt[y + v, x + u] += 1
    out = stack[:, :, :3].copy()
    out[hole] = np.clip(acc[hole] / cnt[hole, None], 0, 1)
    return out


def bilinear_oracle(img, h, w):
    """Half-pixel-centred bilinear via scipy with edge clamping."""
    H, W = img.shape[:2]
    ys = (np.arange(h) + 0.5) * H / h - 0.5
    xs = (np.arange(w) + 0.5) * W / w - 0.5
    yy, xx = np.meshgrid(np.clip(ys, 0, H - 1), np.clip(xs, 0, W - 1), indexing="ij")
    return np.stack([map_coordinates(img[:, :, c].astype(np.float64), [yy, xx], order=1, mode="nearest")
                     for c in range(img.shape[2])], axis=2)


def auto_crop_oracle(mask, gamma=1.05, tau=0.25, base=512):
    """Step-by-step growth loop counting hole pixels directly in each window."""
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    ys, xs = np.nonzero(mask)
    bw, bh = xs.max() - xs.min() + 1, ys.max() - ys.min() + 1
    cx, cy = (xs.min() + xs.max() + 1) / 2, (ys.min() + ys.max() + 1) / 2

    def start(c, side, n):
        s0 = int(np.floor(c - side / 2))
        if side <= n:
            return max(0, min(s0, n - side))
        return max(min(s0, 0), n - side)

    s = float(max(base, bw, bh))
    while True:
        side = int(round(s))
        x, y = start(cx, side, W), start(cy, side, H)
        if side >= W or side >= H:
            return x, y, side
        window = mask[max(y, 0):y + side, max(x, 0):x + side]
        if np.count_nonzero(window) < tau * side * side:
            return x, y, side
        s *= gamma
