"""Guided PatchMatch over a stacked RGB + guide image.

Targets are the patch centres whose square patch overlaps the hole; sources
are patch centres whose whole patch lies inside the image and outside the
hole. Distances are per-channel weighted SSD; label channels count
mismatching pixels instead, and the RGB part can be compensated by a
per-patch, per-channel gain and bias fitted in closed form under box
constraints.

The numeric kernels are serial numba loops (the reference mode): scanline
propagation is order dependent, so determinism requires one writer per field.
Randomness comes from an explicit xorshift64* state array so that results
depend only on the seed, never on which thread runs the kernel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.ndimage import maximum_filter1d

from .guides import GuideWeights


class PatchMatchError(ValueError):
    pass


@dataclass(frozen=True)
class PatchParams:
    patch_size: int = 7
    pm_iterations: int = 5
    search_radius_decay: float = 0.5
    rng_seed: int = 0
    gain_min: float = 0.9
    gain_max: float = 1.1
    bias_min: float = -0.05
    bias_max: float = 0.05
    mismatch_cost: float = 1.0

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd and >= 3")
        if not 0 < self.search_radius_decay < 1:
            raise ValueError("search_radius_decay must lie in (0, 1)")
        if self.gain_min > self.gain_max or self.bias_min > self.bias_max:
            raise ValueError("gain/bias bounds are inverted")
        if self.pm_iterations < 1:
            raise ValueError("pm_iterations must be >= 1")

    @property
    def radius(self) -> int:
        return self.patch_size // 2

    def bounds(self) -> np.ndarray:
        return np.array([self.gain_min, self.gain_max, self.bias_min, self.bias_max], dtype=np.float64)


@dataclass
class NNField:
    """Nearest-neighbour field over the bounding box of the target set.

    Array index ``[j, i]`` is the target centred at image pixel
    ``(x0 + i, y0 + j)``; its source patch is centred at ``(x + dx, y + dy)``.
    """

    width: int
    height: int
    x0: int
    y0: int
    targets: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dist: np.ndarray
    gb: np.ndarray  # (bh, bw, 6): gains for RGB then biases for RGB
    history: list = field(default_factory=list)

    @property
    def gain(self) -> np.ndarray:
        return self.gb[:, :, :3]

    @property
    def bias(self) -> np.ndarray:
        return self.gb[:, :, 3:]

    @property
    def target_count(self) -> int:
        return int(self.targets.sum())

    def total_distance(self) -> float:
        return float(self.dist[self.targets].sum())

    def mean_distance(self) -> float:
        n = self.target_count
        return self.total_distance() / n if n else 0.0

    def source_centers(self):
        """Absolute source centres for every target, as (ys, xs, sy, sx) arrays."""
        jj, ii = np.nonzero(self.targets)
        ys, xs = jj + self.y0, ii + self.x0
        return ys, xs, ys + self.dy[jj, ii], xs + self.dx[jj, ii]

    def copy(self) -> "NNField":
        return NNField(
            self.width, self.height, self.x0, self.y0, self.targets.copy(), self.dx.copy(),
            self.dy.copy(), self.dist.copy(), self.gb.copy(), list(self.history),
        )

    def dump(self, path) -> None:
        """Little-endian int32 width, height, then (dx, dy, distance) per pixel, row-major.

        Non-target pixels are written as ``(0, 0, -1.0)``.
        """
        w, h = self.width, self.height
        rec = np.zeros((h, w), dtype=[("dx", "<i4"), ("dy", "<i4"), ("d", "<f4")])
        rec["d"] = -1.0
        bh, bw = self.targets.shape
        view = rec[self.y0:self.y0 + bh, self.x0:self.x0 + bw]
        t = self.targets
        view["dx"][t] = self.dx[t]
        view["dy"][t] = self.dy[t]
        view["d"][t] = self.dist[t]
        with open(path, "wb") as f:
            f.write(struct.pack("<ii", w, h))
            f.write(rec.tobytes())


def load_nnf_dump(path):
    """Read a dump back as (dx, dy, distance) arrays of the full image size."""
    with open(path, "rb") as f:
        w, h = struct.unpack("<ii", f.read(8))
        rec = np.frombuffer(f.read(), dtype=[("dx", "<i4"), ("dy", "<i4"), ("d", "<f4")], count=w * h)
    rec = rec.reshape(h, w)
    return rec["dx"].copy(), rec["dy"].copy(), rec["d"].copy()


# ---------------------------------------------------------------------------
# masks


def _dilate(mask: np.ndarray, r: int) -> np.ndarray:
    m = mask.astype(np.uint8)
    m = maximum_filter1d(m, 2 * r + 1, axis=0, mode="constant")
    m = maximum_filter1d(m, 2 * r + 1, axis=1, mode="constant")
    return m.astype(bool)


def valid_source_map(hole: np.ndarray, r: int) -> np.ndarray:
    """Patch centres whose patch is fully in bounds and hole-free."""
    hole = np.asarray(hole, dtype=bool)
    h, w = hole.shape
    valid = ~_dilate(hole, r)
    border = np.zeros((h, w), dtype=bool)
    if h > 2 * r and w > 2 * r:
        border[r:h - r, r:w - r] = True
    return valid & border


def target_map(hole: np.ndarray, r: int) -> np.ndarray:
    """Patch centres (fully in bounds) whose patch overlaps the hole."""
    hole = np.asarray(hole, dtype=bool)
    h, w = hole.shape
    tgt = _dilate(hole, r)
    tgt[:r] = False
    tgt[h - r:] = False
    tgt[:, :r] = False
    tgt[:, w - r:] = False
    return tgt


# ---------------------------------------------------------------------------
# numba kernels


_MULT = np.uint64(0x2545F4914F6CDD1D)


@nb.njit(cache=True, nogil=True)
def _rand_u64(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * _MULT


@nb.njit(cache=True, nogil=True)
def _rand_int(state, lo, hi):
    """Uniform integer in [lo, hi]."""
    span = np.uint64(hi - lo + 1)
    return lo + np.int64((_rand_u64(state) >> np.uint64(11)) % span)


def make_rng_state(seed: int, stream: int = 0) -> np.ndarray:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream) & 0xFFFFFFFF])
    v = ss.generate_state(2, dtype=np.uint64)
    x = np.uint64(v[0] | np.uint64(1))
    return np.array([x], dtype=np.uint64)


@nb.njit(cache=True, nogil=True)
def _gb_energy(g, b, Ss, St, Sss, Sst, Stt, n):
    e = Stt - 2.0 * g * Sst - 2.0 * b * St + g * g * Sss + 2.0 * g * b * Ss + n * b * b
    return e if e > 0.0 else 0.0


@nb.njit(cache=True, nogil=True)
def _clamp(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@nb.njit(cache=True, nogil=True)
def fit_gain_bias(Ss, St, Sss, Sst, Stt, n, gmin, gmax, bmin, bmax):
    """Minimise sum((t - g*s - b)^2) over the box [gmin, gmax] x [bmin, bmax].

    Returns (gain, bias, residual energy).
    """
    inv_n = 1.0 / n
    var_s = Sss - Ss * Ss * inv_n
    if var_s > 1e-12:
        g = (Sst - Ss * St * inv_n) / var_s
    else:
        g = 1.0
    b = (St - g * Ss) * inv_n
    if gmin <= g <= gmax and bmin <= b <= bmax:
        return g, b, _gb_energy(g, b, Ss, St, Sss, Sst, Stt, n)
    # optimum lies on the boundary: best of the four clamped edge minimisers
    inv_sss = 1.0 / Sss if Sss > 0.0 else 0.0
    best_g = _clamp(1.0, gmin, gmax)
    best_b = _clamp(0.0, bmin, bmax)
    best_e = _gb_energy(best_g, best_b, Ss, St, Sss, Sst, Stt, n)
    for k in range(4):
        if k < 2:
            gg = gmin if k == 0 else gmax
            bb = _clamp((St - gg * Ss) * inv_n, bmin, bmax)
        else:
            bb = bmin if k == 2 else bmax
            if Sss > 0.0:
                gg = _clamp((Sst - bb * Ss) * inv_sss, gmin, gmax)
            else:
                gg = _clamp(1.0, gmin, gmax)
        e = _gb_energy(gg, bb, Ss, St, Sss, Sst, Stt, n)
        if e < best_e:
            best_e = e
            best_g = gg
            best_b = bb
    return best_g, best_b, best_e


@nb.njit(cache=True, nogil=True)
def _box_stats(stack, r):
    """Per-centre patch sums and sums of squares of the RGB channels (zero near borders)."""
    h, w = stack.shape[0], stack.shape[1]
    bs = np.zeros((h, w, 3))
    bq = np.zeros((h, w, 3))
    rs = np.zeros((h, w, 3))
    rq = np.zeros((h, w, 3))
    for y in range(h):
        for x in range(r, w - r):
            for c in range(3):
                a = 0.0
                q = 0.0
                for i in range(-r, r + 1):
                    v = float(stack[y, x + i, c])
                    a += v
                    q += v * v
                rs[y, x, c] = a
                rq[y, x, c] = q
    for y in range(r, h - r):
        for x in range(r, w - r):
            for c in range(3):
                a = 0.0
                q = 0.0
                for j in range(-r, r + 1):
                    a += rs[y + j, x, c]
                    q += rq[y + j, x, c]
                bs[y, x, c] = a
                bq[y, x, c] = q
    return bs, bq


@nb.njit(cache=True, nogil=True)
def _guide_distance(stack, tx, ty, sx, sy, r, weights, is_label, mc2, total, cutoff):
    nch = stack.shape[2]
    for j in range(-r, r + 1):
        for i in range(-r, r + 1):
            for c in range(3, nch):
                s = stack[sy + j, sx + i, c]
                t = stack[ty + j, tx + i, c]
                if is_label[c]:
                    if s != t:
                        total += weights[c] * mc2
                else:
                    d = float(t) - float(s)
                    total += weights[c] * d * d
        if total > cutoff:
            return total
    return total


@nb.njit(cache=True, nogil=True)
def _patch_distance(stack, tx, ty, sx, sy, r, weights, is_label, mc2, use_gb, bounds, gb_out, cutoff, bs, bq):
    nch = stack.shape[2]
    w0 = weights[0]
    w1 = weights[1]
    w2 = weights[2]
    if use_gb:
        # only the cross terms need the patch loop; the rest are precomputed box sums
        n = float((2 * r + 1) * (2 * r + 1))
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for j in range(-r, r + 1):
            for i in range(-r, r + 1):
                c0 += float(stack[sy + j, sx + i, 0]) * float(stack[ty + j, tx + i, 0])
                c1 += float(stack[sy + j, sx + i, 1]) * float(stack[ty + j, tx + i, 1])
                c2 += float(stack[sy + j, sx + i, 2]) * float(stack[ty + j, tx + i, 2])
        total = 0.0
        for c in range(3):
            Sst = c0 if c == 0 else (c1 if c == 1 else c2)
            g, b, e = fit_gain_bias(bs[sy, sx, c], bs[ty, tx, c], bq[sy, sx, c], Sst, bq[ty, tx, c], n,
                                    bounds[0], bounds[1], bounds[2], bounds[3])
            gb_out[c] = g
            gb_out[3 + c] = b
            total += weights[c] * e
            if total > cutoff:
                return total
    else:
        for c in range(3):
            gb_out[c] = 1.0
            gb_out[3 + c] = 0.0
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for j in range(-r, r + 1):
            for i in range(-r, r + 1):
                d = float(stack[ty + j, tx + i, 0]) - float(stack[sy + j, sx + i, 0])
                a0 += d * d
                d = float(stack[ty + j, tx + i, 1]) - float(stack[sy + j, sx + i, 1])
                a1 += d * d
                d = float(stack[ty + j, tx + i, 2]) - float(stack[sy + j, sx + i, 2])
                a2 += d * d
            if w0 * a0 + w1 * a1 + w2 * a2 > cutoff:
                return w0 * a0 + w1 * a1 + w2 * a2
        total = w0 * a0 + w1 * a1 + w2 * a2
    if nch > 3:
        total = _guide_distance(stack, tx, ty, sx, sy, r, weights, is_label, mc2, total, cutoff)
    return total


@nb.njit(cache=True, nogil=True)
def _refresh(stack, targets, x0, y0, dx, dy, dist, gb, r, weights, is_label, mc2, use_gb, bounds, bs, bq):
    bh, bw = targets.shape
    tmp = np.empty(6)
    for j in range(bh):
        for i in range(bw):
            if not targets[j, i]:
                continue
            x = x0 + i
            y = y0 + j
            d = _patch_distance(stack, x, y, x + dx[j, i], y + dy[j, i], r, weights, is_label, mc2,
                                use_gb, bounds, tmp, np.inf, bs, bq)
            dist[j, i] = d
            for k in range(6):
                gb[j, i, k] = tmp[k]


@nb.njit(cache=True, nogil=True)
def _random_init(stack, valid_list, targets, x0, y0, dx, dy, have_prior, r, state):
    h, w = stack.shape[0], stack.shape[1]
    bh, bw = targets.shape
    nvalid = valid_list.shape[0]
    for j in range(bh):
        for i in range(bw):
            if not targets[j, i] or have_prior[j, i]:
                continue
            k = valid_list[_rand_int(state, 0, nvalid - 1)]
            sy = k // w
            sx = k - sy * w
            dx[j, i] = sx - (x0 + i)
            dy[j, i] = sy - (y0 + j)


@nb.njit(cache=True, nogil=True)
def _sweep(stack, valid_src, targets, x0, y0, dx, dy, dist, gb, r, weights, is_label, mc2, use_gb,
           bounds, alpha, reverse, state, bs, bq):
    h, w = stack.shape[0], stack.shape[1]
    bh, bw = targets.shape
    tmp = np.empty(6)
    step = -1 if reverse else 1
    max_rad = max(w, h)
    for jj in range(bh):
        j = bh - 1 - jj if reverse else jj
        for ii in range(bw):
            i = bw - 1 - ii if reverse else ii
            if not targets[j, i]:
                continue
            x = x0 + i
            y = y0 + j
            best = dist[j, i]
            bsx = x + dx[j, i]
            bsy = y + dy[j, i]
            # propagation from the already-visited horizontal and vertical neighbours
            for k in range(2):
                ni = i - step if k == 0 else i
                nj = j if k == 0 else j - step
                if ni < 0 or ni >= bw or nj < 0 or nj >= bh or not targets[nj, ni]:
                    continue
                csx = x + dx[nj, ni]
                csy = y + dy[nj, ni]
                if csx == bsx and csy == bsy:
                    continue
                if csx < 0 or csx >= w or csy < 0 or csy >= h or not valid_src[csy, csx]:
                    continue
                d = _patch_distance(stack, x, y, csx, csy, r, weights, is_label, mc2, use_gb, bounds, tmp, best, bs, bq)
                if d < best:
                    best = d
                    bsx = csx
                    bsy = csy
                    for q in range(6):
                        gb[j, i, q] = tmp[q]
            # random search in exponentially shrinking windows
            rad = max_rad
            while rad >= 1:
                csx = bsx + _rand_int(state, -rad, rad)
                csy = bsy + _rand_int(state, -rad, rad)
                if csx < r:
                    csx = r
                elif csx > w - 1 - r:
                    csx = w - 1 - r
                if csy < r:
                    csy = r
                elif csy > h - 1 - r:
                    csy = h - 1 - r
                if (csx != bsx or csy != bsy) and valid_src[csy, csx]:
                    d = _patch_distance(stack, x, y, csx, csy, r, weights, is_label, mc2, use_gb, bounds, tmp, best, bs, bq)
                    if d < best:
                        best = d
                        bsx = csx
                        bsy = csy
                        for q in range(6):
                            gb[j, i, q] = tmp[q]
                rad = int(rad * alpha)
            dist[j, i] = best
            dx[j, i] = bsx - x
            dy[j, i] = bsy - y


@nb.njit(cache=True, nogil=True)
def _vote(stack, hole, targets, x0, y0, dx, dy, gb, tw, r, use_gb):
    h, w = stack.shape[0], stack.shape[1]
    bh, bw = targets.shape
    ax0 = max(x0 - r, 0)
    ay0 = max(y0 - r, 0)
    ax1 = min(x0 + bw + r, w)
    ay1 = min(y0 + bh + r, h)
    acc = np.zeros((ay1 - ay0, ax1 - ax0, 3))
    wsum = np.zeros((ay1 - ay0, ax1 - ax0))
    for j in range(bh):
        for i in range(bw):
            if not targets[j, i]:
                continue
            x = x0 + i
            y = y0 + j
            sx = x + dx[j, i]
            sy = y + dy[j, i]
            wt = tw[j, i]
            for v in range(-r, r + 1):
                for u in range(-r, r + 1):
                    py = y + v
                    px = x + u
                    if not hole[py, px]:
                        continue
                    for c in range(3):
                        s = float(stack[sy + v, sx + u, c])
                        if use_gb:
                            s = gb[j, i, c] * s + gb[j, i, 3 + c]
                        acc[py - ay0, px - ax0, c] += wt * s
                    wsum[py - ay0, px - ax0] += wt
    uncovered = 0
    for py in range(ay0, ay1):
        for px in range(ax0, ax1):
            if not hole[py, px]:
                continue
            ws = wsum[py - ay0, px - ax0]
            if ws <= 0.0:
                uncovered += 1
                continue
            for c in range(3):
                v = acc[py - ay0, px - ax0, c] / ws
                if v < 0.0:
                    v = 0.0
                elif v > 1.0:
                    v = 1.0
                stack[py, px, c] = v
    return uncovered


# ---------------------------------------------------------------------------
# python-level operations


def _weights_arrays(stack, weights, is_label):
    w = weights.as_array() if isinstance(weights, GuideWeights) else np.asarray(weights, dtype=np.float64)
    if w.shape[0] != stack.shape[2]:
        raise PatchMatchError(f"{w.shape[0]} weights for a {stack.shape[2]}-channel stack")
    if is_label is None:
        is_label = np.zeros(stack.shape[2], dtype=np.bool_)
    return np.ascontiguousarray(w), np.ascontiguousarray(is_label, dtype=np.bool_)


_NO_STATS = (np.zeros((1, 1, 3)), np.zeros((1, 1, 3)))


def _stats(stack, r, gainbias):
    return _box_stats(stack, r) if gainbias else _NO_STATS


def weighted_patch_distance(stack, weights, target, source, params: PatchParams = PatchParams(),
                            gainbias: bool = False, is_label=None, hole=None):
    """Distance between the patches centred at ``target`` and ``source`` (x, y).

    Returns ``(distance, gain[3], bias[3])``.
    """
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    w, lab = _weights_arrays(stack, weights, is_label)
    r = params.radius
    h, wd = stack.shape[:2]
    for name, (x, y) in (("target", target), ("source", source)):
        if not (r <= x < wd - r and r <= y < h - r):
            raise PatchMatchError(f"{name} patch at {(x, y)} is out of bounds")
    if hole is not None:
        sx, sy = source
        if np.any(np.asarray(hole)[sy - r:sy + r + 1, sx - r:sx + r + 1]):
            raise PatchMatchError(f"source patch at {source} overlaps the hole")
    gb = np.empty(6)
    d = _patch_distance(stack, int(target[0]), int(target[1]), int(source[0]), int(source[1]), r, w, lab,
                        params.mismatch_cost ** 2, bool(gainbias), params.bounds(), gb, np.inf,
                        *_stats(stack, r, gainbias))
    return float(d), gb[:3].copy(), gb[3:].copy()


def _empty_field(hole, r):
    tgt = target_map(hole, r)
    h, w = hole.shape
    if not tgt.any():
        return NNField(w, h, 0, 0, np.zeros((0, 0), bool), np.zeros((0, 0), np.int32),
                       np.zeros((0, 0), np.int32), np.zeros((0, 0)), np.zeros((0, 0, 6), np.float32))
    ys, xs = np.nonzero(tgt)
    x0, y0, x1, y1 = xs.min(), ys.min(), xs.max(), ys.max()
    targets = np.ascontiguousarray(tgt[y0:y1 + 1, x0:x1 + 1])
    shape = targets.shape
    return NNField(w, h, int(x0), int(y0), targets, np.zeros(shape, np.int32), np.zeros(shape, np.int32),
                   np.zeros(shape), np.zeros(shape + (6,), np.float32))


def refresh_distances(nnf: NNField, stack, weights, params: PatchParams, gainbias: bool, is_label=None):
    """Recompute every stored distance (and gain/bias) against the current stack."""
    if nnf.target_count == 0:
        return nnf
    w, lab = _weights_arrays(stack, weights, is_label)
    _refresh(stack, nnf.targets, nnf.x0, nnf.y0, nnf.dx, nnf.dy, nnf.dist, nnf.gb, params.radius, w, lab,
             params.mismatch_cost ** 2, bool(gainbias), params.bounds(), *_stats(stack, params.radius, gainbias))
    return nnf


def upsample_prior(prior: NNField, hole, r: int):
    """Map a coarse field onto the finer level's targets (nearest parent, offsets x2).

    Returns ``(dx, dy, have)`` over the fine field's bounding box; entries whose
    scaled source is not a valid fine source are marked missing.
    """
    fine = _empty_field(hole, r)
    valid = valid_source_map(hole, r)
    bh, bw = fine.targets.shape
    have = np.zeros((bh, bw), dtype=bool)
    dx = np.zeros((bh, bw), np.int32)
    dy = np.zeros((bh, bw), np.int32)
    if bh == 0 or prior.target_count == 0:
        return fine, dx, dy, have, valid
    jj, ii = np.nonzero(fine.targets)
    ys, xs = jj + fine.y0, ii + fine.x0
    cj, ci = ys // 2 - prior.y0, xs // 2 - prior.x0
    pbh, pbw = prior.targets.shape
    inside = (cj >= 0) & (cj < pbh) & (ci >= 0) & (ci < pbw)
    cj_c, ci_c = np.clip(cj, 0, pbh - 1), np.clip(ci, 0, pbw - 1)
    ok = inside & prior.targets[cj_c, ci_c]
    cdx = 2 * prior.dx[cj_c, ci_c]
    cdy = 2 * prior.dy[cj_c, ci_c]
    sx, sy = xs + cdx, ys + cdy
    h, w = hole.shape
    ok &= (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    ok[ok] &= valid[sy[ok], sx[ok]]
    have[jj[ok], ii[ok]] = True
    dx[jj[ok], ii[ok]] = cdx[ok]
    dy[jj[ok], ii[ok]] = cdy[ok]
    return fine, dx, dy, have, valid


def init_nnf(stack, hole, weights, params: PatchParams = PatchParams(), prior: NNField | None = None,
             gainbias: bool = False, is_label=None, rng_state=None) -> NNField:
    """Initial field: the upscaled prior where valid, otherwise uniform random valid sources."""
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    hole = np.asarray(hole, dtype=bool)
    if stack.shape[:2] != hole.shape:
        raise PatchMatchError("stack and hole mask differ in size")
    r = params.radius
    if prior is not None:
        nnf, dx, dy, have, valid = upsample_prior(prior, hole, r)
        nnf.dx[:] = dx
        nnf.dy[:] = dy
    else:
        nnf = _empty_field(hole, r)
        valid = valid_source_map(hole, r)
        have = np.zeros(nnf.targets.shape, dtype=bool)
    if nnf.target_count == 0:
        return nnf
    valid_list = np.flatnonzero(valid)
    if valid_list.size == 0:
        raise PatchMatchError("no valid source patch: every in-bounds patch overlaps the hole")
    valid_list = valid_list.astype(np.int64)
    if rng_state is None:
        rng_state = make_rng_state(params.rng_seed)
    _random_init(stack, valid_list, nnf.targets, nnf.x0, nnf.y0, nnf.dx, nnf.dy, have, r, rng_state)
    refresh_distances(nnf, stack, weights, params, gainbias, is_label)
    return nnf


def pm_iterate(nnf: NNField, stack, hole, weights, params: PatchParams = PatchParams(), iteration: int = 0,
               gainbias: bool = False, is_label=None, rng_state=None, valid_src=None) -> NNField:
    """One propagation + random-search sweep, in place; odd iterations scan backwards."""
    if nnf.target_count == 0:
        return nnf
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    w, lab = _weights_arrays(stack, weights, is_label)
    if valid_src is None:
        valid_src = valid_source_map(hole, params.radius)
    if rng_state is None:
        rng_state = make_rng_state(params.rng_seed, 1 + iteration)
    _sweep(stack, valid_src, nnf.targets, nnf.x0, nnf.y0, nnf.dx, nnf.dy, nnf.dist, nnf.gb, params.radius, w,
           lab, params.mismatch_cost ** 2, bool(gainbias), params.bounds(), params.search_radius_decay,
           bool(iteration % 2 == 1), rng_state, *_stats(stack, params.radius, gainbias))
    return nnf


def patchmatch(stack, hole, weights, params: PatchParams = PatchParams(), gainbias: bool = False,
               is_label=None, prior: NNField | None = None) -> NNField:
    """Initialise and run ``params.pm_iterations`` sweeps."""
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    state = make_rng_state(params.rng_seed)
    nnf = init_nnf(stack, hole, weights, params, prior, gainbias, is_label, state)
    valid = valid_source_map(hole, params.radius)
    for it in range(params.pm_iterations):
        pm_iterate(nnf, stack, hole, weights, params, it, gainbias, is_label, state, valid)
        nnf.history.append(nnf.total_distance())
    return nnf


def vote(nnf: NNField, stack, hole, params: PatchParams, gainbias: bool, weighted: bool = False):
    """Write the patch-averaged RGB into the hole pixels of ``stack`` (in place)."""
    if nnf.target_count == 0:
        return stack
    if weighted:
        d = nnf.dist[nnf.targets]
        sigma = float(np.percentile(d, 75))
        if sigma > 0:
            tw = np.exp(-nnf.dist / (2.0 * sigma * sigma))
        else:
            tw = np.ones_like(nnf.dist)
    else:
        tw = np.ones_like(nnf.dist)
    uncovered = _vote(stack, np.asarray(hole, dtype=bool), nnf.targets, nnf.x0, nnf.y0, nnf.dx, nnf.dy, nnf.gb,
                      tw, params.radius, bool(gainbias))
    if uncovered:
        raise AssertionError(f"{uncovered} hole pixels are not covered by any target patch")
    return stack


def field_violations(nnf: NNField, hole, r: int) -> int:
    """Number of targets mapped to an out-of-bounds or hole-overlapping source patch."""
    if nnf.target_count == 0:
        return 0
    valid = valid_source_map(hole, r)
    _, _, sy, sx = nnf.source_centers()
    h, w = valid.shape
    inb = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    bad = ~inb
    bad[inb] = ~valid[sy[inb], sx[inb]]
    return int(bad.sum())
