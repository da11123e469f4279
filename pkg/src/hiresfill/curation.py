"""Candidate curation: auto-crop, pairwise scoring and the antisymmetric preference matrix."""

from __future__ import annotations

import hashlib
import logging
import math
import os
import shlex
import subprocess
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.ndimage import laplace

from . import patchmatch as pm
from .imaging import CropRect, downsample_image, downsample_mask, hole_bbox, luminance, resize_bilinear, resize_nearest

log = logging.getLogger(__name__)

SCORER_INPUT_SIZE = 512


class ScorerError(RuntimeError):
    pass


@dataclass(frozen=True)
class AutoCropParams:
    gamma: float = 1.05
    tau: float = 0.25
    base: int = 512

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.base < 1:
            raise ValueError("base must be >= 1")


@dataclass(frozen=True)
class PairwiseVerdict:
    """Probabilities of (prefer left, tie, prefer right)."""

    o1: float
    o2: float
    o3: float

    def __post_init__(self):
        vals = (self.o1, self.o2, self.o3)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"verdict probabilities must be finite and non-negative: {vals}")
        if abs(sum(vals) - 1.0) > 1e-6:
            raise ValueError(f"verdict probabilities must sum to 1: {vals}")

    def reversed(self) -> "PairwiseVerdict":
        return PairwiseVerdict(self.o3, self.o2, self.o1)


class Scorer(Protocol):
    name: str

    def judge(self, left: np.ndarray, right: np.ndarray, mask: np.ndarray) -> PairwiseVerdict: ...


@dataclass
class PreferenceMatrix:
    M: np.ndarray
    calls: int = 0

    @property
    def n(self) -> int:
        return self.M.shape[0]


# ---------------------------------------------------------------------------
# auto crop


def _place(center: float, side: int, n: int) -> int:
    x = math.floor(center - side / 2)
    if side <= n:
        return min(max(x, 0), n - side)
    # larger than the axis: move as little as possible so the whole axis is covered
    if x > 0:
        return 0
    if x + side < n:
        return n - side
    return x


def auto_crop(mask: np.ndarray, params: AutoCropParams = AutoCropParams()) -> CropRect:
    """Grow a square around the hole until it holds < tau hole pixels or spans an image axis."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    x0, y0, x1, y1 = hole_bbox(mask)
    cx, cy = (x0 + x1 + 1) / 2, (y0 + y1 + 1) / 2
    s = float(max(params.base, x1 - x0 + 1, y1 - y0 + 1))
    while True:
        side = int(round(s))
        x, y = _place(cx, side, w), _place(cy, side, h)
        if side >= w or side >= h:
            break
        # every hole pixel lies inside the bbox, so only that overlap needs counting
        holes = np.count_nonzero(mask[max(y, y0):min(y + side, y1 + 1), max(x, x0):min(x + side, x1 + 1)])
        if holes < params.tau * side * side:
            break
        s *= params.gamma
    return CropRect(x, y, side)


def extract_crop(img: np.ndarray, rect: CropRect, fill_mode: str = "edge") -> np.ndarray:
    """Cut ``rect`` out of ``img``; parts outside the image are edge-padded (masks: zero)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    x, y, s = rect.x, rect.y, rect.side
    pad_t, pad_l = max(0, -y), max(0, -x)
    pad_b, pad_r = max(0, y + s - h), max(0, x + s - w)
    core = img[max(y, 0):min(y + s, h), max(x, 0):min(x + s, w)]
    if pad_t or pad_l or pad_b or pad_r:
        pad = [(pad_t, pad_b), (pad_l, pad_r)] + [(0, 0)] * (img.ndim - 2)
        core = np.pad(core, pad, mode=fill_mode)
    return core


def scorer_inputs(images, mask, crop_params: AutoCropParams = AutoCropParams(), size: int = SCORER_INPUT_SIZE):
    """Crop every candidate with one shared auto-crop and resize to ``size`` x ``size``."""
    rect = auto_crop(mask, crop_params)
    crops = [resize_bilinear(extract_crop(np.asarray(im)[:, :, :3], rect), size, size) for im in images]
    mcrop = extract_crop(np.asarray(mask, dtype=bool), rect, fill_mode="constant")
    return crops, resize_nearest(mcrop, size, size), rect


# ---------------------------------------------------------------------------
# preference matrix


def build_matrix(crops, mask, scorer: Scorer, threads: int = 1) -> PreferenceMatrix:
    """Score each unordered pair once and fill an antisymmetric matrix.

    For ``i < j`` the scorer sees candidate ``j`` on the left and ``i`` on the
    right, so ``M[i, j] = o3 - o1`` is the preference for ``i`` over ``j``;
    ``M[j, i]`` is its exact negation.
    """
    n = len(crops)
    if n < 2:
        raise ValueError("need at least two candidates")
    shapes = {np.asarray(c).shape for c in crops}
    if len(shapes) != 1:
        raise ValueError(f"candidate crops differ in shape: {shapes}")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def run(pair):
        i, j = pair
        try:
            v = scorer.judge(crops[j], crops[i], mask)
        except ScorerError as exc:
            raise ScorerError(f"scorer failed on pair ({i}, {j}): {exc}") from exc
        except Exception as exc:
            raise ScorerError(f"scorer failed on pair ({i}, {j}): {exc!r}") from exc
        if not isinstance(v, PairwiseVerdict):
            v = PairwiseVerdict(*v)
        return v

    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(pairs))) as ex:
            verdicts = list(ex.map(run, pairs))
    else:
        verdicts = [run(p) for p in pairs]
    M = np.zeros((n, n))
    for (i, j), v in zip(pairs, verdicts):
        M[i, j] = v.o3 - v.o1
        M[j, i] = -M[i, j]
    return PreferenceMatrix(M, len(pairs))


def preference_vector(pm_: PreferenceMatrix | np.ndarray) -> np.ndarray:
    """Row means of M (equivalently minus the column means)."""
    M = pm_.M if isinstance(pm_, PreferenceMatrix) else np.asarray(pm_, dtype=np.float64)
    return M.sum(axis=1) / M.shape[0]


@dataclass
class Selection:
    winner: int
    preference: np.ndarray
    matrix: PreferenceMatrix
    crop: CropRect
    scorer: str

    def report(self) -> dict:
        return {
            "winner": self.winner,
            "preference": [float(v) for v in self.preference],
            "matrix": [[float(v) for v in row] for row in self.matrix.M],
            "scorer_calls": self.matrix.calls,
            "crop": self.crop.as_dict(),
            "scorer": self.scorer,
        }


def select(images, mask, scorer: Scorer, crop_params: AutoCropParams = AutoCropParams(), threads: int = 1,
           size: int = SCORER_INPUT_SIZE) -> Selection:
    """Pick the candidate with the highest preference; ties go to the lowest index."""
    crops, mcrop, rect = scorer_inputs(images, mask, crop_params, size)
    matrix = build_matrix(crops, mcrop, scorer, threads)
    p = preference_vector(matrix)
    winner = int(np.argmax(p))
    return Selection(winner, p, matrix, rect, getattr(scorer, "name", type(scorer).__name__))


# ---------------------------------------------------------------------------
# scorers


def _seam(lum: np.ndarray, mask: np.ndarray, ring: int = 2) -> float:
    """Mean step across the hole boundary in excess of the steps just outside it."""
    cross = []
    for axis in (0, 1):
        a = np.diff(lum, axis=axis)
        ma = mask[1:, :] if axis == 0 else mask[:, 1:]
        mb = mask[:-1, :] if axis == 0 else mask[:, :-1]
        cross.append(np.abs(a[ma != mb]))
    cross = np.concatenate(cross)
    if cross.size == 0:
        return 0.0
    near = np.zeros_like(mask)
    grown = mask.copy()
    for _ in range(ring):
        g = grown.copy()
        g[1:] |= grown[:-1]
        g[:-1] |= grown[1:]
        g[:, 1:] |= grown[:, :-1]
        g[:, :-1] |= grown[:, 1:]
        grown = g
    near = grown & ~mask
    outside = []
    for axis in (0, 1):
        a = np.abs(np.diff(lum, axis=axis))
        both = (near[1:, :] & near[:-1, :]) if axis == 0 else (near[:, 1:] & near[:, :-1])
        outside.append(a[both])
    outside = np.concatenate(outside)
    baseline = float(outside.mean()) if outside.size else 0.0
    return max(0.0, float(cross.mean()) - baseline)


def _blur(lum: np.ndarray, mask: np.ndarray) -> float:
    hf = laplace(lum, mode="nearest") ** 2
    inner, outer = mask, ~mask
    if not inner.any() or not outer.any():
        return 0.0
    e_out = float(hf[outer].mean())
    if e_out <= 0:
        return 0.0
    return max(0.0, 1.0 - float(hf[inner].mean()) / e_out)


def _incoherence(img: np.ndarray, mask: np.ndarray, patch: int, seed: int, iterations: int) -> float:
    params = pm.PatchParams(patch_size=patch, pm_iterations=iterations, rng_seed=seed)
    if not pm.valid_source_map(mask, params.radius).any() or not pm.target_map(mask, params.radius).any():
        return 0.0
    nnf = pm.patchmatch(img, mask, np.full(3, 1.0 / 3.0), params)
    return nnf.mean_distance() / (patch * patch)


class HeuristicScorer:
    """Hand-built realism comparison standing in for a learned preference model.

    Each image gets a penalty ``a*seam + b*incoherence + c*blur``; the verdict
    is a softmax over ``(d, 0, -d) / temperature`` with ``d`` the right penalty
    minus the left one, so swapping the inputs swaps o1 and o3 exactly.
    """

    name = "heuristic"

    def __init__(self, a: float = 1.0, b: float = 1.0, c: float = 0.5, temperature: float = 0.1,
                 patch: int = 7, seed: int = 0, pm_iterations: int = 5, working_size: int = 256):
        self.a, self.b, self.c = a, b, c
        self.temperature = temperature
        self.patch = patch
        self.seed = seed
        self.pm_iterations = pm_iterations
        self.working_size = working_size
        self._cache = {}
        self._lock = threading.Lock()

    def penalty_terms(self, img: np.ndarray, mask: np.ndarray) -> tuple[float, float, float]:
        img = np.ascontiguousarray(np.asarray(img, dtype=np.float32)[:, :, :3])
        mask = np.asarray(mask, dtype=bool)
        key = hashlib.sha1(img.tobytes() + mask.tobytes() + repr(img.shape).encode()).hexdigest()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        lum = luminance(img)
        seam = _seam(lum, mask)
        blur = _blur(lum, mask)
        small, small_mask = img, mask
        while max(small.shape[:2]) > self.working_size:
            small, small_mask = downsample_image(small), downsample_mask(small_mask)
        incoh = _incoherence(small, small_mask, self.patch, self.seed, self.pm_iterations)
        terms = (seam, incoh, blur)
        with self._lock:
            self._cache[key] = terms
        return terms

    def penalty(self, img, mask) -> float:
        seam, incoh, blur = self.penalty_terms(img, mask)
        return self.a * seam + self.b * incoh + self.c * blur

    def judge(self, left, right, mask) -> PairwiseVerdict:
        d = (self.penalty(right, mask) - self.penalty(left, mask)) / self.temperature
        # stable softmax over (d, 0, -d), symmetric in the sign of d
        m = abs(d)
        e_left = math.exp(d - m)
        e_tie = math.exp(-m)
        e_right = math.exp(-d - m)
        z = (e_left + e_right) + e_tie
        return PairwiseVerdict(e_left / z, e_tie / z, e_right / z)


class SubprocessScorer:
    """External scorer: ``<command> <dir>`` where dir holds left.png, right.png, mask.png.

    The command prints three whitespace-separated probabilities (prefer left,
    tie, prefer right) on stdout.
    """

    def __init__(self, command: str, timeout: float | None = 600.0, sum_tolerance: float = 1e-3):
        self.argv = shlex.split(command)
        if not self.argv:
            raise ScorerError("empty scorer command")
        self.name = f"cmd:{command}"
        self.timeout = timeout
        self.sum_tolerance = sum_tolerance

    def judge(self, left, right, mask) -> PairwiseVerdict:
        from .io import write_mask, write_png

        with tempfile.TemporaryDirectory(prefix="hiresfill-pair-") as tmp:
            write_png(os.path.join(tmp, "left.png"), left)
            write_png(os.path.join(tmp, "right.png"), right)
            write_mask(os.path.join(tmp, "mask.png"), mask)
            try:
                proc = subprocess.run(self.argv + [tmp], capture_output=True, text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise ScorerError(f"could not run {self.argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            raise ScorerError(f"{self.argv[0]} exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
        return parse_verdict(proc.stdout, self.sum_tolerance)


def parse_verdict(text: str, sum_tolerance: float = 1e-3) -> PairwiseVerdict:
    parts = text.split()
    if len(parts) != 3:
        raise ScorerError(f"expected 3 probabilities, got {len(parts)} tokens: {text.strip()[:80]!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ScorerError(f"malformed scorer output {text.strip()[:80]!r}") from exc
    if any(not math.isfinite(v) or v < 0 for v in vals):
        raise ScorerError(f"scorer probabilities must be non-negative: {vals}")
    total = sum(vals)
    if abs(total - 1.0) > sum_tolerance:
        raise ScorerError(f"scorer probabilities sum to {total}, not 1")
    return PairwiseVerdict(vals[0] / total, vals[1] / total, vals[2] / total)


def make_scorer(spec: str, **heuristic_kw) -> Scorer:
    """``heuristic`` or ``cmd:<command line>``."""
    if spec == "heuristic":
        return HeuristicScorer(**heuristic_kw)
    if spec.startswith("cmd:"):
        return SubprocessScorer(spec[4:])
    raise ValueError(f"unknown scorer {spec!r}; expected 'heuristic' or 'cmd:<path>'")
