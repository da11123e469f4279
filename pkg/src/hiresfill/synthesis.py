"""Coarse-to-fine search-and-vote inpainting seeded by a low-resolution coarse fill."""

from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import patchmatch as pm
from .guides import ALL_COMBOS, GUIDE_ORDER, GuideChannel, GuideCombo, assemble
from .imaging import (
    DimensionError,
    ImagePyramid,
    build_pyramid,
    composite,
    resize_area,
    resize_bilinear,
    resize_mask_any,
    scaled_shape,
)

log = logging.getLogger(__name__)

OPTIMIZED_LONG_EDGE = 1024


class VoteMode(enum.Enum):
    UNIFORM = "uniform"
    DISTANCE_WEIGHTED = "distance_weighted"


@dataclass(frozen=True)
class SynthesisParams:
    patch: pm.PatchParams = pm.PatchParams()
    em_iterations_coarsest: int = 12
    em_iterations_finest: int = 4
    # sweeps per search phase after the first one at each level (the first uses patch.pm_iterations)
    search_iterations: int = 2
    vote_mode: VoteMode = VoteMode.UNIFORM
    gainbias_enabled: bool = True
    min_edge: int = 64
    w_c: float | None = None
    memory_budget_mb: int = 4096

    def __post_init__(self):
        if min(self.em_iterations_coarsest, self.em_iterations_finest, self.search_iterations) < 1:
            raise ValueError("iteration counts must be >= 1")

    def schedule(self, depth: int) -> list[int]:
        """EM iterations per level, index 0 = finest; linear from coarsest to finest."""
        if depth == 1:
            return [self.em_iterations_coarsest]
        lo, hi = self.em_iterations_finest, self.em_iterations_coarsest
        return [int(round(lo + (hi - lo) * lvl / (depth - 1))) for lvl in range(depth)]


@dataclass(frozen=True)
class CoarseFill:
    image: np.ndarray
    provenance: str = "external"


@dataclass
class Candidate:
    combo: GuideCombo
    image: np.ndarray
    seconds: float = 0.0
    level_history: list = field(default_factory=list)


@dataclass
class CandidateSet:
    entries: list

    def __post_init__(self):
        shapes = {c.image.shape for c in self.entries}
        if len(shapes) > 1:
            raise DimensionError(f"candidates differ in size: {shapes}")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> Candidate:
        return self.entries[i]

    @property
    def images(self) -> list:
        return [c.image for c in self.entries]


class GuideBank:
    """Guides resampled to each level size, computed once and shared between candidates."""

    def __init__(self, guides):
        self.guides = {g.kind: g for g in guides}
        self._cache = {}

    def at(self, kind, height: int, width: int) -> GuideChannel:
        key = (kind, height, width)
        hit = self._cache.get(key)
        if hit is None:
            g = self.guides[kind]
            hit = GuideChannel(kind, g.resized(height, width), g.comparison)
            self._cache[key] = hit
        return hit

    def for_combo(self, combo: GuideCombo, height: int, width: int) -> list:
        missing = [k.value for k in combo.kinds if k not in self.guides]
        if missing:
            raise KeyError(f"combo {combo} needs missing guide(s): {', '.join(missing)}")
        return [self.at(k, height, width) for k in combo.kinds]


def _check_coarse(coarse: np.ndarray, height: int, width: int, min_shape) -> None:
    ch, cw = coarse.shape[:2]
    if abs(cw * height / ch - width) > max(1.0, width / cw) + 1e-9:
        raise DimensionError(f"coarse fill {cw}x{ch} does not match the aspect of {width}x{height}")
    if ch < min_shape[0] or cw < min_shape[1]:
        raise DimensionError(
            f"coarse fill {cw}x{ch} is smaller than the coarsest level {min_shape[1]}x{min_shape[0]}"
        )


def initialize(pyramid: ImagePyramid, coarse) -> np.ndarray:
    """Coarsest level RGB with its hole replaced by the bilinearly resampled coarse fill."""
    fill = coarse.image if isinstance(coarse, CoarseFill) else np.asarray(coarse)
    fill = np.asarray(fill, dtype=np.float32)
    if fill.ndim == 2:
        fill = fill[:, :, None]
    top = pyramid.depth - 1
    h, w = pyramid.shape(top)
    h0, w0 = pyramid.shape(0)
    _check_coarse(fill, h0, w0, (h, w))
    base = pyramid.images[top][:, :, :3]
    return composite(base, resize_bilinear(fill[:, :, :3], h, w), pyramid.masks[top])


def synthesize_level(stack, hole, weights, is_label, params: SynthesisParams, em_iterations: int,
                     prior=None, rng_state=None):
    """Alternate PatchMatch search and voting on one level.

    ``stack`` is modified in place (RGB hole pixels only) and returned together
    with the final field and the total field distance after every search phase.
    """
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    hole = np.asarray(hole, dtype=bool)
    if not hole.any():
        return stack, None, []
    pp = params.patch
    gb = params.gainbias_enabled
    weighted = params.vote_mode is VoteMode.DISTANCE_WEIGHTED
    if rng_state is None:
        rng_state = pm.make_rng_state(pp.rng_seed)
    valid = pm.valid_source_map(hole, pp.radius)
    nnf = pm.init_nnf(stack, hole, weights, pp, prior, gb, is_label, rng_state)
    history = []
    sweep = 0
    for k in range(em_iterations):
        n_sweeps = pp.pm_iterations if k == 0 else params.search_iterations
        for _ in range(n_sweeps):
            pm.pm_iterate(nnf, stack, hole, weights, pp, sweep, gb, is_label, rng_state, valid)
            sweep += 1
        history.append(nnf.total_distance())
        pm.vote(nnf, stack, hole, pp, gb, weighted)
        pm.refresh_distances(nnf, stack, weights, pp, gb, is_label)
    return stack, nnf, history


def synthesize(image, mask, coarse, guides, combo: GuideCombo, params: SynthesisParams = SynthesisParams(),
               pyramid: ImagePyramid | None = None, bank: GuideBank | None = None, start_level: int | None = None,
               start_rgb=None, start_em: int | None = None, on_level=None):
    """Full coarse-to-fine synthesis for one guide combination.

    By default the loop starts at the coarsest level from ``coarse``. With
    ``start_level``/``start_rgb`` it starts at that level, whose hole is
    initialised from ``start_rgb`` (resampled), running ``start_em`` EM
    iterations there; this is the hand-off used by the optimized pipeline.

    ``on_level(level, nnf)``, if given, sees each level's final field.

    Returns ``(rgb, per_level_histories)`` with ``rgb`` composited onto ``image``.
    """
    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    if pyramid is None:
        pyramid = build_pyramid(image[:, :, :3], mask, params.min_edge)
    if bank is None:
        bank = GuideBank(guides)
    depth = pyramid.depth
    sched = params.schedule(depth)
    state = pm.make_rng_state(params.patch.rng_seed)
    if start_level is None:
        top = depth - 1
        rgb = initialize(pyramid, coarse)
    else:
        top = start_level
        h, w = pyramid.shape(top)
        rgb = composite(pyramid.images[top][:, :, :3], resize_bilinear(np.asarray(start_rgb)[:, :, :3], h, w),
                        pyramid.masks[top])
    nnf = None
    histories = {}
    for lvl in range(top, -1, -1):
        hole = pyramid.masks[lvl]
        h, w = hole.shape
        if lvl != top:
            up = resize_bilinear(rgb, h, w)
            rgb = composite(pyramid.images[lvl][:, :, :3], up, hole)
        stack, weights, is_label = assemble(rgb, bank.for_combo(combo, h, w), combo, params.w_c)
        em = sched[lvl]
        if lvl == top and start_em is not None:
            em = start_em
        stack, nnf, hist = synthesize_level(stack, hole, weights, is_label, params, em, nnf, state)
        histories[lvl] = hist
        if on_level is not None and nnf is not None:
            on_level(lvl, nnf)
        rgb = np.ascontiguousarray(stack[:, :, :3])
    return composite(image[:, :, :3], rgb, mask), histories


def _worker_budget(height: int, width: int, threads: int, params: SynthesisParams, jobs: int) -> int:
    per_job = height * width * 4 * (3 + 3) * 2.0 / 2**20 + 16
    by_memory = max(1, int(params.memory_budget_mb // per_job))
    return max(1, min(threads, jobs, by_memory))


def generate_candidates(image, mask, coarse, guides, params: SynthesisParams = SynthesisParams(),
                        threads: int = 1, combos=ALL_COMBOS) -> CandidateSet:
    """One coarse-to-fine synthesis per guide combination (all 8 by default).

    Every candidate uses the same seed, so results do not depend on the
    worker count or on completion order.
    """
    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    if image.shape[:2] != mask.shape:
        raise DimensionError(f"image {image.shape[:2]} and mask {mask.shape} differ")
    bank = GuideBank(guides)
    needed = {k for c in combos for k in c.kinds}
    missing = [k.value for k in GUIDE_ORDER if k in needed and k not in bank.guides]
    if missing:
        raise KeyError(f"missing guide(s): {', '.join(missing)}")
    pyramid = build_pyramid(image[:, :, :3], mask, params.min_edge)
    # warm the shared cache serially so workers only read it
    for lvl in range(pyramid.depth):
        h, w = pyramid.shape(lvl)
        for k in needed:
            bank.at(k, h, w)

    def run(combo):
        t0 = time.perf_counter()
        out, hist = synthesize(image, mask, coarse, None, combo, params, pyramid=pyramid, bank=bank)
        dt = time.perf_counter() - t0
        log.info("candidate %s done in %.2fs", combo, dt)
        return Candidate(combo, out, dt, hist)

    workers = _worker_budget(*mask.shape, threads, params, len(combos))
    if workers == 1:
        entries = [run(c) for c in combos]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            entries = list(ex.map(run, combos))
    return CandidateSet(entries)


@dataclass
class PipelineResult:
    image: np.ndarray
    combo: GuideCombo
    candidates: CandidateSet
    selection: object
    mode: str
    timings: dict


def naive_pipeline(image, mask, coarse, guides, params: SynthesisParams, scorer, crop_params=None,
                   threads: int = 1) -> PipelineResult:
    from .curation import AutoCropParams, select

    crop_params = crop_params or AutoCropParams()
    t0 = time.perf_counter()
    cands = generate_candidates(image, mask, coarse, guides, params, threads)
    t1 = time.perf_counter()
    sel = select(cands.images, mask, scorer, crop_params, threads=threads)
    t2 = time.perf_counter()
    win = cands[sel.winner]
    timings = {"candidates": t1 - t0, "curation": t2 - t1, "per_candidate": [c.seconds for c in cands.entries]}
    return PipelineResult(win.image, win.combo, cands, sel, "naive", timings)


def optimized_start_level(pyramid: ImagePyramid, long_edge: int = OPTIMIZED_LONG_EDGE) -> int:
    """Coarsest native level that is still at least 3/4 of the candidate resolution."""
    best = 0
    for lvl in range(pyramid.depth):
        if max(pyramid.shape(lvl)) >= 0.75 * long_edge:
            best = lvl
    return best


def optimized_pipeline(image, mask, coarse, guides, params: SynthesisParams, scorer, crop_params=None,
                       threads: int = 1, long_edge: int = OPTIMIZED_LONG_EDGE,
                       handoff_em: int = 1) -> PipelineResult:
    """Curate at ~1K long edge, then run one native-resolution synthesis for the winning combo.

    The native run starts at the pyramid level nearest the 1K resolution,
    initialised from the winning 1K candidate, and refines down to level 0.
    Inputs at or below ``long_edge`` fall back to the naive pipeline.
    """
    from .curation import AutoCropParams, select

    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    if max(H, W) <= long_edge:
        res = naive_pipeline(image, mask, coarse, guides, params, scorer, crop_params, threads)
        res.mode = "optimized(naive-fallback)"
        return res
    crop_params = crop_params or AutoCropParams()
    t0 = time.perf_counter()
    h1, w1 = scaled_shape(H, W, long_edge)
    small = resize_area(image[:, :, :3], h1, w1)
    small_mask = resize_mask_any(mask, h1, w1)
    cands = generate_candidates(small, small_mask, coarse, guides, params, threads)
    t1 = time.perf_counter()
    sel = select(cands.images, small_mask, scorer, crop_params, threads=threads)
    t2 = time.perf_counter()
    win = cands[sel.winner]
    pyramid = build_pyramid(image[:, :, :3], mask, params.min_edge)
    start = optimized_start_level(pyramid, long_edge)
    out, _ = synthesize(image, mask, coarse, guides, win.combo, params, pyramid=pyramid, start_level=start,
                        start_rgb=win.image, start_em=handoff_em)
    t3 = time.perf_counter()
    timings = {
        "candidates": t1 - t0,
        "curation": t2 - t1,
        "native_synthesis": t3 - t2,
        "per_candidate": [c.seconds for c in cands.entries],
        "start_level": start,
    }
    return PipelineResult(out, win.combo, cands, sel, "optimized", timings)


def with_seed(params: SynthesisParams, seed: int) -> SynthesisParams:
    return replace(params, patch=replace(params.patch, rng_seed=seed))
