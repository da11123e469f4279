"""Synthetic hole masks for benchmarking: free-form brush strokes and object silhouettes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .imaging import hole_bbox, resize_nearest

# mean hole area of the benchmark corpus and the pixel count it refers to
CORPUS_MEAN_HOLE_AREA = 2.3e6
CORPUS_REFERENCE_PIXELS = 20e6
BBOX_SIDE = 512
GENERATION_LONG_EDGE = 1024
MAX_ATTEMPTS = 50
AREA_TOLERANCE = 0.4


class HoleKind(enum.Enum):
    FREEFORM = "freeform"
    OBJECT = "object"


@dataclass(frozen=True)
class StrokeParams:
    """Brush parameters at the 512 px bounding-box scale."""

    min_waypoints: int = 4
    max_waypoints: int = 12
    min_radius: float = 8.0
    max_radius: float = 48.0
    max_strokes: int = 64

    def __post_init__(self):
        if not 2 <= self.min_waypoints <= self.max_waypoints:
            raise ValueError("need 2 <= min_waypoints <= max_waypoints")
        if not 0 < self.min_radius <= self.max_radius:
            raise ValueError("need 0 < min_radius <= max_radius")


@dataclass(frozen=True)
class HoleSpec:
    kind: HoleKind
    target_area: float
    seed: int = 0
    bbox_side: int = BBOX_SIDE
    strokes: StrokeParams = field(default_factory=StrokeParams)

    def __post_init__(self):
        if self.bbox_side < 1:
            raise ValueError("bbox_side must be >= 1")
        if self.kind is HoleKind.FREEFORM and not 0 < self.target_area <= self.bbox_side**2:
            raise ValueError(
                f"target_area {self.target_area} must be in (0, {self.bbox_side ** 2}] for a "
                f"{self.bbox_side}px box"
            )


def native_spec(height: int, width: int, kind: HoleKind, seed: int = 0,
                generation_long_edge: int = GENERATION_LONG_EDGE) -> HoleSpec:
    """Scale the box and target area so the hole/image fraction matches the corpus mean."""
    f = max(height, width) / generation_long_edge
    side = min(int(round(BBOX_SIDE * f)), height, width)
    area = CORPUS_MEAN_HOLE_AREA * (height * width) / CORPUS_REFERENCE_PIXELS
    return HoleSpec(kind, min(area, side * side), seed, side)


def _place_box(rng: np.random.Generator, height: int, width: int, side: int) -> tuple[int, int]:
    if side > height or side > width:
        raise ValueError(f"{side}px bounding box does not fit a {width}x{height} image")
    return int(rng.integers(0, width - side + 1)), int(rng.integers(0, height - side + 1))


def _stroke(draw: ImageDraw.ImageDraw, rng: np.random.Generator, side: int, p: StrokeParams, scale: float):
    n = int(rng.integers(p.min_waypoints, p.max_waypoints + 1))
    radius = rng.uniform(p.min_radius, p.max_radius) * scale
    pts = [rng.uniform(0, side, 2)]
    for _ in range(n - 1):
        angle = rng.uniform(0, 2 * math.pi)
        step = rng.uniform(0.05, 0.25) * side
        nxt = np.clip(pts[-1] + step * np.array([math.cos(angle), math.sin(angle)]), 0, side - 1)
        pts.append(nxt)
    xy = [tuple(float(v) for v in q) for q in pts]
    draw.line(xy, fill=255, width=max(1, int(round(2 * radius))))
    for x, y in xy:
        draw.ellipse([x - radius, y - radius, x + radius, y + radius], fill=255)


def _strokes_in_box(rng: np.random.Generator, spec: HoleSpec) -> np.ndarray:
    side = spec.bbox_side
    scale = side / BBOX_SIDE
    target = spec.target_area
    best, best_err = None, math.inf
    for _ in range(MAX_ATTEMPTS):
        canvas = Image.new("L", (side, side), 0)
        draw = ImageDraw.Draw(canvas)
        prev = np.zeros((side, side), dtype=bool)
        for _ in range(spec.strokes.max_strokes):
            _stroke(draw, rng, side, spec.strokes, scale)
            cur = np.asarray(canvas) > 0
            if cur.sum() >= target:
                # keep whichever of before/after lands closer to the target
                if prev.any() and abs(prev.sum() - target) < abs(cur.sum() - target):
                    cur = prev
                break
            prev = cur
        err = abs(float(cur.sum()) - target)
        if err < best_err:
            best, best_err = cur, err
        if err <= AREA_TOLERANCE * target:
            break
    return best


def freeform_mask(height: int, width: int, spec: HoleSpec) -> np.ndarray:
    """Union of random-walk brush strokes inside a randomly placed square box."""
    if spec.kind is not HoleKind.FREEFORM:
        raise ValueError("freeform_mask needs a FREEFORM spec")
    rng = np.random.default_rng(spec.seed)
    bx, by = _place_box(rng, height, width, spec.bbox_side)
    out = np.zeros((height, width), dtype=bool)
    out[by:by + spec.bbox_side, bx:bx + spec.bbox_side] = _strokes_in_box(rng, spec)
    return out


class MaskLibrary:
    """Binary silhouettes loaded from a directory of PNG files (nonzero = object)."""

    def __init__(self, masks):
        self.masks = []
        for m in masks:
            m = np.asarray(m, dtype=bool)
            if not m.any():
                continue
            x0, y0, x1, y1 = hole_bbox(m)
            self.masks.append(m[y0:y1 + 1, x0:x1 + 1])
        if not self.masks:
            raise ValueError("mask library is empty")

    @classmethod
    def from_dir(cls, path) -> "MaskLibrary":
        path = Path(path)
        if not path.is_dir():
            raise FileNotFoundError(f"mask library {path} is not a directory")
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".png")
        masks = []
        for f in files:
            try:
                with Image.open(f) as im:
                    masks.append(np.asarray(im.convert("L")) > 0)
            except OSError as exc:
                raise ValueError(f"unreadable library mask {f}: {exc}") from exc
        if not masks:
            raise ValueError(f"mask library {path} holds no PNG masks")
        return cls(masks)

    def __len__(self):
        return len(self.masks)


def object_mask(height: int, width: int, spec: HoleSpec, library: MaskLibrary) -> np.ndarray:
    """A uniformly chosen silhouette scaled to fit the box, placed uniformly inside the image."""
    if spec.kind is not HoleKind.OBJECT:
        raise ValueError("object_mask needs an OBJECT spec")
    rng = np.random.default_rng(spec.seed)
    shape = library.masks[int(rng.integers(len(library)))]
    side = spec.bbox_side
    if side > height or side > width:
        raise ValueError(f"{side}px bounding box does not fit a {width}x{height} image")
    sh, sw = shape.shape
    f = side / max(sh, sw)
    nh, nw = max(1, min(side, int(round(sh * f)))), max(1, min(side, int(round(sw * f))))
    obj = resize_nearest(shape, nh, nw).astype(bool)
    x = int(rng.integers(0, width - nw + 1))
    y = int(rng.integers(0, height - nh + 1))
    out = np.zeros((height, width), dtype=bool)
    out[y:y + nh, x:x + nw] = obj
    return out


def draw_kind(seed: int) -> HoleKind:
    """Fair coin between the two hole kinds."""
    rng = np.random.default_rng([seed, 0x6B696E64])
    return HoleKind.FREEFORM if rng.random() < 0.5 else HoleKind.OBJECT


def sample_hole(height: int, width: int, seed: int, library: MaskLibrary | None = None,
                kind: HoleKind | None = None, spec: HoleSpec | None = None) -> tuple[np.ndarray, HoleKind]:
    """Benchmark sampler. With ``kind=None`` each kind is drawn with probability 1/2."""
    if kind is None:
        kind = draw_kind(seed)
    if spec is None:
        spec = native_spec(height, width, kind, seed)
    spec = replace(spec, kind=kind, seed=seed)
    if kind is HoleKind.FREEFORM:
        return freeform_mask(height, width, spec), kind
    if library is None:
        raise ValueError("object-shaped holes need a mask library")
    return object_mask(height, width, spec, library), kind
