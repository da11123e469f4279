"""Guide channels, guide combinations and per-channel matching weights."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .imaging import DimensionError, resize_bilinear, resize_nearest

RGB_WEIGHT_NO_STRUCTURE = 0.6
RGB_WEIGHT_WITH_STRUCTURE = 0.3


class GuideKind(enum.Enum):
    STRUCTURE = "structure"
    DEPTH = "depth"
    SEGMENTATION = "segmentation"

    @property
    def letter(self) -> str:
        return {"structure": "s", "depth": "d", "segmentation": "g"}[self.value]


# canonical channel order after RGB; also the bit order of GuideCombo.index
GUIDE_ORDER = (GuideKind.STRUCTURE, GuideKind.DEPTH, GuideKind.SEGMENTATION)


class Comparison(enum.Enum):
    EUCLIDEAN = "euclidean"
    LABEL_MISMATCH = "label_mismatch"


@dataclass(frozen=True)
class GuideChannel:
    kind: GuideKind
    data: np.ndarray  # (H, W) float32
    comparison: Comparison

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise ValueError(f"guide must be single-channel, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def resized(self, height: int, width: int) -> np.ndarray:
        if self.comparison is Comparison.LABEL_MISMATCH:
            return resize_nearest(self.data, height, width)
        return resize_bilinear(self.data, height, width)


@dataclass(frozen=True)
class GuideCombo:
    """Which guides are active. Bit 0 = structure, bit 1 = depth, bit 2 = segmentation."""

    index: int

    def __post_init__(self):
        if not 0 <= self.index < 8:
            raise ValueError(f"combo index must be in 0..7, got {self.index}")

    @classmethod
    def from_kinds(cls, kinds) -> "GuideCombo":
        kinds = set(kinds)
        return cls(sum(1 << i for i, k in enumerate(GUIDE_ORDER) if k in kinds))

    @property
    def bits(self) -> tuple[bool, bool, bool]:
        return tuple(bool(self.index >> i & 1) for i in range(3))

    @property
    def kinds(self) -> tuple[GuideKind, ...]:
        return tuple(k for k, on in zip(GUIDE_ORDER, self.bits) if on)

    @property
    def m(self) -> int:
        return sum(self.bits)

    @property
    def has_structure(self) -> bool:
        return self.bits[0]

    @property
    def letters(self) -> str:
        return "".join(k.letter for k in self.kinds) or "none"

    def __str__(self) -> str:
        return f"{self.index}:{self.letters}"


ALL_COMBOS = tuple(GuideCombo(i) for i in range(8))


@dataclass(frozen=True)
class GuideWeights:
    w_c: float
    per_channel: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.per_channel, dtype=np.float64)


def compute_weights(combo: GuideCombo, w_c: float | None = None) -> GuideWeights:
    """RGB shares ``w_c`` equally, the ``m`` active guides share ``1 - w_c``.

    With no guides the match is plain RGB SSD at 1/3 per channel.
    """
    if w_c is None:
        w_c = RGB_WEIGHT_WITH_STRUCTURE if combo.has_structure else RGB_WEIGHT_NO_STRUCTURE
    m = combo.m
    if m == 0:
        return GuideWeights(w_c, (1 / 3, 1 / 3, 1 / 3))
    return GuideWeights(w_c, (w_c / 3,) * 3 + ((1 - w_c) / m,) * m)


def ingest_depth(raw: np.ndarray, disparity: bool = False) -> GuideChannel:
    """Log-depth, min-max normalized to [0, 1] over finite pixels."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 3:
        if raw.shape[2] != 1:
            raise ValueError("depth must be single-channel")
        raw = raw[:, :, 0]
    valid = np.isfinite(raw)
    if not valid.any():
        raise ValueError("depth map has no finite values")
    if np.any(raw[valid] <= 0):
        raise ValueError("depth/disparity values must be strictly positive")
    depth = 1.0 / raw if disparity else raw
    logd = np.log(np.where(valid, depth, 1.0))
    lo, hi = logd[valid].min(), logd[valid].max()
    if hi - lo <= 0:
        out = np.full(raw.shape, 0.5)
    else:
        out = (logd - lo) / (hi - lo)
        fill = float(np.median(out[valid]))
        out = np.where(valid, out, fill)
    return GuideChannel(GuideKind.DEPTH, out.astype(np.float32), Comparison.EUCLIDEAN)


def ingest_segmentation(labels: np.ndarray) -> GuideChannel:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim == 3:
        if labels.shape[2] != 1:
            raise ValueError("segmentation must be single-channel label ids")
        labels = labels[:, :, 0]
    if not np.all(np.isfinite(labels)) or np.any(labels != np.round(labels)):
        raise ValueError("segmentation labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= 2**24):
        raise ValueError("segmentation labels must lie in [0, 2^24) to be stored exactly")
    return GuideChannel(GuideKind.SEGMENTATION, labels.astype(np.float32), Comparison.LABEL_MISMATCH)


def structure_channel(structure_rgb: np.ndarray) -> GuideChannel:
    """Collapse an RGB structure image to one luminance channel."""
    s = np.asarray(structure_rgb, dtype=np.float64)
    if s.ndim == 3 and s.shape[2] == 3:
        s = 0.299 * s[..., 0] + 0.587 * s[..., 1] + 0.114 * s[..., 2]
    elif s.ndim == 3:
        s = s[..., 0]
    return GuideChannel(GuideKind.STRUCTURE, np.clip(s, 0, 1).astype(np.float32), Comparison.EUCLIDEAN)


def check_guide_aspect(guide: GuideChannel, height: int, width: int) -> None:
    gh, gw = guide.shape
    if abs(gw * height / gh - width) > max(1.0, width / gw) + 1e-9:
        raise DimensionError(
            f"{guide.kind.value} guide {gw}x{gh} does not match the aspect ratio of {width}x{height}"
        )


def assemble(image: np.ndarray, guides, combo: GuideCombo, w_c: float | None = None):
    """Stack RGB with the active guides (canonical order) at the image size.

    Returns ``(stack, weights, is_label)`` where ``is_label`` flags channels
    compared by label mismatch. Guides of a different (same-aspect) size are
    resampled: bilinear for continuous guides, nearest for labels.
    """
    image = np.asarray(image, dtype=np.float32)
    h, w = image.shape[:2]
    by_kind = {g.kind: g for g in guides}
    layers = [image[:, :, :3]]
    is_label = [False, False, False]
    for kind in combo.kinds:
        if kind not in by_kind:
            raise KeyError(f"combo {combo} needs a {kind.value} guide")
        g = by_kind[kind]
        if g.shape != (h, w):
            check_guide_aspect(g, h, w)
        layers.append(g.resized(h, w)[:, :, None])
        is_label.append(g.comparison is Comparison.LABEL_MISMATCH)
    stack = np.ascontiguousarray(np.concatenate(layers, axis=2), dtype=np.float32)
    return stack, compute_weights(combo, w_c), np.asarray(is_label, dtype=np.bool_)
