"""Image containers, masks, resampling and coarse-to-fine pyramids.

Pixel data lives in ``(height, width, channels)`` float32 arrays normalized to
[0, 1]; masks are ``(height, width)`` boolean arrays where True marks a hole
pixel. The small dataclasses below wrap those arrays where a typed value is
useful at module boundaries; the numeric code works on the raw arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when images, masks or guides disagree in size."""


@dataclass(frozen=True)
class PlaneImage:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] < 1:
            raise ValueError(f"expected (H, W, C) data, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "PlaneImage":
        return cls(to_float(arr))

    def to_uint8(self) -> np.ndarray:
        return to_uint8(self.data)


@dataclass(frozen=True)
class HoleMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits).astype(bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def hole_count(self) -> int:
        return int(self.bits.sum())

    def validate_for(self, image: PlaneImage) -> None:
        if self.bits.shape != image.data.shape[:2]:
            raise DimensionError(
                f"mask {self.width}x{self.height} does not match image {image.width}x{image.height}"
            )
        if self.bits.all():
            raise ValueError("mask covers every pixel; nothing to copy from")


@dataclass(frozen=True)
class CropRect:
    x: int
    y: int
    side: int

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "side": self.side}


@dataclass(frozen=True)
class ImagePyramid:
    """Level 0 is full resolution; each following level halves both axes (ceil)."""

    images: tuple
    masks: tuple

    @property
    def depth(self) -> int:
        return len(self.images)

    def shape(self, level: int) -> tuple[int, int]:
        return self.images[level].shape[:2]


def to_float(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        out = arr.astype(np.float32) / np.float32(255.0)
    elif arr.dtype == np.uint16:
        out = arr.astype(np.float32) / np.float32(65535.0)
    else:
        out = arr.astype(np.float32)
    if out.ndim == 2:
        out = out[:, :, None]
    return out


def to_uint8(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def pyramid_shapes(height: int, width: int, min_edge: int = 64) -> list[tuple[int, int]]:
    if min_edge < 8:
        raise ValueError("min_edge must be at least 8")
    if max(height, width) < min_edge:
        raise DimensionError(f"image {width}x{height} is smaller than min_edge={min_edge}")
    shapes = [(height, width)]
    while True:
        h, w = shapes[-1]
        nh, nw = math.ceil(h / 2), math.ceil(w / 2)
        if max(nh, nw) < min_edge or (nh, nw) == (h, w):
            break
        shapes.append((nh, nw))
    return shapes


def downsample_image(img: np.ndarray) -> np.ndarray:
    """2x2 box average; odd trailing rows/columns are edge-replicated."""
    h, w = img.shape[:2]
    ph, pw = h % 2, w % 2
    if ph or pw:
        pad = [(0, ph), (0, pw)] + [(0, 0)] * (img.ndim - 2)
        img = np.pad(img, pad, mode="edge")
    acc = (
        img[0::2, 0::2].astype(np.float64)
        + img[1::2, 0::2]
        + img[0::2, 1::2]
        + img[1::2, 1::2]
    )
    return (acc * 0.25).astype(np.float32)


def downsample_mask(mask: np.ndarray) -> np.ndarray:
    """A coarse pixel is a hole iff any pixel of its 2x2 source block is a hole."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    padded = np.zeros((h + h % 2, w + w % 2), dtype=bool)
    padded[:h, :w] = mask
    return padded[0::2, 0::2] | padded[1::2, 0::2] | padded[0::2, 1::2] | padded[1::2, 1::2]


def build_pyramid(image: np.ndarray, mask: np.ndarray, min_edge: int = 64) -> ImagePyramid:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        image = image[:, :, None]
    mask = np.asarray(mask, dtype=bool)
    if image.shape[:2] != mask.shape:
        raise DimensionError(f"image {image.shape[:2]} and mask {mask.shape} differ")
    shapes = pyramid_shapes(*mask.shape, min_edge=min_edge)
    images, masks = [image], [mask]
    for _ in shapes[1:]:
        images.append(downsample_image(images[-1]))
        masks.append(downsample_mask(masks[-1]))
    return ImagePyramid(tuple(images), tuple(masks))


def _axis_coords(n_out: int, n_in: int):
    # half-pixel centres: out i samples input coordinate (i + 0.5) * n_in / n_out - 0.5
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = pos - i0
    return i0, i1, frac


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    if img.shape[:2] == (height, width):
        out = img.copy()
        return out[:, :, 0] if squeeze else out
    y0, y1, fy = _axis_coords(height, img.shape[0])
    x0, x1, fx = _axis_coords(width, img.shape[1])
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    rows0 = img[y0].astype(np.float64)
    rows1 = img[y1].astype(np.float64)
    top = rows0[:, x0] * (1 - fx) + rows0[:, x1] * fx
    bot = rows1[:, x0] * (1 - fx) + rows1[:, x1] * fx
    out = (top * (1 - fy) + bot * fy).astype(np.float32)
    return out[:, :, 0] if squeeze else out


def resize_nearest(img: np.ndarray, height: int, width: int) -> np.ndarray:
    img = np.asarray(img)
    ys = np.minimum(((np.arange(height) + 0.5) * img.shape[0] / height).astype(np.intp), img.shape[0] - 1)
    xs = np.minimum(((np.arange(width) + 0.5) * img.shape[1] / width).astype(np.intp), img.shape[1] - 1)
    return img[ys][:, xs]


def resize_mask_any(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Downscale a mask so that every output pixel touching a hole is a hole."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if (h, w) == (height, width):
        return mask.copy()
    if height >= h and width >= w:
        return resize_nearest(mask, height, width)
    ys0 = np.floor(np.arange(height) * h / height).astype(np.intp)
    ys1 = np.maximum(np.ceil((np.arange(height) + 1) * h / height).astype(np.intp), ys0 + 1)
    xs0 = np.floor(np.arange(width) * w / width).astype(np.intp)
    xs1 = np.maximum(np.ceil((np.arange(width) + 1) * w / width).astype(np.intp), xs0 + 1)
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(mask, axis=0), axis=1)
    Y0, X0 = np.meshgrid(ys0, xs0, indexing="ij")
    Y1, X1 = np.meshgrid(ys1, xs1, indexing="ij")
    counts = integral[Y1, X1] - integral[Y0, X1] - integral[Y1, X0] + integral[Y0, X0]
    return counts > 0


def resize_area(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Box-filter downscale (used where heavy decimation would alias)."""
    img = np.asarray(img, dtype=np.float32)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    while img.shape[0] >= 2 * height and img.shape[1] >= 2 * width:
        img = downsample_image(img)
    out = resize_bilinear(img, height, width)
    return out[:, :, 0] if squeeze else out


def scaled_shape(height: int, width: int, long_edge: int) -> tuple[int, int]:
    scale = long_edge / max(height, width)
    return max(1, round(height * scale)), max(1, round(width * scale))


def composite(base: np.ndarray, synth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    base = np.asarray(base)
    synth = np.asarray(synth)
    mask = np.asarray(mask, dtype=bool)
    if base.shape != synth.shape or base.shape[:2] != mask.shape:
        raise DimensionError(f"composite shapes differ: {base.shape}, {synth.shape}, {mask.shape}")
    out = base.copy()
    out[mask] = synth[mask]
    return out


def hole_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Inclusive (x0, y0, x1, y1) of the hole pixels."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise ValueError("mask has no hole pixels")
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


def luminance(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2 or img.shape[2] == 1:
        return img.reshape(img.shape[:2])
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
