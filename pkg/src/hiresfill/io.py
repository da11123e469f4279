"""PNG and PFM reading/writing."""

from __future__ import annotations

import os
import re

import numpy as np
from PIL import Image

from .imaging import DimensionError, to_float, to_uint8


class ImageReadError(OSError):
    pass


def read_png_raw(path) -> np.ndarray:
    """Return the PNG pixels with their native dtype (uint8 or uint16)."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L"):
                arr = np.asarray(im, dtype=np.uint16)
            elif mode == "I":
                arr = np.asarray(im, dtype=np.int64)
                if arr.min() < 0 or arr.max() > 65535:
                    raise ImageReadError(f"{path}: 32-bit integer PNG values out of 16-bit range")
                arr = arr.astype(np.uint16)
            elif mode in ("L", "RGB", "RGBA"):
                arr = np.asarray(im, dtype=np.uint8)
            elif mode in ("1", "P", "LA"):
                arr = np.asarray(im.convert("RGBA" if mode == "P" else "L"), dtype=np.uint8)
            else:
                raise ImageReadError(f"{path}: unsupported PNG mode {mode}")
    except (OSError, SyntaxError) as exc:
        if isinstance(exc, ImageReadError):
            raise
        raise ImageReadError(f"{path}: {exc}") from exc
    return np.array(arr)


def read_rgb(path) -> np.ndarray:
    """Read an 8-bit PNG as float32 (H, W, 3) in [0, 1]; alpha is dropped."""
    raw = read_png_raw(path)
    if raw.dtype != np.uint8:
        raise ImageReadError(f"{path}: expected an 8-bit image, got {raw.dtype}")
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    return to_float(raw)


def read_mask(path, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Any nonzero value (in any channel) marks a hole pixel."""
    raw = read_png_raw(path)
    mask = raw != 0 if raw.ndim == 2 else np.any(raw[:, :, :3] != 0, axis=2)
    if shape is not None and mask.shape != tuple(shape):
        raise DimensionError(f"{path}: mask is {mask.shape[1]}x{mask.shape[0]}, expected {shape[1]}x{shape[0]}")
    return mask


def write_png(path, img: np.ndarray) -> None:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def write_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path, format="PNG")


def write_png16(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("16-bit PNG output supports single-channel arrays only")
    Image.fromarray(arr.astype(np.uint16)).save(path, format="PNG")


_PFM_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+(-?[\d.eE+-]+)\s", re.S)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file to float32 (H, W) or (H, W, 3), top row first."""
    with open(path, "rb") as f:
        blob = f.read()
    m = _PFM_HEADER.match(blob)
    if m is None:
        raise ImageReadError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    width, height = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    payload = blob[m.end():]
    if len(payload) < count * 4:
        raise ImageReadError(f"{path}: truncated PFM payload")
    data = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float32)
    shape = (height, width, channels) if channels == 3 else (height, width)
    # PFM stores the bottom row first
    return np.flipud(data.reshape(shape)).copy()


def write_pfm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"cannot write shape {arr.shape} as PFM")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.flipud(arr).astype("<f4").tobytes())


def read_scalar_map(path) -> np.ndarray:
    """Read a single-channel float map from PFM, 16-bit PNG or 8-bit PNG (values not normalized)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        arr = read_pfm(path)
        if arr.ndim == 3:
            arr = arr[:, :, 0]
        return arr.astype(np.float32)
    raw = read_png_raw(path)
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    return raw.astype(np.float32)


def read_labels(path) -> np.ndarray:
    """Segmentation ids: red channel of an 8-bit PNG or a 16-bit gray PNG."""
    raw = read_png_raw(path)
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    return raw.astype(np.float32)
