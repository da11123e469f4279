"""Synthetic scenes with ground truth, coarse fill, depth and segmentation for end-to-end tests."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from hiresfill.imaging import resize_area, resize_bilinear, scaled_shape, to_float, to_uint8
from hiresfill.io import write_mask, write_pfm, write_png


@dataclass
class Scene:
    image: np.ndarray
    mask: np.ndarray
    coarse: np.ndarray
    depth: np.ndarray
    labels: np.ndarray


def make_scene(height: int, width: int, seed: int = 0, hole_frac: float = 0.02) -> Scene:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    horizon = int(height * 0.45)
    img = np.zeros((height, width, 3))
    sky = np.array([0.35, 0.55, 0.85])
    img[:] = sky * (0.6 + 0.4 * yy[..., None] / height)
    grain = gaussian_filter(rng.random((height, width)), 1.5)
    grain = (grain - grain.mean()) / (grain.std() + 1e-9)
    ground = np.array([0.45, 0.38, 0.25])[None, None] + 0.06 * grain[..., None]
    img[horizon:] = ground[horizon:]
    bx0, bx1 = int(width * 0.55), int(width * 0.8)
    by0 = int(height * 0.25)
    bricks = ((yy // 6 + (xx // 12) % 2) % 2)[..., None] * 0.08
    building = np.array([0.6, 0.3, 0.25]) + bricks
    img[by0:horizon, bx0:bx1] = building[by0:horizon, bx0:bx1]
    img = to_float(to_uint8(np.clip(img, 0, 1)))

    depth = np.where(yy < horizon, 1000.0, 5.0 + 200.0 * (height - yy) / height)
    depth[by0:horizon, bx0:bx1] = 40.0
    labels = np.where(yy < horizon, 1, 2).astype(np.int64)
    labels[by0:horizon, bx0:bx1] = 3

    side = max(8, int(np.sqrt(hole_frac * height * width)))
    cy = int(rng.integers(horizon - side // 2, min(height - side - 1, horizon + side // 2) + 1))
    cx = int(rng.integers(width // 5, width - side - width // 5))
    mask = np.zeros((height, width), bool)
    mask[cy:cy + side, cx:cx + side] = True

    ch, cw = scaled_shape(height, width, 512)
    coarse = gaussian_filter(resize_area(img, ch, cw), (1.0, 1.0, 0))
    coarse = to_float(to_uint8(coarse))
    return Scene(img.astype(np.float32), mask, coarse.astype(np.float32), depth.astype(np.float32), labels)


def write_scene(scene: Scene, directory) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f"{k}.{ext}" for k, ext in
             (("image", "png"), ("mask", "png"), ("coarse", "png"), ("depth", "pfm"), ("segmentation", "png"))}
    write_png(paths["image"], scene.image)
    write_mask(paths["mask"], scene.mask)
    write_png(paths["coarse"], scene.coarse)
    write_pfm(paths["depth"], scene.depth)
    seg = np.zeros(scene.labels.shape + (3,), np.uint8)
    seg[..., 0] = scene.labels
    from PIL import Image

    Image.fromarray(seg).save(paths["segmentation"])
    return paths
