"""Evaluation harness: PSNR/SSIM over full images or hole-centered patch crops."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import DimensionError, luminance
from .io import read_mask, read_rgb

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) images, got {a.shape}")
    return a, b


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; ``inf`` when identical."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def ssim(a, b) -> float:
    """Mean Gaussian-windowed SSIM on Rec. 601 luminance, data range 1."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise DimensionError(f"SSIM needs both sides >= {SSIM_WINDOW}, got {a.shape[:2]}")
    x, y = luminance(a), luminance(b)
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    trunc = 3.5  # kernel radius int(3.5 * 1.5 + 0.5) = 5, an 11x11 window

    def g(v):
        return gaussian_filter(v, SSIM_SIGMA, mode="reflect", truncate=trunc)

    mx, my = g(x), g(y)
    vx = g(x * x) - mx * mx
    vy = g(y * y) - my * my
    cov = g(x * y) - mx * my
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    p = (SSIM_WINDOW - 1) // 2
    return float(s[p:-p, p:-p].mean())


class EvalMode(enum.Enum):
    FULL = "full"
    PATCH = "patch"


@dataclass(frozen=True)
class EvalProtocol:
    mode: EvalMode = EvalMode.FULL
    patch_count: int = 10
    patch_size: int = 256
    seed: int = 0

    def config_hash(self) -> str:
        blob = json.dumps({**asdict(self), "mode": self.mode.value}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class EvalRecord:
    image_id: str
    method: str
    mode: str
    psnr: float
    ssim: float
    timings: dict = field(default_factory=dict)


class MissingOutputsError(FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing method outputs:\n" + "\n".join(f"  {m}" for m in self.missing))


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def patch_windows(mask: np.ndarray, protocol: EvalProtocol, image_id: str) -> list[tuple[int, int, int, int]]:
    """Hole-centered windows ``(x, y, w, h)``, shifted to stay inside the image."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError(f"{image_id}: mask has no hole pixels")
    rng = np.random.default_rng([protocol.seed, _stable_hash(image_id)])
    picks = rng.choice(ys.size, size=protocol.patch_count, replace=ys.size < protocol.patch_count)
    pw, ph = min(protocol.patch_size, w), min(protocol.patch_size, h)
    out = []
    for k in picks:
        x = min(max(int(xs[k]) - pw // 2, 0), w - pw)
        y = min(max(int(ys[k]) - ph // 2, 0), h - ph)
        out.append((x, y, pw, ph))
    return out


def score_pair(reference, output, mask, protocol: EvalProtocol, image_id: str) -> tuple[float, float]:
    if protocol.mode is EvalMode.FULL:
        return min(psnr(reference, output), PSNR_CAP), ssim(reference, output)
    ps, ss = [], []
    for x, y, w, h in patch_windows(mask, protocol, image_id):
        a, b = reference[y:y + h, x:x + w], output[y:y + h, x:x + w]
        ps.append(min(psnr(a, b), PSNR_CAP))
        ss.append(ssim(a, b))
    return math.fsum(ps) / len(ps), math.fsum(ss) / len(ss)


def load_manifest(path) -> list[dict]:
    path = Path(path)
    entries = json.loads(path.read_text())
    if not isinstance(entries, list):
        raise ValueError(f"{path}: manifest must be a JSON list")
    out = []
    for e in entries:
        if not {"image", "mask", "id"} <= set(e):
            raise ValueError(f"{path}: entry {e!r} needs image, mask and id")
        out.append({"id": str(e["id"]), "image": path.parent / e["image"], "mask": path.parent / e["mask"]})
    ids = [e["id"] for e in out]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate ids")
    return sorted(out, key=lambda e: e["id"])


def _output_path(method_dir: Path, image_id: str) -> Path:
    return method_dir / f"{image_id}.png"


def run_eval(entries, methods, protocol: EvalProtocol, threads: int = 1) -> tuple[list[EvalRecord], dict]:
    """Score every method output against its reference image.

    ``entries`` is a manifest path or a list of ``{id, image, mask}``; each
    method directory holds ``<id>.png`` (and optionally ``<id>.timings.json``).
    """
    if not isinstance(entries, list):
        entries = load_manifest(entries)
    entries = sorted(entries, key=lambda e: e["id"])
    methods = [Path(m) for m in methods]
    missing = [str(_output_path(m, e["id"])) for m in methods for e in entries if not _output_path(m, e["id"]).is_file()]
    if missing:
        raise MissingOutputsError(missing)

    def one(entry):
        ref = read_rgb(entry["image"])
        mask = read_mask(entry["mask"], ref.shape[:2])
        recs = []
        for m in methods:
            out = read_rgb(_output_path(m, entry["id"]))
            tpath = m / f"{entry['id']}.timings.json"
            timings = json.loads(tpath.read_text()) if tpath.is_file() else {}
            p, s = score_pair(ref, out, mask, protocol, entry["id"])
            recs.append(EvalRecord(entry["id"], m.name, protocol.mode.value, p, s, timings))
        return recs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            nested = list(ex.map(one, entries))
    else:
        nested = [one(e) for e in entries]
    records = [r for rs in nested for r in rs]
    return records, summarize(records, protocol)


def summarize(records, protocol: EvalProtocol) -> dict:
    by_method: dict[str, list[EvalRecord]] = {}
    for r in sorted(records, key=lambda r: (r.method, r.image_id)):
        by_method.setdefault(r.method, []).append(r)
    agg = {
        m: {
            "count": len(rs),
            "psnr": math.fsum(min(r.psnr, PSNR_CAP) for r in rs) / len(rs),
            "ssim": math.fsum(r.ssim for r in rs) / len(rs),
        }
        for m, rs in by_method.items()
    }
    return {
        "mode": protocol.mode.value,
        "seed": protocol.seed,
        "patch_count": protocol.patch_count,
        "patch_size": protocol.patch_size,
        "config_hash": protocol.config_hash(),
        "methods": agg,
    }


def write_report(records, summary: dict, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / "bench.csv", out_dir / "bench.json"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "method", "mode", "psnr", "ssim", "timings"])
        for r in sorted(records, key=lambda r: (r.image_id, r.method)):
            w.writerow([r.image_id, r.method, r.mode, f"{r.psnr:.6f}", f"{r.ssim:.6f}", json.dumps(r.timings, sort_keys=True)])
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
