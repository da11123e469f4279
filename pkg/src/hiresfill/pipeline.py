"""End-to-end run: load inputs, build guides, synthesize candidates, curate, write outputs."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .guides import check_guide_aspect, ingest_depth, ingest_segmentation, structure_channel
from .imaging import DimensionError, HoleMask, PlaneImage, to_uint8
from .io import read_labels, read_mask, read_rgb, read_scalar_map, write_png
from .rtv import rtv_structure
from .synthesis import naive_pipeline, optimized_pipeline

log = logging.getLogger(__name__)

# keys that may differ between otherwise identical runs
NON_DETERMINISTIC_KEYS = ("run.threads",)


class InputError(ValueError):
    """An input file is missing, unreadable or inconsistent with the others."""


@dataclass
class PipelineInputs:
    image: Path
    mask: Path
    coarse: Path
    depth: Path
    segmentation: Path
    structure: str = "auto"
    disparity: bool = False


@dataclass
class LoadedInputs:
    image: np.ndarray
    mask: np.ndarray
    coarse: np.ndarray
    guides: list


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read(what: str, path, reader, *args):
    try:
        return reader(path, *args)
    except FileNotFoundError as exc:
        raise InputError(f"{what} {path}: file not found") from exc
    except (OSError, ValueError) as exc:
        raise InputError(f"{what} {path}: {exc}") from exc


def load_inputs(inputs: PipelineInputs, config: PipelineConfig) -> LoadedInputs:
    image = _read("--image", inputs.image, read_rgb)
    h, w = image.shape[:2]
    mask = _read("--mask", inputs.mask, read_mask)
    try:
        HoleMask(mask).validate_for(PlaneImage(image))
        if not mask.any():
            raise ValueError("mask has no hole pixels")
    except (DimensionError, ValueError) as exc:
        raise InputError(f"--mask {inputs.mask}: {exc}") from exc
    coarse = _read("--coarse", inputs.coarse, read_rgb)
    ch, cw = coarse.shape[:2]
    if abs(cw * h / ch - w) > max(1.0, w / cw) + 1e-9:
        raise InputError(f"--coarse {inputs.coarse}: {cw}x{ch} does not match the aspect of {w}x{h}")
    try:
        depth = ingest_depth(_read("--depth", inputs.depth, read_scalar_map), inputs.disparity)
        check_guide_aspect(depth, h, w)
    except (DimensionError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"--depth {inputs.depth}: {exc}") from exc
    try:
        seg = ingest_segmentation(_read("--segmentation", inputs.segmentation, read_labels))
        check_guide_aspect(seg, h, w)
    except (DimensionError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"--segmentation {inputs.segmentation}: {exc}") from exc
    if inputs.structure == "auto":
        structure = None
    else:
        structure = structure_channel(_read("--structure", inputs.structure, read_rgb))
        try:
            check_guide_aspect(structure, h, w)
        except DimensionError as exc:
            raise InputError(f"--structure {inputs.structure}: {exc}") from exc
    guides = [g for g in (structure, depth, seg) if g is not None]
    return LoadedInputs(image, mask, coarse, guides)


def auto_structure(coarse: np.ndarray, config: PipelineConfig):
    """Structure guide from the coarse fill, so the hole region has structure too."""
    s = rtv_structure(coarse, smoothness=config["rtv.lambda"], window_sigma=config["rtv.sigma"],
                      iterations=config["rtv.iterations"])
    return structure_channel(s)


def run_pipeline(inputs: PipelineInputs, config: PipelineConfig, out_dir, save_candidates: bool = False):
    """Run the configured mode and write winner.png, report.json, manifest.json, timings.json."""
    out_dir = Path(out_dir)
    t0 = time.perf_counter()
    data = load_inputs(inputs, config)
    guides = list(data.guides)
    if inputs.structure == "auto":
        guides.insert(0, auto_structure(data.coarse, config))
    t_guides = time.perf_counter()
    params = config.synthesis_params()
    scorer = config.scorer()
    threads = config["run.threads"]
    if config["run.mode"] == "optimized":
        result = optimized_pipeline(data.image, data.mask, data.coarse, guides, params, scorer, config.crop_params(),
                                    threads, long_edge=config["run.long_edge"], handoff_em=config["run.handoff_em"])
    else:
        result = naive_pipeline(data.image, data.mask, data.coarse, guides, params, scorer, config.crop_params(),
                                threads)
    t_run = time.perf_counter()

    out_dir.mkdir(parents=True, exist_ok=True)
    winner_path = out_dir / "winner.png"
    write_png(winner_path, result.image)
    candidates = []
    for i, cand in enumerate(result.candidates.entries):
        entry = {"index": i, "combo": cand.combo.index, "guides": cand.combo.letters,
                 "sha256": hashlib.sha256(to_uint8(cand.image).tobytes()).hexdigest()}
        if save_candidates:
            name = f"candidate_{i}_{cand.combo.letters}.png"
            write_png(out_dir / name, cand.image)
            entry["file"] = name
        candidates.append(entry)

    report = result.selection.report()
    report["winner_combo"] = result.combo.index
    report["winner_guides"] = result.combo.letters
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")

    inputs_meta = {
        name: {"path": str(p), "sha256": _sha256(p)}
        for name, p in (("image", inputs.image), ("mask", inputs.mask), ("coarse", inputs.coarse),
                        ("depth", inputs.depth), ("segmentation", inputs.segmentation))
    }
    if inputs.structure != "auto":
        inputs_meta["structure"] = {"path": str(inputs.structure), "sha256": _sha256(inputs.structure)}
    manifest = {
        "mode": result.mode,
        "seed": config["run.seed"],
        "structure": "auto" if inputs.structure == "auto" else "file",
        "disparity": inputs.disparity,
        "config": config.as_dict(exclude=NON_DETERMINISTIC_KEYS),
        "inputs": inputs_meta,
        "size": {"width": int(data.image.shape[1]), "height": int(data.image.shape[0])},
        "winner": {"file": "winner.png", "combo": result.combo.index, "guides": result.combo.letters,
                   "sha256": _sha256(winner_path)},
        "candidates": candidates,
        "preference": report["preference"],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    timings = {
        "threads": threads,
        "load_and_guides": t_guides - t0,
        "synthesis_and_curation": t_run - t_guides,
        "total": time.perf_counter() - t0,
        **{k: v for k, v in result.timings.items()},
    }
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    log.info("winner: combo %s, %.1fs total", result.combo, timings["total"])
    return result, manifest, timings
