"""Command-line entry point: ``hiresfill <pipeline|rtv|holegen|curate|bench> ...``.

Exit codes: 0 success, 2 input error, 3 scorer/protocol error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA, ConfigError, PipelineConfig, env_name, load_config

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SCORER = 3
EXIT_INTERNAL = 4

log = logging.getLogger("hiresfill")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--seed", type=int, help="master seed (run.seed)")
    p.add_argument("--threads", type=int, help="worker budget (run.threads; default: logical cores)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key; repeatable")
    p.add_argument("--dry-run", action="store_true", help="validate inputs, print the resolved config and stop")
    p.add_argument("-v", "--verbose", action="count", default=0, help="debug output on stderr")


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:32s} {spec[2]} (env {env_name(k)})" for k, spec in SCHEMA.items())
    parser = argparse.ArgumentParser(
        prog="hiresfill",
        description="Guided PatchMatch inpainting for high-resolution images.",
        epilog="config keys:\n" + keys,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="fill a hole: 8 guided candidates plus curation")
    p.add_argument("--image", type=Path, required=True, help="8-bit RGB PNG")
    p.add_argument("--mask", type=Path, required=True, help="PNG, nonzero = hole")
    p.add_argument("--coarse", type=Path, required=True, help="low-resolution fill of the whole image")
    p.add_argument("--depth", type=Path, required=True, help="depth map (PFM or PNG)")
    p.add_argument("--disparity", action="store_true", help="--depth holds disparity, not depth")
    p.add_argument("--segmentation", type=Path, required=True, help="label PNG (red channel or 16-bit)")
    p.add_argument("--structure", default="auto", help="'auto' (from the coarse fill) or an RGB PNG")
    p.add_argument("--mode", choices=("naive", "optimized"), help="run.mode")
    p.add_argument("--scorer", help="heuristic | cmd:<path> (curation.scorer)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--save-candidates", action="store_true", help="also write every candidate PNG")
    _common(p)

    p = sub.add_parser("rtv", help="texture-suppressing structure image")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, help="smoothness (rtv.lambda)")
    p.add_argument("--sigma", type=float, help="texture window (rtv.sigma)")
    p.add_argument("--iterations", type=int, help="rtv.iterations")
    _common(p)

    p = sub.add_parser("holegen", help="synthetic benchmark hole masks")
    p.add_argument("--kind", choices=("freeform", "object", "mixed"), default="mixed")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--mask-lib", type=Path, help="directory of object silhouette PNGs")
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--like", type=Path, help="take width/height from this image")
    size.add_argument("--size", metavar="WxH", help="mask size, e.g. 4000x3000")
    p.add_argument("--out", type=Path, default=Path("holes"))
    _common(p)

    p = sub.add_parser("curate", help="pick the best of 2-16 rendered candidates")
    p.add_argument("candidates", nargs="+", type=Path)
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--scorer", help="heuristic | cmd:<path>")
    p.add_argument("--report", type=Path, help="write the preference report as JSON")
    _common(p)

    p = sub.add_parser("bench", help="PSNR/SSIM of method outputs against references")
    p.add_argument("--manifest", type=Path, required=True, help="JSON list of {image, mask, id}")
    p.add_argument("--methods", type=Path, nargs="+", required=True, help="directories holding <id>.png")
    p.add_argument("--mode", dest="eval_mode", choices=("full", "patch"), default="full")
    p.add_argument("--patch-count", type=int, default=10)
    p.add_argument("--patch-size", type=int, default=256)
    p.add_argument("--out", type=Path, default=Path("bench"))
    _common(p)
    return parser


def _resolve_config(args) -> PipelineConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    flag_map = {
        "seed": "run.seed",
        "threads": "run.threads",
        "mode": "run.mode",
        "scorer": "curation.scorer",
        "lam": "rtv.lambda",
        "sigma": "rtv.sigma",
        "iterations": "rtv.iterations",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    return load_config(args.config, overrides=overrides)


def _print_config(config: PipelineConfig) -> None:
    sys.stdout.write(config.to_ini())


def cmd_pipeline(args, config: PipelineConfig) -> int:
    from .pipeline import PipelineInputs, load_inputs, run_pipeline

    inputs = PipelineInputs(args.image, args.mask, args.coarse, args.depth, args.segmentation, args.structure,
                            args.disparity)
    if args.dry_run:
        load_inputs(inputs, config)
        _print_config(config)
        return EXIT_OK
    result, manifest, timings = run_pipeline(inputs, config, args.out, args.save_candidates)
    print(f"winner: candidate {result.selection.winner} (guides {result.combo.letters}) -> {args.out / 'winner.png'}",
          file=sys.stderr)
    return EXIT_OK


def cmd_rtv(args, config: PipelineConfig) -> int:
    from .io import read_rgb, write_png
    from .pipeline import InputError
    from .rtv import rtv_structure

    try:
        img = read_rgb(args.input)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    if args.dry_run:
        _print_config(config)
        return EXIT_OK
    out = rtv_structure(img, smoothness=config["rtv.lambda"], window_sigma=config["rtv.sigma"],
                        iterations=config["rtv.iterations"])
    write_png(args.output, out)
    return EXIT_OK


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--size expects WxH, got {text!r}") from exc
    if w < 1 or h < 1:
        raise UsageError("--size must be positive")
    return h, w


def cmd_holegen(args, config: PipelineConfig) -> int:
    from dataclasses import replace

    from .holes import HoleKind, MaskLibrary, native_spec, sample_hole
    from .io import read_rgb, write_mask
    from .pipeline import InputError

    if args.like is not None:
        try:
            h, w = read_rgb(args.like).shape[:2]
        except OSError as exc:
            raise InputError(str(exc)) from exc
    else:
        h, w = _parse_size(args.size)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    library = None
    if args.kind != "freeform":
        if args.mask_lib is None:
            raise UsageError(f"--kind {args.kind} needs --mask-lib")
        try:
            library = MaskLibrary.from_dir(args.mask_lib)
        except (OSError, ValueError) as exc:
            raise InputError(f"--mask-lib {args.mask_lib}: {exc}") from exc
    if args.dry_run:
        _print_config(config)
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    fixed = None if args.kind == "mixed" else HoleKind(args.kind)
    seed = config["run.seed"]
    index = []
    for i in range(args.count):
        s = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        kind = fixed
        spec = None
        if kind is not HoleKind.OBJECT:
            base = native_spec(h, w, HoleKind.FREEFORM, s)
            spec = replace(base, strokes=config.stroke_params())
        mask, kind = sample_hole(h, w, s, library, kind, spec)
        name = f"mask_{i:04d}.png"
        write_mask(args.out / name, mask)
        index.append({"file": name, "kind": kind.value, "seed": s, "area": int(mask.sum())})
    (args.out / "holes.json").write_text(json.dumps(index, indent=2) + "\n")
    return EXIT_OK


def cmd_curate(args, config: PipelineConfig) -> int:
    from .curation import select
    from .io import read_mask, read_rgb
    from .pipeline import InputError

    if not 2 <= len(args.candidates) <= 16:
        raise UsageError(f"curate takes 2-16 candidates, got {len(args.candidates)}")
    try:
        images = [read_rgb(p) for p in args.candidates]
        mask = read_mask(args.mask)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    shapes = {im.shape for im in images}
    if len(shapes) != 1 or next(iter(shapes))[:2] != mask.shape:
        raise InputError(f"candidates and mask must share one size, got {sorted(shapes)} and {mask.shape}")
    if not mask.any():
        raise InputError(f"--mask {args.mask}: mask has no hole pixels")
    if args.dry_run:
        _print_config(config)
        return EXIT_OK
    sel = select(images, mask, config.scorer(), config.crop_params(), threads=config["run.threads"])
    report = sel.report()
    report["candidates"] = [str(p) for p in args.candidates]
    if args.report is not None:
        args.report.write_text(json.dumps(report, indent=2) + "\n")
    print(f"winner: {sel.winner} {args.candidates[sel.winner]}")
    print("preference: " + " ".join(f"{v:+.4f}" for v in sel.preference))
    print("matrix:")
    for row in sel.matrix.M:
        print("  " + " ".join(f"{v:+.4f}" for v in row))
    return EXIT_OK


def cmd_bench(args, config: PipelineConfig) -> int:
    from .bench import EvalMode, EvalProtocol, load_manifest, run_eval, write_report
    from .pipeline import InputError

    try:
        entries = load_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        raise InputError(f"--manifest {args.manifest}: {exc}") from exc
    protocol = EvalProtocol(EvalMode(args.eval_mode), args.patch_count, args.patch_size, config["run.seed"])
    if args.dry_run:
        _print_config(config)
        return EXIT_OK
    records, summary = run_eval(entries, args.methods, protocol, threads=config["run.threads"])
    csv_path, json_path = write_report(records, summary, args.out)
    for method, agg in summary["methods"].items():
        print(f"{method}: psnr {agg['psnr']:.3f} dB  ssim {agg['ssim']:.4f}  (n={agg['count']})")
    print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "pipeline": cmd_pipeline,
    "rtv": cmd_rtv,
    "holegen": cmd_holegen,
    "curate": cmd_curate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    from .curation import ScorerError
    from .pipeline import InputError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = _resolve_config(args)
        log.info("resolved config:\n%s", config.to_ini())
        return COMMANDS[args.command](args, config)
    except (ConfigError, UsageError, InputError) as exc:
        print(f"hiresfill: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScorerError as exc:
        print(f"hiresfill: scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"hiresfill: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
