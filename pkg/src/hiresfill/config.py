"""Run configuration: INI file, ``HIRESFILL_*`` environment overrides and command-line overrides.

Precedence, lowest first: built-in defaults, config file, environment, flags.
Keys are ``section.key``; the environment form is ``HIRESFILL_SECTION_KEY``.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .curation import AutoCropParams, HeuristicScorer, make_scorer
from .holes import StrokeParams
from .patchmatch import PatchParams
from .synthesis import SynthesisParams, VoteMode

ENV_PREFIX = "HIRESFILL_"


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v not in configparser.ConfigParser.BOOLEAN_STATES:
        raise ValueError(f"not a boolean: {text!r}")
    return configparser.ConfigParser.BOOLEAN_STATES[v]


def _optional_float(text: str) -> float | None:
    return None if str(text).strip().lower() in ("auto", "none", "") else float(text)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        v = str(text).strip()
        if v not in options:
            raise ValueError(f"{v!r} is not one of {', '.join(options)}")
        return v

    return parse


def _scorer_spec(text: str) -> str:
    v = str(text).strip()
    if v != "heuristic" and not (v.startswith("cmd:") and len(v) > 4):
        raise ValueError(f"scorer must be 'heuristic' or 'cmd:<path>', got {v!r}")
    return v


# section.key -> (parser, default, description)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any, str]] = {
    "run.seed": (int, 0, "master seed"),
    "run.threads": (int, os.cpu_count() or 1, "worker budget"),
    "run.mode": (_choice("naive", "optimized"), "naive", "naive: 8 native candidates; optimized: curate at 1K"),
    "run.long_edge": (int, 1024, "candidate long edge in optimized mode"),
    "run.handoff_em": (int, 1, "EM iterations at the first native level in optimized mode"),
    "patch.size": (int, 7, "patch side, odd"),
    "patch.iterations": (int, 5, "PatchMatch sweeps in the first search of each level"),
    "patch.search_radius_decay": (float, 0.5, "random-search window shrink factor"),
    "patch.gain_min": (float, 0.9, "lower gain clamp"),
    "patch.gain_max": (float, 1.1, "upper gain clamp"),
    "patch.bias_min": (float, -0.05, "lower bias clamp"),
    "patch.bias_max": (float, 0.05, "upper bias clamp"),
    "patch.mismatch_cost": (float, 1.0, "per-pixel cost of a segmentation label mismatch"),
    "synthesis.em_coarsest": (int, 12, "EM iterations at the coarsest level"),
    "synthesis.em_finest": (int, 4, "EM iterations at the finest level"),
    "synthesis.search_iterations": (int, 2, "sweeps per later search phase"),
    "synthesis.vote": (_choice("uniform", "distance_weighted"), "uniform", "vote weighting"),
    "synthesis.gainbias": (_bool, True, "per-patch gain/bias compensation"),
    "synthesis.min_edge": (int, 64, "stop the pyramid before a side drops below this"),
    "synthesis.rgb_weight": (_optional_float, None, "total RGB weight; auto = 0.3 with structure, else 0.6"),
    "synthesis.memory_budget_mb": (int, 4096, "memory cap for concurrent candidates"),
    "curation.gamma": (float, 1.05, "auto-crop growth factor"),
    "curation.tau": (float, 0.25, "auto-crop hole fraction threshold"),
    "curation.base": (int, 512, "auto-crop minimum side"),
    "curation.scorer": (_scorer_spec, "heuristic", "heuristic or cmd:<path>"),
    "curation.seam_weight": (float, 1.0, "heuristic seam coefficient"),
    "curation.incoherence_weight": (float, 1.0, "heuristic incoherence coefficient"),
    "curation.blur_weight": (float, 0.5, "heuristic blur coefficient"),
    "curation.temperature": (float, 0.1, "heuristic tie temperature"),
    "rtv.lambda": (float, 0.01, "smoothness weight"),
    "rtv.sigma": (float, 3.0, "texture window scale"),
    "rtv.iterations": (int, 4, "reweighting iterations"),
    "holes.min_waypoints": (int, 4, "stroke waypoints, minimum"),
    "holes.max_waypoints": (int, 12, "stroke waypoints, maximum"),
    "holes.min_radius": (float, 8.0, "brush radius at the 512 px box scale, minimum"),
    "holes.max_radius": (float, 48.0, "brush radius at the 512 px box scale, maximum"),
}


def env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def _parse(key: str, raw: Any, origin: str) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r} ({origin})")
    parser = SCHEMA[key][0]
    if not isinstance(raw, str):
        return raw
    try:
        return parser(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key} ({origin}): {exc}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    values: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def patch_params(self) -> PatchParams:
        v = self.values
        return PatchParams(
            patch_size=v["patch.size"],
            pm_iterations=v["patch.iterations"],
            search_radius_decay=v["patch.search_radius_decay"],
            rng_seed=v["run.seed"],
            gain_min=v["patch.gain_min"],
            gain_max=v["patch.gain_max"],
            bias_min=v["patch.bias_min"],
            bias_max=v["patch.bias_max"],
            mismatch_cost=v["patch.mismatch_cost"],
        )

    def synthesis_params(self) -> SynthesisParams:
        v = self.values
        return SynthesisParams(
            patch=self.patch_params(),
            em_iterations_coarsest=v["synthesis.em_coarsest"],
            em_iterations_finest=v["synthesis.em_finest"],
            search_iterations=v["synthesis.search_iterations"],
            vote_mode=VoteMode(v["synthesis.vote"]),
            gainbias_enabled=v["synthesis.gainbias"],
            min_edge=v["synthesis.min_edge"],
            w_c=v["synthesis.rgb_weight"],
            memory_budget_mb=v["synthesis.memory_budget_mb"],
        )

    def crop_params(self) -> AutoCropParams:
        v = self.values
        return AutoCropParams(v["curation.gamma"], v["curation.tau"], v["curation.base"])

    def stroke_params(self) -> StrokeParams:
        v = self.values
        return StrokeParams(v["holes.min_waypoints"], v["holes.max_waypoints"], v["holes.min_radius"],
                            v["holes.max_radius"])

    def scorer(self):
        v = self.values
        spec = v["curation.scorer"]
        if spec == "heuristic":
            return HeuristicScorer(a=v["curation.seam_weight"], b=v["curation.incoherence_weight"],
                                   c=v["curation.blur_weight"], temperature=v["curation.temperature"],
                                   seed=v["run.seed"])
        return make_scorer(spec)

    def validate(self) -> "PipelineConfig":
        try:
            self.synthesis_params()
            self.crop_params()
            self.stroke_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.values["run.threads"] < 1:
            raise ConfigError("run.threads must be >= 1")
        if self.values["curation.temperature"] <= 0:
            raise ConfigError("curation.temperature must be positive")
        return self

    def to_ini(self, exclude=()) -> str:
        cp = configparser.ConfigParser()
        for key in sorted(self.values):
            if key in exclude:
                continue
            section, name = key.split(".", 1)
            if not cp.has_section(section):
                cp.add_section(section)
            val = self.values[key]
            cp.set(section, name, "auto" if val is None else str(val).lower() if isinstance(val, bool) else str(val))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def as_dict(self, exclude=()) -> dict:
        return {k: self.values[k] for k in sorted(self.values) if k not in exclude}


def load_config(path=None, env: Mapping[str, str] | None = None,
                overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Resolve defaults < file < environment < overrides; unknown keys are errors."""
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in cp.sections():
            for name, raw in cp.items(section):
                key = f"{section}.{name}"
                values[key] = _parse(key, raw, str(path))
    env = os.environ if env is None else env
    known = {env_name(k): k for k in SCHEMA}
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        if name not in known:
            raise ConfigError(f"unknown environment override {name}")
        values[known[name]] = _parse(known[name], raw, name)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _parse(key, raw, "command line")
    return PipelineConfig(values).validate()
