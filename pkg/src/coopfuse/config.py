"""Experiment configuration: one JSON file, every field optional.

Schema (defaults in parentheses)::

    {
      "sim":       SimConfig fields, e.g. {"comm_range": 40.0, "n_cavs": 8},
      "noise":     NoiseModel fields (detector surrogate),
      "select":    {"n_kpts": 2048, "n_ch": 32, "k_p": 16, "k_fw": 32},
      "match":     {"iou_thr": 0.3, "literal_flip": false, "seed_order": "descending_score"},
      "consensus": ConsensusConfig fields,
      "pipeline":  {"nms_iou": 0.01, "self_box_iou": 0.01},
      "run":       {"seed": 0, "frames": 200, "pipelines": [...], "n_v": [0, 2, 4],
                    "iou": [0.3, 0.5, 0.7], "loc_noise": false}
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InvalidArgument
from .evaluation import DEFAULT_IOUS, PIPELINES, PipelineConfig
from .keypoints import SelectConfig
from .localization import ConsensusConfig
from .matching import MatchConfig
from .simulator import NoiseModel, SimConfig


@dataclass(frozen=True)
class RunSpec:
    seed: int = 0
    frames: int = 200
    pipelines: tuple[str, ...] = PIPELINES
    n_v: tuple[int, ...] = (0, 2, 4)
    iou: tuple[float, ...] = DEFAULT_IOUS
    loc_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pipelines", tuple(self.pipelines))
        object.__setattr__(self, "n_v", tuple(int(v) for v in self.n_v))
        object.__setattr__(self, "iou", tuple(float(v) for v in self.iou))
        if self.frames < 1:
            raise ConfigError("run.frames", "must be >= 1")
        if any(v < 0 for v in self.n_v):
            raise ConfigError("run.n_v", "values must be >= 0")
        if any(not 0 < v <= 1 for v in self.iou):
            raise ConfigError("run.iou", "values must lie in (0, 1]")
        for p in self.pipelines:
            if p not in PIPELINES:
                raise ConfigError("run.pipelines", f"unknown pipeline {p!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    select: SelectConfig = field(default_factory=SelectConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    run: RunSpec = field(default_factory=RunSpec)

    @property
    def pipeline_cfg(self) -> PipelineConfig:
        return dataclasses.replace(self.pipeline, match=self.match, consensus=self.consensus)


_SECTIONS = {
    "sim": SimConfig, "noise": NoiseModel, "select": SelectConfig, "match": MatchConfig,
    "consensus": ConsensusConfig, "pipeline": PipelineConfig, "run": RunSpec,
}
_SKIP = {"sim": {"det_noise"}, "pipeline": {"match", "consensus"}}


def _build(section: str, values: dict):
    cls = _SECTIONS[section]
    known = {f.name for f in dataclasses.fields(cls)} - _SKIP.get(section, set())
    for k in values:
        if k not in known:
            raise ConfigError(f"{section}.{k}", "unknown field")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**kw)
    except ConfigError as e:
        if "." in e.field:
            raise
        raise ConfigError(f"{section}.{e.field}", str(e).split(": ", 1)[-1]) from None
    except (InvalidArgument, TypeError, ValueError) as e:
        field_name = next((k for k in kw if str(e).startswith(k)), "")
        raise ConfigError(f"{section}.{field_name}" if field_name else section, str(e)) from None


def build_config(raw: dict) -> ExperimentConfig:
    for k in raw:
        if k not in _SECTIONS:
            raise ConfigError(k, "unknown section")
    parts = {s: _build(s, raw.get(s, {})) for s in _SECTIONS}
    sim = dataclasses.replace(parts["sim"], det_noise=parts["noise"])
    return ExperimentConfig(sim, parts["select"], parts["match"], parts["consensus"],
                            parts["pipeline"], parts["run"])


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read ``path`` (or start from defaults) and apply ``section.field``
    overrides."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), f"invalid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError(str(path), "top level must be an object")
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        if not name:
            raise ConfigError(key, "override keys look like section.field")
        raw.setdefault(section, {})[name] = value
    return build_config(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for section in _SECTIONS:
        obj = cfg.sim.det_noise if section == "noise" else getattr(cfg, section)
        d = dataclasses.asdict(obj)
        for k in _SKIP.get(section, ()):
            d.pop(k, None)
        out[section] = d
    return out
