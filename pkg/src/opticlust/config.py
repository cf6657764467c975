"""Declarative experiment configuration (YAML) with full validation.

Every run mode is described by one config file; all defaults are resolved
at parse time and the resolved form is echoed into every output file so a
result is reproducible from its artifacts alone.
"""

import dataclasses
import os
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Optional

import yaml

from .arch import TechParams
from .errors import ParseError, ValidationError
from .workload import ModelConfig, ParallelStrategy

MODES = ("evaluate", "traffic", "sweep", "optimize", "baselines")
SWEEPABLE = ("m", "o", "r", "N", "total_compute")


@dataclass
class ArchSpec:
    total_compute: float  # TFLOPS
    N: int
    x: int
    y: int
    m: int
    o: int
    r: float = 1.0


@dataclass
class SweepSpec:
    variable: str
    values: List[float]
    optimize: bool = False
    budget: int = 20


@dataclass
class OptimizeSpec:
    inner_budget: int = 50
    outer_budget: int = 8
    total_budget: int = 400
    improvement_threshold: float = 0.01
    default_microbatches: int = 8
    use_reuse: bool = True
    m_max: int = 16
    dies_max: int = 64


@dataclass
class BaselinesSpec:
    compute_grid: List[float]
    presets: List[str] = field(default_factory=lambda: list(("gpu_clos", "chiplet_ib", "railx_like", "opticlust")))
    budget: int = 20
    use_reuse: bool = True


@dataclass
class ExperimentConfig:
    mode: str
    model: ModelConfig
    tech: TechParams
    seed: int = 0
    output_dir: str = "out"
    arch: Optional[ArchSpec] = None
    strategy: Optional[ParallelStrategy] = None
    sweep: Optional[SweepSpec] = None
    optimize: Optional[OptimizeSpec] = None
    baselines: Optional[BaselinesSpec] = None

    def resolved(self) -> Dict[str, Any]:
        """Fully-resolved echo of this config (re-parses to an equal config)."""
        out: Dict[str, Any] = {
            "mode": self.mode,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "model": dataclasses.asdict(self.model),
            "tech": dataclasses.asdict(self.tech),
        }
        for name in ("arch", "strategy", "sweep", "optimize", "baselines"):
            value = getattr(self, name)
            if value is not None:
                out[name] = dataclasses.asdict(value)
        return out


def _build(cls, data: Dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ValidationError(where, f"section '{where}' must be a mapping")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ValidationError(f"{where}.{key}", f"unknown field '{where}.{key}'")
    required = {
        f.name
        for f in fields(cls)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    }
    missing = required - set(data)
    if missing:
        raise ValidationError(
            f"{where}.{sorted(missing)[0]}",
            f"missing required field(s) {sorted(missing)} in '{where}'",
        )
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ValidationError(where, f"invalid '{where}': {exc}") from exc


def config_from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ValidationError("<root>", "config root must be a mapping")
    known = {
        "mode",
        "seed",
        "output_dir",
        "model",
        "tech",
        "arch",
        "strategy",
        "sweep",
        "optimize",
        "baselines",
    }
    for key in raw:
        if key not in known:
            raise ValidationError(key, f"unknown field '{key}'")
    mode = raw.get("mode")
    if mode not in MODES:
        raise ValidationError("mode", f"mode must be one of {MODES}, got {mode!r}")
    if "model" not in raw:
        raise ValidationError("model", "missing required section 'model'")
    model = _build(ModelConfig, raw["model"], "model")
    tech = _build(TechParams, raw.get("tech", {}), "tech")
    cfg = ExperimentConfig(
        mode=mode,
        model=model,
        tech=tech,
        seed=int(raw.get("seed", 0)),
        output_dir=os.environ.get("OPTICLUST_OUT", raw.get("output_dir", "out")),
    )
    if "arch" in raw:
        cfg.arch = _build(ArchSpec, raw["arch"], "arch")
    if "strategy" in raw:
        cfg.strategy = _build(ParallelStrategy, raw["strategy"], "strategy")
    if "sweep" in raw:
        cfg.sweep = _build(SweepSpec, raw["sweep"], "sweep")
        if cfg.sweep.variable not in SWEEPABLE:
            raise ValidationError(
                "sweep.variable", f"sweep.variable must be one of {SWEEPABLE}"
            )
        if not cfg.sweep.values:
            raise ValidationError("sweep.values", "sweep.values must be nonempty")
    if "optimize" in raw:
        cfg.optimize = _build(OptimizeSpec, raw["optimize"], "optimize")
    if "baselines" in raw:
        cfg.baselines = _build(BaselinesSpec, raw["baselines"], "baselines")
        bad = [p for p in cfg.baselines.presets if p not in ("gpu_clos", "chiplet_ib", "railx_like", "opticlust")]
        if bad:
            raise ValidationError("baselines.presets", f"unknown preset(s) {bad}")

    # Cross-section requirements per mode.
    if mode in ("evaluate", "sweep", "optimize") and cfg.arch is None:
        raise ValidationError("arch", f"mode '{mode}' requires an 'arch' section")
    if mode in ("evaluate", "traffic") and cfg.strategy is None:
        raise ValidationError("strategy", f"mode '{mode}' requires a 'strategy' section")
    if mode == "sweep" and cfg.sweep is None:
        raise ValidationError("sweep", "mode 'sweep' requires a 'sweep' section")
    if mode == "baselines" and cfg.baselines is None:
        raise ValidationError("baselines", "mode 'baselines' requires a 'baselines' section")
    if mode == "optimize" and cfg.optimize is None:
        cfg.optimize = OptimizeSpec()
    return cfg


def parse_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ParseError(f"config file not found: {path}")
    try:
        with open(path, "r") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ParseError(f"cannot parse {path}{where}: {exc}") from exc
    return config_from_dict(raw or {})
