"""Run configuration: one dataclass tree, YAML files, dotted-path overrides.

Validation goes through pydantic, so type errors and unknown keys are
reported with their field path (``guidance.steps``, ``rna.bogus``).
Component seeds in the tree are salts; every stage mixes them with the
global ``seed`` before drawing anything.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Iterable

import yaml
from pydantic import ConfigDict, TypeAdapter, ValidationError

from .codec import CodecSpec, CodecTrainConfig
from .dataprep import DESK_DATAPREP, DataprepConfig
from .lsr.model import LsrConfig
from .lsr.train import LsrTrainConfig
from .manifest import stable_hash
from .refgen.denoiser import DenoiserConfig, DenoiserTrainConfig
from .refgen.guidance import GuidanceConfig
from .rna import RnaConfig

HOME_ENV = "LSRNA_HOME"


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    base_px: int = 64
    scale: float = 2.0
    train_per_class: int = 256
    val_per_class: int = 4
    test_per_class: int = 8
    codec_sizes: tuple[int, ...] = (64, 128, 192)
    codec_per_class: int = 12
    lsr_sources_per_class: int = 6
    lsr_source_px: int = 384
    lsr_val_per_class: int = 2
    lsr_val_px: int = 192

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if min(self.train_per_class, self.val_per_class, self.test_per_class) < 1:
            raise ValueError("every split needs at least one scene per class")

    @property
    def hr_px(self) -> int:
        return int(round(self.base_px * self.scale))


@dataclass
class CodecSection:
    spec: CodecSpec = field(default_factory=lambda: CodecSpec(s=4, channels=4, backend="learned-tiny"))
    width: int = 32
    train: CodecTrainConfig = field(default_factory=CodecTrainConfig)


@dataclass
class LsrSection:
    model: LsrConfig = field(default_factory=lambda: LsrConfig(
        backbone="residual-conv", depth=4, width=32, feature_dim=32, io_channels=4, mlp_widths=(64, 64)))
    train: LsrTrainConfig = field(default_factory=lambda: LsrTrainConfig(
        iterations=1000, batch_size=16, lr=1e-3, lr_crop=8, hr_samples=256))
    rgb_sr: bool = True


@dataclass
class DenoiserSection:
    model: DenoiserConfig = field(default_factory=lambda: DenoiserConfig(width=32, global_context=True))
    train: DenoiserTrainConfig = field(default_factory=lambda: DenoiserTrainConfig(iterations=6000, batch_size=32))
    schedule: str = "linear"
    total_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class GenerateSection:
    n_images: int = 24
    reference_steps: int = 50


@dataclass
class EvalSection:
    patch_size: int = 64
    num_patches: int = 2000
    patch_seed: int = 0
    embedder: str = "fixed-random-projection"
    feature_dim: int = 64
    embed_seed: int = 0
    feature_file: str | None = None
    kid_block_size: int | None = None

    def __post_init__(self):
        if self.embedder not in ("fixed-random-projection", "external-feature-files"):
            raise ValueError(f"unknown embedder {self.embedder!r}")
        if self.embedder == "external-feature-files" and not self.feature_file:
            raise ValueError("external-feature-files needs feature_file")


@dataclass
class SweepSection:
    e_max_values: tuple[float, ...] = (0.0, 0.8, 1.0, 1.2, 1.4)
    steps_values: tuple[int, ...] = (20, 30, 40, 50)
    step_modes: tuple[str, ...] = ("lsr", "latent-bicubic")
    # fewer steps means less noise injected into the guidance, as in a truncated 50-step grid
    step_t_init_rule: str = "steps"
    edge_values: tuple[float, ...] = (0.6, 1.2, 1.8)


@dataclass
class ArtifactPaths:
    codec: str | None = None
    lsr: str | None = None
    rgb_sr: str | None = None
    denoiser: str | None = None
    pairs: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    workdir: str | None = None
    data: DataSection = field(default_factory=DataSection)
    codec: CodecSection = field(default_factory=CodecSection)
    dataprep: DataprepConfig = DESK_DATAPREP
    lsr: LsrSection = field(default_factory=LsrSection)
    denoiser: DenoiserSection = field(default_factory=DenoiserSection)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    rna: RnaConfig = field(default_factory=RnaConfig)
    generate: GenerateSection = field(default_factory=GenerateSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    artifacts: ArtifactPaths = field(default_factory=ArtifactPaths)

    def resolved_workdir(self) -> Path:
        if self.workdir:
            return Path(self.workdir)
        return Path(os.environ.get(HOME_ENV, "lsrna-work"))

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def hash(self) -> str:
        return stable_hash(self.to_dict())


def _strict_tree(cls, seen=None):
    """Forbid unknown keys on ``cls`` and every dataclass nested below it."""
    seen = set() if seen is None else seen
    if cls in seen:
        return
    seen.add(cls)
    cls.__pydantic_config__ = ConfigDict(extra="forbid")
    for f in fields(cls):
        t = f.type if isinstance(f.type, type) else None
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        sub = t if (t and is_dataclass(t)) else (type(default) if is_dataclass(default) else None)
        if sub is not None:
            _strict_tree(sub, seen)


_strict_tree(RunConfig)
_ADAPTER = TypeAdapter(RunConfig)


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _set_path(tree: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key.path=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def _merge(base: dict, update: dict) -> dict:
    out = dict(base)
    for k, v in update.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def build_config(data: dict | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Defaults, then ``data``, then ``overrides``, validated as a whole."""
    tree = _merge(RunConfig().to_dict(), _plain(dict(data or {})))
    for item in overrides:
        key, value = parse_override(item)
        _set_path(tree, key, value)
    try:
        return _ADAPTER.validate_python(tree)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config: " + "; ".join(lines)) from None


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    data = {}
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return build_config(data, overrides)


def dump_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    return path
