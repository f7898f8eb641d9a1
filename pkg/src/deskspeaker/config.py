"""Pipeline configuration: one nested key-value tree, YAML on disk.

`default_config()` is the reference desk-scale setup (50 synthetic speakers,
30% injected noise); `load_config(path)` overlays a YAML tree onto those
defaults and rejects unknown keys so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass

import yaml

from .synth import SynthCorpusConfig

KNOWN_SYSTEMS = ("S1", "S2", "S3", "S4", "S5", "S6")


@dataclass
class FeatureStageConfig:
    sliding_cmn: bool = False
    cmn_window_s: float = 3.0
    append_deltas: bool = False
    apply_hard_vad: bool = False
    vad_offset: float = -0.5
    soft_vad_slope: float = 2.0
    soft_vad_offset: float = -0.5
    soft_vad_smooth_radius: int = 2
    posterior_dir: str | None = None  # external VPS1 posteriors, keyed by utt id


@dataclass
class EmbedStageConfig:
    hidden_dim: int = 64
    pool_dim: int = 128
    embed_dim: int = 32
    attention_dim: int = 16
    epochs: int = 25
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.5
    decay_every: int = 10
    chunk_len: int = 100
    batch_size: int = 16
    bn_momentum: float = 0.1


@dataclass
class UbmStageConfig:
    n_components: int = 16
    n_iters: int = 15


@dataclass
class TvmStageConfig:
    rank: int = 16
    n_iters: int = 10


@dataclass
class BackendStageConfig:
    plda_dim_embed: int = 16
    plda_dim_ivector: int = 16
    n_iters: int = 10


@dataclass
class EvalStageConfig:
    p_targets: tuple = (0.01, 0.005)


@dataclass
class PipelineConfig:
    seed: int = 17
    out: str = "runs/desk"
    systems: tuple = KNOWN_SYSTEMS
    soft_vad: str = "both"  # "on" | "off" | "both"
    synth: SynthCorpusConfig = field(
        default_factory=lambda: SynthCorpusConfig(noise_fraction_jitter=0.15))
    features: FeatureStageConfig = field(default_factory=FeatureStageConfig)
    embednet: EmbedStageConfig = field(default_factory=EmbedStageConfig)
    ubm: UbmStageConfig = field(default_factory=UbmStageConfig)
    tvm: TvmStageConfig = field(default_factory=TvmStageConfig)
    backend: BackendStageConfig = field(default_factory=BackendStageConfig)
    eval: EvalStageConfig = field(default_factory=EvalStageConfig)

    def __post_init__(self):
        self.systems = tuple(self.systems)
        for s in self.systems:
            if s not in KNOWN_SYSTEMS:
                raise ValueError(f"unknown system {s!r}; choose from {KNOWN_SYSTEMS}")
        if self.soft_vad not in ("on", "off", "both"):
            raise ValueError("soft_vad must be 'on', 'off', or 'both'")

    @property
    def vad_variants(self) -> tuple[bool, ...]:
        return {"off": (False,), "on": (True,), "both": (False, True)}[self.soft_vad]


def default_config(**overrides) -> PipelineConfig:
    cfg = PipelineConfig()
    for key, val in overrides.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config field {key!r}")
        setattr(cfg, key, val)
    cfg.__post_init__()
    return cfg


def _merge(obj, tree: dict, path: str):
    names = {f.name: f for f in fields(obj)}
    for key, val in tree.items():
        if key not in names:
            raise ValueError(f"unknown config key {path}{key}")
        current = getattr(obj, key)
        if is_dataclass(current) and isinstance(val, dict):
            _merge(current, val, f"{path}{key}.")
        else:
            if isinstance(current, tuple) and isinstance(val, list):
                val = tuple(val)
            setattr(obj, key, val)
    return obj


def load_config(path) -> PipelineConfig:
    with open(path) as f:
        tree = yaml.safe_load(f) or {}
    if not isinstance(tree, dict):
        raise ValueError(f"{path}: config must be a key-value tree")
    cfg = PipelineConfig()
    _merge(cfg, tree, "")
    cfg.__post_init__()
    cfg.synth.__post_init__()
    return cfg


def _plain(value):
    if is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


def config_to_dict(cfg: PipelineConfig) -> dict:
    return _plain(cfg)


def save_config(cfg: PipelineConfig, path):
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)


def copy_config(cfg: PipelineConfig) -> PipelineConfig:
    return dataclasses.replace(
        cfg,
        synth=dataclasses.replace(cfg.synth),
        features=dataclasses.replace(cfg.features),
        embednet=dataclasses.replace(cfg.embednet),
        ubm=dataclasses.replace(cfg.ubm),
        tvm=dataclasses.replace(cfg.tvm),
        backend=dataclasses.replace(cfg.backend),
        eval=dataclasses.replace(cfg.eval),
    )
