"""Configuration dataclasses and their JSON (de)serialisation.

Toy-scale values are the defaults; the published training setting is
expressible by overriding fields (``input_size=256``, ``max_steps=80000``,
``batch_size=16``).
"""
from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class Ablation:
    """Which of the three optional modules are active."""

    hafs: bool = True
    sat: bool = True
    dfsm: bool = True

    def as_tuple(self):
        return (self.hafs, self.sat, self.dfsm)

    @classmethod
    def baseline(cls):
        return cls(False, False, False)


def ablation_rows():
    """The eight toggle combinations, ordered as in the published ablation table.

    Baseline first, then single modules, then pairs, full model last.
    """
    rows = []
    for k in range(4):
        for on in itertools.combinations(range(3), k):
            rows.append(Ablation(*(i in on for i in range(3))))
    return rows


@dataclass
class BackboneConfig:
    input_size: int = 64
    patch_size: int = 16
    vit_dim: int = 64
    vit_depth: int = 4
    vit_heads: int = 4
    cnn_channels: list[int] = field(default_factory=lambda: [16, 32, 64, 64])
    fused_channels: int = 64
    seed: int = 0

    def __post_init__(self):
        self.cnn_channels = list(self.cnn_channels)
        if self.input_size <= 0 or self.input_size % 16:
            raise ConfigError(f"input_size must be a positive multiple of 16, got {self.input_size}")
        if self.patch_size != 16:
            # the token grid has to land on the 1/16 CNN grid for fusion
            raise ConfigError(f"patch_size must be 16, got {self.patch_size}")
        if self.vit_heads <= 0 or self.vit_dim % self.vit_heads:
            raise ConfigError(f"vit_dim={self.vit_dim} is not divisible by vit_heads={self.vit_heads}")
        if self.vit_depth < 0:
            raise ConfigError("vit_depth must be >= 0")
        if len(self.cnn_channels) != 4 or any(int(c) <= 0 for c in self.cnn_channels):
            raise ConfigError(f"cnn_channels must be 4 positive ints, got {self.cnn_channels}")
        if self.fused_channels <= 0:
            raise ConfigError("fused_channels must be positive")

    @property
    def n_tokens(self):
        return (self.input_size // self.patch_size) ** 2


@dataclass
class SynthConfig:
    """Synthetic bi-temporal corpus generator settings.

    ``n_changes`` is the range of objects added or removed between phases.
    With ``n_changes=(0, 0)`` no change is generated and ``change_fraction``
    is not enforced.
    """

    size: int = 64
    n_objects: tuple[int, int] = (2, 5)
    kinds: tuple[str, ...] = ("rectangle", "ellipse")
    n_changes: tuple[int, int] = (1, 3)
    change_fraction: tuple[float, float] = (0.05, 0.2)
    brightness: float = 0.05
    contrast: float = 0.05
    noise_sigma: float = 0.02
    shift_px: int = 1
    seed: int = 0

    def __post_init__(self):
        self.n_objects = tuple(int(v) for v in self.n_objects)
        self.n_changes = tuple(int(v) for v in self.n_changes)
        self.change_fraction = tuple(float(v) for v in self.change_fraction)
        self.kinds = tuple(self.kinds)
        if self.size <= 0 or self.size % 16:
            raise ConfigError(f"synth size must be a positive multiple of 16, got {self.size}")
        lo, hi = self.change_fraction
        if not 0 < lo <= hi < 1:
            raise ConfigError(f"change_fraction must satisfy 0 < lo <= hi < 1, got {self.change_fraction}")
        if self.shift_px < 0:
            raise ConfigError("shift_px must be >= 0")
        if not 0 <= self.n_objects[0] <= self.n_objects[1]:
            raise ConfigError(f"bad n_objects range {self.n_objects}")
        if not 0 <= self.n_changes[0] <= self.n_changes[1]:
            raise ConfigError(f"bad n_changes range {self.n_changes}")
        bad = set(self.kinds) - {"rectangle", "ellipse"}
        if bad or not self.kinds:
            raise ConfigError(f"unknown object kinds {sorted(bad)}")
        if min(self.brightness, self.contrast, self.noise_sigma) < 0:
            raise ConfigError("photometric amplitudes must be >= 0")


@dataclass
class TrainConfig:
    batch_size: int = 4
    lr0: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 1e-4
    max_steps: int = 2000
    poly_power: float = 0.9
    eval_every: int = 100
    seed: int = 0
    ablation: Ablation = field(default_factory=Ablation)
    augment: bool = True
    crop_fraction: float = 7 / 8
    loss_weights: tuple[float, float] = (1.0, 1.0)
    threshold: float = 0.5

    def __post_init__(self):
        if isinstance(self.ablation, dict):
            self.ablation = Ablation(**self.ablation)
        self.betas = tuple(float(b) for b in self.betas)
        self.loss_weights = tuple(float(w) for w in self.loss_weights)
        if not self.lr0 > 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not self.poly_power > 0:
            raise ConfigError(f"poly_power must be > 0, got {self.poly_power}")
        if self.max_steps <= 0:
            raise ConfigError(f"max_steps must be > 0, got {self.max_steps}")
        if not 0 < self.eval_every <= self.max_steps:
            raise ConfigError(f"eval_every must lie in (0, max_steps], got {self.eval_every}")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be > 0")
        if not 0 < self.crop_fraction <= 1:
            raise ConfigError("crop_fraction must lie in (0, 1]")


@dataclass
class DataConfig:
    """Exactly one of ``root`` (on-disk corpus) or ``synth`` (generated)."""

    root: str | None = None
    synth: SynthConfig | None = None
    splits: dict[str, int] = field(default_factory=lambda: {"train": 16, "val": 8, "test": 8})

    def __post_init__(self):
        if isinstance(self.synth, dict):
            self.synth = SynthConfig(**self.synth)
        if (self.root is None) == (self.synth is None):
            raise ConfigError("data must specify exactly one of 'root' or 'synth'")
        self.splits = {k: int(v) for k, v in self.splits.items()}


@dataclass
class ExperimentConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=lambda: DataConfig(synth=SynthConfig()))
    output_dir: str = "runs/default"

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            self.backbone = BackboneConfig(**self.backbone)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.data, dict):
            self.data = DataConfig(**self.data)

    def to_dict(self):
        return to_jsonable(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_seed(self, seed):
        """Copy with every subsystem seed replaced by ``seed``."""
        d = self.to_dict()
        d["backbone"]["seed"] = seed
        d["train"]["seed"] = seed
        if d["data"]["synth"] is not None:
            d["data"]["synth"]["seed"] = seed
        return ExperimentConfig.from_dict(d)


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    return obj


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(raw)


def save_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
