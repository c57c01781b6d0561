"""Flat ``key = value`` run configuration.

Every key and its default is listed in ``RunConfig``; a config file only
needs the keys it changes.  ``#`` starts a comment.  Unknown keys are an
error so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .losses import AAMConfig, ContrastiveConfig
from .pipeline import PhasePlan
from .synthcorpus import CorpusConfig


@dataclass(frozen=True)
class RunConfig:
    # corpus
    style_dim: int = 8
    feat_dim: int = 20
    min_frames: int = 30
    max_frames: int = 80
    n_train_speakers: int = 40
    n_dev_speakers: int = 10
    n_test_speakers: int = 10
    utts_per_train_speaker: int = 30
    utts_per_eval_speaker: int = 20
    n_train_targets: int = 40
    n_eval_targets: int = 10
    n_train_methods: int = 8
    n_dev_methods: int = 4
    n_test_methods: int = 4
    leak_min: float = 0.15
    leak_max: float = 0.6
    noise_scale: float = 0.1
    content_step: float = 0.03
    method_spread: float = 0.2
    trials_per_condition: int = 1000
    # model
    hidden: int = 64
    attention: int = 32
    embed_dim: int = 32
    # phases
    epochs_1: int = 30
    epochs_2: int = 20
    epochs_3: int = 20
    lr_1: float = 0.05
    lr_2: float = 0.02
    lr_3: float = 0.01
    batch_size: int = 32
    # losses
    aam_scale: float = 32.0
    aam_margin: float = 0.2
    temperature: float = 0.07
    negatives: int = 5
    alpha: float = 1.0
    # seeds
    corpus_seed: int = 0
    train_seed: int = 0

    def corpus(self) -> CorpusConfig:
        names = {f.name for f in fields(CorpusConfig)}
        return CorpusConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def plan(self, phase: str) -> PhasePlan:
        k = {"I": 1, "II": 2, "III": 3}[phase]
        return PhasePlan(phase, getattr(self, f"epochs_{k}"), self.batch_size, getattr(self, f"lr_{k}"))

    def aam(self) -> AAMConfig:
        return AAMConfig(scale=self.aam_scale, margin=self.aam_margin)

    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(temperature=self.temperature, negatives=self.negatives, alpha=self.alpha)

    def validate(self) -> None:
        self.corpus().validate()
        for phase in ("I", "II", "III"):
            self.plan(phase)
        self.aam()
        self.contrastive()
        for name in ("trials_per_condition", "hidden", "attention", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.corpus_seed < 0 or self.train_seed < 0:
            raise ConfigError("seeds must be non-negative")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def replace(self, **changes) -> "RunConfig":
        out = dataclasses.replace(self, **changes)
        out.validate()
        return out


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        cast = int if types[key] in (int, "int") else float
        try:
            values[key] = cast(value)
        except ValueError:
            raise ConfigError(f"{source}:{n}: {key} expects {cast.__name__}, got {value!r}") from None
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
