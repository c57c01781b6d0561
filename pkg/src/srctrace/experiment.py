"""Helpers for multi-seed experiments (used by scripts/ and the acceptance suite)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evaluate import EvalReport, per_method_report, score_trials
from .losses import ContrastiveConfig
from .model import Checkpoint, extract_embeddings
from .pipeline import DEFAULT_PLANS, build_embedding_bank, train_phase1, train_phase2, train_phase3
from .synthcorpus import Corpus, CorpusConfig, generate_corpus, split_trials


@dataclass
class SeedResult:
    seed: int
    reports: dict = field(default_factory=dict)  # tag -> EvalReport

    def eer(self, tag: str) -> float:
        return self.reports[tag].eer


def evaluate_checkpoint(corpus: Corpus, ckpt: Checkpoint, trials) -> EvalReport:
    ids = {i for t in trials for i in (t.enroll_id, t.test_id)}
    emb = extract_embeddings(ckpt.params, corpus.features, ids)
    return per_method_report(score_trials(trials, emb), corpus.manifest)


def run_seed(
    config: CorpusConfig,
    seed: int,
    through: str = "III",
    variants: dict | None = None,
    plans: dict = DEFAULT_PLANS,
    pairs_per_condition: int = 1000,
    split: str = "dev",
    allow_zero_leak: bool = False,
) -> SeedResult:
    """Generate a corpus and train up to phase ``through`` with one seed.

    Reports are keyed "I", "II", "III".  ``variants`` maps extra tags to
    contrastive configs (or None) for additional phase III runs that share
    the same phase I/II checkpoints.
    """
    corpus = generate_corpus(config, seed, allow_zero_leak=allow_zero_leak)
    trials = split_trials(corpus.manifest, split, pairs_per_condition, seed)
    out = SeedResult(seed)
    c1 = train_phase1(corpus, plans["I"], seed=seed).checkpoint
    out.reports["I"] = evaluate_checkpoint(corpus, c1, trials)
    if through == "I":
        return out
    c2 = train_phase2(corpus, c1, plans["II"], seed=seed).checkpoint
    out.reports["II"] = evaluate_checkpoint(corpus, c2, trials)
    if through == "II":
        return out
    bank = build_embedding_bank(corpus, c1)
    runs = {"III": ContrastiveConfig(), **(variants or {})}
    for tag, con in runs.items():
        c3 = train_phase3(corpus, c2, bank, plans["III"], con, seed=seed).checkpoint
        out.reports[tag] = evaluate_checkpoint(corpus, c3, trials)
    return out


def leak_range(midpoint: float, rel_width: float = 0.5) -> tuple:
    """Leak interval centred on ``midpoint`` spanning +-rel_width of it."""
    return midpoint * (1 - rel_width), min(1.0, midpoint * (1 + rel_width))


def binomial_interval(p: float, n: int, z: float = 1.96) -> tuple:
    """Wilson score interval for a proportion p observed over n trials."""
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def mean(values) -> float:
    return float(np.mean(list(values)))
