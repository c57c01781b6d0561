"""Cosine trial scoring, interpolated EER and per-method breakdowns."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateEvaluationError, MissingIdError
from .numerics import cosine_value
from .synthcorpus import CorpusManifest
from .trials import Trial


@dataclass(frozen=True)
class ScoredTrial:
    trial: Trial
    score: float


def score_trials(trials, embeddings: dict) -> list[ScoredTrial]:
    """Cosine similarity of enrollment and test embeddings, in trial order."""
    missing = sorted({i for t in trials for i in (t.enroll_id, t.test_id) if i not in embeddings})
    if missing:
        raise MissingIdError(f"no embedding for {len(missing)} utterance(s): {' '.join(missing[:10])}")
    return [ScoredTrial(t, cosine_value(embeddings[t.enroll_id], embeddings[t.test_id])) for t in trials]


def operating_points(target_scores, nontarget_scores) -> tuple:
    """(thresholds, FAR, FRR) at every distinct score plus a point above them all.

    Acceptance is ``score >= threshold``.  The final point (threshold equal
    to the top score, nothing accepted) closes the curve at FAR=0, FRR=1.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    thresholds = np.unique(np.concatenate([tar, non]))
    far = (len(non) - np.searchsorted(non, thresholds, side="left")) / len(non)
    frr = np.searchsorted(tar, thresholds, side="left") / len(tar)
    return (
        np.append(thresholds, thresholds[-1]),
        np.append(far, 0.0),
        np.append(frr, 1.0),
    )


def eer_from_scores(target_scores, nontarget_scores) -> tuple:
    """(EER, threshold) by linear interpolation at the sign change of FAR - FRR."""
    if len(target_scores) == 0 or len(nontarget_scores) == 0:
        raise DegenerateEvaluationError("EER needs at least one target and one nontarget trial")
    thr, far, frr = operating_points(target_scores, nontarget_scores)
    diff = far - frr  # starts at 1, ends at -1, non-increasing
    i = int(np.argmax(diff <= 0.0))
    if diff[i] == 0.0:
        return float(far[i]), float(thr[i])
    w = diff[i - 1] / (diff[i - 1] - diff[i])
    eer = far[i - 1] + w * (far[i] - far[i - 1])
    return float(eer), float(thr[i - 1] + w * (thr[i] - thr[i - 1]))


def compute_eer(scored) -> tuple:
    tar = [s.score for s in scored if s.trial.is_target]
    non = [s.score for s in scored if not s.trial.is_target]
    return eer_from_scores(tar, non)


@dataclass
class MethodBucket:
    method_id: int
    eer: float | None  # None when either class has fewer than 2 trials
    n_target: int
    n_nontarget: int
    group: str  # "known", "dev-only" or "test-only"


@dataclass
class EvalReport:
    eer: float
    threshold: float
    n_target: int
    n_nontarget: int
    methods: list = field(default_factory=list)

    def bucket(self, method_id: int) -> MethodBucket:
        return next(b for b in self.methods if b.method_id == method_id)

    def mean_eer(self, group: str) -> float | None:
        vals = [b.eer for b in self.methods if b.group == group and b.eer is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def known(self) -> list:
        return [b for b in self.methods if b.group == "known"]

    @property
    def unseen(self) -> list:
        return [b for b in self.methods if b.group != "known"]

    def to_text(self) -> str:
        lines = [f"overall eer={100 * self.eer:.3f} thr={self.threshold:.6f}"]
        for b in self.methods:
            eer = "-" if b.eer is None else f"{100 * b.eer:.3f}"
            lines.append(f"method {b.method_id} eer={eer} n_target={b.n_target} n_nontarget={b.n_nontarget}")
        return "\n".join(lines) + "\n"


def _method_group(manifest: CorpusManifest, method_id: int) -> str:
    splits = next((m.splits for m in manifest.methods if m.method_id == method_id), None)
    if splits is None:
        return "known" if method_id in {u.method_id for u in manifest.utterances_in("train")} else "test-only"
    if "train" in splits:
        return "known"
    return "dev-only" if "dev" in splits else "test-only"


def per_method_report(scored, manifest: CorpusManifest) -> EvalReport:
    """Overall EER plus one bucket per method of the test utterance.

    Buckets are listed known methods first, then dev-only, then test-only.
    """
    index = manifest.by_id()
    eer, thr = compute_eer(scored)
    buckets = {}
    for s in scored:
        u = index.get(s.trial.test_id)
        if u is None:
            raise MissingIdError(f"utterance {s.trial.test_id} is not in the manifest")
        buckets.setdefault(u.method_id, []).append(s)
    order = {"known": 0, "dev-only": 1, "test-only": 2}
    methods = []
    for mid, group_scored in buckets.items():
        n_t = sum(s.trial.is_target for s in group_scored)
        n_n = len(group_scored) - n_t
        bucket_eer = compute_eer(group_scored)[0] if n_t >= 2 and n_n >= 2 else None
        methods.append(MethodBucket(mid, bucket_eer, n_t, n_n, _method_group(manifest, mid)))
    methods.sort(key=lambda b: (order[b.group], b.method_id))
    n_target = sum(s.trial.is_target for s in scored)
    return EvalReport(eer, thr, n_target, len(scored) - n_target, methods)


def write_scores(scored, path) -> None:
    with open(path, "w") as f:
        for s in scored:
            f.write(f"{s.trial.enroll_id} {s.trial.test_id} {s.score:.6f}\n")


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(report.to_text())
