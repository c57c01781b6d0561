"""Training objectives: additive angular margin softmax, the speaker
contrastive loss over a positive and K distractors, and their sum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArityError, ConfigError, DegenerateVectorError, EvaluationError, ShapeError
from .numerics import Matrix, as_matrix, ops


@dataclass(frozen=True)
class AAMConfig:
    scale: float = 32.0
    margin: float = 0.2

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError("AAM scale must be positive")
        if not (0.0 <= self.margin < math.pi / 2):
            raise ConfigError("AAM margin must lie in [0, pi/2)")


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.07
    negatives: int = 5
    alpha: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.negatives < 1:
            raise ConfigError("need at least one negative")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")


def _check_nonzero(x: Matrix, what: str) -> None:
    norms = np.linalg.norm(np.atleast_2d(x.data), axis=-1)
    if np.any(norms == 0.0):
        raise DegenerateVectorError(f"{what} has zero norm")


def aam_logits(embeddings, class_weights, labels, cfg: AAMConfig) -> Matrix:
    """(B, C) scaled logits with the angular margin applied to the true class."""
    e = as_matrix(embeddings)
    w = as_matrix(class_weights)
    labels = np.asarray(labels, dtype=np.intp)
    if e.ndim != 2 or w.ndim != 2 or e.shape[1] != w.shape[1]:
        raise ShapeError(f"embeddings {e.shape} and class weights {w.shape} disagree")
    n_classes = w.shape[0]
    if labels.shape != (e.shape[0],):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {e.shape[0]} embeddings")
    if np.any((labels < 0) | (labels >= n_classes)):
        raise IndexError(f"label out of range for {n_classes} classes: {labels.tolist()}")
    _check_nonzero(e, "embedding")
    _check_nonzero(w, "class weight row")

    cos = ops.clip(ops.l2_normalize(e) @ ops.l2_normalize(w).T, -1.0, 1.0)
    onehot = np.zeros((e.shape[0], n_classes))
    onehot[np.arange(e.shape[0]), labels] = 1.0
    cos_y = ops.sum(cos * onehot, axis=1)
    m = cfg.margin
    sin_y = ops.sqrt(ops.clamp_min(1.0 - ops.square(cos_y), 0.0))
    with_margin = cos_y * math.cos(m) - sin_y * math.sin(m)
    # past theta_y + m > pi, cos(theta + m) stops decreasing; use the linear fallback
    wraps = cos_y.data <= math.cos(math.pi - m)
    target = ops.where(~wraps, with_margin, cos_y - m * math.sin(m))
    adjusted = cos + ops.reshape(target - cos_y, (-1, 1)) * onehot
    return adjusted * cfg.scale


def aam_loss_batch(embeddings, class_weights, labels, cfg: AAMConfig = AAMConfig()) -> Matrix:
    """Mean AAM-softmax cross-entropy over a batch."""
    logits = aam_logits(embeddings, class_weights, labels, cfg)
    labels = np.asarray(labels, dtype=np.intp)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = ops.sum(logits * onehot, axis=1)
    return ops.mean(ops.logsumexp(logits, axis=1) - picked)


def aam_loss(embedding, class_weights, label: int, cfg: AAMConfig = AAMConfig()) -> Matrix:
    e = as_matrix(embedding)
    if not 0 <= label < as_matrix(class_weights).shape[0]:
        raise IndexError(f"label {label} out of range")
    return aam_loss_batch(ops.reshape(e, (1, -1)), class_weights, [label], cfg)


def contrastive_loss_batch(e_c, candidates, cfg: ContrastiveConfig = ContrastiveConfig()) -> Matrix:
    """Mean contrastive loss; ``candidates`` is (B, K+1, D) with the positive at index 0.

    The softmax denominator runs over the positive and the K negatives.
    """
    e_c = as_matrix(e_c)
    candidates = as_matrix(candidates)
    b, d = e_c.shape
    if candidates.ndim != 3 or candidates.shape[0] != b or candidates.shape[2] != d:
        raise ShapeError(f"candidates {candidates.shape} do not match embeddings {e_c.shape}")
    if candidates.shape[1] != cfg.negatives + 1:
        raise ArityError(f"expected {cfg.negatives} negatives, got {candidates.shape[1] - 1}")
    _check_nonzero(e_c, "converted embedding")
    if np.any(np.linalg.norm(candidates.data, axis=-1) == 0.0):
        raise DegenerateVectorError("source embedding has zero norm")
    q = ops.reshape(ops.l2_normalize(e_c), (b, 1, d))
    cos = ops.clip(ops.sum(q * ops.l2_normalize(candidates), axis=2), -1.0, 1.0)
    logits = cos / cfg.temperature
    positive = ops.reshape(ops.take(logits, [0], axis=1), (-1,))
    return ops.mean(ops.logsumexp(logits, axis=1) - positive)


def contrastive_loss(e_c, positive, negatives, cfg: ContrastiveConfig = ContrastiveConfig()) -> Matrix:
    """Loss for one converted embedding, its true source embedding and K distractors."""
    e_c, positive = as_matrix(e_c), as_matrix(positive)
    negatives = [as_matrix(n) for n in negatives]
    if len(negatives) != cfg.negatives:
        raise ArityError(f"expected {cfg.negatives} negatives, got {len(negatives)}")
    vecs = [positive] + negatives
    if any(v.shape != e_c.shape for v in vecs) or e_c.ndim != 1:
        raise ShapeError("all vectors must share one dimension")
    cands = ops.reshape(ops.concat([ops.reshape(v, (1, -1)) for v in vecs], axis=0), (1, len(vecs), -1))
    return contrastive_loss_batch(ops.reshape(e_c, (1, -1)), cands, cfg)


def combined_loss(aam, con, alpha: float) -> Matrix:
    """aam + alpha * con."""
    aam, con = as_matrix(aam), as_matrix(con)
    if not (np.all(np.isfinite(aam.data)) and np.all(np.isfinite(con.data)) and math.isfinite(alpha)):
        raise EvaluationError("combined loss needs finite inputs")
    return aam + con * alpha
