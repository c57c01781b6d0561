"""Three-phase training of the embedding extractor.

Phase I   AAM on unconverted source speech.
Phase II  AAM fine-tuning on converted + source speech, every converted
          utterance labelled with its source speaker.
Phase III converted speech only, AAM + alpha * contrastive loss against a
          bank of source-speech embeddings from the frozen Phase I model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, PhaseError, SamplingError, ShapeError
from .losses import AAMConfig, ContrastiveConfig, aam_loss_batch, combined_loss, contrastive_loss_batch
from .model import Checkpoint, Embedding, ExtractorParams, ModelConfig, embed_batch, extract_embeddings, init_params
from .numerics import Tape
from .synthcorpus import Corpus

DATA_SELECTION = {"I": "source-only", "II": "converted+source", "III": "converted-only"}
LOSS_SELECTION = {"I": "AAM", "II": "AAM", "III": "AAM+alpha*Con"}
PHASE_INDEX = {"I": 1, "II": 2, "III": 3}


@dataclass(frozen=True)
class PhasePlan:
    phase: str
    epochs: int
    batch_size: int = 32
    learning_rate: float = 0.05

    def __post_init__(self):
        if self.phase not in DATA_SELECTION:
            raise PhaseError(f"unknown phase {self.phase!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise PhaseError(f"phase {self.phase}: invalid epochs/batch size/learning rate")

    @property
    def data_selection(self) -> str:
        return DATA_SELECTION[self.phase]

    @property
    def loss_selection(self) -> str:
        return LOSS_SELECTION[self.phase]


DEFAULT_PLANS = {
    "I": PhasePlan("I", epochs=30, batch_size=32, learning_rate=0.05),
    "II": PhasePlan("II", epochs=20, batch_size=32, learning_rate=0.02),
    "III": PhasePlan("III", epochs=20, batch_size=32, learning_rate=0.01),
}


@dataclass
class EpochStats:
    phase: str
    epoch: int
    loss: float
    aam: float
    con: float | None
    lr: float

    def log_line(self) -> str:
        con = "-" if self.con is None else f"{self.con:.6g}"
        return (
            f"phase={self.phase} epoch={self.epoch} loss={self.loss:.6g} "
            f"aam={self.aam:.6g} con={con} lr={self.lr:.6g}"
        )


@dataclass
class PhaseResult:
    checkpoint: Checkpoint
    epochs: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)  # (total, aam, con | None) per step

    @property
    def log_lines(self) -> list[str]:
        return [e.log_line() for e in self.epochs]


def sgd_step(params: dict, grads: dict, learning_rate: float) -> dict:
    """params - learning_rate * grads, returned as a new mapping."""
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    out = {}
    for name, value in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(value):
            raise ShapeError(f"{name}: gradient shape {np.shape(g)} vs parameter {np.shape(value)}")
        out[name] = value - learning_rate * g
    return out


def speaker_labels(corpus: Corpus) -> dict:
    """Class index per train source speaker, in sorted-id order."""
    return {s: i for i, s in enumerate(corpus.manifest.source_speakers("train"))}


def _phase_rngs(seed: int, phase: str):
    k = PHASE_INDEX[phase]
    return np.random.default_rng([seed, k, 0]), np.random.default_rng([seed, k, 1])


def _check_plan(plan: PhasePlan, phase: str) -> None:
    if plan.phase != phase:
        raise PhaseError(f"expected a phase {phase} plan, got phase {plan.phase}")


def _check_ckpt(ckpt: Checkpoint, phase: str) -> None:
    if ckpt.phase != phase:
        raise PhaseError(f"expected a phase {phase} checkpoint, got phase {ckpt.phase}")


def _labelled(corpus: Corpus, utts) -> tuple:
    labels = speaker_labels(corpus)
    ids, ys = [], []
    for u in utts:
        if u.source_speaker not in labels:
            raise DataError(f"{u.utt_id}: source speaker {u.source_speaker} has no training label")
        ids.append(u.utt_id)
        ys.append(labels[u.source_speaker])
    return ids, np.array(ys, dtype=np.intp)


def _run(
    corpus: Corpus,
    params: ExtractorParams,
    ids: list,
    labels: np.ndarray,
    plan: PhasePlan,
    seed: int,
    aam: AAMConfig,
    contrastive: ContrastiveConfig | None = None,
    bank: "SourceEmbeddingBank | None" = None,
    on_epoch=None,
) -> PhaseResult:
    shuffle_rng, negative_rng = _phase_rngs(seed, plan.phase)
    tensors = dict(params.tensors)
    feats = corpus.features
    sources = [(corpus.utterance(i).source_speaker, corpus.utterance(i).source_utt) for i in ids]
    result = PhaseResult(checkpoint=None)
    for epoch in range(1, plan.epochs + 1):
        order = shuffle_rng.permutation(len(ids))
        totals, aams, cons = [], [], []
        for start in range(0, len(order), plan.batch_size):
            batch = order[start:start + plan.batch_size]
            leaves = ExtractorParams(params.config, tensors).leaves(requires_grad=True)
            with Tape() as tape:
                emb = embed_batch([feats[ids[i]] for i in batch], leaves)
                l_aam = aam_loss_batch(emb, leaves["head.weight"], labels[batch], aam)
                if contrastive is not None:
                    cands = bank.candidates([sources[i] for i in batch], contrastive.negatives, negative_rng)
                    l_con = contrastive_loss_batch(emb, cands, contrastive)
                    loss = combined_loss(l_aam, l_con, contrastive.alpha)
                else:
                    l_con, loss = None, l_aam
                grads = tape.gradient(loss, leaves)
            tensors = sgd_step(tensors, grads, plan.learning_rate)
            con_value = None if l_con is None else l_con.item()
            result.step_losses.append((loss.item(), l_aam.item(), con_value))
            totals.append(loss.item() * len(batch))
            aams.append(l_aam.item() * len(batch))
            if con_value is not None:
                cons.append(con_value * len(batch))
        n = len(order)
        result.epochs.append(EpochStats(
            plan.phase, epoch, sum(totals) / n, sum(aams) / n,
            sum(cons) / n if contrastive is not None else None, plan.learning_rate,
        ))
        if on_epoch is not None:
            on_epoch(result.epochs[-1], ExtractorParams(params.config, tensors))
    result.checkpoint = Checkpoint.snapshot(plan.phase, ExtractorParams(params.config, tensors))
    return result


def default_model_config(corpus: Corpus, hidden: int = 64, attention: int = 32, embed_dim: int = 32) -> ModelConfig:
    return ModelConfig(
        feat_dim=corpus.manifest.dims[1], hidden=hidden, attention=attention,
        embed_dim=embed_dim, n_classes=len(corpus.manifest.source_speakers("train")),
    )


def _check_classes(corpus: Corpus, config: ModelConfig) -> None:
    n = len(corpus.manifest.source_speakers("train"))
    if config.n_classes != n:
        raise DataError(f"model has {config.n_classes} classes but the corpus has {n} train source speakers")
    if config.feat_dim != corpus.manifest.dims[1]:
        raise DataError(f"model expects {config.feat_dim} features, corpus has {corpus.manifest.dims[1]}")


def train_phase1(
    corpus: Corpus,
    plan: PhasePlan = DEFAULT_PLANS["I"],
    seed: int = 0,
    model_config: ModelConfig | None = None,
    aam: AAMConfig = AAMConfig(),
    on_epoch=None,
) -> PhaseResult:
    """AAM training on unconverted train speech, labelled by speaker."""
    _check_plan(plan, "I")
    utts = corpus.manifest.utterances_in("train", converted=False)
    if not utts:
        raise DataError("phase I needs unconverted train utterances")
    config = model_config or default_model_config(corpus)
    _check_classes(corpus, config)
    ids, labels = _labelled(corpus, utts)
    params = init_params(config, seed)
    return _run(corpus, params, ids, labels, plan, seed, aam, on_epoch=on_epoch)


def phase2_training_set(corpus: Corpus) -> tuple:
    """(utt ids, labels) for phase II: converted utterances carry their SOURCE label."""
    utts = corpus.manifest.utterances_in("train")
    if not any(u.converted for u in utts):
        raise DataError("phase II needs converted train utterances")
    return _labelled(corpus, utts)


def train_phase2(
    corpus: Corpus,
    phase1: Checkpoint,
    plan: PhasePlan = DEFAULT_PLANS["II"],
    seed: int = 0,
    aam: AAMConfig = AAMConfig(),
    on_epoch=None,
) -> PhaseResult:
    """Fine-tune the phase I model on converted and source speech together."""
    _check_ckpt(phase1, "I")
    _check_plan(plan, "II")
    _check_classes(corpus, phase1.params.config)
    ids, labels = phase2_training_set(corpus)
    return _run(corpus, phase1.params.copy(), ids, labels, plan, seed, aam, on_epoch=on_epoch)


# ---------------------------------------------------------------- phase III


class SourceEmbeddingBank:
    """Frozen phase I embeddings of unconverted train speech, by speaker."""

    def __init__(self, by_speaker: dict, checkpoint_phase: str = "I"):
        self.checkpoint_phase = checkpoint_phase
        self._ids = {}
        self._vecs = {}
        self._where = {}
        for spk in sorted(by_speaker):
            pairs = sorted(by_speaker[spk], key=lambda e: e.utt_id)
            if not pairs:
                raise DataError(f"bank speaker {spk} has no embeddings")
            vecs = np.array([e.values for e in pairs], dtype=np.float64)
            vecs.flags.writeable = False
            self._ids[spk] = tuple(e.utt_id for e in pairs)
            self._vecs[spk] = vecs
            for row, e in enumerate(pairs):
                self._where[e.utt_id] = (spk, row)
        self.speakers = tuple(sorted(by_speaker))
        self._index = {s: i for i, s in enumerate(self.speakers)}

    def __contains__(self, spk) -> bool:
        return spk in self._vecs

    def embeddings(self, spk: str) -> list:
        return [Embedding(u, v) for u, v in zip(self._ids[spk], self._vecs[spk])]

    def embedding(self, utt_id: str) -> Embedding:
        spk, row = self._where[utt_id]
        return Embedding(utt_id, self._vecs[spk][row])

    def sample(self, source_spk: str, k: int, rng, source_utt: str | None = None) -> tuple:
        """(positive, negatives) for one converted utterance.

        The positive is the exact source utterance's embedding when the bank
        holds it, else a uniform draw from the speaker.  Negatives come from k
        distinct other speakers chosen uniformly without replacement.
        """
        if source_spk not in self._vecs:
            raise DataError(f"speaker {source_spk} is not in the embedding bank")
        others = [s for s in self.speakers if s != source_spk]
        if len(others) < k:
            raise SamplingError(f"need {k} other speakers for negatives, bank has {len(others)}")
        if source_utt is not None and source_utt in self._where:
            positive = self.embedding(source_utt)
        else:
            row = int(rng.integers(len(self._ids[source_spk])))
            positive = Embedding(self._ids[source_spk][row], self._vecs[source_spk][row])
        negatives = []
        for j in rng.choice(len(others), size=k, replace=False):
            spk = others[j]
            row = int(rng.integers(len(self._ids[spk])))
            negatives.append(Embedding(self._ids[spk][row], self._vecs[spk][row]))
        return positive, negatives

    def holds(self, utt_id: str) -> bool:
        return utt_id in self._where

    def candidates(self, sources, k: int, rng) -> np.ndarray:
        """(B, k+1, D) array for (source speaker, source utterance) pairs, positive first."""
        out = []
        for spk, source_utt in sources:
            pos, negs = self.sample(spk, k, rng, source_utt)
            out.append([pos.values] + [n.values for n in negs])
        return np.array(out)


def sample_contrastive_set(bank: SourceEmbeddingBank, source_spk: str, k: int, rng, source_utt: str | None = None):
    return bank.sample(source_spk, k, rng, source_utt)


def build_embedding_bank(corpus: Corpus, phase1: Checkpoint) -> SourceEmbeddingBank:
    """Embed every unconverted train utterance with the frozen phase I model."""
    _check_ckpt(phase1, "I")
    utts = corpus.manifest.utterances_in("train", converted=False)
    if not utts:
        raise DataError("no unconverted train utterances to build the bank from")
    vecs = extract_embeddings(phase1.params, corpus.features, [u.utt_id for u in utts])
    by_speaker = {}
    for u in utts:
        by_speaker.setdefault(u.source_speaker, []).append(Embedding(u.utt_id, vecs[u.utt_id]))
    missing = set(corpus.manifest.source_speakers("train")) - set(by_speaker)
    if missing:
        raise DataError(f"train speakers without source speech: {sorted(missing)}")
    return SourceEmbeddingBank(by_speaker, checkpoint_phase=phase1.phase)


def train_phase3(
    corpus: Corpus,
    phase2: Checkpoint,
    bank: SourceEmbeddingBank,
    plan: PhasePlan = DEFAULT_PLANS["III"],
    contrastive: ContrastiveConfig | None = ContrastiveConfig(),
    seed: int = 0,
    aam: AAMConfig = AAMConfig(),
    on_epoch=None,
) -> PhaseResult:
    """Converted-only training with AAM + alpha * contrastive loss.

    ``contrastive=None`` drops the contrastive term entirely (plain AAM
    fine-tuning on converted speech).
    """
    _check_ckpt(phase2, "II")
    _check_plan(plan, "III")
    if bank.checkpoint_phase != "I":
        raise PhaseError("the embedding bank must come from the phase I model")
    _check_classes(corpus, phase2.params.config)
    utts = corpus.manifest.utterances_in("train", converted=True)
    if not utts:
        raise DataError("phase III needs converted train utterances")
    for u in utts:
        if u.source_speaker not in bank:
            raise DataError(f"{u.utt_id}: source speaker {u.source_speaker} missing from the bank")
    ids, labels = _labelled(corpus, utts)
    return _run(corpus, phase2.params.copy(), ids, labels, plan, seed, aam, contrastive, bank, on_epoch)


def mean_positive_cosine(params, corpus: Corpus, bank: SourceEmbeddingBank) -> float:
    """Mean cosine between converted train embeddings and their bank positive."""
    utts = [u for u in corpus.manifest.utterances_in("train", converted=True) if bank.holds(u.source_utt)]
    emb = extract_embeddings(params, corpus.features, [u.utt_id for u in utts])
    total = 0.0
    for u in utts:
        a, b = emb[u.utt_id], bank.embedding(u.source_utt).values
        total += float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return total / len(utts)
