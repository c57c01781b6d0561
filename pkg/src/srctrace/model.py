"""Embedding extractor: per-frame encoder, attentive statistics pooling,
embedding projection and a cosine classification head."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, EmptyInputError, ShapeError
from .numerics import Matrix, ops

CKPT_MAGIC = "#source-trace-ckpt v1"
PHASES = ("I", "II", "III")
POOL_EPS = 1e-9


@dataclass(frozen=True)
class ModelConfig:
    feat_dim: int = 20
    hidden: int = 64
    attention: int = 32
    embed_dim: int = 32
    n_classes: int = 40

    def shapes(self) -> dict:
        f, h, a, d, c = self.feat_dim, self.hidden, self.attention, self.embed_dim, self.n_classes
        return {
            "enc1.weight": (h, f),
            "enc1.bias": (h,),
            "enc2.weight": (h, h),
            "enc2.bias": (h,),
            "att.weight": (a, h),
            "att.bias": (a,),
            "att.vector": (a,),
            "emb.weight": (d, 2 * h),
            "emb.bias": (d,),
            "head.weight": (c, d),
        }


# fan-in used for the uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation
_FAN_IN = {
    "enc1": lambda c: c.feat_dim,
    "enc2": lambda c: c.hidden,
    "att": lambda c: c.hidden,
    "emb": lambda c: 2 * c.hidden,
    "head": lambda c: c.embed_dim,
}


@dataclass
class ExtractorParams:
    config: ModelConfig
    tensors: dict = field(repr=False)  # name -> float64 ndarray
    # reserved slot for a conversion-method head; nothing reads or trains it
    method_head: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        shapes = self.config.shapes()
        if set(shapes) != set(self.tensors):
            raise ShapeError(f"parameter names {sorted(self.tensors)} do not match {sorted(shapes)}")
        for name, shape in shapes.items():
            if tuple(self.tensors[name].shape) != shape:
                raise ShapeError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")

    @property
    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def leaves(self, requires_grad: bool = False) -> dict:
        return {k: Matrix(v, requires_grad=requires_grad) for k, v in self.tensors.items()}

    def copy(self) -> "ExtractorParams":
        return ExtractorParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def init_params(config: ModelConfig, seed: int) -> ExtractorParams:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in config.shapes().items():
        bound = 1.0 / np.sqrt(_FAN_IN[name.split(".")[0]](config))
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ExtractorParams(config, tensors)


def _as_leaves(params) -> dict:
    return params.leaves() if isinstance(params, ExtractorParams) else params


# ---------------------------------------------------------------- forward


def encode_frames(features, params) -> Matrix:
    """Per-frame affine -> tanh -> affine -> tanh; rows never interact."""
    p = _as_leaves(params)
    x = features if isinstance(features, Matrix) else Matrix(features)
    if x.ndim != 2 or x.shape[1] != p["enc1.weight"].shape[1]:
        raise ShapeError(
            f"features of shape {x.shape} do not match encoder input width {p['enc1.weight'].shape[1]}"
        )
    h = ops.tanh(x @ p["enc1.weight"].T + p["enc1.bias"])
    return ops.tanh(h @ p["enc2.weight"].T + p["enc2.bias"])


def attentive_stats_pool(hidden, params, lengths=None) -> Matrix:
    """Attention-weighted mean and standard deviation over frames.

    With ``lengths`` the rows of ``hidden`` are consecutive segments and one
    (B, 2H) row is returned per segment; otherwise a single (2H,) vector.
    """
    p = _as_leaves(params)
    hidden = hidden if isinstance(hidden, Matrix) else Matrix(hidden)
    if hidden.shape[0] == 0:
        raise EmptyInputError("attentive pooling over an empty sequence")
    single = lengths is None
    if single:
        lengths = [hidden.shape[0]]
    scores = ops.tanh(hidden @ p["att.weight"].T + p["att.bias"]) @ ops.reshape(p["att.vector"], (-1, 1))
    alpha = ops.segment_softmax(ops.reshape(scores, (-1,)), lengths)
    weights = ops.reshape(alpha, (-1, 1))
    mu = ops.segment_sum(weights * hidden, lengths)
    second = ops.segment_sum(weights * ops.square(hidden), lengths)
    sigma = ops.sqrt(ops.clamp_min(second - ops.square(mu), POOL_EPS))
    pooled = ops.concat([mu, sigma], axis=1)
    return ops.reshape(pooled, (-1,)) if single else pooled


def embed_batch(feature_list, params) -> Matrix:
    """Embeddings (B, D) for a list of (T_i, F) feature arrays, one tape pass."""
    p = _as_leaves(params)
    if not feature_list:
        raise EmptyInputError("empty batch")
    lengths = [len(x) for x in feature_list]
    if min(lengths) == 0:
        raise EmptyInputError("utterance with zero frames")
    stacked = Matrix._wrap(np.concatenate([np.asarray(x, dtype=np.float64) for x in feature_list]), False)
    pooled = attentive_stats_pool(encode_frames(stacked, p), p, lengths)
    return pooled @ p["emb.weight"].T + p["emb.bias"]


@dataclass
class Embedding:
    utt_id: str
    values: np.ndarray


def extract_embedding(features, params, utt_id: str = "") -> Embedding:
    """Raw (not length-normalised) embedding of one utterance."""
    p = _as_leaves(params)
    pooled = attentive_stats_pool(encode_frames(features, p), p)
    e = ops.reshape(pooled, (1, -1)) @ p["emb.weight"].T + p["emb.bias"]
    return Embedding(utt_id, np.array(e.data[0]))


def extract_embeddings(params, features: dict, utt_ids, batch_size: int = 256) -> dict:
    """utt_id -> embedding for every id, batched, in sorted-id order."""
    p = _as_leaves(params)
    ids = sorted(set(utt_ids))
    out = {}
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        e = embed_batch([features[u] for u in chunk], p).data
        for u, row in zip(chunk, e):
            out[u] = np.array(row)
    return out


# ---------------------------------------------------------------- files


def quantize(arr: np.ndarray) -> np.ndarray:
    """Round to the 9 significant digits used by every text file."""
    flat = np.asarray(arr, dtype=np.float64).ravel()
    return np.array([float(f"{v:.9g}") for v in flat]).reshape(np.shape(arr))


@dataclass
class Checkpoint:
    phase: str
    params: ExtractorParams

    def __post_init__(self):
        if self.phase not in PHASES:
            raise CheckpointError(f"unknown phase tag {self.phase!r}")

    @classmethod
    def snapshot(cls, phase: str, params: ExtractorParams) -> "Checkpoint":
        """Checkpoint with values rounded exactly as the file stores them, so a
        save/load round trip is bit-exact."""
        tensors = {k: quantize(v) for k, v in params.tensors.items()}
        return cls(phase, ExtractorParams(params.config, tensors))

    def to_text(self) -> str:
        c = self.params.config
        lines = [
            CKPT_MAGIC,
            f"dims feat={c.feat_dim} hidden={c.hidden} attention={c.attention} "
            f"embed={c.embed_dim} classes={c.n_classes}",
            f"phase {self.phase}",
        ]
        for name, shape in c.shapes().items():
            values = " ".join(f"{v:.9g}" for v in self.params.tensors[name].ravel())
            lines.append(f"{name} {'x'.join(map(str, shape))} {values}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Checkpoint":
        lines = text.splitlines()
        if len(lines) < 3 or lines[0] != CKPT_MAGIC:
            raise CheckpointError("not a source-trace checkpoint")
        dims = lines[1].split()
        if dims[0] != "dims":
            raise CheckpointError("missing dims line")
        d = {k: int(v) for k, v in (tok.split("=") for tok in dims[1:])}
        config = ModelConfig(d["feat"], d["hidden"], d["attention"], d["embed"], d["classes"])
        tag = lines[2].split()
        if len(tag) != 2 or tag[0] != "phase":
            raise CheckpointError("missing phase line")
        tensors = {}
        for line in lines[3:]:
            if not line:
                continue
            name, shape, *values = line.split()
            shape = tuple(int(s) for s in shape.split("x"))
            tensors[name] = np.array(values, dtype=np.float64).reshape(shape)
        return cls(tag[1], ExtractorParams(config, tensors))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_text(Path(path).read_text())


def write_embeddings(embeddings: dict, path) -> None:
    with open(path, "w") as f:
        for utt_id in sorted(embeddings):
            f.write(utt_id + " " + " ".join(f"{v:.9g}" for v in embeddings[utt_id]) + "\n")


def read_embeddings(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line:
            utt_id, *values = line.split()
            out[utt_id] = np.array(values, dtype=np.float64)
    return out
