"""Synthetic converted-speech corpus.

Every speaker owns a latent style vector.  A conversion method projects the
target speaker's style into feature space and lets a scaled, method-specific
projection of the source style leak through:

    frame[t] = mix_k @ z_target + leak_strength_k * (leak_k @ z_source) + content[t] + noise

Unconverted speech is the same formula with the natural-speech method 0,
``z_target = z_source`` and leak strength 1.  Converted utterances share the
content trajectory (and length) of the source utterance they were made from.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, TrialError
from .trials import NONTARGET, TARGET, Trial

SPLITS = ("train", "dev", "test")
MANIFEST_MAGIC = "#source-trace-manifest v1"


@dataclass(frozen=True)
class CorpusConfig:
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

    def validate(self, allow_zero_leak: bool = False) -> None:
        for name in ("style_dim", "feat_dim", "min_frames"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_frames < self.min_frames:
            raise ConfigError("max_frames must be >= min_frames")
        counts = (
            "n_train_speakers", "n_dev_speakers", "n_test_speakers",
            "utts_per_train_speaker", "utts_per_eval_speaker",
            "n_train_targets", "n_eval_targets",
            "n_train_methods", "n_dev_methods", "n_test_methods",
        )
        for name in counts:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        lo = 0.0 if allow_zero_leak else np.nextafter(0.0, 1.0)
        if not (lo <= self.leak_min <= self.leak_max <= 1.0):
            raise ConfigError(
                f"leak range [{self.leak_min}, {self.leak_max}] must lie in (0, 1]"
            )
        if self.noise_scale < 0 or self.content_step < 0 or self.method_spread < 0:
            raise ConfigError("noise_scale, content_step and method_spread must be >= 0")

    @property
    def dims(self) -> tuple:
        return (self.style_dim, self.feat_dim, self.min_frames, self.max_frames)


@dataclass
class SpeakerProfile:
    speaker_id: str
    style: np.ndarray
    role: str  # "source" or "target"
    split: str


@dataclass
class ConversionMethod:
    method_id: int
    mix: np.ndarray
    leak: np.ndarray
    leak_strength: float
    noise_scale: float
    splits: tuple = ()

    def __post_init__(self):
        if self.method_id < 1:
            raise ConfigError(f"conversion method ids start at 1, got {self.method_id}")
        if not (0.0 < self.leak_strength <= 1.0):
            raise ConfigError(
                f"method {self.method_id}: leak_strength {self.leak_strength} must be in (0, 1]; "
                "without leakage the source speaker cannot be traced"
            )
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")

    @classmethod
    def unchecked(cls, **kwargs) -> "ConversionMethod":
        """Build a method without the leakage invariant (zero-leak controls only)."""
        obj = cls.__new__(cls)
        for f in fields(cls):
            setattr(obj, f.name, kwargs.get(f.name, f.default))
        return obj


@dataclass
class Utterance:
    utt_id: str
    source_speaker: str
    target_speaker: str | None
    method_id: int
    split: str
    n_frames: int

    def __post_init__(self):
        if (self.method_id == 0) != (self.target_speaker is None):
            raise DataError(f"{self.utt_id}: method 0 iff no target speaker")
        if self.split not in SPLITS:
            raise DataError(f"{self.utt_id}: unknown split {self.split!r}")

    @property
    def converted(self) -> bool:
        return self.method_id != 0

    @property
    def source_utt(self) -> str:
        """Id of the unconverted utterance this one was made from."""
        return self.utt_id.rsplit("_m", 1)[0] if self.converted else self.utt_id


@dataclass
class CorpusManifest:
    seed: int
    speakers: list
    methods: list
    utterances: list
    dims: tuple  # (style_dim, feat_dim, min_frames, max_frames)

    def method_availability(self, split: str) -> list[int]:
        return sorted(m.method_id for m in self.methods if split in m.splits)

    def known_methods(self) -> list[int]:
        return self.method_availability("train")

    def utterances_in(self, split: str, converted: bool | None = None) -> list[Utterance]:
        return [
            u for u in self.utterances
            if u.split == split and (converted is None or u.converted == converted)
        ]

    def source_speakers(self, split: str) -> list[str]:
        return sorted({u.source_speaker for u in self.utterances if u.split == split})

    def by_id(self) -> dict:
        return {u.utt_id: u for u in self.utterances}


@dataclass
class Corpus:
    manifest: CorpusManifest
    features: dict = field(repr=False)  # utt_id -> (T, F) float64 array

    def __post_init__(self):
        self._index = self.manifest.by_id()

    def utterance(self, utt_id: str) -> Utterance:
        try:
            return self._index[utt_id]
        except KeyError:
            raise DataError(f"unknown utterance {utt_id}") from None


# ---------------------------------------------------------------- generation


def _content(rng, n_frames: int, feat_dim: int, step: float) -> np.ndarray:
    walk = np.cumsum(rng.normal(0.0, step, size=(n_frames + 2, feat_dim)), axis=0)
    return (walk[:-2] + walk[1:-1] + walk[2:]) / 3.0


def _method_params(rng, base_mix, base_leak, spread):
    shape = base_mix.shape
    scale = spread / np.sqrt(shape[1])
    mix = base_mix + rng.normal(0.0, scale, size=shape)
    leak = base_leak + rng.normal(0.0, scale, size=shape)
    return mix, leak


def generate_corpus(config: CorpusConfig, seed: int, allow_zero_leak: bool = False) -> Corpus:
    """Draw speakers, methods and utterances deterministically from ``seed``.

    ``allow_zero_leak`` admits ``leak_min == 0`` for control corpora; such
    methods are built with :meth:`ConversionMethod.unchecked`.
    """
    config.validate(allow_zero_leak)
    rng = np.random.default_rng(seed)
    ds, nf = config.style_dim, config.feat_dim

    speakers = []
    groups = {}
    plan = [
        ("source", "train", config.n_train_speakers, "src"),
        ("source", "dev", config.n_dev_speakers, "src"),
        ("source", "test", config.n_test_speakers, "src"),
        ("target", "train", config.n_train_targets, "tgt"),
        ("target", "dev", config.n_eval_targets, "tgt"),
        ("target", "test", config.n_eval_targets, "tgt"),
    ]
    for role, split, count, prefix in plan:
        group = []
        for i in range(count):
            spk = SpeakerProfile(f"{prefix}-{split}-{i:03d}", rng.normal(size=ds), role, split)
            group.append(spk)
        speakers.extend(group)
        groups[role, split] = group

    base_mix = rng.normal(0.0, 1.0 / np.sqrt(ds), size=(nf, ds))
    base_leak = rng.normal(0.0, 1.0 / np.sqrt(ds), size=(nf, ds))
    n_train = config.n_train_methods
    n_dev = n_train + config.n_dev_methods
    n_test = n_dev + config.n_test_methods
    methods = []
    for k in range(1, n_test + 1):
        mix, leak = _method_params(rng, base_mix, base_leak, config.method_spread)
        strength = float(rng.uniform(config.leak_min, config.leak_max))
        splits = ("train", "dev", "test") if k <= n_train else ("dev", "test") if k <= n_dev else ("test",)
        params = dict(
            method_id=k, mix=mix, leak=leak, leak_strength=strength,
            noise_scale=config.noise_scale, splits=splits,
        )
        methods.append(ConversionMethod.unchecked(**params) if strength == 0.0 else ConversionMethod(**params))
    by_id = {m.method_id: m for m in methods}

    utterances, features = [], {}

    def emit(utt_id, src, tgt, method, split, content):
        if method is None:
            mean = (base_mix + base_leak) @ src.style
            noise = config.noise_scale
        else:
            mean = method.mix @ tgt.style + method.leak_strength * (method.leak @ src.style)
            noise = method.noise_scale
        x = mean + content + rng.normal(0.0, 1.0, size=content.shape) * noise
        utterances.append(Utterance(
            utt_id, src.speaker_id, None if tgt is None else tgt.speaker_id,
            0 if method is None else method.method_id, split, len(content),
        ))
        features[utt_id] = x

    for split in SPLITS:
        available = [by_id[k] for k in range(1, {"train": n_train, "dev": n_dev, "test": n_test}[split] + 1)]
        targets = groups["target", split]
        per_spk = config.utts_per_train_speaker if split == "train" else config.utts_per_eval_speaker
        counter = itertools.count()
        for src in groups["source", split]:
            for u in range(per_spk):
                base_id = f"{src.speaker_id}-u{u:03d}"
                n_frames = int(rng.integers(config.min_frames, config.max_frames + 1))
                content = _content(rng, n_frames, nf, config.content_step)
                if split == "train":
                    emit(base_id, src, None, None, split, content)
                method = available[next(counter) % len(available)]
                tgt = targets[int(rng.integers(len(targets)))]
                emit(f"{base_id}_m{method.method_id:02d}", src, tgt, method, split, content)

    manifest = CorpusManifest(seed, speakers, methods, utterances, config.dims)
    return Corpus(manifest, features)


# ---------------------------------------------------------------- trials


def split_trials(manifest: CorpusManifest, split: str, pairs_per_condition: int, seed: int) -> list[Trial]:
    """Balanced target/nontarget trials among the converted utterances of ``split``.

    ``pairs_per_condition`` trials are drawn per label, uniformly without
    replacement from all unordered pairs, then randomly oriented.  A trial is
    a target iff both utterances share a source speaker.
    """
    if split not in ("dev", "test"):
        raise TrialError(f"trials are built for dev or test, not {split!r}")
    utts = sorted(manifest.utterances_in(split, converted=True), key=lambda u: u.utt_id)
    per_spk = {}
    for u in utts:
        per_spk.setdefault(u.source_speaker, []).append(u)
    usable = [s for s, us in per_spk.items() if len(us) >= 2]
    if len(usable) < 2:
        raise TrialError(
            f"{split}: need >= 2 source speakers with >= 2 converted utterances, have {len(usable)}"
        )

    n = len(utts)
    ii, jj = np.triu_indices(n, k=1)
    spk_index = {s: i for i, s in enumerate(sorted(per_spk))}
    spk = np.array([spk_index[u.source_speaker] for u in utts])
    same = spk[ii] == spk[jj]
    rng = np.random.default_rng(seed)
    chosen = []
    for label, mask in ((TARGET, same), (NONTARGET, ~same)):
        pool = np.flatnonzero(mask)
        if len(pool) < pairs_per_condition:
            raise TrialError(
                f"{split}: {label} trials need {pairs_per_condition} pairs, only {len(pool)} "
                f"available (short by {pairs_per_condition - len(pool)})"
            )
        picked = np.sort(rng.choice(pool, size=pairs_per_condition, replace=False))
        flip = rng.random(pairs_per_condition) < 0.5
        for p, f in zip(picked, flip):
            a, b = utts[ii[p]].utt_id, utts[jj[p]].utt_id
            chosen.append(Trial(label, b, a) if f else Trial(label, a, b))
    order = rng.permutation(len(chosen))
    return [chosen[i] for i in order]


# ---------------------------------------------------------------- files


def _fmt(values) -> str:
    return " ".join(f"{v:.9g}" for v in values)


def write_manifest(manifest: CorpusManifest, path) -> None:
    ds, nf = manifest.dims[0], manifest.dims[1]
    lines = [f"{MANIFEST_MAGIC} seed={manifest.seed} ds={ds} f={nf}"]
    for u in manifest.utterances:
        lines.append("\t".join([
            u.utt_id, u.source_speaker, u.target_speaker or "-",
            str(u.method_id), u.split, str(u.n_frames),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_features(corpus: Corpus, split: str, path) -> None:
    with open(path, "w") as f:
        for u in corpus.manifest.utterances:
            if u.split != split:
                continue
            x = corpus.features[u.utt_id]
            f.write(f"utt {u.utt_id} {x.shape[0]} {x.shape[1]}\n")
            for row in x:
                f.write(_fmt(row) + "\n")


def write_corpus(corpus: Corpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = corpus.manifest
    write_manifest(m, out / "manifest.txt")
    with open(out / "speakers.txt", "w") as f:
        f.write("#source-trace-speakers v1\n")
        for s in m.speakers:
            f.write(f"{s.speaker_id}\t{s.role}\t{s.split}\t{_fmt(s.style)}\n")
    with open(out / "methods.txt", "w") as f:
        f.write(f"#source-trace-methods v1 tmin={m.dims[2]} tmax={m.dims[3]}\n")
        for meth in m.methods:
            f.write(
                f"{meth.method_id}\t{','.join(meth.splits)}\t{meth.leak_strength:.9g}\t"
                f"{meth.noise_scale:.9g}\t{_fmt(meth.mix.ravel())}\t{_fmt(meth.leak.ravel())}\n"
            )
    for split in SPLITS:
        write_features(corpus, split, out / f"feats_{split}.txt")


def read_manifest(path) -> tuple:
    """Parse a manifest file into (seed, ds, f, utterances)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(MANIFEST_MAGIC):
        raise DataError(f"{path}: missing manifest header")
    header = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    utts = []
    for line in lines[1:]:
        if not line:
            continue
        utt_id, src, tgt, method, split, n = line.split("\t")
        utts.append(Utterance(utt_id, src, None if tgt == "-" else tgt, int(method), split, int(n)))
    return int(header["seed"]), int(header["ds"]), int(header["f"]), utts


def read_features(path) -> dict:
    feats = {}
    with open(path) as f:
        lines = f.read().split("\n")
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line:
            i += 1
            continue
        tag, utt_id, t, nf = line.split()
        if tag != "utt":
            raise DataError(f"{path}: expected 'utt' record at line {i + 1}")
        t, nf = int(t), int(nf)
        block = " ".join(lines[i + 1:i + 1 + t])
        x = np.array(block.split(), dtype=np.float64)
        if x.size != t * nf:
            raise DataError(f"{path}: {utt_id} has {x.size} values, expected {t * nf}")
        feats[utt_id] = x.reshape(t, nf)
        i += 1 + t
    return feats


def load_corpus(corpus_dir) -> Corpus:
    d = Path(corpus_dir)
    if not (d / "manifest.txt").exists():
        raise DataError(f"no manifest.txt in {d}")
    seed, ds, nf, utts = read_manifest(d / "manifest.txt")
    speakers = []
    for line in (d / "speakers.txt").read_text().splitlines()[1:]:
        spk, role, split, style = line.split("\t")
        speakers.append(SpeakerProfile(spk, np.array(style.split(), dtype=float), role, split))
    methods = []
    meth_lines = (d / "methods.txt").read_text().splitlines()
    header = dict(tok.split("=", 1) for tok in meth_lines[0].split()[2:])
    for line in meth_lines[1:]:
        mid, splits, strength, noise, mix, leak = line.split("\t")
        methods.append(ConversionMethod.unchecked(
            method_id=int(mid), splits=tuple(splits.split(",")),
            leak_strength=float(strength), noise_scale=float(noise),
            mix=np.array(mix.split(), dtype=float).reshape(nf, ds),
            leak=np.array(leak.split(), dtype=float).reshape(nf, ds),
        ))
    features = {}
    for split in SPLITS:
        features.update(read_features(d / f"feats_{split}.txt"))
    missing = [u.utt_id for u in utts if u.utt_id not in features]
    if missing:
        raise DataError(f"features missing for {len(missing)} utterances, e.g. {missing[:3]}")
    manifest = CorpusManifest(seed, speakers, methods, utts, (ds, nf, int(header["tmin"]), int(header["tmax"])))
    return Corpus(manifest, features)
