"""``srctrace`` command line: generate a corpus, train the three phases, evaluate.

One run lives in one output directory::

    srctrace generate --config run.cfg --out runs/a
    srctrace train    --config run.cfg --out runs/a --phases 1,2,3
    srctrace evaluate --out runs/a --checkpoint runs/a/ckpt_phaseIII.txt --trials runs/a/trials_dev.txt

Failures print one line ``error: <ErrorClass>: <message>`` on stderr and
exit with status 1.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import DependencyError, MissingIdError, PhaseError, SourceTraceError
from .evaluate import per_method_report, score_trials, write_report, write_scores
from .model import Checkpoint, extract_embeddings
from .pipeline import build_embedding_bank, default_model_config, train_phase1, train_phase2, train_phase3
from .synthcorpus import generate_corpus, load_corpus, split_trials, write_corpus
from .trials import read_trials, write_trials

PHASE_NAMES = {1: "I", 2: "II", 3: "III"}


def ckpt_path(out_dir: Path, phase: str) -> Path:
    return out_dir / f"ckpt_phase{phase}.txt"


def echo_config(cfg: RunConfig, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"config_{command}.txt").write_text(cfg.to_text())


def cmd_generate(cfg: RunConfig, out_dir: Path) -> None:
    corpus = generate_corpus(cfg.corpus(), cfg.corpus_seed)
    write_corpus(corpus, out_dir)
    for split in ("dev", "test"):
        trials = split_trials(corpus.manifest, split, cfg.trials_per_condition, cfg.corpus_seed)
        write_trials(trials, out_dir / f"trials_{split}.txt")
    echo_config(cfg, out_dir, "generate")
    print(f"wrote corpus with {len(corpus.manifest.utterances)} utterances to {out_dir}")


def parse_phases(text: str) -> list[int]:
    try:
        phases = sorted({int(p) for p in text.split(",") if p.strip()})
    except ValueError:
        raise PhaseError(f"--phases expects a list like 1,2,3, got {text!r}") from None
    if not phases or any(p not in PHASE_NAMES for p in phases):
        raise PhaseError(f"--phases must be drawn from 1,2,3, got {text!r}")
    if phases != list(range(phases[0], phases[-1] + 1)):
        raise PhaseError(f"--phases must be contiguous, got {text!r}")
    return phases


def _load_prior(out_dir: Path, phase: int, needed_by: int) -> Checkpoint:
    name = PHASE_NAMES[phase]
    path = ckpt_path(out_dir, name)
    if not path.exists():
        raise DependencyError(f"phase {PHASE_NAMES[needed_by]} needs the phase {name} checkpoint {path}")
    return Checkpoint.load(path)


def cmd_train(cfg: RunConfig, corpus_dir: Path, out_dir: Path, phases: list[int]) -> None:
    # prerequisites are checked before any (slow) work starts
    first = phases[0]
    prior = {p: _load_prior(out_dir, p, first) for p in reversed(range(1, first))}
    corpus = load_corpus(corpus_dir)
    echo_config(cfg, out_dir, "train")
    ckpts = dict(prior)
    for p in phases:
        name = PHASE_NAMES[p]
        log = []

        def on_epoch(stats, _params, log=log):
            log.append(stats.log_line())
            print(log[-1], flush=True)

        if p == 1:
            model_cfg = default_model_config(corpus, cfg.hidden, cfg.attention, cfg.embed_dim)
            res = train_phase1(corpus, cfg.plan(name), cfg.train_seed, model_cfg, cfg.aam(), on_epoch)
        elif p == 2:
            res = train_phase2(corpus, ckpts[1], cfg.plan(name), cfg.train_seed, cfg.aam(), on_epoch)
        else:
            bank = build_embedding_bank(corpus, ckpts[1])
            res = train_phase3(
                corpus, ckpts[2], bank, cfg.plan(name), cfg.contrastive(), cfg.train_seed, cfg.aam(), on_epoch,
            )
        ckpts[p] = res.checkpoint
        res.checkpoint.save(ckpt_path(out_dir, name))
        (out_dir / f"train_phase{name}.log").write_text("".join(line + "\n" for line in log))


def cmd_evaluate(checkpoint: Path, corpus_dir: Path, trial_file: Path, out_dir: Path) -> str:
    ckpt = Checkpoint.load(checkpoint)
    corpus = load_corpus(corpus_dir)
    trials = read_trials(trial_file)
    ids = {i for t in trials for i in (t.enroll_id, t.test_id)}
    missing = sorted(ids - set(corpus.features))
    if missing:
        raise MissingIdError(f"{len(missing)} trial utterance(s) not in the corpus: {' '.join(missing[:10])}")
    emb = extract_embeddings(ckpt.params, corpus.features, ids)
    scored = score_trials(trials, emb)
    report = per_method_report(scored, corpus.manifest)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"phase{ckpt.phase}_{Path(trial_file).stem}"
    write_scores(scored, out_dir / f"scores_{tag}.txt")
    write_report(report, out_dir / f"report_{tag}.txt")
    return report.to_text().splitlines()[0]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srctrace", description="source speaker tracing experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = value run config (defaults if omitted)")
        p.add_argument("--out", type=Path, required=True, help="run directory")
        p.add_argument("--seed", type=int, help="override the corpus seed (generate) or training seed (train)")

    common(sub.add_parser("generate", help="synthesize corpus and trial lists"))
    train = sub.add_parser("train", help="run training phases")
    common(train)
    train.add_argument("--phases", default="1,2,3")
    train.add_argument("--corpus", type=Path, help="corpus directory (default: --out)")
    ev = sub.add_parser("evaluate", help="score a trial list with a checkpoint")
    common(ev)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--trials", type=Path, required=True)
    ev.add_argument("--corpus", type=Path, help="corpus directory (default: --out)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    if args.command == "generate":
        if args.seed is not None:
            cfg = cfg.replace(corpus_seed=args.seed)
        cmd_generate(cfg, args.out)
    elif args.command == "train":
        if args.seed is not None:
            cfg = cfg.replace(train_seed=args.seed)
        cmd_train(cfg, args.corpus or args.out, args.out, parse_phases(args.phases))
    else:
        print(cmd_evaluate(args.checkpoint, args.corpus or args.out, args.trials, args.out))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (SourceTraceError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
