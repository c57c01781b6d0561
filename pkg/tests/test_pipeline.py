import numpy as np
import pytest

from srctrace.errors import DataError, PhaseError, SamplingError, ShapeError
from srctrace.losses import ContrastiveConfig, contrastive_loss_batch
from srctrace.model import Checkpoint, embed_batch, extract_embeddings
from srctrace.numerics import Matrix, Tape, ops
from srctrace.pipeline import (
    DEFAULT_PLANS,
    PhasePlan,
    SourceEmbeddingBank,
    build_embedding_bank,
    mean_positive_cosine,
    phase2_training_set,
    sample_contrastive_set,
    sgd_step,
    speaker_labels,
    train_phase1,
    train_phase2,
    train_phase3,
)
from srctrace.synthcorpus import CorpusConfig, generate_corpus

from conftest import TINY

PLAN1 = PhasePlan("I", epochs=2, batch_size=8, learning_rate=0.05)
PLAN2 = PhasePlan("II", epochs=1, batch_size=8, learning_rate=0.02)
PLAN3 = PhasePlan("III", epochs=2, batch_size=8, learning_rate=0.01)


@pytest.fixture(scope="module")
def trained(tiny_corpus):
    c1 = train_phase1(tiny_corpus, PLAN1, seed=0).checkpoint
    c2 = train_phase2(tiny_corpus, c1, PLAN2, seed=0).checkpoint
    bank = build_embedding_bank(tiny_corpus, c1)
    return c1, c2, bank


def test_default_plans():
    assert [(p.epochs, p.learning_rate, p.batch_size) for p in DEFAULT_PLANS.values()] == [
        (30, 0.05, 32), (20, 0.02, 32), (20, 0.01, 32),
    ]
    assert DEFAULT_PLANS["III"].data_selection == "converted-only"
    assert DEFAULT_PLANS["II"].data_selection == "converted+source"


def test_sgd_examples():
    w = {"w": np.array([1.0, -2.0])}
    assert np.array_equal(sgd_step(w, {"w": np.zeros(2)}, 0.1)["w"], w["w"])
    assert np.array_equal(sgd_step({"w": np.zeros(2)}, {"w": np.array([3.0, -1.0])}, 1.0)["w"], [-3.0, 1.0])
    x = Matrix([3.0], requires_grad=True)
    with Tape() as tape:
        g = tape.gradient(ops.sum(x * x), x)
    assert sgd_step({"w": np.array([3.0])}, {"w": g}, 0.1)["w"][0] == pytest.approx(2.4, abs=1e-15)
    with pytest.raises(ShapeError):
        sgd_step(w, {"w": np.zeros(3)}, 0.1)


def test_phase_ordering_enforced(tiny_corpus, trained):
    c1, c2, bank = trained
    with pytest.raises(PhaseError):
        train_phase1(tiny_corpus, PLAN2)
    with pytest.raises(PhaseError):
        train_phase2(tiny_corpus, c2, PLAN2)
    with pytest.raises(PhaseError):
        train_phase3(tiny_corpus, c1, bank, PLAN3)
    with pytest.raises(PhaseError):
        build_embedding_bank(tiny_corpus, c2)
    with pytest.raises(PhaseError):
        PhasePlan("IV", epochs=1)


def test_phase1_determinism(tiny_corpus, trained):
    again = train_phase1(tiny_corpus, PLAN1, seed=0).checkpoint
    assert again.to_text() == trained[0].to_text()
    other = train_phase1(tiny_corpus, PLAN1, seed=1).checkpoint
    assert other.to_text() != trained[0].to_text()


def test_phase2_labels_are_source_speakers(tiny_corpus):
    ids, labels = phase2_training_set(tiny_corpus)
    names = {i: s for s, i in speaker_labels(tiny_corpus).items()}
    n_conv = 0
    for utt_id, y in zip(ids, labels):
        u = tiny_corpus.utterance(utt_id)
        assert names[y] == u.source_speaker
        if u.converted:
            n_conv += 1
            assert names[y] != u.target_speaker
    assert n_conv == len(tiny_corpus.manifest.utterances_in("train", converted=True))
    assert len(ids) == len(tiny_corpus.manifest.utterances_in("train"))


def test_phase2_starts_from_phase1(tiny_corpus, trained):
    c1 = trained[0]
    seen = []
    zero = PhasePlan("II", epochs=0)
    out = train_phase2(tiny_corpus, c1, zero, seed=0).checkpoint
    for k, v in c1.params.tensors.items():
        assert np.array_equal(out.params.tensors[k], v)
    train_phase2(tiny_corpus, c1, PLAN2, seed=0, on_epoch=lambda s, p: seen.append(s))
    assert len(seen) == 1


def test_bank_contents(tiny_corpus, trained):
    c1, _, bank = trained
    assert set(bank.speakers) == set(tiny_corpus.manifest.source_speakers("train"))
    again = build_embedding_bank(tiny_corpus, c1)
    for spk in bank.speakers:
        for a, b in zip(bank.embeddings(spk), again.embeddings(spk)):
            assert a.utt_id == b.utt_id and np.array_equal(a.values, b.values)
    utt = bank.embeddings(bank.speakers[0])[0]
    direct = extract_embeddings(c1.params, tiny_corpus.features, [utt.utt_id])[utt.utt_id]
    # batch composition only changes BLAS summation order
    np.testing.assert_allclose(direct, utt.values, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        utt.values[0] = 1.0


def test_sampling_contract(trained):
    bank = trained[2]
    spk = bank.speakers[0]
    rng = np.random.default_rng(0)
    for _ in range(20):
        pos, negs = sample_contrastive_set(bank, spk, 5, rng)
        assert pos.utt_id.startswith(spk)
        neg_spk = [n.utt_id.split("-u")[0] for n in negs]
        assert spk not in neg_spk and len(set(neg_spk)) == 5
    _, negs = sample_contrastive_set(bank, spk, len(bank.speakers) - 1, rng)
    assert {n.utt_id.split("-u")[0] for n in negs} == set(bank.speakers) - {spk}
    with pytest.raises(SamplingError):
        sample_contrastive_set(bank, spk, len(bank.speakers), rng)
    with pytest.raises(DataError):
        sample_contrastive_set(bank, "nobody", 2, rng)


def test_positive_is_exact_source_utterance(trained):
    bank = trained[2]
    target = bank.embeddings(bank.speakers[1])[2]
    pos, _ = sample_contrastive_set(bank, bank.speakers[1], 3, np.random.default_rng(0), target.utt_id)
    assert pos.utt_id == target.utt_id


def test_sampling_is_seeded(trained):
    bank = trained[2]
    a = sample_contrastive_set(bank, bank.speakers[0], 4, np.random.default_rng(9))
    b = sample_contrastive_set(bank, bank.speakers[0], 4, np.random.default_rng(9))
    assert [e.utt_id for e in [a[0], *a[1]]] == [e.utt_id for e in [b[0], *b[1]]]


def test_phase3_alpha_zero_matches_plain_fine_tuning(tiny_corpus, trained):
    _, c2, bank = trained
    zero = train_phase3(tiny_corpus, c2, bank, PLAN3, ContrastiveConfig(alpha=0.0), seed=0)
    plain = train_phase3(tiny_corpus, c2, bank, PLAN3, None, seed=0)
    assert len(zero.step_losses) == len(plain.step_losses)
    for (ta, aa, _), (tb, ab, cb) in zip(zero.step_losses, plain.step_losses):
        assert cb is None
        assert abs(ta - tb) <= 1e-12 and abs(aa - ab) <= 1e-12


def test_phase3_log_lines(tiny_corpus, trained):
    _, c2, bank = trained
    res = train_phase3(tiny_corpus, c2, bank, PLAN3, seed=0)
    assert res.checkpoint.phase == "III"
    line = res.log_lines[0]
    assert line.startswith("phase=III epoch=1 loss=") and " con=" in line and "con=-" not in line
    assert "con=-" in train_phase3(tiny_corpus, c2, bank, PLAN3, None, seed=0).log_lines[0]


def test_phase3_missing_bank_speaker(tiny_corpus, trained):
    _, c2, bank = trained
    partial = SourceEmbeddingBank({s: bank.embeddings(s) for s in bank.speakers[1:]})
    with pytest.raises(DataError):
        train_phase3(tiny_corpus, c2, partial, PLAN3)


def test_bank_receives_zero_gradient(tiny_corpus, trained):
    _, c2, bank = trained
    snapshot = {s: [e.values.copy() for e in bank.embeddings(s)] for s in bank.speakers}
    utts = tiny_corpus.manifest.utterances_in("train", converted=True)[:4]
    raw = bank.candidates([(u.source_speaker, u.source_utt) for u in utts], 3, np.random.default_rng(0))
    cands = Matrix(raw, requires_grad=True)
    leaves = c2.params.leaves(requires_grad=True)
    with Tape() as tape:
        emb = embed_batch([tiny_corpus.features[u.utt_id] for u in utts], leaves)
        # the bank enters the loss as a constant, exactly as in training
        loss = contrastive_loss_batch(emb, raw, ContrastiveConfig(negatives=3))
        g = tape.gradient(loss, [cands, leaves["emb.weight"]])
    assert np.all(g[0] == 0.0) and np.any(g[1] != 0.0)
    train_phase3(tiny_corpus, c2, bank, PLAN3, seed=0)
    for s in bank.speakers:
        assert all(np.array_equal(a, e.values) for a, e in zip(snapshot[s], bank.embeddings(s)))


def test_contrastive_pulls_toward_positives(tiny_corpus):
    c1 = train_phase1(tiny_corpus, PhasePlan("I", epochs=10, batch_size=8), seed=0).checkpoint
    c2 = train_phase2(tiny_corpus, c1, PLAN2, seed=0).checkpoint
    bank = build_embedding_bank(tiny_corpus, c1)
    before = mean_positive_cosine(c2.params, tiny_corpus, bank)
    plan = PhasePlan("III", epochs=5, batch_size=8, learning_rate=0.01)
    with_con = train_phase3(tiny_corpus, c2, bank, plan, seed=0).checkpoint
    without = train_phase3(tiny_corpus, c2, bank, plan, None, seed=0).checkpoint
    after = mean_positive_cosine(with_con.params, tiny_corpus, bank)
    assert after > before
    assert after > mean_positive_cosine(without.params, tiny_corpus, bank)


def test_checkpoint_file_round_trip(tmp_path, trained):
    c1 = trained[0]
    c1.save(tmp_path / "ckpt_phaseI.txt")
    assert Checkpoint.load(tmp_path / "ckpt_phaseI.txt").to_text() == c1.to_text()


@pytest.mark.slow
def test_phase1_loss_falls_on_default_corpus():
    corpus = generate_corpus(CorpusConfig(), seed=42)
    res = train_phase1(corpus, PhasePlan("I", epochs=5), seed=42)
    assert res.epochs[4].loss < res.epochs[0].loss
