import numpy as np
import pytest

from srctrace.synthcorpus import CorpusConfig, generate_corpus

TINY = CorpusConfig(
    style_dim=4, feat_dim=6, min_frames=5, max_frames=9,
    n_train_speakers=8, n_dev_speakers=4, n_test_speakers=4,
    utts_per_train_speaker=4, utts_per_eval_speaker=6,
    n_train_targets=5, n_eval_targets=3,
    n_train_methods=3, n_dev_methods=2, n_test_methods=2,
)


@pytest.fixture(scope="session")
def tiny_corpus():
    return generate_corpus(TINY, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, shown after the test run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
