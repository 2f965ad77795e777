import pytest

from sphmm_sid.corpus import synth_corpus
from sphmm_sid.recognizer import ModelConfig, enroll_manifest, iter_test_items

FAST_CONFIG = ModelConfig(mixtures_acoustic=2, mixtures_supra=2, max_iter=8, seed=3)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three speakers, two sentences, synthesized once per session."""
    return synth_corpus(tmp_path_factory.mktemp("corpus"), n_speakers=3, sentences=2, seed=3)


@pytest.fixture(scope="session")
def small_registry(small_corpus):
    return enroll_manifest(small_corpus, FAST_CONFIG)


@pytest.fixture(scope="session")
def small_test_items(small_corpus):
    return list(iter_test_items(small_corpus))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_criterion(label, passed, detail):
    ACCEPTANCE_LINES[str(label)] = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for label in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[label])
