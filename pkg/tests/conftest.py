import pytest
import torch

from distractorgen.corpus import MCQSample, Vocabulary
from distractorgen.model import DistractorGenerator, ModelConfig, make_batch

TOY_WORDS = "the cat sat on mat a dog ran why _ . to left river dolphins".split()


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def toy_vocab():
    return Vocabulary(TOY_WORDS)


def toy_samples():
    return [
        MCQSample("a:q0:o1", [["the", "cat", "sat"], ["a", "dog", "ran", "on", "mat"]],
                  ["why", "to", "_"], ["cat"], ["dog", "ran"]),
        MCQSample("b:q0:o2", [["the", "mat", "."]], ["why"], ["dog", "cat"], ["mat"]),
        MCQSample("c:q0:o3", [["dolphins", "left"], ["the", "river"], ["a", "cat", "ran", "."]],
                  ["the", "writer", "to", "_"], ["river"], ["dolphins", "left", "the", "river"]),
    ]


def tiny_model(vocab_size, variant="full", seed=0, dtype=torch.float64, dropout=0.0, **kw):
    torch.manual_seed(seed)
    cfg = ModelConfig(vocab_size=vocab_size, embedding_dim=6, encoder_hidden=6,
                      query_hidden=4, decoder_hidden=5, dropout=dropout, variant=variant, **kw)
    model = DistractorGenerator(cfg).to(dtype)
    model.eval()
    return model


@pytest.fixture
def batch_for():
    def build(model, vocab, samples=None):
        return make_batch(samples or toy_samples(), vocab, model.config)
    return build


# -- acceptance summary ------------------------------------------------------

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE.append((marker.args[0], rep.outcome, rep.duration))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  ({duration:.1f}s)")
