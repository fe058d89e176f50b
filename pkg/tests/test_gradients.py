import pytest

from distractorgen.corpus import Vocabulary

from conftest import TOY_WORDS, tiny_model
from oracles import finite_difference_report, gradient_sample, spread_parameters


@pytest.mark.parametrize("variant", ["hred", "seq2seq"])
def test_finite_differences_other_variants(toy_vocab, variant):
    model = spread_parameters(tiny_model(len(toy_vocab), variant))
    report = finite_difference_report(model, toy_vocab, gradient_sample())
    assert report
    bad = {k: e for k, (e, _) in report.items() if e >= 1e-3}
    assert not bad


def test_unused_groups_get_no_gradient(toy_vocab):
    # the uniform-gamma variant never touches the static-attention parameters
    model = spread_parameters(tiny_model(len(toy_vocab), "hred"))
    report = finite_difference_report(model, toy_vocab, gradient_sample())
    assert "W_m" not in report and "question_query.fwd.weight_ih" not in report


@pytest.fixture(scope="module")
def full_report():
    vocab = Vocabulary(TOY_WORDS)
    model = spread_parameters(tiny_model(len(vocab), "full"))
    return model, finite_difference_report(model, vocab, gradient_sample())


def test_match_bias_cancels_in_softmax(full_report):
    _, report = full_report
    _, norm = report["b_m"]
    assert norm < 1e-12


def test_gradients_flow_to_every_full_model_group(full_report):
    model, report = full_report
    assert set(report) == {n for n, _ in model.named_parameters()}
    silent = {n for n, (_, norm) in report.items() if norm < 1e-12}
    assert silent == {"b_m"}


def test_frozen_lambdas_are_skipped(toy_vocab):
    model = spread_parameters(tiny_model(len(toy_vocab), "full", freeze_lambdas=True))
    report = finite_difference_report(model, toy_vocab, gradient_sample())
    assert "lambda_q" not in report and "lambda_a" not in report
    assert model.lambda_q.grad is None
