import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distractorgen.corpus import (STATS_ROWS, MCQSample, RawExamRecord, RawQuestion,
                                  RejectReport, Vocabulary, build_vocabulary_and_embeddings,
                                  extract_quadruples, filter_distractor,
                                  filter_question_form, load_records, prepare,
                                  split_dataset)
from distractorgen.errors import ConfigurationError, InsufficientCorpus
from distractorgen.synthetic import (fixture_vocabulary, write_embedding_file,
                                     write_race_fixture)
from distractorgen.text import split_sentences, tokenize


def _record(article="Tom has a dog. The dog is big.", options=None, answer=0, rid="r1"):
    options = options or ["a big dog", "a cat", "a small bird", "a fish"]
    return RawExamRecord(rid, article, [RawQuestion("What does Tom have ?", options, answer)])


def _sample(article, distractor, sid="x:q0:o1"):
    return MCQSample(sid, [article.split()], ["what", "?"], ["ans"], distractor.split())


# -- tokenization ------------------------------------------------------------

def test_tokenize_lowercases_and_keeps_blanks():
    assert tokenize("The writer wrote the story to ___ .") == \
        ["the", "writer", "wrote", "the", "story", "to", "___", "."]
    assert tokenize("Don't stop!") == ["don't", "stop", "!"]


def test_split_sentences_abbreviation_guard():
    sents = split_sentences('Mr. Smith came home. He was tired! "Why?" she asked.\nNew line')
    assert sents == [["mr", ".", "smith", "came", "home", "."],
                     ["he", "was", "tired", "!"],
                     ['"', "why", "?", '"'],
                     ["she", "asked", "."],
                     ["new", "line"]]


# -- extract_quadruples --------------------------------------------------------

def test_one_question_gives_three_samples():
    samples = extract_quadruples([_record()])
    assert len(samples) == 3
    assert {tuple(s.answer) for s in samples} == {("a", "big", "dog")}
    assert len({s.article_key() for s in samples}) == 1
    assert samples[0].article_sentences == [["tom", "has", "a", "dog", "."],
                                            ["the", "dog", "is", "big", "."]]


def test_duplicate_option_text_is_not_deduplicated():
    rec = _record(options=["A Dog", "a dog", "a cat", "a cow"])
    assert len(extract_quadruples([rec])) == 3


def test_empty_article_is_one_reject():
    rejects = RejectReport()
    assert extract_quadruples([_record(article="   ")], rejects) == []
    assert len(rejects) == 1


@pytest.mark.parametrize("options,answer", [(["a", "b", "c"], 0), (["a", "b", "c", "d"], 4)])
def test_malformed_question_rejected(options, answer):
    rejects = RejectReport()
    assert extract_quadruples([_record(options=options, answer=answer)], rejects) == []
    assert len(rejects) == 1


def test_all_text_lower_cased():
    rec = _record(article="BIG Dogs RUN.", options=["ONE", "Two", "three", "FOUR"])
    for s in extract_quadruples([rec]):
        for tok in s.article_tokens + s.question + s.answer + s.distractor:
            assert tok == tok.lower()


# -- filters -------------------------------------------------------------------

def test_weighted_frequency_keep_at_five():
    s = _sample("dog dog dog dog dog ran", "the dog")
    assert filter_distractor(s, pos_tags={"dog": "NN", "the": "DT"})


def test_weighted_frequency_drop_stopwords_only():
    s = _sample("the the the of of of", "the of")
    assert not filter_distractor(s, pos_tags={"the": "DT", "of": "IN"})


def test_weighted_frequency_drop_at_four():
    s = _sample("cat cat sat", "cat cat")
    assert not filter_distractor(s, pos_tags={"cat": "NN"})


def test_untagged_tokens_are_not_meaningful():
    s = _sample("dog dog dog dog dog", "dog")
    assert not filter_distractor(s, pos_tags={})


def test_non_meaningful_tag_ignored():
    s = _sample("dog dog dog dog dog", "dog")
    assert not filter_distractor(s, pos_tags={"dog": "CD"})


@settings(max_examples=60, deadline=None)
@given(extra=st.integers(0, 6), base=st.integers(0, 6), d_count=st.integers(1, 3))
def test_filter_monotone_in_article_occurrences(extra, base, d_count):
    tags = {"dog": "NN"}
    before = _sample(" ".join(["dog"] * base + ["x"]), " ".join(["dog"] * d_count))
    after = _sample(" ".join(["dog"] * (base + extra) + ["x"]), " ".join(["dog"] * d_count))
    if filter_distractor(before, pos_tags=tags):
        assert filter_distractor(after, pos_tags=tags)


@pytest.mark.parametrize("question,keep", [
    ("the writer wrote the story to _", True),
    ("the writer wrote the story to _ .", True),
    ("what did he do ?", True),
    ("_ is the reason why he left", False),
    ("he went to _ because it rained", False),
    ("he went to __ and then _ .", False),
])
def test_question_form(question, keep):
    assert filter_question_form(question.split()) is keep


# -- splitting ------------------------------------------------------------------

def _articles(n, per=3):
    out = []
    for a in range(n):
        for k in range(per):
            out.append(MCQSample(f"art{a}:q0:o{k}", [[f"word{a}", "x"]], ["q"], ["a"], ["d"]))
    return out


def test_split_ten_articles_eight_one_one():
    train, dev, test = split_dataset(_articles(10), seed=7)
    n_art = [len({s.article_key() for s in part}) for part in (train, dev, test)]
    assert n_art == [8, 1, 1]
    again = split_dataset(_articles(10), seed=7)
    assert [[s.id for s in p] for p in again] == [[s.id for s in p] for p in (train, dev, test)]


def test_split_seed_sensitivity():
    parts = {tuple(s.id for s in split_dataset(_articles(20), seed=seed)[1]) for seed in range(6)}
    assert len(parts) > 1


def test_split_needs_three_articles():
    with pytest.raises(InsufficientCorpus, match="insufficient corpus"):
        split_dataset(_articles(2), seed=0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 40), per=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_split_partition_properties(n, per, seed):
    samples = _articles(n, per)
    parts = split_dataset(samples, seed)
    ids = [s.id for p in parts for s in p]
    assert sorted(ids) == sorted(s.id for s in samples)
    assert len(ids) == len(set(ids))
    where = {}
    for i, p in enumerate(parts):
        for s in p:
            assert where.setdefault(s.article_key(), i) == i
    n_dev = len({s.article_key() for s in parts[1]})
    n_test = len({s.article_key() for s in parts[2]})
    assert abs(n_dev - 0.1 * n) <= 1 and abs(n_test - 0.1 * n) <= 1


# -- vocabulary -------------------------------------------------------------------

def test_vocabulary_size_and_unk(tmp_path):
    words = [f"tok{i:02d}" for i in range(30)]
    emb = write_embedding_file(tmp_path / "emb.txt", words)
    train = [MCQSample("a:q0:o1", [words[:15] + ["missing"]], words[15:25], words[25:],
                       ["missing", "tok00"])]
    vocab, matrix = build_vocabulary_and_embeddings(train, emb, seed=3)
    assert len(vocab) == 33
    assert matrix.shape == (33, 300)
    assert vocab.encode(["missing"]) == [vocab.unk_id]
    assert "missing" not in vocab
    specials = matrix[:3]
    assert np.all(np.abs(specials) <= 0.1)
    row = vocab.token_to_id["tok05"]
    from_file = np.array(open(emb).read().splitlines()[5].split()[1:], dtype=np.float32)
    np.testing.assert_array_equal(matrix[row], from_file)


def test_vocabulary_ties_lexicographic_and_stable(tmp_path):
    words = ["delta", "alpha", "charlie", "bravo", "echo"]
    emb = write_embedding_file(tmp_path / "emb.txt", words)
    train = [MCQSample("a:q0:o1", [["echo", "echo", "delta", "charlie", "bravo", "alpha"]],
                       ["q"], ["a"], ["d"])]
    v1, m1 = build_vocabulary_and_embeddings(train, emb, max_size=3, seed=1)
    v2, m2 = build_vocabulary_and_embeddings(train, emb, max_size=3, seed=1)
    assert v1.id_to_token[3:] == ["echo", "alpha", "bravo"]
    assert v1.id_to_token == v2.id_to_token
    np.testing.assert_array_equal(m1, m2)


def test_vocabulary_roundtrip_and_specials_distinct(tmp_path):
    vocab = Vocabulary(["b", "a", "c"])
    assert len({vocab.pad_id, vocab.unk_id, vocab.eos_id}) == 3
    assert vocab.decode(vocab.encode(["a", "c", "b"])) == ["a", "c", "b"]
    vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").id_to_token == vocab.id_to_token


def test_embedding_wrong_dimension_is_configuration_error(tmp_path):
    path = tmp_path / "emb.txt"
    write_embedding_file(path, ["a", "b"], dim=50)
    train = [MCQSample("a:q0:o1", [["a", "b"]], ["q"], ["a"], ["b"])]
    with pytest.raises(ConfigurationError):
        build_vocabulary_and_embeddings(train, path)
    with pytest.raises(ConfigurationError):
        build_vocabulary_and_embeddings(train, tmp_path / "nope.txt")


# -- prepare driver ------------------------------------------------------------------

@pytest.fixture
def fixture_inputs(tmp_path):
    raw = write_race_fixture(tmp_path / "raw")
    emb = write_embedding_file(tmp_path / "emb.txt", fixture_vocabulary())
    return raw, emb


def test_prepare_outputs(tmp_path, fixture_inputs):
    raw, emb = fixture_inputs
    summary = prepare(raw, tmp_path / "out", emb, seed=7)
    out = tmp_path / "out"
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "vocab.txt", "embeddings.npy",
                 "stats.txt", "rejects.txt", "prepare_manifest.json"):
        assert (out / name).is_file()
    assert summary["rejects"] == 1
    assert summary["dropped_question_form"] == 3
    assert summary["dropped_weighted_freq"] > 0
    rows = [line.split("\t")[0] for line in (out / "stats.txt").read_text().splitlines()]
    assert tuple(rows) == STATS_ROWS
    rec = json.loads((out / "train.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"id", "article_sentences", "question", "answer", "distractor"}
    assert json.loads((out / "prepare_manifest.json").read_text())["tagger"]


def test_load_records_counts_unparseable(tmp_path):
    (tmp_path / "bad.txt").write_text("{not json", encoding="utf-8")
    rejects = RejectReport()
    assert load_records(tmp_path, rejects) == []
    assert len(rejects) == 1
