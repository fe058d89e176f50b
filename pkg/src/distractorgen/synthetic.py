"""Small deterministic corpora for smoke runs and tests."""

import json
import random
from pathlib import Path
from typing import List

import numpy as np

from .corpus import MCQSample
from .text import tokenize

_NOUNS = ("dolphins whales teacher students river forest village market garden "
          "library museum scientist farmer doctor festival mountain").split()
_VERBS = ("visited explored protected studied painted described crossed "
          "celebrated discovered cleaned").split()
_ADJS = "small ancient busy quiet famous colorful".split()


def synthetic_samples(n: int = 8, seed: int = 0, vocab_words: int = 45) -> List[MCQSample]:
    """``n`` samples over a vocabulary of roughly ``vocab_words`` tokens.

    Each sample has its own two-sentence article, a two-token question
    ending in a blank, and a distractor of 3-4 article words.
    """
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocab_words)]
    samples = []
    for k in range(n):
        sents = [rng.sample(words, rng.randint(3, 5)) for _ in range(2)]
        pool = [t for s in sents for t in s]
        samples.append(MCQSample(
            id=f"syn{k}:q0:o1",
            article_sentences=sents,
            question=[rng.choice(words), "_"],
            answer=rng.sample(pool, 2),
            distractor=rng.sample(pool, rng.randint(3, 4)),
        ))
    return samples


def race_fixture_records(n_articles: int = 10, seed: int = 0) -> List[dict]:
    """RACE-layout records (article, questions, options, answers, id).

    Besides well-formed questions the set contains one question with three
    options (rejected), one with a leading blank (dropped by the question
    form filter) and a low-overlap option per article (dropped by the
    weighted-frequency filter).
    """
    rng = random.Random(seed)
    records = []
    for a in range(n_articles):
        nouns = rng.sample(_NOUNS, 5)
        sentences = []
        for i in range(rng.randint(4, 6)):
            n1, n2 = rng.choice(nouns), rng.choice(nouns)
            sentences.append(f"The {rng.choice(_ADJS)} {n1} {rng.choice(_VERBS)} "
                             f"the {n2} near the {rng.choice(nouns)}.")
        article = " ".join(sentences)
        questions, options, answers = [], [], []
        for q in range(2):
            questions.append(f"What did the {nouns[q]} do in the story ?"
                             if q else f"The writer mentions the {nouns[0]} to _ .")
            opts = [f"{rng.choice(_VERBS)} the {nouns[(q + j) % 5]} and the "
                    f"{nouns[(q + j + 1) % 5]} near the {nouns[(q + j + 2) % 5]}"
                    for j in range(4)]
            answer = rng.randrange(4)
            if q == 1:
                opts[(answer + 1) % 4] = "It is hard to say ."
            options.append(opts)
            answers.append("ABCD"[answer])
        if a == n_articles - 1:
            questions.append(f"_ is the reason why the {nouns[0]} left .")
            options.append([f"the {n} was {rng.choice(_ADJS)}" for n in nouns[:4]])
            answers.append("A")
        if a == n_articles - 2:
            questions.append("Which is true ?")
            options.append(["yes", "no", "maybe"])
            answers.append("B")
        records.append({"id": f"fixture{a}.txt", "article": article,
                        "questions": questions, "options": options, "answers": answers})
    return records


def write_race_fixture(directory, n_articles: int = 10, seed: int = 0):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for rec in race_fixture_records(n_articles, seed):
        (d / rec["id"]).write_text(json.dumps(rec, indent=1) + "\n", encoding="utf-8")
    return d


def write_embedding_file(path, tokens, dim: int = 300, seed: int = 0):
    """GloVe-style text file with a random vector per token."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as f:
        for tok in tokens:
            vec = rng.uniform(-0.5, 0.5, size=dim)
            f.write(tok + " " + " ".join(f"{x:.5f}" for x in vec) + "\n")
    return path


def fixture_vocabulary(n_articles: int = 10, seed: int = 0) -> List[str]:
    """Every token the RACE fixture can produce."""
    tokens = set()
    for rec in race_fixture_records(n_articles, seed):
        tokens.update(tokenize(rec["article"]))
        for q, opts in zip(rec["questions"], rec["options"]):
            tokens.update(tokenize(q))
            for o in opts:
                tokens.update(tokenize(o))
    return sorted(tokens)
