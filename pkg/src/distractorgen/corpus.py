"""Turn raw exam records into filtered (article, question, answer, distractor)
samples, article-level splits, a vocabulary and an embedding matrix."""

import hashlib
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import ConfigurationError, InsufficientCorpus
from .text import (MEANINGFUL_TAGS, STOPWORDS, HeuristicTagger, PosTagger,
                   is_blank, is_punctuation, split_sentences, tokenize)

logger = logging.getLogger(__name__)

PAD, UNK, EOS = "<pad>", "<unk>", "<eos>"
SPECIALS = (PAD, UNK, EOS)
MAX_VOCAB = 50000
EMBEDDING_DIM = 300

SPLIT_NAMES = ("train", "dev", "test")
STATS_ROWS = (
    "# Train Samples",
    "# Dev Samples",
    "# Test Samples",
    "Avg. article length (tokens)",
    "Avg. distractor length",
    "Avg. question length",
    "Avg. answer length",
    "Avg. # distractors per question",
)


@dataclass
class RawQuestion:
    question_text: str
    options: List[str]
    answer_index: int


@dataclass
class RawExamRecord:
    record_id: str
    article_text: str
    questions: List[RawQuestion]


@dataclass
class MCQSample:
    id: str
    article_sentences: List[List[str]]
    question: List[str]
    answer: List[str]
    distractor: List[str]

    @property
    def question_id(self) -> str:
        return self.id.rsplit(":", 1)[0]

    @property
    def article_tokens(self) -> List[str]:
        return [t for s in self.article_sentences for t in s]

    def article_key(self) -> str:
        text = "\n".join(" ".join(s) for s in self.article_sentences)
        return hashlib.sha1(text.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id,
            "article_sentences": self.article_sentences,
            "question": self.question,
            "answer": self.answer,
            "distractor": self.distractor,
        }, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d) -> "MCQSample":
        return cls(d["id"], d["article_sentences"], d["question"], d["answer"],
                   d["distractor"])


@dataclass
class RejectReport:
    entries: List[Tuple[str, str]] = field(default_factory=list)

    def add(self, where: str, reason: str):
        self.entries.append((where, reason))

    def __len__(self):
        return len(self.entries)

    def format(self) -> str:
        return "".join(f"{w}\t{r}\n" for w, r in self.entries)


# ---------------------------------------------------------------------------
# ingestion

def parse_race_record(record_id: str, payload: Mapping) -> RawExamRecord:
    """Convert one RACE-layout dict (article/questions/options/answers)."""
    questions = []
    answers = payload.get("answers", [])
    options = payload.get("options", [])
    for i, qtext in enumerate(payload.get("questions", [])):
        ans = answers[i] if i < len(answers) else None
        if isinstance(ans, str) and len(ans) == 1 and ans.isalpha():
            idx = ord(ans.upper()) - ord("A")
        elif isinstance(ans, int):
            idx = ans
        else:
            idx = -1
        opts = list(options[i]) if i < len(options) else []
        questions.append(RawQuestion(qtext, opts, idx))
    return RawExamRecord(record_id, payload.get("article", "") or "", questions)


def load_records(input_dir, rejects: Optional[RejectReport] = None) -> List[RawExamRecord]:
    """Read every file below ``input_dir`` (sorted by path) as one RACE record."""
    root = Path(input_dir)
    if not root.is_dir():
        raise ConfigurationError(f"input directory not found: {root}")
    records = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            if rejects is not None:
                rejects.add(rel, f"unparseable record: {exc.__class__.__name__}")
            continue
        if not isinstance(payload, dict):
            if rejects is not None:
                rejects.add(rel, "unparseable record: not an object")
            continue
        records.append(parse_race_record(rel, payload))
    return records


def extract_quadruples(records: Iterable[RawExamRecord],
                       rejects: Optional[RejectReport] = None) -> List[MCQSample]:
    """One sample per (question, wrong option) pair.

    Records with an empty article are rejected whole; questions with a
    wrong option count or answer index are rejected individually. Nothing
    is deduplicated here.
    """
    if rejects is None:
        rejects = RejectReport()
    samples = []
    for rec in records:
        sentences = split_sentences(rec.article_text)
        if not sentences:
            rejects.add(rec.record_id, "empty article")
            continue
        for qi, q in enumerate(rec.questions):
            where = f"{rec.record_id}:q{qi}"
            if len(q.options) != 4:
                rejects.add(where, f"expected 4 options, got {len(q.options)}")
                continue
            if not 0 <= q.answer_index < 4:
                rejects.add(where, f"answer index {q.answer_index} out of range")
                continue
            question = tokenize(q.question_text)
            answer = tokenize(q.options[q.answer_index])
            if not question or not answer:
                rejects.add(where, "empty question or answer")
                continue
            for oi, opt in enumerate(q.options):
                if oi == q.answer_index:
                    continue
                distractor = tokenize(opt)
                if not distractor:
                    rejects.add(f"{where}:o{oi}", "empty distractor")
                    continue
                samples.append(MCQSample(
                    id=f"{where}:o{oi}",
                    article_sentences=[list(s) for s in sentences],
                    question=question,
                    answer=answer,
                    distractor=distractor,
                ))
    return samples


# ---------------------------------------------------------------------------
# filters

def weighted_frequency(sample: MCQSample, stopwords: Set[str],
                       pos_tags: Mapping[str, str]) -> int:
    article_counts = Counter(sample.article_tokens)
    total = 0
    for tok, n in Counter(sample.distractor).items():
        if tok in stopwords or pos_tags.get(tok) not in MEANINGFUL_TAGS:
            continue
        total += n * article_counts.get(tok, 0)
    return total


def filter_distractor(sample: MCQSample, stopwords: Set[str] = STOPWORDS,
                      pos_tags: Mapping[str, str] = None,
                      min_weighted_freq: int = 5) -> bool:
    """Keep a distractor only if it overlaps the article enough.

    Each meaningful distractor token found in the article contributes
    (count in distractor) x (count in article); the sample is kept when the
    sum reaches ``min_weighted_freq``. Tokens without a tag count as not
    meaningful.
    """
    pos_tags = pos_tags or {}
    return weighted_frequency(sample, stopwords, pos_tags) >= min_weighted_freq


def filter_question_form(question: Sequence[str]) -> bool:
    """False when a blank appears before the last non-punctuation token."""
    content = [i for i, t in enumerate(question) if not is_punctuation(t)]
    last = content[-1] if content else -1
    return all(i == last for i, t in enumerate(question) if is_blank(t))


# ---------------------------------------------------------------------------
# splitting

def split_dataset(samples: Sequence[MCQSample], seed: int,
                  fractions=(0.8, 0.1, 0.1)):
    """Article-level random split into (train, dev, test).

    Every sample of an article lands in the same split. Dev and test each
    get ``round(fraction * n_articles)`` articles (at least one); train gets
    the rest. Sample order within each split follows the input order.
    """
    if not samples:
        raise InsufficientCorpus("insufficient corpus: no samples")
    keys = sorted({s.article_key() for s in samples})
    if len(keys) < 3:
        raise InsufficientCorpus(
            f"insufficient corpus: {len(keys)} distinct articles, need 3")
    random.Random(seed).shuffle(keys)
    n = len(keys)
    n_dev = max(1, round(fractions[1] * n))
    n_test = max(1, round(fractions[2] * n))
    n_train = n - n_dev - n_test
    if n_train < 1:
        n_train, n_dev, n_test = 1, 1, n - 2
    assign = {}
    for i, k in enumerate(keys):
        assign[k] = 0 if i < n_train else (1 if i < n_train + n_dev else 2)
    parts = ([], [], [])
    for s in samples:
        parts[assign[s.article_key()]].append(s)
    return parts


# ---------------------------------------------------------------------------
# vocabulary and embeddings

class Vocabulary:
    """Token <-> id mapping with PAD=0, UNK=1, EOS=2."""

    def __init__(self, tokens: Sequence[str]):
        self.id_to_token = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    pad_id = 0
    unk_id = 1
    eos_id = 2

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.token_to_id.get(t, self.unk_id) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.id_to_token),
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens = Path(path).read_text(encoding="utf-8").split("\n")[:-1]
        if tuple(tokens[:3]) != SPECIALS:
            raise ConfigurationError(f"{path}: vocabulary must start with {SPECIALS}")
        return cls(tokens[3:])


def read_embeddings(path, wanted: Set[str], dim: int = EMBEDDING_DIM) -> Dict[str, np.ndarray]:
    """Read GloVe-style text vectors for the lower-cased tokens in ``wanted``.

    An exact lower-case entry wins over a case variant; otherwise the first
    case variant in the file is used.
    """
    found: Dict[str, np.ndarray] = {}
    exact: Set[str] = set()
    try:
        f = open(path, encoding="utf-8", errors="replace")
    except OSError as exc:
        raise ConfigurationError(f"cannot read embeddings {path}: {exc}") from exc
    with f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) < 2:
                continue
            if len(parts) <= dim:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected {dim}-d vectors, got {len(parts) - 1}")
            raw = " ".join(parts[:-dim])
            tok = raw.lower()
            if tok not in wanted or tok in exact:
                continue
            if tok in found and raw != tok:
                continue
            try:
                found[tok] = np.asarray(parts[-dim:], dtype=np.float32)
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from exc
            if raw == tok:
                exact.add(tok)
    return found


def sample_tokens(sample: MCQSample) -> Iterable[str]:
    yield from sample.article_tokens
    yield from sample.question
    yield from sample.answer
    yield from sample.distractor


def build_vocabulary_and_embeddings(train: Sequence[MCQSample], embedding_file,
                                    seed: int = 0, max_size: int = MAX_VOCAB,
                                    dim: int = EMBEDDING_DIM):
    """Keep the ``max_size`` most frequent training tokens that have a
    pretrained vector (ties broken lexicographically) plus the specials."""
    counts = Counter(t for s in train for t in sample_tokens(s))
    vectors = read_embeddings(embedding_file, set(counts), dim)
    ranked = sorted(vectors, key=lambda t: (-counts[t], t))[:max_size]
    vocab = Vocabulary(ranked)
    rng = np.random.default_rng(seed)
    matrix = np.empty((len(vocab), dim), dtype=np.float32)
    matrix[:len(SPECIALS)] = rng.uniform(-0.1, 0.1, size=(len(SPECIALS), dim))
    for i, tok in enumerate(ranked, start=len(SPECIALS)):
        matrix[i] = vectors[tok]
    return vocab, matrix


# ---------------------------------------------------------------------------
# statistics and the prepare driver

def corpus_stats(train, dev, test) -> Dict[str, float]:
    everything = list(train) + list(dev) + list(test)
    articles = {}
    questions = {}
    for s in everything:
        articles.setdefault(s.article_key(), len(s.article_tokens))
        questions.setdefault(s.question_id, s)

    def mean(xs):
        xs = list(xs)
        return sum(xs) / len(xs) if xs else 0.0

    values = [
        len(train), len(dev), len(test),
        mean(articles.values()),
        mean(len(s.distractor) for s in everything),
        mean(len(q.question) for q in questions.values()),
        mean(len(q.answer) for q in questions.values()),
        len(everything) / len(questions) if questions else 0.0,
    ]
    return dict(zip(STATS_ROWS, values))


def format_stats(stats: Mapping[str, float]) -> str:
    lines = []
    for row in STATS_ROWS:
        v = stats[row]
        lines.append(f"{row}\t{v}\n" if isinstance(v, int) else f"{row}\t{v:.1f}\n")
    return "".join(lines)


def read_samples(path) -> List[MCQSample]:
    with open(path, encoding="utf-8") as f:
        return [MCQSample.from_dict(json.loads(line)) for line in f if line.strip()]


def write_samples(path, samples: Iterable[MCQSample]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(s.to_json() + "\n")


def prepare(input_dir, output_dir, embeddings, seed: int = 0,
            min_weighted_freq: int = 5, tagger: Optional[PosTagger] = None,
            max_vocab: int = MAX_VOCAB, embedding_dim: int = EMBEDDING_DIM) -> Dict:
    """Run the whole pipeline and write splits, vocabulary, embeddings and
    statistics to ``output_dir``. Returns a summary dict."""
    tagger = tagger or HeuristicTagger()
    rejects = RejectReport()
    records = load_records(input_dir, rejects)
    samples = extract_quadruples(records, rejects)
    n_extracted = len(samples)

    kept = []
    dropped_form = dropped_freq = 0
    for s in samples:
        if not filter_question_form(s.question):
            dropped_form += 1
            continue
        tags = dict(zip(s.distractor, tagger.tag(s.distractor)))
        if not filter_distractor(s, STOPWORDS, tags, min_weighted_freq):
            dropped_freq += 1
            continue
        kept.append(s)

    train, dev, test = split_dataset(kept, seed)
    vocab, matrix = build_vocabulary_and_embeddings(
        train, embeddings, seed=seed, max_size=max_vocab, dim=embedding_dim)

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_NAMES, (train, dev, test)):
        write_samples(out / f"{name}.jsonl", part)
    vocab.save(out / "vocab.txt")
    np.save(out / "embeddings.npy", matrix)
    stats = corpus_stats(train, dev, test)
    (out / "stats.txt").write_text(format_stats(stats), encoding="utf-8")
    (out / "rejects.txt").write_text(rejects.format(), encoding="utf-8")
    summary = {
        "records": len(records),
        "rejects": len(rejects),
        "extracted": n_extracted,
        "dropped_question_form": dropped_form,
        "dropped_weighted_freq": dropped_freq,
        "kept": len(kept),
        "vocab_size": len(vocab),
        "tagger": tagger.name,
        "min_weighted_freq": min_weighted_freq,
        "seed": seed,
    }
    (out / "prepare_manifest.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
