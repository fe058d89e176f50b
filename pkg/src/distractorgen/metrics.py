"""Corpus BLEU-1..4 and recall-oriented ROUGE-1/2/L for generated distractors."""

import json
import logging
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence

from .errors import ContractViolation

logger = logging.getLogger(__name__)

COLUMNS = ("BLEU1", "BLEU2", "BLEU3", "BLEU4", "ROUGE1", "ROUGE2", "ROUGEL")
SLOT_ROWS = ("1st Distractor", "2nd Distractor", "3rd Distractor")
AVG_ROW = "Avg. Performance"


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _closest_ref_length(c: int, refs: Sequence[Sequence[str]]) -> int:
    return min((abs(len(r) - c), len(r)) for r in refs)[1]


def bleu(candidates: Sequence[Sequence[str]], reference_sets: Sequence[Sequence[Sequence[str]]],
         max_n: int = 4) -> float:
    """Corpus-level BLEU-``max_n`` in [0, 100], unsmoothed.

    Clipped n-gram precisions are pooled over the corpus and combined by
    geometric mean; the brevity penalty uses the closest reference length
    (shorter one on ties).
    """
    if not candidates:
        raise ContractViolation("BLEU over an empty candidate set")
    if len(candidates) != len(reference_sets):
        raise ContractViolation("candidates and references are not aligned")
    if not 1 <= max_n <= 4:
        raise ContractViolation(f"max_n must be in 1..4, got {max_n}")
    matched = [0] * max_n
    total = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(candidates, reference_sets):
        refs = [r for r in refs if r]
        if not refs:
            raise ContractViolation("BLEU item without a non-empty reference")
        c_len += len(cand)
        r_len += _closest_ref_length(len(cand), refs)
        for n in range(1, max_n + 1):
            c_counts = ngrams(cand, n)
            max_ref = Counter()
            for r in refs:
                max_ref |= ngrams(r, n)
            matched[n - 1] += sum(min(v, max_ref[g]) for g, v in c_counts.items())
            total[n - 1] += sum(c_counts.values())
    if c_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    return 100.0 * bp * math.exp(log_p)


def _rouge_item(cand, ref, mode, measure):
    if mode == "rl":
        hit = lcs_length(cand, ref)
        r_total, c_total = len(ref), len(cand)
    else:
        n = 1 if mode == "r1" else 2
        c_counts, r_counts = ngrams(cand, n), ngrams(ref, n)
        hit = sum(min(v, r_counts[g]) for g, v in c_counts.items())
        r_total, c_total = sum(r_counts.values()), sum(c_counts.values())
    recall = hit / r_total if r_total else 0.0
    if measure == "recall":
        return recall
    precision = hit / c_total if c_total else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge(candidates, reference_sets, mode: str = "rl", measure: str = "recall") -> float:
    """Mean over items of the best score across each item's references, x100.

    ``mode`` is ``r1``, ``r2`` or ``rl``; ``measure`` is ``recall`` (default)
    or ``f1``. Empty references are skipped with a warning.
    """
    if mode not in ("r1", "r2", "rl"):
        raise ContractViolation(f"unknown ROUGE mode {mode!r}")
    if measure not in ("recall", "f1"):
        raise ContractViolation(f"unknown ROUGE measure {measure!r}")
    if len(candidates) != len(reference_sets):
        raise ContractViolation("candidates and references are not aligned")
    scores = []
    for i, (cand, refs) in enumerate(zip(candidates, reference_sets)):
        kept = [r for r in refs if r]
        if len(kept) < len(refs):
            logger.warning("item %d: skipped %d empty reference(s)", i, len(refs) - len(kept))
        if not kept:
            continue
        scores.append(max(_rouge_item(cand, r, mode, measure) for r in kept))
    if not scores:
        raise ContractViolation("ROUGE over no scorable items")
    return 100.0 * sum(scores) / len(scores)


def score_row(candidates, reference_sets, rouge_measure="recall") -> Dict[str, float]:
    row = OrderedDict()
    for n in range(1, 5):
        row[f"BLEU{n}"] = bleu(candidates, reference_sets, n)
    row["ROUGE1"] = rouge(candidates, reference_sets, "r1", rouge_measure)
    row["ROUGE2"] = rouge(candidates, reference_sets, "r2", rouge_measure)
    row["ROUGEL"] = rouge(candidates, reference_sets, "rl", rouge_measure)
    return row


@dataclass
class MetricReport:
    rows: "OrderedDict[str, Dict[str, float]]"
    system: str = "model"

    def format_table(self, title: str = "") -> str:
        return format_table({self.system: self}, title)

    def to_records(self) -> List[dict]:
        return [{"system": self.system, "row": name, **{c: round(v[c], 6) for c in COLUMNS}}
                for name, v in self.rows.items()]


def format_table(reports: Mapping[str, MetricReport], title: str = "") -> str:
    """Fixed-width table: one block per row group, one line per system."""
    name_w = max([len(AVG_ROW)] + [len(s) for s in reports])
    sys_w = max([6] + [len(s) for s in reports])
    header = f"{'':<{name_w}}  {'':<{sys_w}}" + "".join(f"{c:>9}" for c in COLUMNS)
    lines = [title] if title else []
    lines += [header, "-" * len(header)]
    for row in SLOT_ROWS + (AVG_ROW,):
        for i, (system, rep) in enumerate(reports.items()):
            label = row if i == 0 else ""
            vals = rep.rows[row]
            lines.append(f"{label:<{name_w}}  {system:<{sys_w}}"
                         + "".join(f"{vals[c]:>9.2f}" for c in COLUMNS))
        lines.append("-" * len(header))
    return "\n".join(lines) + "\n"


def evaluate_run(generations: Iterable[Mapping], references: Mapping[str, List[List[str]]],
                 system: str = "model", rouge_measure: str = "recall") -> MetricReport:
    """Score slot i of every generated line against its question's full set
    of gold distractors.

    ``generations`` are dicts with ``id`` and ``distractors`` (three token
    lists or space-joined strings); ``references`` maps question id to gold
    distractor token lists.
    """
    generations = list(generations)
    if not generations:
        raise ContractViolation("no generated lines to evaluate")
    slots = [[], [], []]
    refs = []
    for g in generations:
        if g["id"] not in references:
            raise ContractViolation(f"generated id {g['id']!r} has no reference")
        refs.append(references[g["id"]])
        for i in range(3):
            d = g["distractors"][i] if i < len(g["distractors"]) else []
            slots[i].append(d.split() if isinstance(d, str) else list(d))
    rows = OrderedDict()
    for name, cands in zip(SLOT_ROWS, slots):
        rows[name] = score_row(cands, refs, rouge_measure)
    rows[AVG_ROW] = OrderedDict((c, sum(rows[r][c] for r in SLOT_ROWS) / 3) for c in COLUMNS)
    return MetricReport(rows, system)


def references_from_samples(samples) -> Dict[str, List[List[str]]]:
    refs: Dict[str, List[List[str]]] = OrderedDict()
    for s in samples:
        refs.setdefault(s.question_id, []).append(list(s.distractor))
    return refs


def read_generations(path) -> List[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
