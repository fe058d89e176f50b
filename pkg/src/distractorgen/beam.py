"""Beam search with unigram-repeat blocking, attention-based UNK replacement
and Jaccard-distance selection of three diverse distractors."""

from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
import torch

from .corpus import EOS, MCQSample, UNK, Vocabulary
from .errors import ConfigurationError, ContractViolation
from .model import DistractorGenerator, DecoderState, make_batch

DIVERSITY_THRESHOLD = 0.5


@dataclass
class BeamHypothesis:
    tokens: List[int]
    log_likelihood: float
    attention: List[np.ndarray] = field(default_factory=list)
    words: Optional[List[str]] = None


class StepScorer(Protocol):
    """What beam search needs from a model."""

    def start(self) -> Tuple[object, int]:
        """Initial decoder state for one hypothesis and the first input token."""

    def step(self, state, prev_tokens: Sequence[int]):
        """Advance ``len(prev_tokens)`` hypotheses one step.

        Returns (log_probs [n, V] array, attention [n, L] array, new state).
        """

    def select(self, state, rows: Sequence[int]):
        """Keep and reorder the hypotheses in ``rows``."""


def beam_search(scorer: StepScorer, k: int = 50, max_len: int = 15, eos_id: int = 2,
                never: Sequence[int] = (0,)) -> List[BeamHypothesis]:
    """Length-bounded beam search; returns up to ``k`` finished hypotheses
    sorted by decreasing log-likelihood (no length normalization).

    A token may appear at most once per hypothesis, and never if it equals
    the first decoder input. ``never`` lists ids that are never emitted
    (PAD). A hypothesis finishes on EOS (which is not stored) or after
    ``max_len`` tokens.
    """
    if k < 1:
        raise ConfigurationError(f"beam size must be at least 1, got {k}")
    if max_len < 1:
        raise ConfigurationError(f"max_len must be at least 1, got {max_len}")
    state, first = scorer.start()
    live = [BeamHypothesis([], 0.0)]
    finished: List[BeamHypothesis] = []

    for _ in range(max_len):
        log_probs, attn, state = scorer.step(state, [h.tokens[-1] if h.tokens else first
                                                    for h in live])
        log_probs = np.array(log_probs, dtype=np.float64)
        V = log_probs.shape[1]
        for i, h in enumerate(live):
            blocked = set(h.tokens) | {first} | set(never)
            blocked.discard(eos_id)
            log_probs[i, list(blocked)] = -np.inf
        scores = np.array([h.log_likelihood for h in live])[:, None] + log_probs
        flat = scores.ravel()
        order = np.argsort(-flat, kind="stable")
        order = order[np.isfinite(flat[order])]

        next_live, rows = [], []
        for rank, idx in enumerate(order):
            if rank >= k and len(next_live) >= k:
                break
            i, tok = divmod(int(idx), V)
            h = live[i]
            score = float(flat[idx])
            if tok == eos_id:
                if rank < k:
                    finished.append(BeamHypothesis(list(h.tokens), score, list(h.attention)))
                continue
            grown = BeamHypothesis(h.tokens + [tok], score, h.attention + [attn[i]])
            if len(grown.tokens) >= max_len:
                if rank < k:
                    finished.append(grown)
                continue
            if len(next_live) < k:
                next_live.append(grown)
                rows.append(i)
        if not next_live:
            break
        finished.sort(key=lambda h: -h.log_likelihood)
        if len(finished) >= k and next_live[0].log_likelihood <= finished[k - 1].log_likelihood:
            break
        live = next_live
        state = scorer.select(state, rows)

    finished.sort(key=lambda h: -h.log_likelihood)
    return finished[:k]


def greedy_search(scorer: StepScorer, max_len: int = 15, eos_id: int = 2,
                  never: Sequence[int] = (0,)) -> BeamHypothesis:
    """Pick the best unblocked token at every step."""
    state, first = scorer.start()
    hyp = BeamHypothesis([], 0.0)
    prev = first
    for _ in range(max_len):
        log_probs, attn, state = scorer.step(state, [prev])
        lp = np.array(log_probs[0], dtype=np.float64)
        blocked = (set(hyp.tokens) | {first} | set(never)) - {eos_id}
        lp[list(blocked)] = -np.inf
        tok = int(np.argmax(lp))
        hyp.log_likelihood += float(lp[tok])
        if tok == eos_id:
            break
        hyp.tokens.append(tok)
        hyp.attention.append(attn[0])
        prev = tok
    return hyp


def replace_unk(words: Sequence[str], attention: Sequence[np.ndarray],
                article_tokens: Sequence[str], unk: str = UNK) -> List[str]:
    """Swap every UNK for the article token holding that step's attention
    maximum (earliest position on ties)."""
    if len(words) != len(attention):
        raise ContractViolation("attention history does not match the tokens")
    out = []
    for w, a in zip(words, attention):
        if w == unk:
            out.append(article_tokens[int(np.argmax(a))])
        else:
            out.append(w)
    return out


def jaccard_distance(a: Sequence[str], b: Sequence[str]) -> float:
    sa = {str(t).lower() for t in a} - {EOS}
    sb = {str(t).lower() for t in b} - {EOS}
    union = sa | sb
    if not union:
        return 0.0
    return 1.0 - len(sa & sb) / len(union)


@dataclass
class GenerationResult:
    distractors: List[List[str]]
    log_likelihoods: List[Optional[float]]
    diverse: List[bool]
    hypotheses: List[Optional[BeamHypothesis]] = field(default_factory=list)


def select_diverse(ranked: Sequence[BeamHypothesis],
                   threshold: float = DIVERSITY_THRESHOLD) -> GenerationResult:
    """Choose three distractors from a likelihood-ranked pool.

    Slot 1 is the top hypothesis. Each later slot takes the best remaining
    hypothesis whose Jaccard distance to every filled slot exceeds
    ``threshold``; if none qualifies, the best unused one is taken and the
    slot's diversity flag is False. A slot stays empty only when the pool
    runs out.
    """
    if not ranked:
        raise ContractViolation("cannot select distractors from an empty pool")

    def words(h):
        return h.words if h.words is not None else [str(t) for t in h.tokens]

    chosen = [0]
    flags = [True]
    for _ in range(2):
        pick = next((i for i in range(len(ranked)) if i not in chosen and all(
            jaccard_distance(words(ranked[i]), words(ranked[j])) > threshold
            for j in chosen)), None)
        ok = pick is not None
        if not ok:
            pick = next((i for i in range(len(ranked)) if i not in chosen), None)
        chosen.append(pick)
        flags.append(ok)
    hyps = [ranked[i] if i is not None else None for i in chosen]
    return GenerationResult(
        distractors=[words(h) if h is not None else [] for h in hyps],
        log_likelihoods=[h.log_likelihood if h is not None else None for h in hyps],
        diverse=flags,
        hypotheses=hyps,
    )


class ModelScorer:
    """Adapts a :class:`DistractorGenerator` to :class:`StepScorer` for one sample."""

    def __init__(self, model: DistractorGenerator, sample: MCQSample, vocab: Vocabulary):
        self.model = model
        batch = make_batch([sample], vocab, model.config, with_targets=False)
        with torch.no_grad():
            self.ctx = model.source_context(batch)
            self.init = model.init_from_question(batch.question_ids, batch.question_mask)
        self.valid = batch.article_mask[0].reshape(-1).nonzero().squeeze(-1)
        cfg = model.config
        self.article_tokens = [t for s in sample.article_sentences[:cfg.max_sentences]
                               for t in s[:cfg.max_words]]

    def start(self):
        return self.init, int(self.init.prev_token[0])

    @torch.no_grad()
    def step(self, state: DecoderState, prev_tokens):
        n = len(prev_tokens)
        state = DecoderState(state.hidden, state.cell, torch.tensor(prev_tokens))
        if state.hidden[0].shape[0] != n:
            state = state.index_select(torch.zeros(n, dtype=torch.long))
        ctx = self.ctx.index_select(torch.zeros(n, dtype=torch.long))
        out = self.model.decode_step(state, ctx)
        attn = out.attention.reshape(n, -1)
        if self.model.config.variant == "seq2seq":
            attn = attn[:, :len(self.valid)]
        else:
            attn = attn[:, self.valid]
        return out.log_probs.double().numpy(), attn.double().numpy(), out.state

    def select(self, state: DecoderState, rows):
        return state.index_select(torch.tensor(rows, dtype=torch.long))


def generate(model: DistractorGenerator, sample: MCQSample, vocab: Vocabulary,
             k: int = 50, max_len: int = 15) -> GenerationResult:
    """Beam search, UNK replacement, then diverse selection for one question."""
    model.eval()
    scorer = ModelScorer(model, sample, vocab)
    ranked = beam_search(scorer, k=k, max_len=max_len, eos_id=vocab.eos_id,
                         never=(vocab.pad_id,))
    if not ranked:
        raise ContractViolation(f"beam search produced no hypothesis for {sample.id}")
    for h in ranked:
        h.words = replace_unk(vocab.decode(h.tokens), h.attention, scorer.article_tokens)
    return select_diverse(ranked)
