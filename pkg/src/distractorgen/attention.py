"""Static and dynamic attention as pure tensor functions.

Shapes use B = batch, S = sentences, W = words per sentence, H = state width.
"""

from dataclasses import dataclass

import torch

from .errors import ContractViolation

MIN_TEMPERATURE = 1e-6


def masked_softmax(scores, mask, dim=-1):
    """Softmax over ``mask``-ed entries; masked entries come out exactly 0."""
    # -inf rather than a large negative constant: valid logits can be
    # arbitrarily negative once divided by a tiny temperature.
    probs = torch.softmax(scores.masked_fill(~mask, float("-inf")), dim=dim)
    return probs.masked_fill(~mask, 0.0)


def masked_log_softmax(scores, mask, dim=-1):
    """Log-softmax over ``mask``-ed entries; masked entries are -inf."""
    logp = torch.log_softmax(scores.masked_fill(~mask, float("-inf")), dim=dim)
    return logp.masked_fill(~mask, float("-inf"))


def masked_mean(states, mask):
    """Mean of ``states[..., t, :]`` over positions where ``mask`` is set.

    Rows with no valid position give a zero vector.
    """
    m = mask.unsqueeze(-1).to(states.dtype)
    count = m.sum(dim=-2).clamp(min=1.0)
    return (states * m).sum(dim=-2) / count


@dataclass
class QueryRepresentations:
    question: torch.Tensor    # [B, Hq]
    answer: torch.Tensor      # [B, Hq]
    sentences: torch.Tensor   # [B, S, H]


@dataclass
class StaticAttention:
    scores: torch.Tensor            # o, [B, S]
    temperature: torch.Tensor       # tau, [B]
    log_distribution: torch.Tensor  # log gamma, [B, S]; -inf on padding

    @property
    def distribution(self):
        return self.log_distribution.exp()


def match_scores(reps: QueryRepresentations, W_m, b_m, lambda_q, lambda_a):
    """o_i = lq * s_i' W q - la * s_i' W a + b."""
    sq = torch.einsum("bsh,hk,bk->bs", reps.sentences, W_m, reps.question)
    sa = torch.einsum("bsh,hk,bk->bs", reps.sentences, W_m, reps.answer)
    return lambda_q * sq - lambda_a * sa + b_m


def temperature(question, w_q, b_q):
    """Question-conditioned softmax temperature in (0, 1).

    Floored at ``MIN_TEMPERATURE`` so an underflowing sigmoid cannot divide
    the scores by zero; in floating point the upper end can reach 1.0.
    """
    return torch.sigmoid(question @ w_q + b_q).clamp(min=MIN_TEMPERATURE)


def static_log_distribution(scores, tau, sentence_mask):
    if not bool(sentence_mask.any(dim=-1).all()):
        raise ContractViolation("static attention over an article with no sentences")
    if not bool(((tau > 0) & (tau <= 1)).all()):
        raise ContractViolation("temperature must lie in (0, 1]")
    return masked_log_softmax(scores / tau.unsqueeze(-1), sentence_mask)


def static_distribution(scores, tau, sentence_mask):
    """gamma = softmax(o / tau) over the valid sentences."""
    return static_log_distribution(scores, tau, sentence_mask).exp()


def uniform_distribution(sentence_mask, dtype):
    m = sentence_mask.to(dtype)
    return m / m.sum(dim=-1, keepdim=True)


def uniform_log_distribution(sentence_mask, dtype):
    return uniform_distribution(sentence_mask, dtype).log()


def dynamic_log_attention(dec_hidden, sentence_states, word_states, sentence_mask,
                          word_mask, W_d1, W_d2):
    """log beta [B, S] and log alpha [B, S, W]; see :func:`dynamic_attention`."""
    beta_raw = torch.einsum("bsh,hk,bk->bs", sentence_states, W_d1, dec_hidden)
    alpha_raw = torch.einsum("bswh,hk,bk->bsw", word_states, W_d2, dec_hidden)
    return masked_log_softmax(beta_raw, sentence_mask), masked_log_softmax(alpha_raw, word_mask)


def dynamic_attention(dec_hidden, sentence_states, word_states, sentence_mask,
                      word_mask, W_d1, W_d2):
    """Sentence-level beta [B, S] and per-sentence word-level alpha [B, S, W].

    The raw bilinear scores are softmax-normalized (beta across sentences,
    alpha within each sentence) so their product stays a distribution.
    """
    log_beta, log_alpha = dynamic_log_attention(dec_hidden, sentence_states, word_states,
                                                sentence_mask, word_mask, W_d1, W_d2)
    return log_beta.exp(), log_alpha.exp()


def combine_attention(alpha, beta, gamma, word_mask):
    """Renormalized product alpha_ij * beta_i * gamma_i over valid tokens."""
    prod = alpha * (beta * gamma).unsqueeze(-1)
    prod = torch.where(word_mask, prod, torch.zeros_like(prod))
    denom = prod.sum(dim=(-2, -1), keepdim=True)
    if bool((denom == 0).any()):
        raise ContractViolation("combined attention has no mass on valid tokens")
    return prod / denom


def combine_log_attention(log_alpha, log_beta, log_gamma, word_mask):
    """:func:`combine_attention` from log factors.

    Equal in exact arithmetic, but the product cannot underflow to an empty
    distribution when beta and gamma peak on different sentences.
    """
    logits = log_alpha + (log_beta + log_gamma).unsqueeze(-1)
    B = logits.shape[0]
    flat = masked_softmax(logits.reshape(B, -1), word_mask.reshape(B, -1))
    return flat.view_as(logits)


def context_vector(combined, word_states):
    return torch.einsum("bsw,bswh->bh", combined, word_states)
