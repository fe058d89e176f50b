"""Hierarchical encoder-decoder with static and dynamic attention.

Three variants share one parameter layout so that runs are comparable:

* ``full``    -- static attention gamma gates the dynamic hierarchical attention;
* ``hred``    -- gamma replaced by a uniform distribution over sentences;
* ``seq2seq`` -- the article is flattened into one token sequence and the
  decoder uses a single general-score attention over all tokens.

All variants start decoding from the question-based initializer.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import attention as att
from .corpus import MCQSample, Vocabulary
from .encoder import BiLSTM, EncodedArticle, HierarchicalEncoder, init_lstm_cell, run_lstm
from .errors import ConfigurationError, ContractViolation

logger = logging.getLogger(__name__)

VARIANTS = ("full", "hred", "seq2seq")


@dataclass
class ModelConfig:
    vocab_size: int
    embedding_dim: int = 300
    encoder_hidden: int = 500
    query_hidden: int = 500
    decoder_hidden: int = 500
    decoder_layers: int = 2
    dropout: float = 0.3
    variant: str = "full"
    lambda_q_init: float = 1.0
    lambda_a_init: float = 1.5
    freeze_lambdas: bool = False
    force_uniform_static: bool = False
    max_sentences: int = 40
    max_words: int = 50
    pad_id: int = 0
    unk_id: int = 1
    eos_id: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("vocab_size", "embedding_dim", "encoder_hidden", "query_hidden",
                     "decoder_hidden", "decoder_layers", "max_sentences", "max_words"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.encoder_hidden % 2 or self.query_hidden % 2:
            raise ConfigurationError("bidirectional widths must be even")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class Batch:
    article_ids: torch.Tensor    # [B, S, W]
    article_mask: torch.Tensor   # [B, S, W] bool
    question_ids: torch.Tensor   # [B, Lq]
    question_mask: torch.Tensor
    answer_ids: torch.Tensor     # [B, La]
    answer_mask: torch.Tensor
    target_ids: Optional[torch.Tensor] = None   # [B, T], distractor + EOS, PAD-padded
    sample_ids: List[str] = field(default_factory=list)

    def __len__(self):
        return self.article_ids.shape[0]


def _pad_rows(rows: Sequence[Sequence[int]], pad_id: int):
    width = max(1, max((len(r) for r in rows), default=0))
    ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
    for i, r in enumerate(rows):
        if r:
            ids[i, :len(r)] = torch.tensor(r, dtype=torch.long)
    return ids


def _lengths_mask(lengths, width):
    return torch.arange(width).unsqueeze(0) < torch.tensor(lengths).unsqueeze(1)


def truncate_article(sentences, max_sentences, max_words):
    """Cap an article at ``max_sentences`` x ``max_words``, dropping the tail."""
    clipped = [s[:max_words] for s in sentences[:max_sentences]]
    if len(sentences) > max_sentences or any(len(s) > max_words for s in sentences):
        logger.warning("article truncated to %d sentences x %d words",
                       max_sentences, max_words)
    return clipped


def make_batch(samples: Sequence[MCQSample], vocab: Vocabulary, config: ModelConfig,
               with_targets: bool = True) -> Batch:
    """Tensorize samples. Masks are built from lengths, so UNK/PAD ids inside
    text never confuse them."""
    articles = [truncate_article(s.article_sentences, config.max_sentences, config.max_words)
                for s in samples]
    S = max(len(a) for a in articles)
    W = max(len(sent) for a in articles for sent in a)
    article_ids = torch.full((len(samples), S, W), vocab.pad_id, dtype=torch.long)
    article_mask = torch.zeros((len(samples), S, W), dtype=torch.bool)
    for b, art in enumerate(articles):
        for i, sent in enumerate(art):
            article_ids[b, i, :len(sent)] = torch.tensor(vocab.encode(sent))
            article_mask[b, i, :len(sent)] = True

    def encode_seq(seqs):
        seqs = [vocab.encode(s) for s in seqs]
        width = max(1, max(len(s) for s in seqs))
        ids = torch.full((len(seqs), width), vocab.pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            ids[i, :len(s)] = torch.tensor(s, dtype=torch.long)
        return ids, _lengths_mask([len(s) for s in seqs], width)

    q_ids, q_mask = encode_seq([s.question for s in samples])
    a_ids, a_mask = encode_seq([s.answer for s in samples])
    targets = None
    if with_targets:
        seqs = [vocab.encode(s.distractor) + [vocab.eos_id] for s in samples]
        targets = _pad_rows(seqs, vocab.pad_id)
    return Batch(article_ids, article_mask, q_ids, q_mask, a_ids, a_mask, targets,
                 [s.id for s in samples])


def flatten_article(ids, mask):
    """Move each row's valid tokens to the front of one long sentence."""
    B = ids.shape[0]
    flat_ids, flat_mask = ids.reshape(B, 1, -1), mask.reshape(B, 1, -1)
    order = torch.sort((~flat_mask).to(torch.int8), dim=-1, stable=True).indices
    flat_ids = torch.gather(flat_ids, -1, order)
    flat_mask = torch.gather(flat_mask, -1, order)
    width = max(1, int(flat_mask.sum(-1).max()))
    return flat_ids[..., :width], flat_mask[..., :width]


@dataclass
class DecoderState:
    hidden: List[torch.Tensor]   # per layer, [B, Hd]
    cell: List[torch.Tensor]
    prev_token: torch.Tensor     # [B]

    def index_select(self, index):
        return DecoderState([h[index] for h in self.hidden], [c[index] for c in self.cell],
                            self.prev_token[index])


@dataclass
class StepOutput:
    log_probs: torch.Tensor      # [B, V]
    attention: torch.Tensor      # combined attention [B, S, W]
    state: DecoderState

    @property
    def vocab_distribution(self):
        return self.log_probs.exp()


@dataclass
class SourceContext:
    """Everything the decoder needs from the encoder side, computed once."""
    encoded: EncodedArticle
    log_gamma: Optional[torch.Tensor]   # [B, S], -inf on padding; None for seq2seq
    static: Optional[att.StaticAttention] = None

    @property
    def gamma(self):
        return None if self.log_gamma is None else self.log_gamma.exp()

    def index_select(self, index):
        return SourceContext(self.encoded.index_select(index),
                             None if self.log_gamma is None else self.log_gamma[index])


class DistractorGenerator(nn.Module):
    def __init__(self, config: ModelConfig, embeddings: Optional[torch.Tensor] = None):
        super().__init__()
        self.config = config
        E, H, Hq, Hd = (config.embedding_dim, config.encoder_hidden,
                        config.query_hidden, config.decoder_hidden)
        self.embedding = nn.Embedding(config.vocab_size, E)
        self.encoder = HierarchicalEncoder(E, H)
        self.question_query = BiLSTM(E, Hq)
        self.answer_query = BiLSTM(E, Hq)
        self.W_m = nn.Parameter(torch.empty(H, Hq))
        self.b_m = nn.Parameter(torch.empty(()))
        self.w_q = nn.Parameter(torch.empty(Hq))
        self.b_q = nn.Parameter(torch.empty(()))
        self.lambda_q = nn.Parameter(torch.tensor(float(config.lambda_q_init)),
                                     requires_grad=not config.freeze_lambdas)
        self.lambda_a = nn.Parameter(torch.tensor(float(config.lambda_a_init)),
                                     requires_grad=not config.freeze_lambdas)
        self.initializer = nn.ModuleList(
            [nn.LSTMCell(E if i == 0 else Hd, Hd) for i in range(config.decoder_layers)])
        self.decoder = nn.ModuleList(
            [nn.LSTMCell(E if i == 0 else Hd, Hd) for i in range(config.decoder_layers)])
        self.W_d1 = nn.Parameter(torch.empty(H, Hd))
        self.W_d2 = nn.Parameter(torch.empty(H, Hd))
        self.W_h = nn.Parameter(torch.empty(Hd, Hd + H))
        self.W_V = nn.Parameter(torch.empty(config.vocab_size, Hd))
        self.b_V = nn.Parameter(torch.empty(config.vocab_size))
        self.dropout = nn.Dropout(config.dropout)
        self.reset_parameters(embeddings)

    def reset_parameters(self, embeddings=None):
        for name, p in self.named_parameters():
            if name in ("lambda_q", "lambda_a"):
                continue
            nn.init.uniform_(p, -0.1, 0.1)
        for m in self.modules():
            if isinstance(m, nn.LSTMCell):
                init_lstm_cell(m)
        if embeddings is not None:
            emb = torch.as_tensor(embeddings)
            if tuple(emb.shape) != tuple(self.embedding.weight.shape):
                raise ConfigurationError(
                    f"embedding matrix {tuple(emb.shape)} does not match "
                    f"{tuple(self.embedding.weight.shape)}")
            with torch.no_grad():
                self.embedding.weight.copy_(emb)

    # -- encoder side -----------------------------------------------------

    def encode_article(self, article_ids, article_mask) -> EncodedArticle:
        if article_ids.shape != article_mask.shape:
            raise ContractViolation("article ids and mask shapes differ")
        if self.config.variant == "seq2seq":
            article_ids, article_mask = flatten_article(article_ids, article_mask)
            word_states, _, _ = self.encoder.encode_words(
                self.embedding(article_ids), article_mask)
            sentence_mask = article_mask.any(-1)
            u = word_states.new_zeros(word_states.shape[0], 1, word_states.shape[-1])
            return EncodedArticle(word_states, u, article_mask, sentence_mask)
        return self.encoder(self.embedding(article_ids), article_mask)

    def query_representations(self, question_ids, question_mask, answer_ids, answer_mask,
                              encoded: EncodedArticle) -> att.QueryRepresentations:
        if not bool(question_mask.any(-1).all()) or not bool(answer_mask.any(-1).all()):
            raise ContractViolation("empty question or answer")
        q_states, _, _ = self.question_query(self.embedding(question_ids), question_mask)
        a_states, _, _ = self.answer_query(self.embedding(answer_ids), answer_mask)
        return att.QueryRepresentations(
            question=att.masked_mean(q_states, question_mask),
            answer=att.masked_mean(a_states, answer_mask),
            sentences=att.masked_mean(encoded.word_states, encoded.word_mask),
        )

    def static_attention(self, reps, sentence_mask) -> att.StaticAttention:
        o = att.match_scores(reps, self.W_m, self.b_m, self.lambda_q, self.lambda_a)
        tau = att.temperature(reps.question, self.w_q, self.b_q)
        return att.StaticAttention(o, tau, att.static_log_distribution(o, tau, sentence_mask))

    def source_context(self, batch: Batch) -> SourceContext:
        encoded = self.encode_article(batch.article_ids, batch.article_mask)
        cfg = self.config
        if cfg.variant == "seq2seq":
            return SourceContext(encoded, None)
        if cfg.variant == "hred" or cfg.force_uniform_static:
            log_gamma = att.uniform_log_distribution(encoded.sentence_mask,
                                                     encoded.word_states.dtype)
            return SourceContext(encoded, log_gamma)
        reps = self.query_representations(batch.question_ids, batch.question_mask,
                                          batch.answer_ids, batch.answer_mask, encoded)
        static = self.static_attention(reps, encoded.sentence_mask)
        return SourceContext(encoded, static.log_distribution, static)

    # -- decoder side -----------------------------------------------------

    def init_from_question(self, question_ids, question_mask) -> DecoderState:
        lengths = question_mask.sum(-1)
        if not bool((lengths > 0).all()):
            raise ContractViolation("empty question")
        x = self.embedding(question_ids)
        hidden, cell = [], []
        for i, layer in enumerate(self.initializer):
            out, (h, c) = run_lstm(layer, x, question_mask)
            hidden.append(h)
            cell.append(c)
            x = out
        last = torch.gather(question_ids, 1, (lengths - 1).unsqueeze(1)).squeeze(1)
        return DecoderState(hidden, cell, last)

    def attend(self, h_top, ctx: SourceContext):
        enc = ctx.encoded
        if self.config.variant == "seq2seq":
            scores = torch.einsum("bswh,hk,bk->bsw", enc.word_states, self.W_d2, h_top)
            return att.masked_softmax(scores.flatten(1), enc.word_mask.flatten(1)).view_as(scores)
        log_beta, log_alpha = att.dynamic_log_attention(
            h_top, enc.sentence_states, enc.word_states, enc.sentence_mask, enc.word_mask,
            self.W_d1, self.W_d2)
        return att.combine_log_attention(log_alpha, log_beta, ctx.log_gamma, enc.word_mask)

    def decode_step(self, state: DecoderState, ctx: SourceContext) -> StepOutput:
        x = self.embedding(state.prev_token)
        hidden, cell = [], []
        for i, layer in enumerate(self.decoder):
            if i > 0:
                x = self.dropout(x)
            h, c = layer(x, (state.hidden[i], state.cell[i]))
            hidden.append(h)
            cell.append(c)
            x = h
        combined = self.attend(x, ctx)
        context = att.context_vector(combined, ctx.encoded.word_states)
        attentional = torch.tanh(F.linear(torch.cat([x, context], dim=-1), self.W_h))
        logits = F.linear(self.dropout(attentional), self.W_V, self.b_V)
        return StepOutput(F.log_softmax(logits, dim=-1), combined,
                          DecoderState(hidden, cell, state.prev_token))

    def forward(self, batch: Batch):
        """Teacher-forced log-probabilities [B, T, V] for ``batch.target_ids``."""
        if batch.target_ids is None:
            raise ContractViolation("batch has no targets")
        ctx = self.source_context(batch)
        state = self.init_from_question(batch.question_ids, batch.question_mask)
        outputs = []
        for t in range(batch.target_ids.shape[1]):
            if t > 0:
                state = DecoderState(state.hidden, state.cell, batch.target_ids[:, t - 1])
            step = self.decode_step(state, ctx)
            outputs.append(step.log_probs)
            state = step.state
        return torch.stack(outputs, dim=1)
