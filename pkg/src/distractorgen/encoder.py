"""Bidirectional LSTM building blocks and the word/sentence article encoder."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolation


def _check_prefix_mask(mask):
    lengths = mask.sum(dim=-1)
    positions = torch.arange(mask.shape[-1], device=mask.device)
    if not bool((mask == (positions < lengths.unsqueeze(-1))).all()):
        raise ContractViolation("mask must mark a left-aligned prefix of each row")
    return lengths


def _reverse_index(lengths, T):
    # Reverses the valid prefix of each row and leaves padding in place;
    # the permutation is its own inverse.
    t = torch.arange(T, device=lengths.device).unsqueeze(0)
    L = lengths.unsqueeze(1)
    return torch.where(t < L, L - 1 - t, t)


def run_lstm(cell, inputs, mask, state=None):
    """Step ``cell`` over ``inputs`` [N, T, D]; padding steps keep the state.

    Returns per-step hidden states (zero at padding) and the final (h, c).
    """
    N = inputs.shape[0]
    if state is None:
        zeros = inputs.new_zeros(N, cell.hidden_size)
        state = (zeros, zeros)
    h, c = state
    outputs = []
    for t in range(inputs.shape[1]):
        h_new, c_new = cell(inputs[:, t], (h, c))
        m = mask[:, t].unsqueeze(-1)
        h = torch.where(m, h_new, h)
        c = torch.where(m, c_new, c)
        outputs.append(torch.where(m, h_new, torch.zeros_like(h_new)))
    if outputs:
        out = torch.stack(outputs, dim=1)
    else:
        out = inputs.new_zeros(N, 0, cell.hidden_size)
    return out, (h, c)


def init_lstm_cell(cell: nn.LSTMCell, scale: float = 0.1):
    for p in cell.parameters():
        nn.init.uniform_(p, -scale, scale)
    H = cell.hidden_size
    with torch.no_grad():
        cell.bias_ih[H:2 * H].zero_()
        cell.bias_hh[H:2 * H].zero_()


class BiLSTM(nn.Module):
    """Single-layer bidirectional LSTM over left-aligned padded rows."""

    def __init__(self, input_size, hidden_size):
        super().__init__()
        if hidden_size % 2:
            raise ValueError("bidirectional width must be even")
        self.fwd = nn.LSTMCell(input_size, hidden_size // 2)
        self.bwd = nn.LSTMCell(input_size, hidden_size // 2)
        self.output_size = hidden_size

    def forward(self, inputs, mask):
        """Returns (states [N, T, H], forward final [N, H/2], backward first [N, H/2])."""
        lengths = _check_prefix_mask(mask)
        full_T = mask.shape[1]
        T = int(lengths.max()) if lengths.numel() else 0
        inputs, mask = inputs[:, :T], mask[:, :T]
        fwd_out, (fwd_last, _) = run_lstm(self.fwd, inputs, mask)
        rev = _reverse_index(lengths, T)
        rev_inputs = torch.gather(inputs, 1, rev.unsqueeze(-1).expand_as(inputs))
        bwd_rev, (bwd_first, _) = run_lstm(self.bwd, rev_inputs, mask)
        bwd_out = torch.gather(bwd_rev, 1, rev.unsqueeze(-1).expand_as(bwd_rev))
        states = torch.cat([fwd_out, bwd_out], dim=-1)
        states = F.pad(states, (0, 0, 0, full_T - T))
        return states, fwd_last, bwd_first


@dataclass
class EncodedArticle:
    word_states: torch.Tensor      # [B, S, W, H]
    sentence_states: torch.Tensor  # [B, S, H]
    word_mask: torch.Tensor        # [B, S, W] bool
    sentence_mask: torch.Tensor    # [B, S] bool

    def index_select(self, index):
        return EncodedArticle(self.word_states[index], self.sentence_states[index],
                              self.word_mask[index], self.sentence_mask[index])


class HierarchicalEncoder(nn.Module):
    def __init__(self, embedding_dim, hidden_size):
        super().__init__()
        self.word_encoder = BiLSTM(embedding_dim, hidden_size)
        self.sentence_encoder = BiLSTM(hidden_size, hidden_size)

    def encode_words(self, embedded, word_mask):
        """Word-level states only, [B, S, W, H]."""
        B, S, W, E = embedded.shape
        flat_mask = word_mask.reshape(B * S, W)
        # Fully padded sentences are skipped so padding never changes the
        # shapes the LSTM sees (and hence never perturbs the valid rows).
        rows = flat_mask.any(dim=-1).nonzero(as_tuple=True)[0]
        states, fwd_last, bwd_first = self.word_encoder(
            embedded.reshape(B * S, W, E)[rows], flat_mask[rows])
        H = self.word_encoder.output_size
        full = states.new_zeros(B * S, W, H).index_copy(0, rows, states)
        fwd = fwd_last.new_zeros(B * S, H // 2).index_copy(0, rows, fwd_last)
        bwd = bwd_first.new_zeros(B * S, H // 2).index_copy(0, rows, bwd_first)
        return full.reshape(B, S, W, H), fwd, bwd

    def forward(self, embedded, word_mask) -> EncodedArticle:
        if embedded.shape[:3] != word_mask.shape:
            raise ContractViolation(
                f"ids {tuple(embedded.shape[:3])} and mask {tuple(word_mask.shape)} disagree")
        B, S, W, _ = embedded.shape
        word_states, fwd_last, bwd_first = self.encode_words(embedded, word_mask)
        sentence_mask = word_mask.any(dim=-1)
        sent_inputs = torch.cat([fwd_last, bwd_first], dim=-1).reshape(B, S, -1)
        u, _, _ = self.sentence_encoder(sent_inputs, sentence_mask)
        return EncodedArticle(word_states, u, word_mask, sentence_mask)
