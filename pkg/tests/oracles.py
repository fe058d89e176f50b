"""Independent reference implementations used by the tests."""

import itertools
import math

import numpy as np
import torch

from distractorgen.corpus import MCQSample
from distractorgen.model import make_batch
from distractorgen.training import sequence_nll


# -- finite differences --------------------------------------------------------

def gradient_sample():
    """Two sentences, a two-token distractor plus EOS: three decoder steps."""
    return MCQSample("g:q0:o1", [["the", "cat", "sat", "on", "mat"], ["a", "dog", "ran"]],
                     ["why", "to", "_"], ["a", "cat"], ["dog", "ran"])


def spread_parameters(model, scale=0.6, seed=0):
    """Redraw every parameter from U(-scale, scale) so that no gradient path
    is vanishingly small at the tiny test widths."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_((torch.rand(p.shape, generator=g, dtype=p.dtype) * 2 - 1) * scale)
    return model


def finite_difference_report(model, vocab, sample, eps=1e-5, per_tensor=6, seed=0):
    """Compare autograd with central differences on a few coordinates of every
    parameter tensor. Returns {name: (relative error, analytic norm)}."""
    batch = make_batch([sample], vocab, model.config)

    def loss():
        return sequence_nll(model(batch), batch.target_ids, vocab.pad_id).sum()

    model.zero_grad(set_to_none=True)
    loss().backward()
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in model.named_parameters():
        if not p.requires_grad or p.grad is None:
            continue
        grad = p.grad.detach().clone().reshape(-1)
        n = grad.numel()
        top = torch.argsort(grad.abs(), descending=True)[:per_tensor // 2].tolist()
        rand = rng.choice(n, size=min(n, per_tensor - len(top)), replace=False).tolist()
        coords = sorted(set(top + rand))
        flat = p.data.view(-1)
        numeric = []
        with torch.no_grad():
            for c in coords:
                orig = flat[c].item()
                flat[c] = orig + eps
                up = loss().item()
                flat[c] = orig - eps
                down = loss().item()
                flat[c] = orig
                numeric.append((up - down) / (2 * eps))
        a = grad[coords].numpy()
        num = np.array(numeric)
        scale = np.linalg.norm(a) + np.linalg.norm(num)
        # both sides vanish: nothing to compare beyond an absolute check
        err = 0.0 if scale < 1e-8 else float(np.linalg.norm(a - num) / scale)
        report[name] = (err, float(np.linalg.norm(a)))
    return report


# -- metrics ----------------------------------------------------------------------

def brute_ngrams(tokens, n):
    out = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        out[g] = out.get(g, 0) + 1
    return out


def brute_lcs(a, b):
    """Longest common subsequence by trying every subsequence of the shorter side."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)

    def is_subseq(sub, seq):
        it = iter(seq)
        return all(tok in it for tok in sub)

    for size in range(len(short), 0, -1):
        for idx in itertools.combinations(range(len(short)), size):
            if is_subseq([short[i] for i in idx], long_):
                return size
    return 0


def brute_bleu(cands, ref_sets, max_n):
    matched = [0] * max_n
    total = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(cands, ref_sets):
        c_len += len(cand)
        best = None
        for r in refs:
            key = (abs(len(r) - len(cand)), len(r))
            if best is None or key < best:
                best = key
        r_len += best[1]
        for n in range(1, max_n + 1):
            cg = brute_ngrams(cand, n)
            for g, v in cg.items():
                matched[n - 1] += min(v, max(brute_ngrams(r, n).get(g, 0) for r in refs))
                total[n - 1] += v
    if c_len == 0 or 0 in matched:
        return 0.0
    prec = 1.0
    for m, t in zip(matched, total):
        prec *= m / t
    bp = 1.0 if c_len >= r_len else math.exp(1 - r_len / c_len)
    return 100 * bp * prec ** (1 / max_n)


def brute_rouge(cands, ref_sets, mode):
    scores = []
    for cand, refs in zip(cands, ref_sets):
        best = 0.0
        for r in refs:
            if mode == "rl":
                s = brute_lcs(cand, r) / len(r)
            else:
                n = 1 if mode == "r1" else 2
                rg, cg = brute_ngrams(r, n), brute_ngrams(cand, n)
                denom = sum(rg.values())
                s = sum(min(v, rg.get(g, 0)) for g, v in cg.items()) / denom if denom else 0.0
            best = max(best, s)
        scores.append(best)
    return 100 * sum(scores) / len(scores)


# -- beam search ----------------------------------------------------------------------

class TableScorer:
    """Toy model whose next-token distribution depends only on the emitted prefix.

    ``table`` maps a tuple of emitted ids to a probability vector; prefixes
    not listed use ``default``. The state of each live hypothesis is its
    prefix before the latest input token (None before the first step).
    """

    def __init__(self, table, default, first=4):
        with np.errstate(divide="ignore"):
            self.table = {k: np.log(np.asarray(v, dtype=np.float64)) for k, v in table.items()}
            self.default = np.log(np.asarray(default, dtype=np.float64))
        self.first = first
        self.V = len(default)

    def start(self):
        return [None], self.first

    def step(self, state, prev_tokens):
        prefixes = [() if p is None else p + (t,) for p, t in zip(state, prev_tokens)]
        rows = np.stack([self.table.get(p, self.default) for p in prefixes])
        attn = np.tile(np.arange(1.0, 3.0) / 3.0, (len(prefixes), 1))
        return rows, attn, prefixes

    def select(self, state, rows):
        return [state[r] for r in rows]

    def log_prob(self, prefix, tok):
        return self.table.get(tuple(prefix), self.default)[tok]


def exhaustive_best(scorer, max_len, eos_id=0, never=(), first=None):
    """Highest-scoring finished sequence over all repeat-free sequences of
    length <= max_len, with the same finishing rules as the beam."""
    first = scorer.first if first is None else first
    best = (-math.inf, None)
    content = [t for t in range(scorer.V) if t != eos_id and t not in never and t != first]

    def walk(prefix, score):
        nonlocal best
        lp_eos = scorer.log_prob(prefix, eos_id)
        if score + lp_eos > best[0]:
            best = (score + lp_eos, list(prefix))
        for t in content:
            if t in prefix:
                continue
            s = score + scorer.log_prob(prefix, t)
            if len(prefix) + 1 == max_len:
                if s > best[0]:
                    best = (s, prefix + [t])
            else:
                walk(prefix + [t], s)

    walk([], 0.0)
    return best
