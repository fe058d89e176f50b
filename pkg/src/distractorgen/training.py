"""Plain SGD training with a step-halving schedule, gradient clipping and
checkpoint selection by validation perplexity."""

import dataclasses
import hashlib
import json
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import torch

from .corpus import MCQSample, Vocabulary
from .errors import ConfigurationError, ContractViolation, TrainingDiverged
from .model import VARIANTS, DistractorGenerator, ModelConfig, make_batch

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    batch_size: int = 32
    initial_lr: float = 1.0
    total_steps: int = 100000
    first_halving_step: int = 50000
    halving_interval: int = 10000
    grad_norm_cap: float = 5.0
    dropout: float = 0.3
    seed: int = 0
    variant: str = "full"
    validate_every: int = 2000
    encoder_hidden: int = 500
    query_hidden: int = 500
    decoder_hidden: int = 500
    decoder_layers: int = 2
    max_sentences: int = 40
    max_words: int = 50
    freeze_lambdas: bool = False
    force_uniform_static: bool = False

    def __post_init__(self):
        for name in ("batch_size", "initial_lr", "total_steps", "first_halving_step",
                     "halving_interval", "grad_norm_cap", "validate_every"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.first_halving_step >= self.total_steps:
            raise ConfigurationError("first_halving_step must precede total_steps")
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    def to_dict(self):
        return dataclasses.asdict(self)

    def model_config(self, vocab_size, embedding_dim) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size, embedding_dim=embedding_dim,
            encoder_hidden=self.encoder_hidden, query_hidden=self.query_hidden,
            decoder_hidden=self.decoder_hidden, decoder_layers=self.decoder_layers,
            dropout=self.dropout, variant=self.variant,
            freeze_lambdas=self.freeze_lambdas,
            force_uniform_static=self.force_uniform_static,
            max_sentences=self.max_sentences, max_words=self.max_words)


def _coerce(value: str, typ):
    if typ is bool or typ == "bool":
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return value.strip()


def parse_config(text: str, **overrides) -> TrainConfig:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(value, fields[key])
        except ValueError as exc:
            raise ConfigurationError(f"config line {lineno}: {exc}") from exc
    values.update(overrides)
    return TrainConfig(**values)


def load_config(path, **overrides) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in config.to_dict().items())


def config_hash(config) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def lr_at(step: int, config: TrainConfig) -> float:
    """Constant until ``first_halving_step``, then halved at it and at every
    ``halving_interval`` boundary after it."""
    if step < config.first_halving_step:
        return config.initial_lr
    halvings = 1 + (step - config.first_halving_step) // config.halving_interval
    return config.initial_lr * 0.5 ** halvings


# ---------------------------------------------------------------------------
# losses

def nll_loss(step_distributions, target_ids, pad_id: int = 0,
             clamp_events: Optional[Counter] = None):
    """Negative log-likelihood of ``target_ids`` [B, T] under per-step
    probability distributions [B, T, V]: summed over each sequence, averaged
    over the batch, PAD targets ignored.

    Target probabilities below 1e-12 are floored; each floored position is
    logged and counted in ``clamp_events["nll_floor"]``.
    """
    if step_distributions.shape[:2] != target_ids.shape:
        raise ContractViolation("distributions and targets disagree in length")
    probs = step_distributions.gather(-1, target_ids.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    valid = target_ids != pad_id
    low = (probs < PROB_FLOOR) & valid
    n_low = int(low.sum())
    if n_low:
        logger.warning("%d target probabilities floored at %g", n_low, PROB_FLOOR)
        if clamp_events is not None:
            clamp_events["nll_floor"] += n_low
    logp = torch.log(probs.clamp(min=PROB_FLOOR))
    per_seq = -(logp * valid.to(logp.dtype)).sum(-1)
    return per_seq.mean()


def sequence_nll(log_probs, target_ids, pad_id: int = 0):
    """Per-sequence summed NLL [B] from log-probabilities [B, T, V]."""
    picked = log_probs.gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
    valid = (target_ids != pad_id).to(picked.dtype)
    return -(picked * valid).sum(-1)


def clip_gradients(parameters, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    grads = [p.grad for p in parameters if p.grad is not None]
    if not grads:
        return 0.0
    total = torch.sqrt(sum((g.detach().double() ** 2).sum() for g in grads)).item()
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g.mul_(scale)
    return total


@torch.no_grad()
def perplexity(model: DistractorGenerator, samples: Sequence[MCQSample], vocab: Vocabulary,
               batch_size: int = 32) -> float:
    """exp(total NLL / number of non-PAD target tokens), dropout off."""
    if not samples:
        raise ContractViolation("perplexity of an empty dataset")
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    try:
        for i in range(0, len(samples), batch_size):
            batch = make_batch(samples[i:i + batch_size], vocab, model.config)
            lp = model(batch)
            total += float(sequence_nll(lp, batch.target_ids, vocab.pad_id).sum())
            count += int((batch.target_ids != vocab.pad_id).sum())
    finally:
        model.train(was_training)
    return math.exp(total / count)


# ---------------------------------------------------------------------------
# batching

def bucket_batches(samples: Sequence[MCQSample], batch_size: int, rng: random.Random):
    """One epoch of batches: shuffle, stable-sort by article length, chunk,
    then shuffle the chunk order."""
    order = list(range(len(samples)))
    rng.shuffle(order)
    order.sort(key=lambda i: sum(len(s) for s in samples[i].article_sentences))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    rng.shuffle(chunks)
    return chunks


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class CheckpointManifest:
    step: int
    learning_rate: float
    validation_perplexity: float
    config_hash: str
    parameter_blob_reference: str

    def format(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in dataclasses.asdict(self).items())

    @classmethod
    def parse(cls, text: str) -> "CheckpointManifest":
        kv = dict(line.split(": ", 1) for line in text.splitlines() if ": " in line)
        return cls(int(kv["step"]), float(kv["learning_rate"]),
                   float(kv["validation_perplexity"]), kv["config_hash"],
                   kv["parameter_blob_reference"])


def save_checkpoint(path, model: DistractorGenerator, vocab: Vocabulary,
                    train_config: Optional[TrainConfig] = None, step: int = 0):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    torch.save({
        "model_config": model.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "vocab": vocab.id_to_token[3:],
        "state_dict": model.state_dict(),
        "step": step,
    }, tmp)
    tmp.replace(path)


def load_checkpoint(path):
    """Returns (model in eval mode, vocabulary, raw blob)."""
    try:
        blob = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as exc:
        raise ConfigurationError(f"cannot load checkpoint {path}: {exc}") from exc
    model = DistractorGenerator(ModelConfig(**blob["model_config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, Vocabulary(blob["vocab"]), blob


def _write_text_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainResult:
    best: Optional[CheckpointManifest]
    model: DistractorGenerator
    history: List[Dict] = field(default_factory=list)       # per-step loss
    validations: List[Dict] = field(default_factory=list)   # per validation


def train(train_samples: Sequence[MCQSample], dev_samples: Sequence[MCQSample],
          vocab: Vocabulary, config: TrainConfig, embeddings=None,
          embedding_dim: Optional[int] = None, out_dir=None,
          dtype: torch.dtype = torch.float32, log_every: int = 100) -> TrainResult:
    """Optimize the summed-sequence NLL with SGD and keep the checkpoint with
    the lowest validation perplexity.

    The best parameters are loaded back into ``result.model`` before
    returning. With ``out_dir`` set, ``best.pt``, ``best.manifest`` and
    ``history.tsv`` are written there.
    """
    if not train_samples:
        raise ContractViolation("empty training set")
    if not dev_samples:
        raise ContractViolation("empty validation set")
    if embeddings is not None:
        embeddings = torch.as_tensor(embeddings)
        embedding_dim = embeddings.shape[1]
    if embedding_dim is None:
        raise ConfigurationError("need embeddings or an embedding_dim")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    model = DistractorGenerator(config.model_config(len(vocab), embedding_dim), embeddings)
    model.to(dtype)
    model.train()
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.SGD(params, lr=config.initial_lr)
    chash = config_hash(config)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    result = TrainResult(None, model)
    best_state = None
    epoch_batches: List[List[int]] = []
    batch_no = 0
    for step in range(1, config.total_steps + 1):
        if not epoch_batches:
            epoch_batches = bucket_batches(train_samples, config.batch_size, rng)
        idx = epoch_batches.pop(0)
        batch_no += 1
        batch = make_batch([train_samples[i] for i in idx], vocab, model.config)
        lr = lr_at(step, config)
        for group in optimizer.param_groups:
            group["lr"] = lr

        optimizer.zero_grad()
        loss = sequence_nll(model(batch), batch.target_ids, vocab.pad_id).mean()
        if not torch.isfinite(loss):
            if out is not None:
                _write_text_atomic(out / "diverged_batch.json", json.dumps(
                    {"step": step, "batch": batch_no, "sample_ids": batch.sample_ids}))
            raise TrainingDiverged(step, batch_no, loss.item())
        loss.backward()
        raw_norm = clip_gradients(params, config.grad_norm_cap)
        optimizer.step()
        result.history.append({"step": step, "loss": loss.item(), "lr": lr,
                               "grad_norm": raw_norm})
        if log_every and step % log_every == 0:
            logger.info("step %d loss %.4f lr %g |g| %.3f", step, loss.item(), lr, raw_norm)

        if step % config.validate_every == 0 or step == config.total_steps:
            ppl = perplexity(model, dev_samples, vocab, config.batch_size)
            result.validations.append({"step": step, "perplexity": ppl})
            logger.info("step %d validation perplexity %.4f", step, ppl)
            if result.best is None or ppl < result.best.validation_perplexity:
                result.best = CheckpointManifest(step, lr, ppl, chash, "best.pt")
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
                if out is not None:
                    save_checkpoint(out / "best.pt", model, vocab, config, step)
                    _write_text_atomic(out / "best.manifest", result.best.format())

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    if out is not None:
        _write_text_atomic(out / "history.tsv", "step\tloss\tlr\tgrad_norm\n" + "".join(
            f"{h['step']}\t{h['loss']:.6f}\t{h['lr']:g}\t{h['grad_norm']:.6f}\n"
            for h in result.history))
    return result
