"""Masked BCE loss, Adam with cosine annealing, MCC-based checkpoint selection."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DivergenceError
from .model import Batch, ModelState, backward, forward, sigmoid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 256
    t_max: int = 20
    min_lr: float = 0.0
    max_epochs: int = 600
    patience: int = 60
    threshold: float = 0.5
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def masked_bce_loss(logits, labels, observed) -> tuple[float, np.ndarray]:
    """Mean BCE-with-logits over observed entries and its gradient w.r.t. ``logits``.

    An all-NA batch gives loss 0 (with a warning) and a zero gradient.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    n = obs.sum()
    if n == 0:
        warnings.warn("masked_bce_loss: no observed labels in batch", RuntimeWarning, stacklevel=2)
        return 0.0, np.zeros_like(z)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float((per * obs).sum() / n)
    grad = (sigmoid_raw(z) - y) * obs / n
    return loss, grad


def sigmoid_raw(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Closed-form cosine annealing (period 2 * t_max, like torch's CosineAnnealingLR)."""
    return cfg.min_lr + (cfg.lr - cfg.min_lr) * (1.0 + math.cos(math.pi * epoch / cfg.t_max)) / 2.0


def adam_step(state: ModelState, grads: dict[str, np.ndarray], lr: float, cfg: TrainConfig) -> None:
    """In-place Adam update; weight decay is added to the gradient (L2 style)."""
    b1, b2 = cfg.betas
    state.step += 1
    t = state.step
    for name, p in state.params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        m = state.adam_m.get(name)
        v = state.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.adam_m[name] = m
        state.adam_v[name] = v
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        state.params[name] = p - lr * mhat / (np.sqrt(vhat) + cfg.eps)


def mcc(calls, truth) -> float:
    """Matthews correlation; 0 when any marginal is empty."""
    calls = np.asarray(calls, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = float(np.sum(calls & truth))
    tn = float(np.sum(~calls & ~truth))
    fp = float(np.sum(calls & ~truth))
    fn = float(np.sum(~calls & truth))
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(den)


@dataclass
class LabeledSet:
    """Per-protein word embeddings with dense label/observed matrices (rows align)."""

    protein_ids: list[str]
    embeddings: list[np.ndarray]
    y: np.ndarray
    observed: np.ndarray

    def __len__(self) -> int:
        return len(self.protein_ids)

    def batch(self, rows, max_words: int, dim: int) -> Batch:
        rows = list(rows)
        return Batch.from_words(
            [self.embeddings[r] for r in rows], max_words, self.y[rows], self.observed[rows], dim=dim
        )


def evaluate_mcc(state: ModelState, data: LabeledSet, threshold: float = 0.5, batch_size: int = 256) -> float:
    """MCC over observed entries at ``threshold``."""
    calls, truth = [], []
    cfg = state.config
    for start in range(0, len(data), batch_size):
        rows = range(start, min(start + batch_size, len(data)))
        b = data.batch(rows, cfg.max_words, cfg.embed_dim)
        logits, _ = forward(state, b)
        prob = sigmoid(logits)
        obs = b.observed > 0
        calls.append(prob[obs] >= threshold)
        truth.append(b.y[obs] > 0.5)
    if not calls:
        return 0.0
    return mcc(np.concatenate(calls), np.concatenate(truth))


@dataclass
class TrainLog:
    rows: list[tuple] = field(default_factory=list)
    val_names: list[str] = field(default_factory=list)

    def to_tsv(self) -> str:
        head = "epoch\tlr\ttrain_loss\t" + "\t".join(f"val_mcc_{n}" for n in self.val_names)
        lines = [head]
        for epoch, lr, loss, *vals in self.rows:
            lines.append("\t".join([str(epoch), f"{lr:.6g}", f"{loss:.6f}", *(f"{v:.6f}" for v in vals)]))
        return "\n".join(lines) + "\n"


def train(
    initial: ModelState,
    train_set: LabeledSet,
    val_sets: dict[str, LabeledSet] | None = None,
    cfg: TrainConfig = TrainConfig(),
    log_out: TrainLog | None = None,
) -> ModelState:
    """Train and return the checkpoint with the best mean validation MCC.

    Without validation sets the final state is returned. Stops early after
    ``cfg.patience`` epochs without improvement.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    state = initial.copy()
    mcfg = state.config
    rng = np.random.default_rng(cfg.seed)
    val_sets = {k: v for k, v in (val_sets or {}).items() if len(v)}
    if log_out is not None:
        log_out.val_names = list(val_sets)
    best_state = state.copy()
    best_score = -math.inf
    since_best = 0
    for epoch in range(cfg.max_epochs):
        lr = cosine_lr(epoch, cfg)
        order = rng.permutation(len(train_set))
        total, n_obs = 0.0, 0.0
        for start in range(0, len(order), cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            b = train_set.batch(rows, mcfg.max_words, mcfg.embed_dim)
            logits, cache = forward(state, b, rng)
            loss, dlogits = masked_bce_loss(logits, b.y, b.observed)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            grads, _ = backward(state, cache, dlogits)
            adam_step(state, grads, lr, cfg)
            k = b.observed.sum()
            total += loss * k
            n_obs += k
        state.epoch = epoch + 1
        train_loss = total / n_obs if n_obs else 0.0
        scores = [evaluate_mcc(state, v, cfg.threshold) for v in val_sets.values()]
        if log_out is not None:
            log_out.rows.append((epoch, lr, train_loss, *scores))
        if not val_sets:
            best_state = state
            continue
        score = float(np.mean(scores))
        if score > best_score:
            best_score = score
            best_state = state.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                log.info("early stop at epoch %d (best mean MCC %.4f)", epoch, best_score)
                break
    return best_state.copy()
