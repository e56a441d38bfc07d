"""Integrated Gradients over word embeddings and rule emission.

For each fragment a protein is labelled privileged for, and that the model
also calls privileged, the logit's attribution is condensed to one score per
word, the words carrying most of the positive attribution are selected, and
each becomes a rule ``(word, fragment)`` scored ``sqrt(pred * attr)``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .classifier.model import Batch, ModelState, backward, forward, sigmoid
from .errors import NoPositiveAttribution, ShapeError
from .wordseg import ProteinWord

DEFAULT_STEPS = 50


@dataclass(frozen=True)
class AttributionResult:
    attributions: np.ndarray  # (n_words, D)
    word_scores: np.ndarray  # condensed and normalized
    completeness_gap: float


@dataclass
class RuleRecord:
    word: str
    fragment_id: str
    pred_score: float
    attr_score: float
    rule_score: float
    accuracy: float | None = None
    protein_id: str | None = None

    @classmethod
    def make(cls, word: str, fragment_id: str, pred: float, attr: float, protein_id: str | None = None) -> RuleRecord:
        return cls(word, fragment_id, float(pred), float(attr), math.sqrt(pred * attr), None, protein_id)

    def to_json(self) -> str:
        d = asdict(self)
        if d["protein_id"] is None:
            del d["protein_id"]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> RuleRecord:
        d = json.loads(line)
        return cls(
            d["word"], d["fragment_id"], float(d["pred_score"]), float(d["attr_score"]),
            float(d["rule_score"]), None if d.get("accuracy") is None else float(d["accuracy"]),
            d.get("protein_id"),
        )


def integrated_gradients(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x,
    baseline=None,
    steps: int = DEFAULT_STEPS,
) -> np.ndarray:
    """Midpoint-rule Integrated Gradients.

    ``grad_fn`` maps a stack of points ``(steps, *x.shape)`` to the gradient of
    the scalar target at each point, with the same shape.
    """
    x = np.asarray(x, dtype=np.float64)
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if base.shape != x.shape:
        raise ShapeError(f"baseline shape {base.shape} != input shape {x.shape}")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    delta = x - base
    points = base[None] + alphas.reshape((-1,) + (1,) * x.ndim) * delta[None]
    grads = np.asarray(grad_fn(points))
    if grads.shape != points.shape:
        raise ShapeError(f"grad_fn returned {grads.shape}, expected {points.shape}")
    return delta * grads.mean(axis=0)


def model_logit_fn(state: ModelState, target: int) -> Callable[[np.ndarray], np.ndarray]:
    """Target logit for a stack of (n_words, D) inputs, all words unmasked."""

    def f(points: np.ndarray) -> np.ndarray:
        b = Batch(points, np.ones(points.shape[:2]))
        logits, _ = forward(state, b)
        return logits[:, target]

    return f


def model_grad_fn(state: ModelState, target: int) -> Callable[[np.ndarray], np.ndarray]:
    """Gradient of the pre-sigmoid logit ``target`` w.r.t. the word embeddings."""
    if not 0 <= target < state.config.n_fragments:
        raise IndexError(f"fragment index {target} out of range")

    def g(points: np.ndarray) -> np.ndarray:
        b = Batch(points, np.ones(points.shape[:2]))
        logits, cache = forward(state, b)
        d = np.zeros_like(logits)
        d[:, target] = 1.0
        _, dx = backward(state, cache, d)
        return dx

    return g


def attribute(state: ModelState, x, target: int, baseline=None, steps: int = DEFAULT_STEPS) -> AttributionResult:
    """IG for one protein's word embeddings, with condensed scores and completeness gap."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != state.config.embed_dim:
        raise ShapeError(f"expected (n_words, {state.config.embed_dim}) input, got {x.shape}")
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    ig = integrated_gradients(model_grad_fn(state, target), x, base, steps)
    fx, fb = model_logit_fn(state, target)(np.stack([x, base]))
    gap = abs(float(ig.sum()) - float(fx - fb))
    return AttributionResult(ig, condense(ig), gap)


def condense(attribs) -> np.ndarray:
    """Sum over the embedding dimension, then scale to unit L2 norm (zero stays zero)."""
    s = np.asarray(attribs, dtype=np.float64).sum(axis=-1)
    norm = float(np.linalg.norm(s))
    return s / norm if norm > 0 else s


def select_words(scores: Sequence[float]) -> list[int]:
    """Indices of the fewest top-scoring words carrying more than half the positive mass."""
    pos = [(float(s), i) for i, s in enumerate(scores) if s > 0]
    if not pos:
        raise NoPositiveAttribution("no word has positive attribution")
    total = sum(s for s, _ in pos)
    pos.sort(key=lambda t: (-t[0], t[1]))
    out, acc = [], 0.0
    for s, i in pos:
        out.append(i)
        acc += s
        if acc > 0.5 * total:
            break
    return out


def extract_rules(
    state: ModelState,
    protein_id: str,
    words: Sequence[ProteinWord],
    labels: dict[str, int],
    fragment_ids: Sequence[str],
    *,
    steps: int = DEFAULT_STEPS,
    baseline=None,
) -> list[RuleRecord]:
    """Rules for one protein.

    ``labels`` maps fragment id to an observed 0/1 label; ``fragment_ids`` lists
    the model's output columns in order. Words must carry embeddings.
    """
    if not words:
        return []
    cfg = state.config
    words = list(words)[: cfg.max_words]
    if any(w.embedding is None for w in words):
        raise ValueError(f"{protein_id}: words lack embeddings")
    x = np.stack([np.asarray(w.embedding, dtype=np.float64) for w in words])
    if x.shape[1] != cfg.embed_dim:
        raise ShapeError(f"{protein_id}: embedding dim {x.shape[1]} != {cfg.embed_dim}")
    logits, _ = forward(state, Batch(x[None], np.ones((1, len(words)))))
    probs = sigmoid(logits)[0]
    rules = []
    for j, fid in enumerate(fragment_ids):
        if labels.get(fid) != 1 or probs[j] <= 0.5:
            continue
        res = attribute(state, x, j, baseline, steps)
        try:
            chosen = select_words(res.word_scores)
        except NoPositiveAttribution:
            continue
        for i in chosen:
            rules.append(RuleRecord.make(words[i].key, fid, float(probs[j]), float(res.word_scores[i]), protein_id))
    return rules


def write_rules_jsonl(path: str | Path, rules: Iterable[RuleRecord], meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for r in rules:
            fh.write(r.to_json() + "\n")


def read_rules_jsonl(path: str | Path) -> list[RuleRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip() and not line.lstrip().startswith('{"_meta"'):
                out.append(RuleRecord.from_json(line))
    return out
