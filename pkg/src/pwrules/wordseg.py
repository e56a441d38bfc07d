"""Protein word segmentation from residue attention graphs.

Attention is symmetrized and thresholded into a weighted residue graph,
Louvain communities of 5-20 residues become words, and word embeddings are the
mean of their residues' embeddings.
"""

from __future__ import annotations

import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import LengthError, ShapeError

MAX_SEQUENCE_LENGTH = 1024
MIN_WORD, MAX_WORD = 5, 20


@dataclass(frozen=True)
class ProteinWord:
    protein_id: str
    positions: tuple[int, ...]
    key: str
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.key) != len(self.positions):
            raise ValueError("key length must equal the number of positions")
        if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError("positions must be strictly increasing")


@dataclass(frozen=True)
class AttentionGraph:
    n: int
    edges: tuple[tuple[int, int, float], ...]

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric CSR arrays (each edge stored in both rows)."""
        rows: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for i, j, w in self.edges:
            rows[i].append((j, w))
            rows[j].append((i, w))
        return _rows_to_csr(rows)


def _rows_to_csr(rows) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    idx: list[int] = []
    wts: list[float] = []
    for r, row in enumerate(rows):
        for j, w in sorted(row):
            idx.append(j)
            wts.append(w)
        indptr[r + 1] = len(idx)
    return indptr, np.array(idx, dtype=np.int64), np.array(wts, dtype=np.float64)


def build_attention_graph(attn, edge_threshold: float | None = None, percentile: float = 90.0) -> AttentionGraph:
    """Weighted residue graph from one L x L attention matrix.

    ``w_ij = (a_ij + a_ji) / 2``; an edge is kept when ``w_ij >= edge_threshold``
    and ``w_ij > 0``. Without an explicit threshold the ``percentile`` of the
    off-diagonal weights is used.
    """
    a = np.asarray(attn, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"attention must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("attention entries must be finite and non-negative")
    n = a.shape[0]
    sym = (a + a.T) / 2.0
    iu, ju = np.triu_indices(n, k=1)
    w = sym[iu, ju]
    if w.size == 0:
        return AttentionGraph(n, ())
    thr = float(np.percentile(w, percentile)) if edge_threshold is None else float(edge_threshold)
    keep = (w >= thr) & (w > 0)
    edges = tuple((int(i), int(j), float(x)) for i, j, x in zip(iu[keep], ju[keep], w[keep]))
    return AttentionGraph(n, edges)


def modularity(g: AttentionGraph, communities: Iterable[Iterable[int]], resolution: float = 1.0) -> float:
    """Newman modularity of a partition of ``g``."""
    m = sum(w for _, _, w in g.edges)
    if m == 0:
        return 0.0
    label = {}
    for c, nodes in enumerate(communities):
        for v in nodes:
            label[v] = c
    strength = np.zeros(g.n)
    internal: dict[int, float] = {}
    for i, j, w in g.edges:
        strength[i] += w
        strength[j] += w
        if label[i] == label[j]:
            internal[label[i]] = internal.get(label[i], 0.0) + w
    tot: dict[int, float] = {}
    for v in range(g.n):
        tot[label[v]] = tot.get(label[v], 0.0) + strength[v]
    return sum(internal.get(c, 0.0) / m - resolution * (tot[c] / (2 * m)) ** 2 for c in tot)


def louvain(
    g: AttentionGraph, seed: int = 0, resolution: float = 1.0, max_sweeps: int = 100, kernel=None
) -> list[list[int]]:
    """Two-phase Louvain modularity maximization.

    Node visit order in every level is a seeded permutation, so the result is a
    pure function of ``(g, seed)``. Communities are returned as sorted node
    lists ordered by their smallest node.
    """
    move = kernel or _kernels.louvain_move
    rng = np.random.default_rng(seed)
    node_comm = np.arange(g.n, dtype=np.int64)  # original node -> current super-node
    indptr, indices, weights = g.csr()
    m2 = float(weights.sum())
    if g.n == 0:
        return []
    if m2 == 0:
        return [[v] for v in range(g.n)]
    while True:
        n = len(indptr) - 1
        strength = np.zeros(n)
        for v in range(n):
            strength[v] = weights[indptr[v] : indptr[v + 1]].sum()
        comm = np.arange(n, dtype=np.int64)
        tot = strength.copy()
        order = rng.permutation(n).astype(np.int64)
        improved = False
        for _ in range(max_sweeps):
            if move(indptr, indices, weights, strength, comm, tot, m2, order, resolution) == 0:
                break
            improved = True
        if not improved:
            break
        # renumber communities by first appearance, then aggregate
        relabel: dict[int, int] = {}
        for v in range(n):
            relabel.setdefault(int(comm[v]), len(relabel))
        new_of = np.array([relabel[int(c)] for c in comm], dtype=np.int64)
        node_comm = new_of[node_comm]
        agg: list[dict[int, float]] = [dict() for _ in range(len(relabel))]
        for v in range(n):
            cv = new_of[v]
            for x in range(indptr[v], indptr[v + 1]):
                cu = new_of[indices[x]]
                agg[cv][cu] = agg[cv].get(cu, 0.0) + weights[x]
        indptr, indices, weights = _rows_to_csr([list(d.items()) for d in agg])
        if len(relabel) == n:
            break
    groups: dict[int, list[int]] = {}
    for v in range(g.n):
        groups.setdefault(int(node_comm[v]), []).append(v)
    return sorted(groups.values(), key=lambda c: c[0])


def segment(
    protein_id: str,
    sequence: str,
    attn,
    seed: int = 0,
    *,
    edge_threshold: float | None = None,
    min_len: int = MIN_WORD,
    max_len: int = MAX_WORD,
) -> list[ProteinWord]:
    """Protein words of one sequence; communities outside ``[min_len, max_len]`` are dropped."""
    if len(sequence) > MAX_SEQUENCE_LENGTH:
        raise LengthError(f"{protein_id}: length {len(sequence)} > {MAX_SEQUENCE_LENGTH}")
    a = np.asarray(attn)
    if a.shape != (len(sequence), len(sequence)):
        raise ShapeError(f"{protein_id}: attention {a.shape} does not match length {len(sequence)}")
    g = build_attention_graph(a, edge_threshold)
    words = []
    for comm in louvain(g, seed):
        if min_len <= len(comm) <= max_len:
            pos = tuple(sorted(comm))
            words.append(ProteinWord(protein_id, pos, "".join(sequence[p] for p in pos)))
    return words


def word_embedding(word: ProteinWord, residue_embeddings) -> np.ndarray:
    emb = np.asarray(residue_embeddings, dtype=np.float64)
    if any(p >= emb.shape[0] or p < 0 for p in word.positions):
        raise IndexError(f"{word.protein_id}: word position out of range for {emb.shape[0]} residues")
    return emb[list(word.positions)].mean(axis=0)


@dataclass
class WordDictionary:
    counts: dict[str, int]
    min_count: int = 2

    def __contains__(self, key: str) -> bool:
        return self.counts.get(key, 0) >= self.min_count


def build_dictionary(words: Iterable[ProteinWord], min_count: int = 2) -> WordDictionary:
    """Count, per word key, the number of distinct proteins that produced it."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    seen: set[tuple[str, str]] = set()
    counts: dict[str, int] = {}
    for w in words:
        if not MIN_WORD <= len(w.key) <= MAX_WORD:
            continue
        if (w.protein_id, w.key) in seen:
            continue
        seen.add((w.protein_id, w.key))
        counts[w.key] = counts.get(w.key, 0) + 1
    return WordDictionary(dict(sorted(counts.items())), min_count)


def filter_words(words: Iterable[ProteinWord], dictionary: WordDictionary) -> list[ProteinWord]:
    return [w for w in words if w.key in dictionary]


def write_words_jsonl(path: str | Path, words: Iterable[ProteinWord], meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for w in words:
            fh.write(json.dumps({"protein_id": w.protein_id, "key": w.key, "positions": list(w.positions)}) + "\n")


def read_words_jsonl(path: str | Path, embeddings: np.ndarray | None = None) -> list[ProteinWord]:
    """Words in file order; row ``i`` of ``embeddings`` belongs to word ``i``."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                continue
            words.append(ProteinWord(rec["protein_id"], tuple(rec["positions"]), rec["key"]))
    if embeddings is None:
        return words
    if len(words) != len(embeddings):
        raise ShapeError(f"{len(words)} words but {len(embeddings)} embedding rows")
    return [ProteinWord(w.protein_id, w.positions, w.key, e) for w, e in zip(words, embeddings)]


def words_by_protein(words: Iterable[ProteinWord]) -> dict[str, list[ProteinWord]]:
    out: dict[str, list[ProteinWord]] = {}
    for w in words:
        out.setdefault(w.protein_id, []).append(w)
    return out
