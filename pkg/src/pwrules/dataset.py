"""Affinity ingestion, deduplication, privileged-fragment labels and splits."""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chemgraph import ChemError, canonical_key, parse_smiles
from .errors import EmptyDataset, InsufficientEntities, UnknownProtein
from .fragmenter import FragmentLibrary, fragments_in
from .wordseg import MAX_SEQUENCE_LENGTH

log = logging.getLogger(__name__)

AFFINITY_TYPES = ("Kd", "Ki", "IC50", "EC50")
SOURCES = ("pdbbind", "bindingdb", "bindingnet", "chembl_binding", "chembl_functional")
ACTIVE_THRESHOLD_NM = 10_000.0


@dataclass(frozen=True)
class AffinityRecord:
    protein_id: str
    smiles: str
    affinity_type: str
    value_nm: float
    source: str

    def __post_init__(self) -> None:
        if self.affinity_type not in AFFINITY_TYPES:
            raise ValueError(f"unknown affinity type {self.affinity_type!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if not (math.isfinite(self.value_nm) and self.value_nm > 0):
            raise ValueError(f"affinity value must be finite and positive, got {self.value_nm}")

    @classmethod
    def from_json(cls, rec: Mapping) -> AffinityRecord:
        return cls(rec["protein_id"], rec["smiles"], rec["type"], float(rec["value_nm"]), rec["source"])

    def to_json(self) -> dict:
        return {
            "protein_id": self.protein_id,
            "smiles": self.smiles,
            "type": self.affinity_type,
            "value_nm": self.value_nm,
            "source": self.source,
        }


def ingest(
    records: Iterable[AffinityRecord],
    proteins: Mapping[str, str],
    rejects: list | None = None,
) -> list[AffinityRecord]:
    """Drop over-long proteins, canonicalize SMILES, collect unparseable ones in ``rejects``."""
    kept = []
    too_long = 0
    cache: dict[str, str] = {}
    for rec in records:
        if rec.protein_id not in proteins:
            raise UnknownProtein(rec.protein_id)
        if len(proteins[rec.protein_id]) > MAX_SEQUENCE_LENGTH:
            too_long += 1
            continue
        smi = cache.get(rec.smiles)
        if smi is None:
            try:
                smi = canonical_key(parse_smiles(rec.smiles))
            except ChemError as exc:
                if rejects is not None:
                    rejects.append((rec, str(exc)))
                continue
            cache[rec.smiles] = smi
        kept.append(AffinityRecord(rec.protein_id, smi, rec.affinity_type, rec.value_nm, rec.source))
    if too_long:
        log.info("dropped %d records for proteins longer than %d residues", too_long, MAX_SEQUENCE_LENGTH)
    return kept


def dedup(
    records: Iterable[AffinityRecord],
    source_priority: tuple[str, ...] = SOURCES,
    type_priority: tuple[str, ...] = AFFINITY_TYPES,
) -> AffinityRecord:
    """Collapse records for one (protein, ligand) pair.

    Keeps the best source, then the best affinity type within it, and returns
    the median value of what is left.
    """
    recs = list(records)
    if not recs:
        raise ValueError("dedup needs at least one record")
    best_src = min(recs, key=lambda r: source_priority.index(r.source)).source
    recs = [r for r in recs if r.source == best_src]
    best_type = min(recs, key=lambda r: type_priority.index(r.affinity_type)).affinity_type
    values = sorted(r.value_nm for r in recs if r.affinity_type == best_type)
    mid = len(values) // 2
    value = values[mid] if len(values) % 2 else (values[mid - 1] + values[mid]) / 2
    first = recs[0]
    return AffinityRecord(first.protein_id, first.smiles, best_type, value, best_src)


def dedup_all(records: Iterable[AffinityRecord]) -> list[AffinityRecord]:
    groups: dict[tuple[str, str], list[AffinityRecord]] = {}
    for r in records:
        groups.setdefault((r.protein_id, r.smiles), []).append(r)
    return [dedup(groups[k]) for k in sorted(groups)]


def binarize(value_nm: float) -> bool:
    """Active iff strictly below 10 uM."""
    return value_nm < ACTIVE_THRESHOLD_NM


@dataclass(frozen=True)
class Pair:
    protein_id: str
    smiles: str
    active: bool


def pairs_from_records(records: Iterable[AffinityRecord]) -> list[Pair]:
    return [Pair(r.protein_id, r.smiles, binarize(r.value_nm)) for r in records]


@dataclass
class LabelMatrix:
    """Sparse protein x fragment labels; missing entries are NA."""

    labels: dict[tuple[str, str], int]
    proteins: list[str]
    fragments: list[str]

    def get(self, protein_id: str, fragment_id: str) -> int | None:
        return self.labels.get((protein_id, fragment_id))

    def row(self, protein_id: str) -> dict[str, int]:
        return {f: v for (p, f), v in self.labels.items() if p == protein_id}

    def dense(self, proteins: list[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(labels, observed)`` arrays of shape (proteins, fragments)."""
        proteins = self.proteins if proteins is None else proteins
        pidx = {p: i for i, p in enumerate(proteins)}
        fidx = {f: j for j, f in enumerate(self.fragments)}
        y = np.zeros((len(proteins), len(self.fragments)))
        obs = np.zeros_like(y)
        for (p, f), v in self.labels.items():
            if p in pidx and f in fidx:
                y[pidx[p], fidx[f]] = v
                obs[pidx[p], fidx[f]] = 1.0
        return y, obs

    def write_tsv(self, path: str | Path, header: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if header:
                fh.write(f"# {header}\n")
            for (p, f), v in sorted(self.labels.items(), key=lambda kv: (kv[0][0], _frag_order(kv[0][1]))):
                fh.write(f"{p}\t{f}\t{v}\n")

    @classmethod
    def read_tsv(cls, path: str | Path, fragments: list[str] | None = None) -> LabelMatrix:
        labels = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip() or line.startswith("#"):
                    continue
                p, f, v = line.rstrip("\n").split("\t")
                if v not in ("0", "1"):
                    raise ValueError(f"label must be 0 or 1, got {v!r}")
                labels[(p, f)] = int(v)
        proteins = sorted({p for p, _ in labels})
        if fragments is None:
            fragments = sorted({f for _, f in labels}, key=_frag_order)
        return cls(labels, proteins, fragments)


def _frag_order(fid: str):
    tail = fid.rsplit("_", 1)[-1]
    return (0, int(tail), fid) if tail.isdigit() else (1, 0, fid)


class FragmentIndex:
    """Memoized ligand -> contained library fragment ids."""

    def __init__(self, lib: FragmentLibrary):
        self.lib = lib
        self._cache: dict[str, frozenset[str]] = {}

    def __call__(self, smiles: str) -> frozenset[str]:
        hit = self._cache.get(smiles)
        if hit is None:
            hit = frozenset(fragments_in(self.lib, parse_smiles(smiles)))
            self._cache[smiles] = hit
        return hit


def label_matrix(
    pairs: Iterable[Pair],
    lib: FragmentLibrary,
    min_actives: int = 1,
    index: FragmentIndex | None = None,
) -> LabelMatrix:
    """Privileged-fragment labels per protein.

    1 when the fragment is in more than half of the protein's active ligands;
    0 when it occurs in some ligand tested against the protein but misses that
    bar; NA otherwise. Proteins with fewer than ``min_actives`` actives get no
    1-labels.
    """
    index = index or FragmentIndex(lib)
    tested: dict[str, set[str]] = {}
    actives: dict[str, set[str]] = {}
    for p in pairs:
        tested.setdefault(p.protein_id, set()).add(p.smiles)
        if p.active:
            actives.setdefault(p.protein_id, set()).add(p.smiles)
    if not tested:
        raise EmptyDataset("no protein-ligand pairs")
    labels: dict[tuple[str, str], int] = {}
    for prot in sorted(tested):
        act = actives.get(prot, set())
        present: dict[str, int] = {}
        for smi in act:
            for f in index(smi):
                present[f] = present.get(f, 0) + 1
        seen: set[str] = set()
        for smi in tested[prot]:
            seen |= index(smi)
        for f in seen:
            privileged = len(act) >= min_actives and len(act) > 0 and present.get(f, 0) / len(act) > 0.5
            labels[(prot, f)] = 1 if privileged else 0
    return LabelMatrix(labels, sorted(tested), lib.ids())


SPLIT_MODES = ("novel_protein", "novel_ligand", "novel_complex")


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "novel_protein"
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {self.mode!r}")
        if abs(sum(self.ratios) - 1.0) > 1e-9 or any(r < 0 for r in self.ratios):
            raise ValueError("split ratios must be non-negative and sum to 1")


def _partition(entities: list[str], ratios, rng: np.random.Generator) -> tuple[set[str], set[str], set[str]]:
    n = len(entities)
    n_val = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    if n < 3 or (ratios[1] > 0 and n_val == 0) or (ratios[2] > 0 and n_test == 0) or n_val + n_test >= n:
        raise InsufficientEntities(f"cannot split {n} entities with ratios {ratios}")
    perm = [entities[i] for i in rng.permutation(n)]
    val = set(perm[:n_val])
    test = set(perm[n_val : n_val + n_test])
    train = set(perm[n_val + n_test :])
    return train, val, test


@dataclass
class Split:
    train: list[int] = field(default_factory=list)
    val: list[int] = field(default_factory=list)
    test: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test}


def split(pairs: list[Pair], spec: SplitSpec) -> Split:
    """Index-level train/val/test split of ``pairs`` under one regime."""
    rng = np.random.default_rng(spec.seed)
    proteins = sorted({p.protein_id for p in pairs})
    ligands = sorted({p.smiles for p in pairs})
    out = Split()
    if spec.mode == "novel_protein":
        tr, va, te = _partition(proteins, spec.ratios, rng)
        for i, p in enumerate(pairs):
            (out.val if p.protein_id in va else out.test if p.protein_id in te else out.train).append(i)
    elif spec.mode == "novel_ligand":
        tr, va, te = _partition(ligands, spec.ratios, rng)
        for i, p in enumerate(pairs):
            (out.val if p.smiles in va else out.test if p.smiles in te else out.train).append(i)
    else:
        ptr, pva, pte = _partition(proteins, spec.ratios, rng)
        ltr, lva, lte = _partition(ligands, spec.ratios, rng)
        for i, p in enumerate(pairs):
            if p.protein_id in pva and p.smiles in lva:
                out.val.append(i)
            elif p.protein_id in pte and p.smiles in lte:
                out.test.append(i)
            elif p.protein_id in ptr and p.smiles in ltr:
                out.train.append(i)
            # mixed pairs would leak a held-out entity into training
    return out


def read_affinity_jsonl(path: str | Path) -> list[AffinityRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                continue
            try:
                out.append(AffinityRecord.from_json(rec))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def read_proteins_jsonl(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                continue
            out[rec["protein_id"]] = rec["sequence"]
    return out
