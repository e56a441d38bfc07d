"""PWScore screening, Z-score fusion and evaluation metrics."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .chemgraph import Molecule, find_substructure
from .errors import DegenerateTruth, IdMismatch, NoActives, UnknownFragment
from .fragmenter import FragmentLibrary
from .rulebase import FragmentPrediction

DEFAULT_CAP = 10


@dataclass(frozen=True)
class ScoredFragment:
    fragment_id: str
    s_conf: float
    s_spec: float

    @property
    def s_comp(self) -> float:
        return self.s_conf * self.s_spec


@dataclass
class ScreeningResult:
    molecule_id: str
    pwscore: float
    covered: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def specificity(fragment_id: str, lib: FragmentLibrary) -> float:
    """``1 - (ln c - ln c_min) / (ln c_max - ln c_min)`` over library counts."""
    if fragment_id not in lib:
        raise UnknownFragment(fragment_id)
    lo, hi = _log_count_range(lib)
    if hi == lo:
        return 1.0
    return 1.0 - (math.log(lib[fragment_id].count) - lo) / (hi - lo)


def _log_count_range(lib: FragmentLibrary) -> tuple[float, float]:
    logs = [math.log(f.count) for f in lib]
    return min(logs), max(logs)


def score_fragments(predictions: Iterable[FragmentPrediction], lib: FragmentLibrary, called_only: bool = True) -> list[ScoredFragment]:
    """ScoredFragments for a target's predictions (by default only fragments called privileged)."""
    out = []
    for p in predictions:
        if called_only and not p.called:
            continue
        out.append(ScoredFragment(p.fragment_id, p.score, specificity(p.fragment_id, lib)))
    return out


def _fid_key(fid: str):
    tail = fid.rsplit("_", 1)[-1]
    return (0, int(tail), fid) if tail.isdigit() else (1, 0, fid)


def pwscore(
    molecule_id: str,
    mol: Molecule,
    fragments: Iterable[ScoredFragment],
    lib: FragmentLibrary,
    cap: int = DEFAULT_CAP,
) -> ScreeningResult:
    """Greedy coverage in descending S_comp; a fragment is rejected if any of its atoms is at ``cap``."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    uniq = {f.fragment_id: f for f in fragments}
    order = sorted(uniq.values(), key=lambda f: (-f.s_comp, _fid_key(f.fragment_id)))
    counts = [0] * len(mol.atoms)
    res = ScreeningResult(molecule_id, 0.0)
    total = []
    for f in order:
        if f.fragment_id not in lib:
            raise UnknownFragment(f.fragment_id)
        hits = find_substructure(lib[f.fragment_id].mol, mol)
        if not hits:
            continue
        atoms = tuple(sorted(hits[0].target_atoms))
        if any(counts[a] >= cap for a in atoms):
            res.skipped.append(f.fragment_id)
            continue
        for a in atoms:
            counts[a] += 1
        total.append(f.s_comp)
        res.covered.append((f.fragment_id, atoms))
    res.pwscore = math.fsum(total)
    return res


def zscore(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    sd = v.std()
    if v.size == 0 or sd == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def zscore_fuse(
    scores_a: Mapping[str, float],
    scores_b: Mapping[str, float],
    higher_better_a: bool = True,
    higher_better_b: bool = True,
) -> dict[str, float]:
    """Mean of orientation-corrected population Z-scores."""
    if set(scores_a) != set(scores_b):
        raise IdMismatch(f"{len(set(scores_a) ^ set(scores_b))} ids differ between score sets")
    ids = sorted(scores_a)
    a = np.array([scores_a[i] for i in ids], dtype=np.float64)
    b = np.array([scores_b[i] for i in ids], dtype=np.float64)
    za = zscore(a if higher_better_a else -a)
    zb = zscore(b if higher_better_b else -b)
    return {i: float(x) for i, x in zip(ids, (za + zb) / 2.0)}


def rank_ids(scores: Mapping[str, float]) -> list[str]:
    """Ids by descending score, ties by id."""
    return sorted(scores, key=lambda i: (-scores[i], i))


def enrichment_factor(ranked_ids: Sequence[str], actives: Iterable[str], x: float) -> float:
    """EF at the top ``x`` percent; ``ranked_ids`` must already be in final order."""
    actives = set(actives)
    n = len(ranked_ids)
    hits_total = sum(1 for i in ranked_ids if i in actives)
    if hits_total == 0:
        raise NoActives("no actives in the ranked list")
    if not 0 < x <= 100:
        raise ValueError("x must be in (0, 100]")
    nx = math.ceil(x / 100.0 * n - 1e-9)
    nx = max(nx, 1)
    hits = sum(1 for i in ranked_ids[:nx] if i in actives)
    return (hits / nx) / (hits_total / n)


def confusion(calls, truth) -> tuple[int, int, int, int]:
    c = np.asarray(calls, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    return int(np.sum(c & t)), int(np.sum(~c & ~t)), int(np.sum(c & ~t)), int(np.sum(~c & t))


def binary_metrics(calls, truth) -> tuple[float, float]:
    """``(precision, mcc)``; precision is 0 when nothing is called."""
    tp, tn, fp, fn = confusion(calls, truth)
    precision = tp / (tp + fp) if tp + fp else 0.0
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    m = (tp * tn - fp * fn) / math.sqrt(den) if den else 0.0
    return precision, m


def auc_pairwise(scores, truth) -> float:
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth, dtype=bool)
    pos, neg = s[t], s[~t]
    if pos.size == 0 or neg.size == 0:
        raise DegenerateTruth("AUC needs both classes")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


def midranks(values) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_rank(scores, truth) -> float:
    t = np.asarray(truth, dtype=bool)
    n1, n0 = int(t.sum()), int((~t).sum())
    if n1 == 0 or n0 == 0:
        raise DegenerateTruth("AUC needs both classes")
    r = midranks(scores)
    return float((r[t].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


@dataclass
class MetricReport:
    ef: dict[str, float]
    precision: float | None
    mcc: float | None
    auc: float | None
    n_actives: int
    n_total: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            **{f"ef_{k}": v for k, v in self.ef.items()},
            "mcc": self.mcc,
            "n_actives": self.n_actives,
            "n_total": self.n_total,
            "precision": self.precision,
        }


def _pct_label(x: float) -> str:
    return f"{x:g}".replace(".", "_") + "pct"


def metric_report(
    scores: Mapping[str, float],
    actives: Iterable[str],
    ef_levels: Sequence[float] = (0.5, 1.0, 5.0),
    threshold: float | None = None,
) -> MetricReport:
    """EF at each level, AUC, and precision/MCC when a call threshold is given."""
    actives = set(actives)
    ranked = rank_ids(scores)
    ef = {_pct_label(x): enrichment_factor(ranked, actives, x) for x in ef_levels}
    truth = [i in actives for i in ranked]
    vals = [scores[i] for i in ranked]
    try:
        auc = auc_rank(vals, truth)
    except DegenerateTruth:
        auc = None
    precision = mcc = None
    if threshold is not None:
        precision, mcc = binary_metrics([v >= threshold for v in vals], truth)
    return MetricReport(ef, precision, mcc, auc, sum(truth), len(ranked))
