"""Rule database: accuracy filtering, word matching and fragment prediction."""

from __future__ import annotations

import json
import math
import struct
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

from .attribution import RuleRecord
from .dataset import LabelMatrix
from .errors import FormatError

METHODS = ("joint", "max", "avg")


@dataclass(frozen=True)
class FragmentPrediction:
    fragment_id: str
    matched_rules: tuple[float, ...]
    score: float
    called: bool

    @property
    def n_matched(self) -> int:
        return len(self.matched_rules)

    def score_with(self, method: str) -> float:
        return aggregate(self.matched_rules, method)


@dataclass
class RuleDB:
    """Rules keyed by ``(word, fragment_id)``; one record per pair."""

    rules: dict[tuple[str, str], RuleRecord] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_rules(cls, rules: Iterable[RuleRecord], meta: dict | None = None) -> RuleDB:
        """Duplicate (word, fragment) rules, e.g. from different proteins, keep the highest rule_score."""
        db: dict[tuple[str, str], RuleRecord] = {}
        for r in rules:
            k = (r.word, r.fragment_id)
            cur = db.get(k)
            if cur is None or (r.rule_score, r.pred_score) > (cur.rule_score, cur.pred_score):
                db[k] = r
        return cls(dict(sorted(db.items(), key=lambda kv: _pair_order(kv[0]))), dict(meta or {}))

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules.values())

    def by_word(self) -> dict[str, list[RuleRecord]]:
        out: dict[str, list[RuleRecord]] = {}
        for r in self.rules.values():
            out.setdefault(r.word, []).append(r)
        return out

    def by_fragment(self) -> dict[str, list[RuleRecord]]:
        out: dict[str, list[RuleRecord]] = {}
        for r in self.rules.values():
            out.setdefault(r.fragment_id, []).append(r)
        return out


def _frag_num(fid: str):
    tail = fid.rsplit("_", 1)[-1]
    return (0, int(tail), fid) if tail.isdigit() else (1, 0, fid)


def _pair_order(k: tuple[str, str]):
    return (k[0], _frag_num(k[1]))


def rule_accuracy(rule: RuleRecord, protein_words: Mapping[str, set[str]], labels: LabelMatrix) -> tuple[float, bool]:
    """``(accuracy, flagged)`` of a rule against reference proteins.

    ``protein_words`` maps protein id to the set of word keys its segmentation
    produced. Proteins without an observed label for the fragment are left out;
    an empty denominator gives ``(0.0, True)``.
    """
    hits = total = 0
    for pid, keys in protein_words.items():
        if rule.word not in keys:
            continue
        v = labels.get(pid, rule.fragment_id)
        if v is None:
            continue
        total += 1
        hits += v == 1
    if total == 0:
        return 0.0, True
    return hits / total, False


def annotate_accuracy(db: RuleDB, protein_words: Mapping[str, set[str]], labels: LabelMatrix) -> tuple[RuleDB, int]:
    """Copy of ``db`` with accuracies filled in, plus the number of flagged rules."""
    by_word: dict[str, list[str]] = {}
    for pid, keys in protein_words.items():
        for k in keys:
            by_word.setdefault(k, []).append(pid)
    out, flagged = {}, 0
    for key, r in db.rules.items():
        acc, flag = rule_accuracy(r, {p: {r.word} for p in by_word.get(r.word, [])}, labels)
        flagged += flag
        out[key] = replace(r, accuracy=acc)
    return RuleDB(out, dict(db.meta)), flagged


def filter_rules(db: RuleDB, min_accuracy: float = 0.5) -> RuleDB:
    """Drop rules with accuracy below ``min_accuracy``; rules with no accuracy are dropped too."""
    kept = {k: r for k, r in db.rules.items() if r.accuracy is not None and r.accuracy >= min_accuracy}
    return RuleDB(kept, dict(db.meta))


def match_rules(query_words: Iterable[str], db: RuleDB, index: Mapping[str, Sequence[tuple[str, float]]] | None = None):
    """fragment_id -> rule scores of every rule whose word occurs in the query."""
    idx = index if index is not None else word_index(db)
    out: dict[str, list[float]] = {}
    for w in sorted(set(query_words)):
        for fid, score in idx.get(w, ()):
            out.setdefault(fid, []).append(score)
    return out


def word_index(db: RuleDB) -> dict[str, list[tuple[str, float]]]:
    idx: dict[str, list[tuple[str, float]]] = {}
    for r in db.rules.values():
        idx.setdefault(r.word, []).append((r.fragment_id, r.rule_score))
    for v in idx.values():
        v.sort(key=lambda t: _frag_num(t[0]))
    return idx


def aggregate(scores: Sequence[float], method: str = "joint") -> float:
    if not scores:
        raise ValueError("aggregate needs at least one score")
    if method == "joint":
        prod = 1.0
        for r in scores:
            prod *= 1.0 - r
        return 1.0 - prod
    if method == "max":
        return float(max(scores))
    if method == "avg":
        return math.fsum(scores) / len(scores)
    raise ValueError(f"unknown aggregation method {method!r}; expected one of {METHODS}")


def predict_privileged(
    query_words: Iterable[str],
    db: RuleDB,
    method: str = "joint",
    threshold: float = 0.5,
    index=None,
) -> list[FragmentPrediction]:
    preds = []
    for fid, scores in match_rules(query_words, db, index).items():
        s = aggregate(scores, method)
        preds.append(FragmentPrediction(fid, tuple(scores), s, s >= threshold))
    preds.sort(key=lambda p: (-p.score, _frag_num(p.fragment_id)))
    return preds


# -- PWDB binary index ---------------------------------------------------------
#
# b"PWDB" | u32 version | u32 meta_len | meta JSON | u32 n_words, then per word
# (sorted): u16 key_len | key | u32 n_rules, and per rule: u16 fid_len | fid |
# f64 rule_score | f64 pred_score | f64 attr_score | f64 accuracy (NaN if unset)

_DB_MAGIC = b"PWDB"
_DB_VERSION = 1


def write_pwdb(path: str | Path, db: RuleDB) -> None:
    meta = json.dumps(db.meta, sort_keys=True).encode("utf-8")
    parts = [_DB_MAGIC, struct.pack("<II", _DB_VERSION, len(meta)), meta]
    by_word = db.by_word()
    parts.append(struct.pack("<I", len(by_word)))
    for w in sorted(by_word):
        kb = w.encode("utf-8")
        rules = sorted(by_word[w], key=lambda r: _frag_num(r.fragment_id))
        parts += [struct.pack("<H", len(kb)), kb, struct.pack("<I", len(rules))]
        for r in rules:
            fb = r.fragment_id.encode("utf-8")
            acc = math.nan if r.accuracy is None else r.accuracy
            parts += [struct.pack("<H", len(fb)), fb, struct.pack("<4d", r.rule_score, r.pred_score, r.attr_score, acc)]
    Path(path).write_bytes(b"".join(parts))


def read_pwdb(path: str | Path) -> RuleDB:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("truncated PWDB file")
        pos += n
        return data[pos - n : pos]

    if take(4) != _DB_MAGIC:
        raise FormatError("not a PWDB file")
    version, mlen = struct.unpack("<II", take(8))
    if version != _DB_VERSION:
        raise FormatError(f"unsupported PWDB version {version}")
    meta = json.loads(take(mlen).decode("utf-8"))
    rules: dict[tuple[str, str], RuleRecord] = {}
    (n_words,) = struct.unpack("<I", take(4))
    for _ in range(n_words):
        (klen,) = struct.unpack("<H", take(2))
        word = take(klen).decode("utf-8")
        (n_rules,) = struct.unpack("<I", take(4))
        for _ in range(n_rules):
            (flen,) = struct.unpack("<H", take(2))
            fid = take(flen).decode("utf-8")
            rs, ps, at, acc = struct.unpack("<4d", take(32))
            rules[(word, fid)] = RuleRecord(word, fid, ps, at, rs, None if math.isnan(acc) else acc)
    if pos != len(data):
        raise FormatError("trailing bytes in PWDB file")
    return RuleDB(dict(sorted(rules.items(), key=lambda kv: _pair_order(kv[0]))), meta)
