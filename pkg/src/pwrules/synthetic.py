"""Synthetic planted-rule dataset.

Proteins are concatenations of vocabulary words separated by short linkers;
their attention matrices have a strong block for every word, so segmentation
recovers the words. A designated word ``w*`` sits in half of the proteins, and
those proteins bind exactly the ligands containing a designated fragment
``f*`` (quinoline). Other proteins bind random ligands without ``f*`` and are
tested against some ``f*`` ligands as inactives, so ``f*`` is observed with
label 0 for them. A screening library with a 1:20 active:decoy ratio is
generated alongside.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .chemgraph import canonical_key, parse_smiles
from .formats import write_attention, write_embeddings

AMINO = "ACDEFGHIKLMNPQRSTVWY"
F_STAR = "c1ccc2ncccc2c1"
RINGS = ("c1ccccc1", "c1ccncc1", "c1ccsc1", "c1ccoc1", "C1CCCCC1", "C1CCNCC1", "c1cncnc1", "C1CCOC1")
LINKERS = ("C", "CC", "CCC", "C(C)", "CO")


@dataclass(frozen=True)
class SyntheticConfig:
    n_proteins: int = 60
    n_planted: int = 30
    vocab_size: int = 40
    words_per_protein: int = 5
    n_ligands: int = 200
    fstar_fraction: float = 0.15
    tested_per_protein: int = 30
    embed_dim: int = 16
    n_screen_actives: int = 20
    decoys_per_active: int = 20
    seed: int = 0


@dataclass
class SyntheticDataset:
    config: SyntheticConfig
    vocab: list[str]
    w_star: str
    f_star: str  # canonical key
    proteins: dict[str, str]
    words: dict[str, list[str]]  # protein id -> planted word keys, in sequence order
    attention: dict[str, np.ndarray]
    residue_embeddings: dict[str, np.ndarray]
    ligands: list[tuple[str, str]]  # (id, smiles)
    affinities: list[dict]
    query_protein: str
    screen_library: list[tuple[str, str]]
    screen_actives: list[str]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        (out / "attn").mkdir(parents=True, exist_ok=True)
        (out / "emb").mkdir(parents=True, exist_ok=True)
        with open(out / "proteins.jsonl", "w", encoding="utf-8") as fh:
            for pid, seq in self.proteins.items():
                fh.write(json.dumps({"protein_id": pid, "sequence": seq}) + "\n")
        for pid in self.proteins:
            write_attention(out / "attn" / f"{pid}.pwat", self.attention[pid])
            write_embeddings(out / "emb" / f"{pid}.pweb", self.residue_embeddings[pid])
        with open(out / "affinity.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.affinities:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        _write_tsv(out / "corpus.tsv", self.ligands)
        _write_tsv(out / "screen_library.tsv", self.screen_library)
        (out / "screen_actives.txt").write_text("".join(f"{i}\n" for i in self.screen_actives), encoding="utf-8")
        truth = {
            "w_star": self.w_star,
            "f_star": self.f_star,
            "query_protein": self.query_protein,
            "config": asdict(self.config),
        }
        (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_tsv(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mid, smi in rows:
            fh.write(f"{mid}\t{smi}\n")


def _vocab(rng: np.random.Generator, n: int) -> list[str]:
    words: set[str] = set()
    out = []
    while len(out) < n:
        length = int(rng.integers(5, 9))
        w = "".join(AMINO[i] for i in rng.integers(0, 20, length))
        if w not in words:
            words.add(w)
            out.append(w)
    return out


def _protein(rng, keys: list[str], table: np.ndarray) -> tuple[str, np.ndarray, np.ndarray]:
    """Sequence, attention and residue embeddings for words joined by 2-residue linkers."""
    seq_parts, groups, pos = [], [], 0
    for k, key in enumerate(keys):
        if k:
            link = "".join(AMINO[i] for i in rng.integers(0, 20, 2))
            seq_parts.append(link)
            pos += 2
        seq_parts.append(key)
        groups.append(range(pos, pos + len(key)))
        pos += len(key)
    seq = "".join(seq_parts)
    n = len(seq)
    attn = rng.random((n, n)) * 0.02
    for g in groups:
        lo, hi = g.start, g.stop
        attn[lo:hi, lo:hi] = 0.8 + 0.2 * rng.random((hi - lo, hi - lo))
    emb = table[[AMINO.index(c) for c in seq]] + 0.05 * rng.normal(size=(n, table.shape[1]))
    return seq, attn, emb


def _ligand(rng, with_fstar: bool) -> str:
    n_rings = int(rng.integers(2, 4))
    rings = [RINGS[i] for i in rng.integers(0, len(RINGS), n_rings)]
    if with_fstar:
        rings[int(rng.integers(0, n_rings))] = F_STAR
    parts = [rings[0]]
    for r in rings[1:]:
        parts.append(LINKERS[int(rng.integers(0, len(LINKERS)))])
        parts.append(r)
    return "".join(parts)


def _ligand_set(rng, n: int, fstar_fraction: float, seen: set[str]) -> list[tuple[str, bool]]:
    out = []
    n_f = int(round(fstar_fraction * n))
    flags = [True] * n_f + [False] * (n - n_f)
    for flag in flags:
        for _ in range(1000):
            smi = canonical_key(parse_smiles(_ligand(rng, flag)))
            if smi not in seen:
                seen.add(smi)
                out.append((smi, flag))
                break
        else:
            raise RuntimeError("could not generate enough distinct ligands")
    return out


def generate(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticDataset:
    rng = np.random.default_rng(cfg.seed)
    vocab = _vocab(rng, cfg.vocab_size)
    w_star = vocab[0]
    others = vocab[1:]
    table = rng.normal(size=(20, cfg.embed_dim))
    planted = set(rng.permutation(cfg.n_proteins)[: cfg.n_planted].tolist())
    proteins, words, attention, embs = {}, {}, {}, {}

    def add_protein(pid: str, with_star: bool) -> None:
        keys = [others[i] for i in rng.permutation(len(others))[: cfg.words_per_protein]]
        if with_star:
            keys.insert(int(rng.integers(0, len(keys) + 1)), w_star)
        seq, attn, emb = _protein(rng, keys, table)
        proteins[pid], words[pid], attention[pid], embs[pid] = seq, keys, attn, emb

    for i in range(cfg.n_proteins):
        add_protein(f"P{i + 1:03d}", i in planted)
    query = "Q001"
    add_protein(query, True)

    seen: set[str] = set()
    ligs = _ligand_set(rng, cfg.n_ligands, cfg.fstar_fraction, seen)
    ligands = [(f"L{i + 1:04d}", smi) for i, (smi, _) in enumerate(ligs)]
    with_f = [i for i, (_, f) in enumerate(ligs) if f]
    without_f = [i for i, (_, f) in enumerate(ligs) if not f]

    affinities = []
    n_test = cfg.tested_per_protein
    for i in range(cfg.n_proteins):
        pid = f"P{i + 1:03d}"
        if i in planted:
            act = rng.choice(with_f, size=n_test // 3, replace=False)
            inact = rng.choice(without_f, size=n_test - len(act), replace=False)
        else:
            act = rng.choice(without_f, size=n_test // 4, replace=False)
            rest = [j for j in without_f if j not in set(act.tolist())]
            inact = np.concatenate([
                rng.choice(with_f, size=n_test // 3, replace=False),
                rng.choice(rest, size=n_test - n_test // 4 - n_test // 3, replace=False),
            ])
        for j in sorted(act.tolist()):
            affinities.append(_aff(pid, ligs[j][0], float(rng.uniform(10, 1000))))
        for j in sorted(inact.tolist()):
            affinities.append(_aff(pid, ligs[j][0], float(rng.uniform(20_000, 100_000))))

    screen = _ligand_set(rng, cfg.n_screen_actives * (1 + cfg.decoys_per_active), 1 / (1 + cfg.decoys_per_active), seen)
    lib, actives = [], []
    n_a = n_d = 0
    for smi, flag in screen:
        if flag:
            n_a += 1
            mid = f"act_{n_a:03d}"
            actives.append(mid)
        else:
            n_d += 1
            mid = f"dec_{n_d:04d}"
        lib.append((mid, smi))
    return SyntheticDataset(
        cfg, vocab, w_star, canonical_key(parse_smiles(F_STAR)), proteins, words, attention, embs,
        ligands, affinities, query, lib, actives,
    )


def _aff(pid: str, smi: str, value: float) -> dict:
    return {"protein_id": pid, "smiles": smi, "type": "Ki", "value_nm": round(value, 3), "source": "bindingdb"}
