"""Geometric validation of rules against protein-ligand complexes.

Word occurrences are located as contiguous windows of a chain's one-letter
sequence; fragment occurrences come from substructure search on the ligand
graph. A pair's distance is the minimum, over occurrence pairs, of the
Euclidean distance between the word's C-alpha centroid and the fragment's
heavy-atom centroid.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chemgraph import Atom, Molecule, find_substructure, parse_smiles
from .errors import EmptySet, ParseError

THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C", "GLN": "Q", "GLU": "E",
    "GLY": "G", "HIS": "H", "ILE": "I", "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F",
    "PRO": "P", "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}


@dataclass(frozen=True)
class Residue:
    number: int
    icode: str
    code: str
    ca: tuple[float, float, float]

    @property
    def label(self) -> str:
        return f"{self.number}{self.icode}".strip()


@dataclass(frozen=True)
class ChainModel:
    chain_id: str
    residues: tuple[Residue, ...]

    @property
    def sequence(self) -> str:
        return "".join(r.code for r in self.residues)

    def coords(self, idx: Iterable[int]) -> np.ndarray:
        return np.array([self.residues[i].ca for i in idx], dtype=np.float64)


@dataclass(frozen=True)
class LigandModel:
    mol: Molecule
    coords: np.ndarray  # (n_atoms, 3)


@dataclass(frozen=True)
class PairDistance:
    word: str
    fragment_id: str
    distance: float
    source: str  # "rule" or "random"
    complex_id: str = ""


def _float(text: str, lineno: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text.strip()!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite {what}", lineno)
    return v


def parse_pdb(text: str) -> list[ChainModel]:
    """C-alpha chains of the first model; altloc blank or 'A' only."""
    chains: dict[str, list[Residue]] = {}
    seen: set[tuple[str, int, str]] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        rec = line[:6]
        if rec.startswith("ENDMDL"):
            break
        if rec != "ATOM  ":
            continue
        if len(line) < 54:
            raise ParseError("ATOM record shorter than 54 columns", lineno)
        if line[12:16].strip() != "CA" or line[16] not in " A":
            continue
        chain = line[21]
        try:
            resseq = int(line[22:26])
        except ValueError:
            raise ParseError(f"bad residue number {line[22:26]!r}", lineno) from None
        icode = line[26].strip()
        key = (chain, resseq, icode)
        if key in seen:
            continue
        seen.add(key)
        xyz = tuple(_float(line[a:b], lineno, "coordinate") for a, b in ((30, 38), (38, 46), (46, 54)))
        code = THREE_TO_ONE.get(line[17:20].strip().upper(), "X")
        chains.setdefault(chain, []).append(Residue(resseq, icode, code, xyz))
    return [ChainModel(c, tuple(r)) for c, r in chains.items()]


_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}


def parse_mol(text: str) -> LigandModel:
    """V2000 connection table; hydrogens are removed and folded into H counts."""
    lines = text.splitlines()
    if len(lines) < 4:
        raise ParseError("molfile shorter than header + counts line", len(lines))
    counts = lines[3]
    if "V3000" in counts:
        raise ParseError("V3000 molfiles are not supported", 4)
    try:
        n_atoms, n_bonds = int(counts[0:3]), int(counts[3:6])
    except ValueError:
        raise ParseError(f"bad counts line {counts!r}", 4) from None
    atom_lines = lines[4 : 4 + n_atoms]
    bond_lines = lines[4 + n_atoms : 4 + n_atoms + n_bonds]
    if len(atom_lines) != n_atoms or len(bond_lines) != n_bonds:
        raise ParseError("counts line does not match atom/bond blocks", 4)
    symbols, charges, xyz = [], [], []
    for k, line in enumerate(atom_lines):
        lineno = 5 + k
        if len(line) < 34:
            raise ParseError("atom line too short", lineno)
        xyz.append([_float(line[a:b], lineno, "coordinate") for a, b in ((0, 10), (10, 20), (20, 30))])
        sym = line[31:34].strip()
        if not sym or not sym[0].isalpha():
            raise ParseError(f"bad element {sym!r}", lineno)
        symbols.append(sym)
        code = line[36:39].strip()
        charges.append(_CHARGE_CODES.get(int(code), 0) if code.isdigit() else 0)
    raw_bonds = []
    for k, line in enumerate(bond_lines):
        lineno = 5 + n_atoms + k
        try:
            i, j, order = int(line[0:3]), int(line[3:6]), int(line[6:9])
        except ValueError:
            raise ParseError(f"bad bond line {line!r}", lineno) from None
        if not (1 <= i <= n_atoms and 1 <= j <= n_atoms) or i == j:
            raise ParseError("bond references a missing atom", lineno)
        if order not in (1, 2, 3, 4):
            raise ParseError(f"unsupported bond order {order}", lineno)
        raw_bonds.append((i - 1, j - 1, order))
    for k, line in enumerate(lines[4 + n_atoms + n_bonds :], 5 + n_atoms + n_bonds):
        if line.startswith("M  END"):
            break
        if line.startswith("M  CHG"):
            fields = line.split()
            try:
                pairs = [int(x) for x in fields[3:]]
                for a, c in zip(pairs[::2], pairs[1::2]):
                    charges[a - 1] = c
            except (ValueError, IndexError):
                raise ParseError("bad M  CHG line", k) from None
    heavy = [i for i, s in enumerate(symbols) if s != "H"]
    remap = {old: new for new, old in enumerate(heavy)}
    hcount = [0] * len(heavy)
    bonds = []
    for i, j, order in raw_bonds:
        if i in remap and j in remap:
            a, b = sorted((remap[i], remap[j]))
            bonds.append((a, b, order))
        elif i in remap:
            hcount[remap[i]] += 1
        elif j in remap:
            hcount[remap[j]] += 1
    arom = {a for i, j, o in bonds if o == 4 for a in (i, j)}
    atoms = tuple(
        Atom(symbols[old], charges[old], new in arom, hcount[new]) for new, old in enumerate(heavy)
    )
    mol = Molecule(atoms, tuple(sorted(bonds)))
    return LigandModel(mol, np.array([xyz[i] for i in heavy], dtype=np.float64).reshape(-1, 3))


def _skeleton(m: Molecule) -> Molecule:
    """Element-only graph (no aromatic flags, all single bonds)."""
    return Molecule(
        tuple(Atom(a.element, 0, False, 0) for a in m.atoms),
        tuple((i, j, 1) for i, j, _ in m.bonds),
    )


def map_smiles_to_ligand(smiles_mol: Molecule, ligand: LigandModel) -> LigandModel:
    """Re-index the ligand's coordinates onto the atoms of a SMILES-derived graph.

    Only elements and connectivity are matched, so Kekule molfiles line up with
    aromatic SMILES. Raises ValueError when the graphs differ.
    """
    if smiles_mol.heavy_atom_count() != ligand.mol.heavy_atom_count() or len(smiles_mol.bonds) != len(ligand.mol.bonds):
        raise ValueError("SMILES and molfile describe different molecules")
    hits = find_substructure(_skeleton(smiles_mol), _skeleton(ligand.mol), max_hits=1_000_000, match_bonds=False)
    if not hits:
        raise ValueError("SMILES does not map onto the molfile graph")
    order = list(hits[0].target_atoms)
    return LigandModel(smiles_mol, ligand.coords[order])


def locate_word(key: str, chain: ChainModel) -> list[tuple[int, ...]]:
    """Residue-index windows where ``key`` occurs contiguously (overlaps allowed)."""
    seq = chain.sequence
    n = len(key)
    if n == 0:
        return []
    return [tuple(range(s, s + n)) for s in range(len(seq) - n + 1) if seq[s : s + n] == key]


def centroid(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if p.shape[0] == 0:
        raise EmptySet("centroid of an empty point set")
    return p.mean(axis=0)


def pair_distance(
    windows: Sequence[Sequence[int]],
    embeddings: Sequence[Sequence[int]],
    chain: ChainModel,
    ligand: LigandModel,
) -> float:
    """Minimum centroid distance over word windows x fragment embeddings."""
    if not windows or not embeddings:
        raise EmptySet("word or fragment has no occurrence")
    wc = np.array([centroid(chain.coords(w)) for w in windows])
    fc = np.array([centroid(ligand.coords[list(e)]) for e in embeddings])
    d = np.sqrt(((wc[:, None, :] - fc[None, :, :]) ** 2).sum(-1))
    return float(d.min())


def random_control(pool: Sequence[PairDistance], n: int, seed: int = 0) -> list[PairDistance]:
    """``n`` uniform draws (with replacement) from co-occurring word/fragment pairs."""
    if not pool:
        raise EmptySet("empty control pool")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(pool), size=n)
    return [PairDistance(pool[i].word, pool[i].fragment_id, pool[i].distance, "random", pool[i].complex_id) for i in picks]


# -- Mann-Whitney U ---------------------------------------------------------------


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    sv = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_u_distribution(ranks: np.ndarray, n_a: int) -> dict[int, int]:
    """Counts of doubled rank sums over all size-``n_a`` subsets of ``ranks``.

    Dynamic programming over items; equivalent to enumerating every labelling.
    """
    r2 = [int(round(2 * r)) for r in ranks]
    table: list[dict[int, int]] = [dict() for _ in range(n_a + 1)]
    table[0][0] = 1
    for r in r2:
        for k in range(min(n_a, len(r2)) - 1, -1, -1):
            src = table[k]
            if not src:
                continue
            dst = table[k + 1]
            for s, c in src.items():
                dst[s + r] = dst.get(s + r, 0) + c
    return table[n_a]


@dataclass(frozen=True)
class MWUResult:
    u_a: float
    u_b: float
    p_two_sided: float
    p_less: float  # alternative: sample_a tends to be smaller than sample_b
    method: str


def mann_whitney(sample_a, sample_b, method: str = "auto") -> MWUResult:
    """Mann-Whitney U with midranks for ties.

    ``method='auto'`` uses the exact permutation distribution when either sample
    has fewer than 8 values, and the tie-corrected normal approximation with
    continuity correction otherwise.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    n_a, n_b = a.size, b.size
    if n_a == 0 or n_b == 0:
        raise EmptySet("Mann-Whitney needs two non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r_a = float(ranks[:n_a].sum())
    u_a = r_a - n_a * (n_a + 1) / 2.0
    u_b = n_a * n_b - u_a
    mu = n_a * n_b / 2.0
    if method == "auto":
        method = "exact" if min(n_a, n_b) < 8 else "normal"
    if method == "exact":
        dist = _exact_u_distribution(ranks, n_a)
        total = sum(dist.values())
        offset2 = n_a * (n_a + 1)  # doubled rank-sum minimum
        obs2 = int(round(2 * u_a))
        dev = abs(obs2 - 2 * mu)
        two = sum(c for s, c in dist.items() if abs((s - offset2) - 2 * mu) >= dev - 1e-9) / total
        less = sum(c for s, c in dist.items() if (s - offset2) <= obs2) / total
        return MWUResult(u_a, u_b, min(1.0, two), less, "exact")
    if method != "normal":
        raise ValueError(f"unknown method {method!r}")
    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3) - tie_counts).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return MWUResult(u_a, u_b, 1.0, 1.0, "normal")
    sd = math.sqrt(var)
    z = (abs(u_a - mu) - 0.5) / sd
    two = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0))) if z > 0 else 1.0
    z_less = (u_a - mu + 0.5) / sd
    less = 0.5 * math.erfc(-z_less / math.sqrt(2.0))
    return MWUResult(u_a, u_b, two, min(1.0, less), "normal")


def mann_whitney_u(sample_a, sample_b, method: str = "auto") -> tuple[float, float]:
    """``(U_A, two-sided p)``."""
    r = mann_whitney(sample_a, sample_b, method)
    return r.u_a, r.p_two_sided


# -- manifest-driven run -------------------------------------------------------------


@dataclass(frozen=True)
class ComplexEntry:
    complex_id: str
    pdb_path: Path
    mol_path: Path
    smiles: str


def read_manifest(path: str | Path) -> list[ComplexEntry]:
    base = Path(path).parent
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 4:
                raise ParseError(f"manifest row needs 4 columns, got {len(row)}", lineno)
            cid, pdb, mol, smi = row
            out.append(ComplexEntry(cid, base / pdb, base / mol, smi))
    return out


def load_complex(entry: ComplexEntry) -> tuple[list[ChainModel], LigandModel]:
    chains = parse_pdb(entry.pdb_path.read_text(encoding="utf-8"))
    lig = parse_mol(entry.mol_path.read_text(encoding="utf-8"))
    return chains, map_smiles_to_ligand(parse_smiles(entry.smiles), lig)


def complex_distances(
    complex_id: str,
    chains: Sequence[ChainModel],
    ligand: LigandModel,
    words: Iterable[str],
    fragments: dict[str, Molecule],
    pairs: Iterable[tuple[str, str]] | None = None,
    source: str = "rule",
) -> list[PairDistance]:
    """Distances for every word x fragment pair present in this complex.

    When ``pairs`` is given only those combinations are measured.
    """
    word_hits: dict[str, list[tuple[ChainModel, list[tuple[int, ...]]]]] = {}
    for w in sorted(set(words)):
        occ = [(c, wins) for c in chains if (wins := locate_word(w, c))]
        if occ:
            word_hits[w] = occ
    frag_hits = {}
    for fid, fmol in fragments.items():
        emb = [m.target_atoms for m in find_substructure(fmol, ligand.mol)]
        if emb:
            frag_hits[fid] = emb
    wanted = None if pairs is None else set(pairs)
    out = []
    for w, occ in word_hits.items():
        for fid, emb in frag_hits.items():
            if wanted is not None and (w, fid) not in wanted:
                continue
            d = min(pair_distance(wins, emb, c, ligand) for c, wins in occ)
            out.append(PairDistance(w, fid, d, source, complex_id))
    return out


def summarize(rule: Sequence[PairDistance], control: Sequence[PairDistance], within: float = 15.0) -> dict:
    rd = np.array([p.distance for p in rule])
    cd = np.array([p.distance for p in control])
    report = {
        "n_rule": int(rd.size),
        "n_random": int(cd.size),
        "median_rule": float(np.median(rd)) if rd.size else None,
        "median_random": float(np.median(cd)) if cd.size else None,
        f"frac_within_{within:g}A_rule": float((rd <= within).mean()) if rd.size else None,
        f"frac_within_{within:g}A_random": float((cd <= within).mean()) if cd.size else None,
    }
    if rd.size and cd.size:
        r = mann_whitney(rd, cd)
        report.update({"u": r.u_a, "p_two_sided": r.p_two_sided, "p_one_sided_less": r.p_less, "test_method": r.method})
    return report
