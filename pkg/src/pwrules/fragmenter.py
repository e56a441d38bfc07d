"""Fragment enumeration, the filtered fragment library, and library coverage.

Molecules are cut at acyclic single bonds between non-terminal heavy atoms
(amide C-N kept) into blocks; fragments are connected unions of up to
``max_blocks`` adjacent blocks, hydrogen-capped and canonicalized.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

from .chemgraph import Molecule, canonical_key, has_substructure, parse_smiles
from .chemgraph.descriptors import descriptors, is_amide_cn, rotatable_bonds, rule_of_three
from .errors import CombinatorialLimit, EmptyLibrary, EmptyProbe

MAX_CANDIDATE_UNIONS = 100_000


@dataclass(frozen=True)
class CutRuleSet:
    """Which bonds may be cut. Subclass and override :meth:`cuttable` for other schemes."""

    keep_amide: bool = True

    def cuttable(self, m: Molecule, bond: int) -> bool:
        i, j, order = m.bonds[bond]
        if order != 1 or bond in m.ring_bonds:
            return False
        if m.degree(i) < 2 or m.degree(j) < 2:
            return False
        if self.keep_amide and is_amide_cn(m, i, j):
            return False
        return True


DEFAULT_RULES = CutRuleSet()


def identify_cut_bonds(m: Molecule, rules: CutRuleSet = DEFAULT_RULES) -> frozenset[int]:
    return frozenset(k for k in range(len(m.bonds)) if rules.cuttable(m, k))


def _blocks(m: Molecule, cuts: frozenset[int]) -> tuple[list[frozenset[int]], dict[int, set[int]]]:
    """Connected components after deleting ``cuts`` and the block adjacency."""
    adj: list[list[int]] = [[] for _ in m.atoms]
    for k, (i, j, _) in enumerate(m.bonds):
        if k not in cuts:
            adj[i].append(j)
            adj[j].append(i)
    block_of = [-1] * len(m.atoms)
    blocks: list[frozenset[int]] = []
    for start in range(len(m.atoms)):
        if block_of[start] != -1:
            continue
        stack, members = [start], []
        block_of[start] = len(blocks)
        while stack:
            a = stack.pop()
            members.append(a)
            for b in adj[a]:
                if block_of[b] == -1:
                    block_of[b] = len(blocks)
                    stack.append(b)
        blocks.append(frozenset(members))
    block_adj: dict[int, set[int]] = {b: set() for b in range(len(blocks))}
    for k in cuts:
        i, j, _ = m.bonds[k]
        block_adj[block_of[i]].add(block_of[j])
        block_adj[block_of[j]].add(block_of[i])
    return blocks, block_adj


def _connected_unions(block_adj: dict[int, set[int]], max_blocks: int) -> list[frozenset[int]]:
    """Connected block subsets of size <= max_blocks (ESU-style, each emitted once)."""
    out: list[frozenset[int]] = []

    def grow(sub: frozenset[int], ext: set[int], root: int) -> None:
        out.append(sub)
        if len(out) > MAX_CANDIDATE_UNIONS:
            raise CombinatorialLimit(f"more than {MAX_CANDIDATE_UNIONS} block unions")
        if len(sub) == max_blocks:
            return
        ext = set(ext)
        while ext:
            w = min(ext)
            ext.discard(w)
            new_ext = ext | {u for u in block_adj[w] if u > root and u not in sub and not _touches(u, sub, block_adj)}
            grow(sub | {w}, new_ext, root)

    for root in sorted(block_adj):
        grow(frozenset({root}), {u for u in block_adj[root] if u > root}, root)
    return out


def _touches(u: int, sub: frozenset[int], block_adj: dict[int, set[int]]) -> bool:
    return any(v in sub for v in block_adj[u])


def fragment_molecule(m: Molecule, atoms: Iterable[int]) -> Molecule:
    """Induced subgraph on ``atoms`` with every broken bond capped by hydrogen."""
    atoms = frozenset(atoms)
    extra: dict[int, int] = {}
    for i, j, order in m.bonds:
        if (i in atoms) != (j in atoms):
            inside = i if i in atoms else j
            extra[inside] = extra.get(inside, 0) + order
    return m.subgraph(atoms, extra)


def enumerate_fragment_atoms(
    m: Molecule, cuts: frozenset[int], max_blocks: int = 3, max_heavy: int = 25
) -> list[frozenset[int]]:
    """Atom sets of every admissible block union."""
    blocks, block_adj = _blocks(m, cuts)
    sets = []
    for union in _connected_unions(block_adj, max_blocks):
        atoms = frozenset().union(*(blocks[b] for b in union))
        if sum(1 for a in atoms if m.atoms[a].element != "*") <= max_heavy:
            sets.append(atoms)
    return sets


def enumerate_fragments(
    m: Molecule, cuts: frozenset[int] | None = None, max_blocks: int = 3, max_heavy: int = 25
) -> list[str]:
    """Canonical keys of the hydrogen-capped block unions of ``m`` (sorted, unique)."""
    if cuts is None:
        cuts = identify_cut_bonds(m)
    keys = {canonical_key(fragment_molecule(m, s)) for s in enumerate_fragment_atoms(m, cuts, max_blocks, max_heavy)}
    return sorted(keys)


@dataclass(frozen=True)
class RedundancyFilter:
    min_heavy: int = 3
    max_rot_per_heavy: float = 1 / 3  # acyclic fragments only
    rule_of_three: bool = False

    def keep(self, frag: Molecule) -> bool:
        heavy = frag.heavy_atom_count()
        if heavy < self.min_heavy:
            return False
        if not frag.ring_atoms and rotatable_bonds(frag) > heavy * self.max_rot_per_heavy:
            return False
        if self.rule_of_three and not rule_of_three(descriptors(frag)):
            return False
        return True


@dataclass(frozen=True)
class Fragment:
    fragment_id: str
    key: str
    heavy_atoms: int
    count: int
    freq: float

    @cached_property
    def mol(self) -> Molecule:
        return parse_smiles(self.key)


@dataclass
class FragmentLibrary:
    fragments: dict[str, Fragment]
    corpus_size: int
    filter_config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments.values())

    def __getitem__(self, fragment_id: str) -> Fragment:
        return self.fragments[fragment_id]

    def __contains__(self, fragment_id: str) -> bool:
        return fragment_id in self.fragments

    @cached_property
    def by_key(self) -> dict[str, Fragment]:
        return {f.key: f for f in self.fragments.values()}

    def ids(self) -> list[str]:
        return list(self.fragments)

    def write_jsonl(self, path: str | Path, meta: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            head = {"corpus_size": self.corpus_size, "filter_config": self.filter_config}
            if meta:
                head.update(meta)
            fh.write(json.dumps({"_meta": head}, sort_keys=True) + "\n")
            for f in self.fragments.values():
                rec = {"fragment_id": f.fragment_id, "smiles": f.key, "count": f.count, "freq": f.freq}
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> FragmentLibrary:
        fragments: dict[str, Fragment] = {}
        corpus_size = None
        config: dict = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "_meta" in rec:
                    corpus_size = rec["_meta"].get("corpus_size")
                    config = rec["_meta"].get("filter_config", {})
                    continue
                key = rec["smiles"]
                frag = Fragment(
                    rec["fragment_id"], key, parse_smiles(key).heavy_atom_count(), int(rec["count"]), float(rec["freq"])
                )
                fragments[frag.fragment_id] = frag
        if corpus_size is None:
            # recover N from any record: freq = count / N
            f = next(iter(fragments.values()), None)
            corpus_size = round(f.count / f.freq) if f and f.freq > 0 else 0
        return cls(fragments, corpus_size, config)


def _as_molecule(x) -> Molecule:
    return x if isinstance(x, Molecule) else parse_smiles(x)


def molecule_fragment_keys(
    m: Molecule, rules: CutRuleSet = DEFAULT_RULES, max_blocks: int = 3, max_heavy: int = 25
) -> dict[str, Molecule]:
    """Unique fragment key -> capped fragment graph for one molecule."""
    cuts = identify_cut_bonds(m, rules)
    out: dict[str, Molecule] = {}
    for atoms in enumerate_fragment_atoms(m, cuts, max_blocks, max_heavy):
        frag = fragment_molecule(m, atoms)
        out.setdefault(canonical_key(frag), frag)
    return out


def build_library(
    corpus: Iterable,
    min_freq: float = 0.001,
    redundancy: RedundancyFilter | None = None,
    *,
    rules: CutRuleSet = DEFAULT_RULES,
    max_blocks: int = 3,
    max_heavy: int = 25,
) -> FragmentLibrary:
    """Count fragments once per molecule, then drop rare and redundant ones.

    Ids are ``frag_1..frag_N`` by descending count (ties by key).
    """
    redundancy = redundancy or RedundancyFilter()
    counts: Counter[str] = Counter()
    graphs: dict[str, Molecule] = {}
    n = 0
    for item in corpus:
        m = _as_molecule(item)
        n += 1
        per_mol = molecule_fragment_keys(m, rules, max_blocks, max_heavy)
        counts.update(per_mol.keys())
        for k, g in per_mol.items():
            graphs.setdefault(k, g)
    if n == 0:
        raise EmptyLibrary("empty corpus")
    kept = [
        (k, c)
        for k, c in counts.items()
        if c / n >= min_freq and redundancy.keep(graphs[k])
    ]
    if not kept:
        raise EmptyLibrary("no fragment survived the frequency and redundancy filters")
    kept.sort(key=lambda kc: (-kc[1], kc[0]))
    fragments = {}
    for rank, (k, c) in enumerate(kept, 1):
        fid = f"frag_{rank}"
        fragments[fid] = Fragment(fid, k, graphs[k].heavy_atom_count(), c, c / n)
    config = {
        "min_freq": min_freq,
        "max_blocks": max_blocks,
        "max_heavy": max_heavy,
        "keep_amide": rules.keep_amide,
        **{f"redundancy.{k}": v for k, v in asdict(redundancy).items()},
    }
    return FragmentLibrary(fragments, n, config)


def coverage(lib: FragmentLibrary, probe: Iterable) -> float:
    """Fraction of ``probe`` molecules containing at least one library fragment."""
    if len(lib) == 0:
        raise EmptyLibrary("coverage needs a non-empty library")
    total = hit = 0
    patterns = [f.mol for f in lib]
    for item in probe:
        m = _as_molecule(item)
        total += 1
        if any(has_substructure(p, m) for p in patterns):
            hit += 1
    if total == 0:
        raise EmptyProbe("probe set is empty")
    return hit / total


def fragments_in(lib: FragmentLibrary, m: Molecule) -> list[str]:
    """Ids of library fragments that are substructures of ``m``."""
    return [f.fragment_id for f in lib if has_substructure(f.mol, m)]
