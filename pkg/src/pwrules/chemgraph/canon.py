"""Canonical SMILES keys by iterative neighbourhood refinement.

Atom classes start from local invariants and are refined with the sorted
multiset of (bond order, neighbour class) until stable. Remaining ties are
broken by trying each atom of the first tied class, refining again, and
keeping the lexicographically smallest output string. A leaf budget bounds
the search for highly symmetric graphs.
"""

from __future__ import annotations

from .molecule import Molecule
from .smiles import write_smiles

LEAF_BUDGET = 256


def _initial_invariants(mol: Molecule) -> list[tuple]:
    ring = mol.ring_atoms
    return [
        (a.element, a.aromatic, a.charge, a.hcount, mol.degree(i), i in ring)
        for i, a in enumerate(mol.atoms)
    ]


def _to_ranks(keys: list) -> list[int]:
    distinct = sorted(set(keys))
    pos = {k: r for r, k in enumerate(distinct)}
    return [pos[k] for k in keys]


def refine(mol: Molecule, ranks: list[int]) -> list[int]:
    """Refine ``ranks`` until the number of classes stops growing."""
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((o, ranks[j]) for j, o in mol.neighbors[i])))
            for i in range(len(ranks))
        ]
        new = _to_ranks(keys)
        m = len(set(new))
        if m == n_classes:
            return new
        ranks, n_classes = new, m


def canonical_ranks(mol: Molecule) -> list[list[int]]:
    """All fully-discrete rankings reachable by tie-breaking (within budget)."""
    start = refine(mol, _to_ranks(_initial_invariants(mol)))
    leaves: list[list[int]] = []
    stack = [start]
    while stack:
        ranks = stack.pop()
        if len(set(ranks)) == len(ranks):
            leaves.append(ranks)
            if len(leaves) >= LEAF_BUDGET:
                break
            continue
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        members = [i for i, r in enumerate(ranks) if r == tied]
        branches = []
        for chosen in members:
            # the chosen atom keeps the lower rank, the rest of the class moves up
            keys = [(r, 0 if i == chosen else 1) if r == tied else (r, 0) for i, r in enumerate(ranks)]
            branches.append(refine(mol, _to_ranks(keys)))
        stack.extend(reversed(branches))
    return leaves


def canonical_smiles(mol: Molecule) -> str:
    if len(mol.atoms) == 0:
        return ""
    comps = mol.components()
    if len(comps) > 1:
        parts = sorted(canonical_smiles(mol.subgraph(c)) for c in comps)
        return ".".join(parts)
    return min(write_smiles(mol, ranks) for ranks in canonical_ranks(mol))


def canonical_key(mol: Molecule) -> str:
    """Deterministic string equal for isomorphic molecules."""
    return canonical_smiles(mol)
