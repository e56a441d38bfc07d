"""Substructure search (subgraph monomorphism) over :class:`Molecule` graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from .._kernels.pykernels import HitLimitExceeded
from .molecule import Molecule

DEFAULT_MAX_HITS = 10_000

_ELEMENT_CODES: dict[str, int] = {}


def _code(element: str) -> int:
    if element == "*":
        return -1
    if element not in _ELEMENT_CODES:
        _ELEMENT_CODES[element] = len(_ELEMENT_CODES) + 1
    return _ELEMENT_CODES[element]


@dataclass(frozen=True, slots=True)
class AtomMapping:
    """Pattern atom ``i`` maps to target atom ``pairs[i][1]``."""

    pairs: tuple[tuple[int, int], ...]

    @property
    def target_atoms(self) -> tuple[int, ...]:
        return tuple(t for _, t in self.pairs)

    def __getitem__(self, pattern_atom: int) -> int:
        return self.pairs[pattern_atom][1]


class _TargetArrays:
    __slots__ = ("elem", "arom", "deg", "ptr", "idx", "bond")

    def __init__(self, mol: Molecule):
        n = len(mol.atoms)
        self.elem = np.array([_code(a.element) for a in mol.atoms], dtype=np.int32)
        self.arom = np.array([int(a.aromatic) for a in mol.atoms], dtype=np.int32)
        self.deg = np.array([mol.degree(i) for i in range(n)], dtype=np.int32)
        ptr = [0]
        idx: list[int] = []
        for i in range(n):
            idx.extend(j for j, _ in mol.neighbors[i])
            ptr.append(len(idx))
        self.ptr = np.array(ptr, dtype=np.int32)
        self.idx = np.array(idx, dtype=np.int32)
        bond = np.zeros((n, n), dtype=np.int32)
        for i, j, o in mol.bonds:
            bond[i, j] = bond[j, i] = o
        self.bond = bond.ravel()


class _PatternArrays:
    __slots__ = ("elem", "arom", "deg", "order", "parent", "back_ptr", "back_atom", "back_order")

    def __init__(self, mol: Molecule):
        n = len(mol.atoms)
        self.elem = np.array([_code(a.element) for a in mol.atoms], dtype=np.int32)
        self.arom = np.array([int(a.aromatic) for a in mol.atoms], dtype=np.int32)
        self.deg = np.array([mol.degree(i) for i in range(n)], dtype=np.int32)
        # BFS order per component, rarest/most-connected atoms first
        order: list[int] = []
        parent: list[int] = []
        depth_of: dict[int, int] = {}
        remaining = sorted(range(n), key=lambda i: (mol.atoms[i].element == "C", -mol.degree(i), i))
        for root in remaining:
            if root in depth_of:
                continue
            depth_of[root] = len(order)
            order.append(root)
            parent.append(-1)
            head = len(order) - 1
            while head < len(order):
                a = order[head]
                head += 1
                for b, _ in mol.neighbors[a]:
                    if b not in depth_of:
                        depth_of[b] = len(order)
                        order.append(b)
                        parent.append(depth_of[a])
        back_ptr = [0]
        back_atom: list[int] = []
        back_order: list[int] = []
        for k, a in enumerate(order):
            for b, o in mol.neighbors[a]:
                if depth_of[b] < k:
                    back_atom.append(depth_of[b])
                    wildcard = mol.atoms[a].is_wildcard or mol.atoms[b].is_wildcard
                    back_order.append(0 if wildcard else o)
            back_ptr.append(len(back_atom))
        self.order = np.array(order, dtype=np.int32)
        self.parent = np.array(parent, dtype=np.int32)
        self.back_ptr = np.array(back_ptr, dtype=np.int32)
        self.back_atom = np.array(back_atom, dtype=np.int32)
        self.back_order = np.array(back_order, dtype=np.int32)


def _arrays(mol: Molecule, attr: str, cls):
    cached = mol.__dict__.get(attr)
    if cached is None:
        cached = cls(mol)
        mol.__dict__[attr] = cached
    return cached


def _run(pattern: Molecule, target: Molecule, max_hits: int, first_only: bool, match_bonds: bool, kernel=None):
    p = _arrays(pattern, "_pattern_arrays", _PatternArrays)
    t = _arrays(target, "_target_arrays", _TargetArrays)
    fn = kernel or _kernels.match_embeddings
    return fn(
        p.elem, p.arom, p.deg, p.order, p.parent, p.back_ptr, p.back_atom, p.back_order,
        t.elem, t.arom, t.deg, t.ptr, t.idx, t.bond,
        match_bonds, max_hits, first_only,
    )


def find_substructure(
    pattern: Molecule,
    target: Molecule,
    max_hits: int = DEFAULT_MAX_HITS,
    *,
    match_bonds: bool = True,
    kernel=None,
) -> list[AtomMapping]:
    """All embeddings of ``pattern`` in ``target``, one per distinct target atom set.

    Atoms match on element and aromatic flag; ``*`` pattern atoms match any
    atom. Hydrogen counts and charges are not compared. For each atom set the
    lexicographically smallest mapping is kept, and hits are returned sorted
    by that mapping.

    Raises:
        HitLimitExceeded: more than ``max_hits`` distinct atom sets.
    """
    hits = _run(pattern, target, max_hits, False, match_bonds, kernel)
    return [AtomMapping(tuple(enumerate(m))) for m in sorted(hits.values())]


def has_substructure(pattern: Molecule, target: Molecule, *, match_bonds: bool = True) -> bool:
    return bool(_run(pattern, target, 1, True, match_bonds))


__all__ = ["AtomMapping", "HitLimitExceeded", "find_substructure", "has_substructure", "DEFAULT_MAX_HITS"]
