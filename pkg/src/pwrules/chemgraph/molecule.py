"""Hydrogen-suppressed molecular graph shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

AROMATIC = 4  # bond order code for aromatic bonds (same code as V2000)

# Standard atomic weights, g/mol.
ATOMIC_MASS = {
    "H": 1.008,
    "B": 10.81,
    "C": 12.011,
    "N": 14.007,
    "O": 15.999,
    "F": 18.998,
    "Na": 22.990,
    "Mg": 24.305,
    "Si": 28.085,
    "P": 30.974,
    "S": 32.06,
    "Cl": 35.45,
    "K": 39.098,
    "Ca": 40.078,
    "Fe": 55.845,
    "Zn": 65.38,
    "Se": 78.971,
    "Br": 79.904,
    "I": 126.904,
    "*": 0.0,
}


class ChemError(ValueError):
    """Base class for chemistry input errors."""


class SmilesSyntaxError(ChemError):
    pass


class ValenceError(ChemError):
    pass


@dataclass(frozen=True, slots=True)
class Atom:
    element: str
    charge: int = 0
    aromatic: bool = False
    hcount: int = 0

    @property
    def is_wildcard(self) -> bool:
        return self.element == "*"


@dataclass(frozen=True)
class Molecule:
    """Immutable labeled graph.

    ``bonds`` holds ``(i, j, order)`` with ``i < j``; ``order`` is 1, 2, 3 or
    :data:`AROMATIC`.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[tuple[int, int, int], ...]
    source_text: str = ""

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen = set()
        for i, j, order in self.bonds:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ChemError(f"bad bond endpoints ({i}, {j})")
            if i > j:
                raise ChemError("bond endpoints must be ordered i < j")
            if (i, j) in seen:
                raise ChemError(f"duplicate bond ({i}, {j})")
            if order not in (1, 2, 3, AROMATIC):
                raise ChemError(f"bad bond order {order}")
            if order == AROMATIC and not (self.atoms[i].aromatic and self.atoms[j].aromatic):
                raise ChemError(f"aromatic bond ({i}, {j}) between non-aromatic atoms")
            seen.add((i, j))

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per atom, ``(neighbor, bond order)`` pairs sorted by neighbor index."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for i, j, order in self.bonds:
            adj[i].append((j, order))
            adj[j].append((i, order))
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def bond_index(self) -> dict[tuple[int, int], int]:
        return {(i, j): k for k, (i, j, _) in enumerate(self.bonds)}

    def bond_order(self, a: int, b: int) -> int:
        """Order of the bond between ``a`` and ``b``; 0 if not bonded."""
        i, j = (a, b) if a < b else (b, a)
        k = self.bond_index.get((i, j))
        return 0 if k is None else self.bonds[k][2]

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    @cached_property
    def ring_bonds(self) -> frozenset[int]:
        """Indices of bonds that lie on at least one cycle (i.e. non-bridges)."""
        bridges = _bridges(self)
        return frozenset(k for k in range(len(self.bonds)) if k not in bridges)

    @cached_property
    def ring_atoms(self) -> frozenset[int]:
        out = set()
        for k in self.ring_bonds:
            i, j, _ = self.bonds[k]
            out.update((i, j))
        return frozenset(out)

    def components(self) -> list[list[int]]:
        """Connected components as sorted atom-index lists, ordered by first atom."""
        seen = [False] * len(self.atoms)
        comps = []
        for start in range(len(self.atoms)):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                a = stack.pop()
                comp.append(a)
                for b, _ in self.neighbors[a]:
                    if not seen[b]:
                        seen[b] = True
                        stack.append(b)
            comps.append(sorted(comp))
        return comps

    def subgraph(self, atom_ids, extra_h: dict[int, int] | None = None) -> Molecule:
        """Induced subgraph on ``atom_ids``; ``extra_h`` adds hydrogens per old index."""
        keep = sorted(atom_ids)
        remap = {old: new for new, old in enumerate(keep)}
        extra_h = extra_h or {}
        atoms = []
        for old in keep:
            a = self.atoms[old]
            atoms.append(Atom(a.element, a.charge, a.aromatic, a.hcount + extra_h.get(old, 0)))
        bonds = tuple(
            (remap[i], remap[j], o) for i, j, o in self.bonds if i in remap and j in remap
        )
        return Molecule(tuple(atoms), bonds)

    def heavy_atom_count(self) -> int:
        return sum(1 for a in self.atoms if a.element not in ("H", "*"))


def _bridges(mol: Molecule) -> set[int]:
    """Bond indices whose removal disconnects the graph (iterative Tarjan)."""
    n = len(mol.atoms)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, (i, j, _) in enumerate(mol.bonds):
        adj[i].append((j, k))
        adj[j].append((i, k))
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            v, via, it = stack[-1]
            advanced = False
            for w, k in it:
                if k == via:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, k, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > disc[parent]:
                        bridges.add(via)
    return bridges
