"""Physicochemical counts for fragment filtering and the Rule of Three."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

from .molecule import ATOMIC_MASS, Molecule


@dataclass(frozen=True, slots=True)
class DescriptorSet:
    mw: float
    hbd: int
    hba: int
    rotatable_bonds: int
    logp: float | None = None
    tpsa: float | None = None


def molecular_weight(m: Molecule) -> float:
    return sum(ATOMIC_MASS[a.element] + a.hcount * ATOMIC_MASS["H"] for a in m.atoms)


def is_amide_cn(m: Molecule, i: int, j: int) -> bool:
    """True when atoms ``i``-``j`` form the C-N bond of an amide (C(=O)-N)."""
    ai, aj = m.atoms[i], m.atoms[j]
    if {ai.element, aj.element} != {"C", "N"}:
        return False
    c = i if ai.element == "C" else j
    return any(m.atoms[k].element == "O" and o == 2 for k, o in m.neighbors[c])


def rotatable_bonds(m: Molecule) -> int:
    ring = m.ring_bonds
    count = 0
    for k, (i, j, order) in enumerate(m.bonds):
        if order != 1 or k in ring:
            continue
        if m.degree(i) < 2 or m.degree(j) < 2:
            continue
        if is_amide_cn(m, i, j):
            continue
        count += 1
    return count


def h_donors(m: Molecule) -> int:
    return sum(1 for a in m.atoms if a.element in ("N", "O") and a.hcount >= 1)


def h_acceptors(m: Molecule) -> int:
    # pyrrole-type aromatic N-H donates its lone pair to the ring
    return sum(
        1
        for a in m.atoms
        if a.element in ("N", "O") and not (a.element == "N" and a.aromatic and a.hcount >= 1)
    )


def descriptors(
    m: Molecule,
    provider: Mapping[str, tuple[float | None, float | None]] | None = None,
    key: str | None = None,
) -> DescriptorSet:
    """Descriptor counts for ``m``.

    LogP and TPSA are only filled from ``provider`` (a ``key -> (logp, tpsa)``
    table, e.g. loaded with :func:`pwrules.chemgraph.io.read_descriptor_table`).
    """
    logp = tpsa = None
    if provider is not None and key is not None and key in provider:
        logp, tpsa = provider[key]
    return DescriptorSet(
        mw=molecular_weight(m),
        hbd=h_donors(m),
        hba=h_acceptors(m),
        rotatable_bonds=rotatable_bonds(m),
        logp=logp,
        tpsa=tpsa,
    )


def rule_of_three(d: DescriptorSet) -> bool:
    """Fragment-likeness check; bounds are inclusive and missing LogP/TPSA pass."""
    return (
        d.mw <= 300
        and d.hbd <= 3
        and d.hba <= 3
        and d.rotatable_bonds <= 3
        and (d.logp is None or d.logp <= 3)
        and (d.tpsa is None or d.tpsa <= 60)
    )
