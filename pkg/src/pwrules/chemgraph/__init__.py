"""Molecular graphs: SMILES I/O, canonical keys, substructure search, descriptors."""

from .canon import canonical_key, canonical_smiles
from .descriptors import DescriptorSet, descriptors, rule_of_three
from .molecule import AROMATIC, Atom, ChemError, Molecule, SmilesSyntaxError, ValenceError
from .smiles import parse_smiles, write_smiles
from .substruct import AtomMapping, HitLimitExceeded, find_substructure, has_substructure

__all__ = [
    "AROMATIC",
    "Atom",
    "AtomMapping",
    "ChemError",
    "DescriptorSet",
    "HitLimitExceeded",
    "Molecule",
    "SmilesSyntaxError",
    "ValenceError",
    "canonical_key",
    "canonical_smiles",
    "descriptors",
    "find_substructure",
    "has_substructure",
    "parse_smiles",
    "rule_of_three",
    "write_smiles",
]
