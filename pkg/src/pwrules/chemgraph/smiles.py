"""SMILES reading and writing for the subset used by fragment libraries.

Supported: the organic subset (B C N O P S F Cl Br I and aromatic b c n o p s),
bracket atoms with explicit H count and charge, branches, ring closures
(including ``%nn``), the bond symbols ``- = # :`` and ``.`` separators.
Stereo marks (``@ / \\``) and isotopes are accepted but dropped.
"""

from __future__ import annotations

import re
import warnings

from .molecule import AROMATIC, ATOMIC_MASS, Atom, Molecule, SmilesSyntaxError, ValenceError

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
DEFAULT_VALENCE = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}
_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": AROMATIC, "/": 1, "\\": 1}
_BRACKET = re.compile(
    r"\[(?P<iso>\d+)?(?P<sym>\*|[A-Z][a-z]?|se|as|[bcnops])"
    r"(?P<chiral>@@?)?(?P<hh>H(?P<h>\d)?)?(?P<chg>[+-]+\d*)?(?::\d+)?\]"
)


def _bond_sum(mol_bonds: list[int]) -> int:
    return sum(1 if o == AROMATIC else o for o in mol_bonds)


def implicit_hydrogens(element: str, aromatic: bool, bond_orders: list[int]) -> int:
    """Implicit H count for an unbracketed organic-subset atom."""
    valences = DEFAULT_VALENCE[element]
    used = _bond_sum(bond_orders)
    if aromatic:
        if used > max(valences):
            raise ValenceError(f"aromatic {element.lower()} with bond sum {used}")
        return max(valences[0] - used - 1, 0)
    for v in valences:
        if v >= used:
            return v - used
    raise ValenceError(f"{element} exceeds standard valence (bond sum {used})")


def _parse_charge(text: str | None) -> int:
    if not text:
        return 0
    sign = 1 if text[0] == "+" else -1
    rest = text.lstrip("+-")
    if rest:
        return sign * int(rest)
    return sign * len(text)


def parse_smiles(text: str) -> Molecule:
    """Parse ``text`` into a hydrogen-suppressed :class:`Molecule`.

    Raises:
        SmilesSyntaxError: malformed input (unbalanced brackets, parentheses or
            ring closures, unknown tokens).
        ValenceError: an unbracketed atom exceeds its standard valence.
    """
    if not text or not text.isascii():
        raise SmilesSyntaxError("SMILES must be non-empty ASCII")
    text = text.strip()
    elements: list[str] = []
    aromatic: list[bool] = []
    charges: list[int] = []
    hcounts: list[int | None] = []  # None = implicit
    bonds: dict[tuple[int, int], tuple[int, bool]] = {}  # (i,j) -> (order, explicit)
    ring_open: dict[int, tuple[int, int | None]] = {}
    branch_stack: list[int] = []
    prev: int | None = None
    pending_bond: int | None = None
    stereo_seen = False
    i = 0
    n = len(text)

    def add_bond(a: int, b: int, order: int | None) -> None:
        key = (a, b) if a < b else (b, a)
        if a == b or key in bonds:
            raise SmilesSyntaxError(f"duplicate or self bond at atom {b}")
        if order is None:
            order_ = AROMATIC if aromatic[a] and aromatic[b] else 1
            bonds[key] = (order_, False)
        else:
            bonds[key] = (order, True)

    def add_atom(sym: str, arom: bool, charge: int, h: int | None) -> None:
        nonlocal prev, pending_bond
        idx = len(elements)
        elements.append(sym)
        aromatic.append(arom)
        charges.append(charge)
        hcounts.append(h)
        if prev is not None:
            add_bond(prev, idx, pending_bond)
        pending_bond = None
        prev = idx

    while i < n:
        ch = text[i]
        if ch == "[":
            m = _BRACKET.match(text, i)
            if not m:
                raise SmilesSyntaxError(f"bad bracket atom at position {i}")
            sym = m.group("sym")
            arom = sym.islower() and sym != "*"
            sym_norm = sym.capitalize() if arom else sym
            if sym_norm not in ATOMIC_MASS:
                raise SmilesSyntaxError(f"unsupported element {sym!r}")
            if m.group("chiral"):
                stereo_seen = True
            hcount = int(m.group("h") or 1) if m.group("hh") else 0
            add_atom(sym_norm, arom, _parse_charge(m.group("chg")), hcount)
            i = m.end()
            continue
        two = text[i : i + 2]
        if two in ("Cl", "Br"):
            add_atom(two, False, 0, None)
            i += 2
            continue
        if ch in ORGANIC:
            add_atom(ch, False, 0, None)
            i += 1
            continue
        if ch in AROMATIC_ORGANIC:
            add_atom(ch.upper(), True, 0, None)
            i += 1
            continue
        if ch == "*":
            add_atom("*", False, 0, 0)
            i += 1
            continue
        if ch in _BOND_SYMBOLS:
            if pending_bond is not None:
                raise SmilesSyntaxError(f"two bond symbols at position {i}")
            if ch in "/\\":
                stereo_seen = True
            pending_bond = _BOND_SYMBOLS[ch]
            i += 1
            continue
        if ch == "(":
            if prev is None:
                raise SmilesSyntaxError(f"branch without atom at position {i}")
            branch_stack.append(prev)
            i += 1
            continue
        if ch == ")":
            if not branch_stack or pending_bond is not None:
                raise SmilesSyntaxError(f"unbalanced ')' at position {i}")
            prev = branch_stack.pop()
            i += 1
            continue
        if ch == ".":
            if pending_bond is not None or branch_stack:
                raise SmilesSyntaxError(f"misplaced '.' at position {i}")
            prev = None
            i += 1
            continue
        if ch.isdigit() or ch == "%":
            if ch == "%":
                if not text[i + 1 : i + 3].isdigit() or len(text[i + 1 : i + 3]) != 2:
                    raise SmilesSyntaxError(f"bad %nn ring label at position {i}")
                label = int(text[i + 1 : i + 3])
                i += 3
            else:
                label = int(ch)
                i += 1
            if prev is None:
                raise SmilesSyntaxError("ring closure before any atom")
            if label in ring_open:
                other, order = ring_open.pop(label)
                if order is not None and pending_bond is not None and order != pending_bond:
                    raise SmilesSyntaxError(f"conflicting ring bond orders for label {label}")
                add_bond(other, prev, pending_bond if pending_bond is not None else order)
            else:
                ring_open[label] = (prev, pending_bond)
            pending_bond = None
            continue
        raise SmilesSyntaxError(f"unexpected character {ch!r} at position {i}")

    if ring_open:
        raise SmilesSyntaxError(f"unclosed ring bond(s) {sorted(ring_open)}")
    if branch_stack:
        raise SmilesSyntaxError("unbalanced '('")
    if pending_bond is not None:
        raise SmilesSyntaxError("dangling bond symbol")
    if not elements:
        raise SmilesSyntaxError("no atoms")
    if stereo_seen:
        warnings.warn("stereo marks ignored", stacklevel=2)

    for (a, b), (order, _) in bonds.items():
        if order == AROMATIC and not (aromatic[a] and aromatic[b]):
            raise SmilesSyntaxError(f"aromatic bond between non-aromatic atoms {a}, {b}")

    bond_list = sorted((a, b, order) for (a, b), (order, _) in bonds.items())
    # implicit bonds between aromatic atoms are aromatic only inside rings
    draft = Molecule(tuple(Atom(e, 0, ar) for e, ar in zip(elements, aromatic)), tuple(bond_list))
    ring = draft.ring_bonds
    fixed = []
    for k, (a, b, order) in enumerate(bond_list):
        if order == AROMATIC and k not in ring and not bonds[(a, b)][1]:
            order = 1
        fixed.append((a, b, order))

    orders: list[list[int]] = [[] for _ in elements]
    for a, b, order in fixed:
        orders[a].append(order)
        orders[b].append(order)

    atoms = []
    for idx, sym in enumerate(elements):
        h = hcounts[idx]
        if h is None:
            h = implicit_hydrogens(sym, aromatic[idx], orders[idx])
        elif sym in DEFAULT_VALENCE and charges[idx] == 0 and not aromatic[idx]:
            if _bond_sum(orders[idx]) + h > max(DEFAULT_VALENCE[sym]):
                raise ValenceError(f"atom {idx} ({sym}) exceeds standard valence")
        atoms.append(Atom(sym, charges[idx], aromatic[idx], h))
    mol = Molecule(tuple(atoms), tuple(fixed), text)
    return _absorb_explicit_hydrogens(mol)


def _absorb_explicit_hydrogens(mol: Molecule) -> Molecule:
    """Fold neutral, singly-bonded [H] atoms into their neighbour's H count."""
    drop = {}
    for idx, a in enumerate(mol.atoms):
        if a.element == "H" and a.charge == 0 and mol.degree(idx) == 1:
            nb, order = mol.neighbors[idx][0]
            if order == 1 and mol.atoms[nb].element != "H":
                drop[idx] = nb
    if not drop:
        return mol
    extra: dict[int, int] = {}
    for nb in drop.values():
        extra[nb] = extra.get(nb, 0) + 1
    keep = [k for k in range(len(mol.atoms)) if k not in drop]
    sub = mol.subgraph(keep, extra)
    return Molecule(sub.atoms, sub.bonds, mol.source_text)


def atom_symbol(mol: Molecule, idx: int) -> str:
    """SMILES token for atom ``idx``, bracketed only when required."""
    a = mol.atoms[idx]
    if a.element == "*":
        return "*"
    orders = [o for _, o in mol.neighbors[idx]]
    if a.charge == 0 and a.element in ORGANIC and (not a.aromatic or a.element.lower() in AROMATIC_ORGANIC):
        try:
            if implicit_hydrogens(a.element, a.aromatic, orders) == a.hcount:
                return a.element.lower() if a.aromatic else a.element
        except ValenceError:
            pass
    sym = a.element.lower() if a.aromatic else a.element
    h = "" if a.hcount == 0 else ("H" if a.hcount == 1 else f"H{a.hcount}")
    if a.charge == 0:
        chg = ""
    else:
        chg = ("+" if a.charge > 0 else "-") + (str(abs(a.charge)) if abs(a.charge) > 1 else "")
    return f"[{sym}{h}{chg}]"


def _bond_symbol(mol: Molecule, a: int, b: int, order: int) -> str:
    if order == 2:
        return "="
    if order == 3:
        return "#"
    if order == 1 and mol.atoms[a].aromatic and mol.atoms[b].aromatic:
        return "-"
    if order == AROMATIC and not (mol.atoms[a].aromatic and mol.atoms[b].aromatic):
        return ":"
    return ""


def write_smiles(mol: Molecule, ranks: list[int] | None = None) -> str:
    """Write ``mol`` as SMILES.

    Each component starts at its lowest-ranked atom and neighbours are visited
    in rank order, so a canonical ranking gives a canonical string.
    """
    n = len(mol.atoms)
    if ranks is None:
        ranks = list(range(n))
    comps = mol.components()
    comps.sort(key=lambda c: min(ranks[a] for a in c))
    pieces = []
    for comp in comps:
        start = min(comp, key=lambda a: ranks[a])
        pieces.append(_write_component(mol, start, ranks))
    return ".".join(pieces)


def _write_component(mol: Molecule, start: int, ranks: list[int]) -> str:
    order_nb = [sorted(mol.neighbors[a], key=lambda t: ranks[t[0]]) for a in range(len(mol.atoms))]
    # pass 1: DFS tree and ring-closure edges
    visited: dict[int, int] = {}
    parent: dict[int, int] = {start: -1}
    children: dict[int, list[int]] = {}
    closures_at: dict[int, list[tuple[int, int]]] = {}  # atom -> [(partner, order)]
    seen_edges: set[tuple[int, int]] = set()
    stack = [start]
    counter = 0
    while stack:
        a = stack.pop()
        if a in visited:
            continue
        visited[a] = counter
        counter += 1
        children[a] = []
        if parent[a] != -1:
            children[parent[a]].append(a)
            seen_edges.add((min(a, parent[a]), max(a, parent[a])))
        for b, order in reversed(order_nb[a]):
            if b not in visited:
                parent[b] = a
                stack.append(b)
    # edges not in the tree are ring closures, opened at the earlier-visited atom
    for a in visited:
        for b, order in order_nb[a]:
            e = (min(a, b), max(a, b))
            if e in seen_edges:
                continue
            if parent.get(b) == a and b in children[a]:
                continue
            if parent.get(a) == b and a in children[b]:
                continue
            seen_edges.add(e)
            first, second = (a, b) if visited[a] < visited[b] else (b, a)
            closures_at.setdefault(first, []).append((second, order))
            closures_at.setdefault(second, []).append((first, order))
    # the reversed push makes the DFS follow rank order; rebuild children accordingly
    for a in children:
        children[a].sort(key=lambda c: visited[c])

    out: list[str] = []
    free_digits: list[int] = list(range(1, 100))
    open_label: dict[tuple[int, int], int] = {}

    def emit(a: int) -> None:
        out.append(atom_symbol(mol, a))
        rings = sorted(closures_at.get(a, ()), key=lambda t: (visited[t[0]], ranks[t[0]]))
        for partner, order in rings:
            e = (min(a, partner), max(a, partner))
            if e in open_label:
                label = open_label.pop(e)
                free_digits.append(label)
                free_digits.sort()
                out.append(_bond_symbol(mol, a, partner, order) + _label(label))
            else:
                label = free_digits.pop(0)
                open_label[e] = label
                out.append(_label(label))

    # iterative pre-order emission
    work: list[tuple[str, int]] = [("atom", start)]
    while work:
        kind, a = work.pop()
        if kind == "close":
            out.append(")")
            continue
        if kind == "open":
            out.append("(")
            work_atom = a
            p = parent[work_atom]
            out.append(_bond_symbol(mol, p, work_atom, mol.bond_order(p, work_atom)))
            emit_and_queue(work_atom, work, emit, children, mol, out, parent)
            continue
        p = parent[a]
        if p != -1:
            out.append(_bond_symbol(mol, p, a, mol.bond_order(p, a)))
        emit_and_queue(a, work, emit, children, mol, out, parent)
    return "".join(out)


def emit_and_queue(a, work, emit, children, mol, out, parent) -> None:
    emit(a)
    kids = children[a]
    if not kids:
        return
    # last child continues the chain, earlier ones become branches
    work.append(("atom", kids[-1]))
    for c in reversed(kids[:-1]):
        work.append(("close", c))
        work.append(("open", c))


def _label(n: int) -> str:
    return str(n) if n < 10 else f"%{n}"
