"""Shared generators and reference oracles for the test suite."""

from __future__ import annotations

import hashlib
import itertools
import random
import shlex
from pathlib import Path

import numpy as np
from hypothesis import strategies as st

from pwrules.chemgraph import AROMATIC, Atom, Molecule

ELEMENTS = ("C", "C", "C", "N", "O", "S")


def random_molecule(rng: random.Random, n_min: int = 1, n_max: int = 12, wildcard_p: float = 0.0) -> Molecule:
    """Random connected graph with plausible labels (valence is not enforced)."""
    n = rng.randint(n_min, n_max)
    atoms = []
    for _ in range(n):
        if wildcard_p and rng.random() < wildcard_p:
            atoms.append(Atom("*"))
        else:
            atoms.append(Atom(rng.choice(ELEMENTS), aromatic=rng.random() < 0.4))
    edges = set()
    for i in range(1, n):
        j = rng.randrange(i)
        edges.add((j, i))
    for _ in range(rng.randint(0, max(0, n // 3))):
        i, j = sorted(rng.sample(range(n), 2)) if n > 1 else (0, 0)
        if i != j:
            edges.add((i, j))
    bonds = []
    for i, j in sorted(edges):
        both_arom = atoms[i].aromatic and atoms[j].aromatic
        if both_arom and rng.random() < 0.7:
            order = AROMATIC
        else:
            order = rng.choice((1, 1, 1, 2, 3))
        bonds.append((i, j, order))
    return Molecule(tuple(atoms), tuple(bonds))


def random_subpattern(rng: random.Random, target: Molecule, max_atoms: int = 5, wildcard_p: float = 0.15) -> Molecule:
    """Connected piece of ``target`` (relabeled, some atoms turned into wildcards)."""
    n = len(target.atoms)
    size = rng.randint(1, min(max_atoms, n))
    start = rng.randrange(n)
    chosen = [start]
    frontier = set(j for j, _ in target.neighbors[start])
    while len(chosen) < size and frontier:
        nxt = rng.choice(sorted(frontier))
        chosen.append(nxt)
        frontier |= {j for j, _ in target.neighbors[nxt]}
        frontier -= set(chosen)
    rng.shuffle(chosen)
    pos = {a: k for k, a in enumerate(chosen)}
    atoms = []
    for a in chosen:
        if rng.random() < wildcard_p:
            atoms.append(Atom("*"))
        else:
            src = target.atoms[a]
            atoms.append(Atom(src.element, aromatic=src.aromatic))
    bonds = []
    for i, j, o in target.bonds:
        if i in pos and j in pos and rng.random() < 0.9:
            a, b = sorted((pos[i], pos[j]))
            if o == AROMATIC and not (atoms[a].aromatic and atoms[b].aromatic):
                o = 1
            bonds.append((a, b, o))
    return Molecule(tuple(atoms), tuple(sorted(bonds)))


def brute_force_hits(pattern: Molecule, target: Molecule, match_bonds: bool = True) -> list[tuple[int, ...]]:
    """Every injection checked directly; one (smallest) mapping per target atom set."""
    npat, ntgt = len(pattern.atoms), len(target.atoms)
    if npat == 0 or npat > ntgt:
        return []
    tb = {(i, j): o for i, j, o in target.bonds}
    tb.update({(j, i): o for i, j, o in target.bonds})
    best: dict[tuple[int, ...], tuple[int, ...]] = {}
    for image in itertools.permutations(range(ntgt), npat):
        ok = True
        for p, t in zip(pattern.atoms, image):
            ta = target.atoms[t]
            if not p.is_wildcard and (p.element != ta.element or p.aromatic != ta.aromatic):
                ok = False
                break
        if not ok:
            continue
        for i, j, o in pattern.bonds:
            bo = tb.get((image[i], image[j]))
            if bo is None:
                ok = False
                break
            wild = pattern.atoms[i].is_wildcard or pattern.atoms[j].is_wildcard
            if match_bonds and not wild and bo != o:
                ok = False
                break
        if ok:
            key = tuple(sorted(image))
            if key not in best or image < best[key]:
                best[key] = image
    return sorted(best.values())


def random_substructure_case(seed: int) -> tuple[Molecule, Molecule]:
    rng = random.Random(seed)
    target = random_molecule(rng, 1, 12)
    if rng.random() < 0.7:
        pattern = random_subpattern(rng, target, max_atoms=4)
    else:
        pattern = random_molecule(rng, 1, 4, wildcard_p=0.15)
    return pattern, target


def toy_state(seed: int, d: int | None = None, f: int | None = None, layers: int | None = None):
    """Small random classifier with dropout disabled."""
    from pwrules.classifier import ModelConfig, ModelState

    rng = np.random.default_rng(seed)
    heads = int(rng.choice([1, 2, 4]))
    if d is None:
        d = heads * int(rng.integers(1, 5))
    else:
        heads = 1
    cfg = ModelConfig(
        embed_dim=d,
        n_layers=layers if layers is not None else int(rng.integers(1, 3)),
        n_heads=heads,
        ff_dim=int(rng.integers(2, 9)),
        n_fragments=f if f is not None else int(rng.integers(1, 9)),
        max_words=3,
        dropout=0.0,
        seed=seed,
    )
    return ModelState.initial(cfg)


SMILES_BLOCKS = ["C", "N", "O", "CC", "C(C)", "C(=O)", "c1ccccc1", "c1ccncc1", "C1CCCC1", "S", "C(N)", "C=C", "c1ccsc1"]


@st.composite
def smiles_strings(draw):
    """Valence-safe SMILES built by chaining small blocks."""
    blocks = draw(st.lists(st.sampled_from(SMILES_BLOCKS), min_size=1, max_size=6))
    return "".join(blocks)


def toy_batch(state, seed: int, batch_size: int = 2):
    """Random padded batch (last row one word shorter) with a partly observed label matrix."""
    from pwrules.classifier import Batch

    cfg = state.config
    rng = np.random.default_rng(seed + 7)
    lens = [cfg.max_words] + [max(1, cfg.max_words - 1)] * (batch_size - 1)
    words = [rng.normal(size=(n, cfg.embed_dim)) for n in lens]
    y = (rng.random((batch_size, cfg.n_fragments)) < 0.5).astype(float)
    obs = (rng.random((batch_size, cfg.n_fragments)) < 0.7).astype(float)
    obs[0, 0] = 1.0
    return Batch.from_words(words, cfg.max_words, y, obs, dim=cfg.embed_dim)


def gradient_check(state, batch, step: float = 1e-5) -> float:
    """Worst relative error of backward() against central differences.

    Covers every parameter entry and every input entry; relative error is
    ``|a - n| / max(|a|, |n|, 1e-6)`` so exact zeros compare absolutely.
    """
    from pwrules.classifier import backward, forward, masked_bce_loss

    def loss_at():
        logits, _ = forward(state, batch)
        return masked_bce_loss(logits, batch.y, batch.observed)[0]

    logits, cache = forward(state, batch)
    _, dlogits = masked_bce_loss(logits, batch.y, batch.observed)
    grads, dx = backward(state, cache, dlogits)

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), 1e-6)

    worst = 0.0
    for name, p in state.params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + step
            up = loss_at()
            flat[k] = old - step
            down = loss_at()
            flat[k] = old
            worst = max(worst, rel(g[k], (up - down) / (2 * step)))
    xf = batch.x.reshape(-1)
    dxf = dx.reshape(-1)
    for k in range(xf.size):
        old = xf[k]
        xf[k] = old + step
        up = loss_at()
        xf[k] = old - step
        down = loss_at()
        xf[k] = old
        worst = max(worst, rel(dxf[k], (up - down) / (2 * step)))
    return worst


ONE_TO_THREE = {
    "A": "ALA", "R": "ARG", "N": "ASN", "D": "ASP", "C": "CYS", "Q": "GLN", "E": "GLU",
    "G": "GLY", "H": "HIS", "I": "ILE", "L": "LEU", "K": "LYS", "M": "MET", "F": "PHE",
    "P": "PRO", "S": "SER", "T": "THR", "W": "TRP", "Y": "TYR", "V": "VAL",
}


def pdb_atom(serial, name, resname, chain, resseq, xyz, altloc=" ", icode=" ", record="ATOM  "):
    x, y, z = xyz
    return (
        f"{record}{serial:5d} {name:<4s}{altloc}{resname:>3s} {chain}{resseq:4d}{icode}   "
        f"{x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00           C"
    )


def pdb_from_sequence(seq, coords, chain="A", start=1):
    """Fixed-column PDB text with one CA (plus a decoy N) per residue."""
    lines = []
    for k, (aa, xyz) in enumerate(zip(seq, coords)):
        lines.append(pdb_atom(2 * k + 1, " N", ONE_TO_THREE[aa], chain, start + k, np.asarray(xyz) + 1.0))
        lines.append(pdb_atom(2 * k + 2, " CA", ONE_TO_THREE[aa], chain, start + k, xyz))
    lines.append("END")
    return "\n".join(lines) + "\n"


def molfile(symbols, coords, bonds, name="lig"):
    """Minimal V2000 block; ``bonds`` are 1-based (i, j, order)."""
    out = [name, "  synthetic", "", f"{len(symbols):3d}{len(bonds):3d}  0  0  0  0  0  0  0  0999 V2000"]
    for s, (x, y, z) in zip(symbols, coords):
        out.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {s:<3s} 0  0  0  0  0  0  0  0  0  0  0  0")
    for i, j, o in bonds:
        out.append(f"{i:3d}{j:3d}{o:3d}  0")
    out.append("M  END")
    return "\n".join(out) + "\n"


REPO = Path(__file__).resolve().parents[1]
SYNTH_SCRIPT = REPO / "configs" / "run_synthetic.sh"
SYNTH_CFG = REPO / "configs" / "synthetic.cfg"


def synthetic_steps() -> list[list[str]]:
    """The ``pwrules`` invocations of the synthetic run script, as argv lists
    (without the leading program name), config path substituted."""
    steps = []
    for line in SYNTH_SCRIPT.read_text().splitlines():
        line = line.strip()
        if not line.startswith("pwrules "):
            continue
        argv = shlex.split(line.replace('"$CFG"', str(SYNTH_CFG)))[1:]
        steps.append(argv)
    return steps


def run_synthetic_pipeline(workdir, main, seed=None):
    """Run every step in-process; returns the list of exit codes."""
    import os

    codes = []
    old = os.getcwd()
    workdir = Path(workdir)
    try:
        for argv in synthetic_steps():
            if argv[:2] == ["synth", "generate"]:
                argv = ["synth", "generate", "--out", str(workdir)]
                if seed is not None:
                    argv += ["--seed", str(seed)]
                codes.append(main(argv))
                os.chdir(workdir)
                continue
            codes.append(main(argv))
            if codes[-1] != 0:
                break
    finally:
        os.chdir(old)
    return codes


def tree_digest(root) -> dict[str, str]:
    root = Path(root)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}
