"""Readers for ``molecules.tsv`` and descriptor provider tables."""

from __future__ import annotations

from pathlib import Path


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def read_molecules(path: str | Path) -> list[tuple[str, str]]:
    """``id<TAB>smiles`` rows; ``#`` lines are comments."""
    out = []
    for lineno, cols in _rows(path):
        if len(cols) < 2:
            raise ValueError(f"{path}:{lineno}: expected id<TAB>smiles")
        out.append((cols[0], cols[1]))
    return out


def write_molecules(path: str | Path, rows, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for mol_id, smi in rows:
            fh.write(f"{mol_id}\t{smi}\n")


def read_descriptor_table(path: str | Path) -> dict[str, tuple[float | None, float | None]]:
    """``id<TAB>logp<TAB>tpsa``; empty or ``NA`` cells become None."""

    def num(x: str) -> float | None:
        x = x.strip()
        return None if x in ("", "NA", "nan") else float(x)

    table = {}
    for lineno, cols in _rows(path):
        if len(cols) < 3:
            raise ValueError(f"{path}:{lineno}: expected id<TAB>logp<TAB>tpsa")
        table[cols[0]] = (num(cols[1]), num(cols[2]))
    return table
