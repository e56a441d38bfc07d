"""Compare the compiled and pure-Python kernels.

Run: python3 benchmarks/bench_kernels.py [--repeat N]

Workloads:
  substructure  library fragments searched in a set of drug-like molecules
  louvain       segmentation of random block-structured attention graphs

Both backends must return identical results; the script exits non-zero if
they disagree or the extension is not built.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from pwrules import _kernels
from pwrules._kernels import pykernels
from pwrules.chemgraph import find_substructure, parse_smiles
from pwrules.synthetic import SyntheticConfig, generate
from pwrules.wordseg import build_attention_graph, louvain

TARGETS = [
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1CCCC1c1cccnc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "O=C(Nc1ccc(cc1)S(=O)(=O)N)c1ccccc1",
    "c1ccc2c(c1)ccc1ccccc12",
    "CCN(CC)CCNC(=O)c1ccc(N)cc1",
    "OC1CCN(CCc2ccccc2)CC1",
    "Cc1ccc(cc1Nc1nccc(n1)c1cccnc1)NC(=O)c1ccc(CN2CCN(C)CC2)cc1",
]
PATTERNS = ["c1ccccc1", "C(=O)N", "CC", "c1ccncc1", "C(=O)O", "CN", "c1ccc2ccccc2c1", "CCCC"]


def _time(fn, repeat: int) -> float:
    runs = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t)
    return statistics.median(runs)


def bench_substructure(kernel, repeat: int):
    pats = [parse_smiles(s) for s in PATTERNS]
    tgts = [parse_smiles(s) for s in TARGETS]
    ds = generate(SyntheticConfig(n_ligands=200))
    tgts += [parse_smiles(s) for _, s in ds.ligands]

    def run():
        return [[m.pairs for m in find_substructure(p, t, kernel=kernel)] for p in pats for t in tgts]

    return _time(run, repeat), run()


def bench_louvain(kernel, repeat: int):
    ds = generate(SyntheticConfig(n_proteins=40))
    graphs = [build_attention_graph(a, 0.3) for a in ds.attention.values()]
    rng = np.random.default_rng(0)
    for n in (200, 400):
        a = rng.random((n, n)) ** 8
        graphs.append(build_attention_graph(a, percentile=90))

    def run():
        return [louvain(g, seed=0, kernel=kernel) for g in graphs]

    return _time(run, repeat), run()


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.BACKEND != "cython":
        print("compiled extension not available; build it with `pip install --no-build-isolation -e .`")
        return 1
    from pwrules._kernels import _ckernels

    ok = True
    print(f"{'workload':<14}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, bench, py_k, c_k in (
        ("substructure", bench_substructure, pykernels.match_embeddings, _ckernels.match_embeddings),
        ("louvain", bench_louvain, pykernels.louvain_move, _ckernels.louvain_move),
    ):
        t_py, r_py = bench(py_k, args.repeat)
        t_c, r_c = bench(c_k, args.repeat)
        same = r_py == r_c
        ok &= same
        print(f"{name:<14}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x{'' if same else '  MISMATCH'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
