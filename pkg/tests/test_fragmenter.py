import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwrules.chemgraph import canonical_key, has_substructure, parse_smiles
from pwrules.errors import CombinatorialLimit, EmptyLibrary, EmptyProbe
from pwrules.fragmenter import (
    CutRuleSet,
    FragmentLibrary,
    RedundancyFilter,
    build_library,
    coverage,
    enumerate_fragments,
    fragments_in,
    identify_cut_bonds,
)

from support import smiles_strings

DPM = "c1ccccc1Cc2ccccc2"


def key(smi):
    return canonical_key(parse_smiles(smi))


def test_benzene_no_cuts():
    assert identify_cut_bonds(parse_smiles("c1ccccc1")) == frozenset()


def test_ethane_no_cuts():
    assert identify_cut_bonds(parse_smiles("CC")) == frozenset()


def test_diphenylmethane_cuts():
    m = parse_smiles(DPM)
    cuts = identify_cut_bonds(m)
    assert len(cuts) == 2
    for b in cuts:
        i, j, o = m.bonds[b]
        assert o == 1 and {m.atoms[i].aromatic, m.atoms[j].aromatic} == {True, False}


def test_amide_kept_unless_disabled():
    m = parse_smiles("c1ccccc1C(=O)NC")
    default = identify_cut_bonds(m)
    loose = identify_cut_bonds(m, CutRuleSet(keep_amide=False))
    assert len(loose) == len(default) + 1


def test_benzene_single_block():
    assert enumerate_fragments(parse_smiles("c1ccccc1")) == [key("c1ccccc1")]


def test_diphenylmethane_fragments():
    got = set(enumerate_fragments(parse_smiles(DPM), max_blocks=2))
    assert got == {key("c1ccccc1"), key("C"), key("Cc1ccccc1")}


def test_full_molecule_included():
    m = parse_smiles(DPM)
    assert key(DPM) in enumerate_fragments(m, max_blocks=3)


def test_max_heavy_bound():
    frags = enumerate_fragments(parse_smiles(DPM), max_blocks=3, max_heavy=7)
    assert key(DPM) not in frags
    assert all(parse_smiles(k).heavy_atom_count() <= 7 for k in frags)


def test_combinatorial_limit(monkeypatch):
    import pwrules.fragmenter as fr

    monkeypatch.setattr(fr, "MAX_CANDIDATE_UNIONS", 3)
    with pytest.raises(CombinatorialLimit):
        enumerate_fragments(parse_smiles("c1ccccc1CCc1ccccc1CCc1ccccc1"), max_blocks=3)


def test_identical_corpus_freq_one():
    lib = build_library(["c1ccccc1Cc1ccncc1"] * 1000, min_freq=0.001)
    assert len(lib) > 0
    assert all(f.freq == 1.0 and f.count == 1000 for f in lib)


def test_rare_fragment_removed():
    corpus = ["c1ccccc1"] * 1999 + ["C1CCNCC1"]
    lib = build_library(corpus, min_freq=0.001)
    assert key("C1CCNCC1") not in lib.by_key
    assert key("c1ccccc1") in lib.by_key
    lib0 = build_library(corpus, min_freq=0.0)
    assert key("C1CCNCC1") in lib0.by_key


def test_small_fragment_removed_by_redundancy():
    lib = build_library(["c1ccccc1CO"], min_freq=0.0)
    assert key("CO") not in lib.by_key
    lib2 = build_library(["c1ccccc1CO"], min_freq=0.0, redundancy=RedundancyFilter(min_heavy=1))
    assert key("CO") in lib2.by_key


def test_flexible_chain_removed():
    # hexane-like chain: 3 rotatable bonds over 6 heavy atoms exceeds 1/3 per atom
    frag = parse_smiles("CCCCCC")
    assert not RedundancyFilter().keep(frag)
    assert RedundancyFilter().keep(parse_smiles("c1ccccc1CCCC"))


def test_ids_by_descending_count():
    corpus = ["c1ccccc1Cc1ccncc1", "c1ccccc1", "c1ccccc1"]
    lib = build_library(corpus, min_freq=0.0)
    counts = [f.count for f in lib]
    assert counts == sorted(counts, reverse=True)
    assert lib.ids()[0] == "frag_1" and lib["frag_1"].key == key("c1ccccc1")


def test_empty_library_errors():
    with pytest.raises(EmptyLibrary):
        build_library([])
    with pytest.raises(EmptyLibrary):
        build_library(["CC"], min_freq=0.0)


def test_coverage_examples():
    lib = build_library(["c1ccccc1"], min_freq=0.0)
    assert coverage(lib, ["Cc1ccccc1", "CC"]) == 0.5
    with pytest.raises(EmptyProbe):
        coverage(lib, [])


def test_coverage_of_own_corpus():
    corpus = ["c1ccccc1CC1CCNCC1", "c1ccsc1C(=O)NC1CCCCC1", "C1CCOC1c1ccncc1"]
    lib = build_library(corpus, min_freq=0.0)
    assert coverage(lib, corpus) == 1.0


def test_jsonl_round_trip(tmp_path):
    lib = build_library(["c1ccccc1Cc1ccncc1", "c1ccccc1OC1CCCC1"], min_freq=0.0)
    p = tmp_path / "lib.jsonl"
    lib.write_jsonl(p)
    back = FragmentLibrary.read_jsonl(p)
    assert back.fragments == lib.fragments
    assert back.corpus_size == lib.corpus_size
    p2 = tmp_path / "lib2.jsonl"
    back.write_jsonl(p2)
    assert p.read_bytes() == p2.read_bytes()


def test_fragments_in():
    lib = build_library(["c1ccccc1Cc1ccncc1"], min_freq=0.0)
    hits = fragments_in(lib, parse_smiles("c1ccncc1"))
    assert hits == [lib.by_key[key("c1ccncc1")].fragment_id]


CORPUS_BLOCKS = st.lists(smiles_strings(), min_size=1, max_size=4)


@settings(max_examples=1000)
@given(CORPUS_BLOCKS)
def test_library_invariants(corpus):
    try:
        lib = build_library(corpus, min_freq=0.0)
    except EmptyLibrary:
        return
    keys = [f.key for f in lib]
    assert len(keys) == len(set(keys))
    for f in lib:
        assert 0.0 <= f.freq <= 1.0 and f.heavy_atoms >= 1
        assert canonical_key(parse_smiles(f.key)) == f.key
    # rebuilding is identical
    again = build_library(corpus, min_freq=0.0)
    assert again.fragments == lib.fragments


@given(CORPUS_BLOCKS, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_min_freq_monotone(corpus, a, b):
    lo, hi = sorted((a, b))

    def keys(t):
        try:
            return set(build_library(corpus, min_freq=t).by_key)
        except EmptyLibrary:
            return set()

    assert keys(hi) <= keys(lo)


@given(smiles_strings())
def test_fragments_are_substructures(smi):
    m = parse_smiles(smi)
    for k in enumerate_fragments(m):
        assert has_substructure(parse_smiles(k), m)
