import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.spatial.transform import Rotation

from pwrules.chemgraph import find_substructure, parse_smiles
from pwrules.errors import EmptySet, ParseError
from pwrules.structval import (
    ChainModel,
    LigandModel,
    PairDistance,
    Residue,
    centroid,
    complex_distances,
    load_complex,
    locate_word,
    mann_whitney,
    mann_whitney_u,
    map_smiles_to_ligand,
    pair_distance,
    parse_mol,
    parse_pdb,
    random_control,
    read_manifest,
    summarize,
)

from support import molfile, pdb_atom, pdb_from_sequence

HIV_PR = "PQITLWQRPLVTIKIGGQLKEALLDTGADDTVLEEMNLPGRWKPKMIGGIGGFIKVRQYDQILIEICGHKAIGTVLVGPTPVNIIGRNLLTQIGCTLNF"


def chain_of(seq, seed=0):
    rng = np.random.default_rng(seed)
    xyz = np.cumsum(rng.normal(size=(len(seq), 3)) * 2.2, axis=0)
    return ChainModel("A", tuple(Residue(i + 1, "", aa, tuple(p)) for i, (aa, p) in enumerate(zip(seq, xyz))))


# -- PDB -------------------------------------------------------------------


def test_parse_pdb_two_ca():
    text = pdb_from_sequence("GA", [(0, 0, 0), (3.8, 0, 0)])
    (chain,) = parse_pdb(text)
    assert chain.sequence == "GA" and chain.residues[1].ca == (3.8, 0.0, 0.0)


def test_parse_pdb_altloc_and_policies():
    lines = [
        pdb_atom(1, " CA", "ASP", "A", 5, (0, 0, 0), altloc="A"),
        pdb_atom(2, " CA", "ASP", "A", 5, (9, 9, 9), altloc="B"),
        pdb_atom(3, " CA", "MSE", "A", 6, (1, 0, 0)),
        pdb_atom(4, " CA", "GLY", "A", 6, (2, 0, 0), icode="A"),
        pdb_atom(5, " CA", "LYS", "B", 1, (5, 0, 0)),
        "ENDMDL",
        pdb_atom(6, " CA", "LYS", "B", 2, (6, 0, 0)),
    ]
    chains = parse_pdb("\n".join(lines))
    a, b = chains
    assert a.sequence == "DXG" and a.residues[0].ca == (0.0, 0.0, 0.0)
    assert [r.label for r in a.residues] == ["5", "6", "6A"]
    assert b.sequence == "K"


def test_parse_pdb_hetatm_only_and_errors():
    het = pdb_atom(1, " C1", "LIG", "A", 1, (0, 0, 0), record="HETATM")
    assert parse_pdb(het) == []
    bad = pdb_atom(1, " CA", "GLY", "A", 1, (0, 0, 0)).replace("   0.000", "   x.000", 1)
    with pytest.raises(ParseError) as e:
        parse_pdb("REMARK\n" + bad)
    assert e.value.lineno == 2
    with pytest.raises(ParseError):
        parse_pdb("ATOM      1  CA  GLY A")


# -- MOL -------------------------------------------------------------------


def test_parse_mol_ethane():
    lig = parse_mol(molfile(["C", "C"], [(0, 0, 0), (1.54, 0, 0)], [(1, 2, 1)]))
    assert lig.mol.heavy_atom_count() == 2 and len(lig.mol.bonds) == 1
    assert lig.coords.shape == (2, 3)


def test_parse_mol_drops_hydrogens_contiguously():
    text = molfile(["H", "C", "H", "O"], [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)], [(1, 2, 1), (2, 3, 1), (2, 4, 1)])
    lig = parse_mol(text)
    assert [a.element for a in lig.mol.atoms] == ["C", "O"]
    assert lig.mol.bonds == ((0, 1, 1),)
    assert np.array_equal(lig.coords[:, 0], [1.0, 3.0])


def test_parse_mol_errors():
    good = molfile(["C", "C"], [(0, 0, 0), (1.5, 0, 0)], [(1, 2, 1)])
    lines = good.splitlines()
    lines[3] = "  3" + lines[3][3:]
    with pytest.raises(ParseError):
        parse_mol("\n".join(lines))
    with pytest.raises(ParseError):
        parse_mol("x\ny\n")
    with pytest.raises(ParseError):
        parse_mol(molfile(["C", "C"], [(0, 0, 0), (1.5, 0, 0)], [(1, 3, 1)]))


def test_map_kekule_molfile_onto_aromatic_smiles():
    ring = [(np.cos(t), np.sin(t), 0.0) for t in np.linspace(0, 2 * np.pi, 7)[:-1]]
    text = molfile(["C"] * 6 + ["O"], ring + [(2.5, 0, 0)], [(1, 2, 2), (2, 3, 1), (3, 4, 2), (4, 5, 1), (5, 6, 2), (6, 1, 1), (1, 7, 1)])
    mapped = map_smiles_to_ligand(parse_smiles("Oc1ccccc1"), parse_mol(text))
    assert mapped.mol.atoms[0].element == "O"
    assert np.allclose(mapped.coords[0], (2.5, 0, 0))
    with pytest.raises(ValueError):
        map_smiles_to_ligand(parse_smiles("CCO"), parse_mol(text))


# -- locating and distances ------------------------------------------------


def test_locate_word():
    assert len(locate_word("AAAAA", chain_of("AAAAAA"))) == 2
    assert locate_word("WWWWW", chain_of("AAAAAA")) == []
    wins = locate_word("DTGAD", chain_of(HIV_PR))
    assert wins == [tuple(range(24, 29))]
    assert [chain_of(HIV_PR).residues[i].number for i in wins[0]] == [25, 26, 27, 28, 29]


def test_centroid_and_distance():
    assert np.array_equal(centroid([(0, 0, 0), (2, 0, 0)]), [1.0, 0.0, 0.0])
    with pytest.raises(EmptySet):
        centroid([])
    chain = ChainModel("A", (Residue(1, "", "G", (1.0, 1.0, 1.0)),))
    lig = LigandModel(parse_smiles("C"), np.array([[1.0, 1.0, 1.0]]))
    assert pair_distance([(0,)], [(0,)], chain, lig) == 0.0
    with pytest.raises(EmptySet):
        pair_distance([], [(0,)], chain, lig)


def test_minimum_over_occurrences():
    chain = ChainModel("A", tuple(Residue(i, "", "G", (10.0 * i, 0.0, 0.0)) for i in range(3)))
    lig = LigandModel(parse_smiles("CC"), np.array([[21.0, 0.0, 0.0], [50.0, 0.0, 0.0]]))
    assert pair_distance([(0,), (1,), (2,)], [(0,), (1,)], chain, lig) == pytest.approx(1.0)


def _scene(seed):
    rng = np.random.default_rng(seed)
    seq = "".join(rng.choice(list("ACDEG"), size=30))
    chain = chain_of(seq, seed)
    mol = parse_smiles("c1ccccc1CCOC(=O)N")
    coords = rng.normal(size=(mol.heavy_atom_count(), 3)) * 3.0 + chain.coords(range(30)).mean(axis=0)
    return chain, LigandModel(mol, coords)


FRAGS = {"f_ring": parse_smiles("c1ccccc1"), "f_carb": parse_smiles("OC(=O)N"), "f_cc": parse_smiles("CC")}


@given(st.integers(0, 2**31 - 1))
def test_rigid_motion_invariance(seed):
    chain, lig = _scene(seed % 997)
    words = {chain.sequence[i : i + 3] for i in range(0, 27, 4)}
    before = complex_distances("c", [chain], lig, words, FRAGS)
    rot = Rotation.random(random_state=seed)
    shift = np.random.default_rng(seed).normal(size=3) * 50
    moved = lambda p: rot.apply(np.asarray(p, dtype=np.float64)) + shift
    chain2 = ChainModel("A", tuple(Residue(r.number, r.icode, r.code, tuple(moved(r.ca))) for r in chain.residues))
    after = complex_distances("c", [chain2], LigandModel(lig.mol, moved(lig.coords)), words, FRAGS)
    assert [(p.word, p.fragment_id) for p in before] == [(p.word, p.fragment_id) for p in after]
    assert all(abs(a.distance - b.distance) <= 1e-6 for a, b in zip(before, after))


def test_complex_distances_pairs_filter():
    chain, lig = _scene(3)
    w = chain.sequence[:3]
    all_pairs = complex_distances("c", [chain], lig, [w], FRAGS)
    assert {p.fragment_id for p in all_pairs} == set(FRAGS)
    only = complex_distances("c", [chain], lig, [w], FRAGS, pairs=[(w, "f_ring")])
    assert [p.fragment_id for p in only] == ["f_ring"]
    emb = [m.target_atoms for m in find_substructure(FRAGS["f_ring"], lig.mol)]
    assert only[0].distance == pair_distance(locate_word(w, chain), emb, chain, lig)


# -- random control --------------------------------------------------------


def test_random_control():
    pool = [PairDistance(f"W{i}", "f", float(i), "random") for i in range(5)]
    a = random_control(pool, 5, seed=1)
    assert a == random_control(pool, 5, seed=1) and len(a) == 5
    assert all(p.source == "random" for p in a)
    one = random_control(pool[:1], 4)
    assert [p.word for p in one] == ["W0"] * 4
    with pytest.raises(EmptySet):
        random_control([], 3)


# -- Mann-Whitney ----------------------------------------------------------


def enumerate_p(a, b):
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    n_a, n_b = len(a), len(b)
    mu = n_a * n_b / 2
    obs = abs(ranks[:n_a].sum() - n_a * (n_a + 1) / 2 - mu)
    hits = total = 0
    for idx in itertools.combinations(range(n_a + n_b), n_a):
        u = ranks[list(idx)].sum() - n_a * (n_a + 1) / 2
        hits += abs(u - mu) >= obs - 1e-9
        total += 1
    return hits / total


def test_mwu_example():
    u, p = mann_whitney_u([1, 2], [3, 4])
    assert u == 0 and abs(p - 1 / 3) <= 1e-9
    assert mann_whitney([1, 2], [3, 4]).p_less == pytest.approx(1 / 6)


def test_mwu_identical_samples():
    r = mann_whitney([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.u_a == 4.5 and r.p_two_sided == 1.0


def test_mwu_shifted_normals():
    rng = np.random.default_rng(0)
    _, p = mann_whitney_u(rng.normal(size=100), rng.normal(3.0, 1.0, size=100))
    assert p < 1e-4


def test_mwu_errors():
    with pytest.raises(EmptySet):
        mann_whitney([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney([1.0], [2.0], method="bootstrap")


@pytest.mark.parametrize("n_a", range(1, 8))
def test_mwu_exact_matches_enumeration(n_a):
    rng = np.random.default_rng(n_a)
    for n_b in range(1, 8):
        for ties in (False, True):
            a = rng.integers(0, 5, n_a).astype(float) if ties else rng.normal(size=n_a)
            b = rng.integers(0, 5, n_b).astype(float) if ties else rng.normal(size=n_b)
            r = mann_whitney(a, b, "exact")
            assert abs(r.p_two_sided - enumerate_p(a, b)) <= 1e-12
            if not ties:
                ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
                assert r.u_a == ref.statistic
                assert abs(r.p_two_sided - ref.pvalue) <= 1e-12
                less = stats.mannwhitneyu(a, b, alternative="less", method="exact")
                assert abs(r.p_less - less.pvalue) <= 1e-12


def test_mwu_normal_matches_scipy():
    rng = np.random.default_rng(5)
    a, b = rng.integers(0, 10, 30).astype(float), rng.integers(2, 12, 25).astype(float)
    r = mann_whitney(a, b, "normal")
    ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert abs(r.p_two_sided - ref.pvalue) <= 1e-12


def test_mwu_normal_vs_exact_at_eight():
    rng = np.random.default_rng(8)
    for _ in range(200):
        a, b = rng.normal(size=8), rng.normal(rng.uniform(-2, 2), 1.0, size=8)
        gap = abs(mann_whitney(a, b, "exact").p_two_sided - mann_whitney(a, b, "normal").p_two_sided)
        assert gap <= 0.02


samples = st.lists(st.floats(0, 40, allow_nan=False), min_size=1, max_size=25)


@given(samples, samples)
def test_u_sum(a, b):
    r = mann_whitney(a, b)
    assert r.u_a + r.u_b == len(a) * len(b)
    assert 0.0 <= r.p_two_sided <= 1.0


@given(samples, samples, st.floats(0, 40), st.floats(0, 40))
def test_within_fraction_monotone(a, b, t1, t2):
    lo, hi = sorted((t1, t2))
    rule = [PairDistance("w", "f", d, "rule") for d in a]
    ctrl = [PairDistance("w", "f", d, "random") for d in b]
    s_lo, s_hi = summarize(rule, ctrl, lo), summarize(rule, ctrl, hi)
    assert s_lo[f"frac_within_{lo:g}A_rule"] <= s_hi[f"frac_within_{hi:g}A_rule"]
    assert s_lo[f"frac_within_{lo:g}A_random"] <= s_hi[f"frac_within_{hi:g}A_random"]


# -- manifest --------------------------------------------------------------


def test_manifest_and_load(tmp_path):
    rng = np.random.default_rng(0)
    (tmp_path / "c.pdb").write_text(pdb_from_sequence("GDTGADK", rng.normal(size=(7, 3)) * 3))
    (tmp_path / "c.mol").write_text(molfile(["C", "C", "O"], [(0, 0, 0), (1.5, 0, 0), (2.2, 1.2, 0)], [(1, 2, 1), (2, 3, 1)]))
    (tmp_path / "m.tsv").write_text("# complex_id\tpdb\tmol\tsmiles\nc1\tc.pdb\tc.mol\tOCC\n")
    (entry,) = read_manifest(tmp_path / "m.tsv")
    chains, lig = load_complex(entry)
    assert chains[0].sequence == "GDTGADK"
    assert lig.mol.atoms[0].element == "O" and np.allclose(lig.coords[0], (2.2, 1.2, 0))
    d = complex_distances("c1", chains, lig, ["DTGAD"], {"f": parse_smiles("CO")})
    assert len(d) == 1 and d[0].distance >= 0
    (tmp_path / "bad.tsv").write_text("c1\tc.pdb\n")
    with pytest.raises(ParseError):
        read_manifest(tmp_path / "bad.tsv")


def test_summarize_report():
    rule = [PairDistance("w", "f", d, "rule") for d in (3.0, 5.0, 20.0)]
    ctrl = [PairDistance("w", "f", d, "random") for d in (10.0, 16.0, 30.0, 40.0)]
    rep = summarize(rule, ctrl)
    assert rep["median_rule"] == 5.0 and rep["frac_within_15A_rule"] == pytest.approx(2 / 3)
    assert rep["frac_within_15A_random"] == 0.25 and rep["test_method"] == "exact"
    json.dumps(rep)
    assert summarize([], [])["median_rule"] is None
