"""Command-line entry point: ``pwrules <group> <command> [options]``.

Option values come from, in increasing precedence, built-in defaults, the
``--config`` key=value file, and command-line flags. Every output carries the
hash of the effective configuration. Outputs are written to ``*.partial``
files and renamed only when the command succeeds.

Exit codes: 0 success, 1 domain error, 2 usage, configuration or missing input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, config_hash, load_config

log = logging.getLogger("pwrules")


class UsageError(Exception):
    """Bad configuration or missing inputs (exit code 2)."""


# -- option plumbing -------------------------------------------------------------


@dataclass(frozen=True)
class Opt:
    flag: str
    key: str
    default: object = None
    type: type | None = None
    help: str = ""
    nargs: str | None = None
    required: bool = False
    is_input: bool = False
    is_output: bool = False
    choices: tuple | None = None

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _in(flag, key, help="", nargs=None, required=True):
    return Opt(flag, key, help=help, nargs=nargs, required=required, is_input=True)


def _out(flag, key, help="", required=True):
    return Opt(flag, key, help=help, required=required, is_output=True)


class Context:
    """Resolved options, output staging and provenance for one command run."""

    def __init__(self, command: str, args: argparse.Namespace, opts: list[Opt], file_cfg: dict):
        self.command = command
        self.dry_run = args.dry_run
        self.seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
        self.values: dict[str, object] = {}
        effective: dict[str, object] = {"command": command, "seed": self.seed}
        for o in opts:
            v = getattr(args, o.dest)
            if v is None:
                v = file_cfg.get(o.key, o.default)
            if v is not None and o.type is not None and not o.nargs:
                try:
                    v = o.type(v)
                except (TypeError, ValueError) as exc:
                    raise UsageError(f"{o.flag} / {o.key}: {exc}") from exc
            if o.choices and v is not None and v not in o.choices:
                raise UsageError(f"{o.flag} must be one of {', '.join(map(str, o.choices))}, got {v!r}")
            if o.required and v is None:
                raise UsageError(f"missing {o.flag} (or '{o.key}' in the config file)")
            self.values[o.dest] = v
            if not o.is_output:
                effective[o.key] = [str(x) for x in v] if isinstance(v, list) else v
        self.effective = effective
        self.hash = config_hash(effective)
        self._staged: list[tuple[Path, Path]] = []
        self._made_dirs: list[Path] = []
        missing = []
        for o in opts:
            if not o.is_input or self.values[o.dest] is None:
                continue
            vals = self.values[o.dest] if isinstance(self.values[o.dest], list) else [self.values[o.dest]]
            for v in vals:
                path = str(v).split("=", 1)[-1] if o.nargs else str(v)
                if not Path(path).exists():
                    missing.append(path)
        if missing:
            raise UsageError("input not found: " + ", ".join(missing))

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def out(self, path) -> Path:
        final = Path(path)
        tmp = final.with_name(final.name + ".partial")
        missing = [d for d in [final.parent, *final.parent.parents] if not d.exists()]
        for d in reversed(missing):
            d.mkdir()
            self._made_dirs.append(d)
        self._staged.append((tmp, final))
        return tmp

    def header(self) -> str:
        return f"pwrules {self.command} config_hash={self.hash} seed={self.seed}"

    def meta(self) -> dict:
        return {"command": self.command, "config_hash": self.hash, "seed": self.seed}

    def commit(self) -> None:
        for tmp, final in self._staged:
            if tmp.exists():
                os.replace(tmp, final)

    def abort(self) -> None:
        for tmp, _ in self._staged:
            if tmp.exists():
                tmp.unlink()
        for d in reversed(self._made_dirs):
            if d.exists() and not any(d.iterdir()):
                d.rmdir()


COMMANDS: dict[tuple[str, str], tuple[list[Opt], object, str]] = {}


def command(group: str, name: str, opts: list[Opt], help: str):
    def deco(fn):
        COMMANDS[(group, name)] = (opts, fn, help)
        return fn

    return deco


# -- shared readers/writers ------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _read_tsv_rows(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.strip() and not line.startswith("#"):
                yield line.split("\t")


def _load_library(path):
    from .fragmenter import FragmentLibrary

    return FragmentLibrary.read_jsonl(path)


def _load_words(words_path, emb_path):
    from .formats import read_embeddings
    from .wordseg import read_words_jsonl, words_by_protein

    words = read_words_jsonl(words_path, read_embeddings(emb_path))
    return words, words_by_protein(words)


def _load_labels(paths, lib):
    from .dataset import LabelMatrix

    merged: dict = {}
    proteins: list[str] = []
    for p in paths:
        lm = LabelMatrix.read_tsv(p, lib.ids())
        merged.update(lm.labels)
        proteins.extend(x for x in lm.proteins if x not in proteins)
    return LabelMatrix(merged, sorted(proteins), lib.ids())


def _labeled_set(lm, by_protein, dim):
    import numpy as np

    from .classifier import LabeledSet

    y, obs = lm.dense()
    emb = [
        np.array([w.embedding for w in by_protein.get(p, [])], dtype=np.float64).reshape(-1, dim)
        for p in lm.proteins
    ]
    return LabeledSet(list(lm.proteins), emb, y, obs)


def _load_ruledb(path):
    from .attribution import read_rules_jsonl
    from .rulebase import RuleDB, read_pwdb

    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"PWDB":
        return read_pwdb(path)
    return RuleDB.from_rules(read_rules_jsonl(path))


def _read_pairs(path):
    from .dataset import Pair

    pairs = []
    for cols in _read_tsv_rows(path):
        if len(cols) < 3:
            raise ValueError(f"{path}: expected protein_id<TAB>smiles<TAB>active rows")
        pairs.append(Pair(cols[0], cols[1], cols[2] == "1"))
    return pairs


def _read_scores(path) -> dict[str, float]:
    """``id<TAB>score`` rows, or ``rank<TAB>id<TAB>score[...]`` screening output."""
    out = {}
    for cols in _read_tsv_rows(path):
        if len(cols) >= 3 and cols[0].isdigit():
            mid, val = cols[1], cols[2]
        elif len(cols) >= 2:
            mid, val = cols[0], cols[1]
        else:
            raise ValueError(f"{path}: expected id<TAB>score rows")
        if mid in out:
            raise ValueError(f"{path}: duplicate id {mid}")
        out[mid] = float(val)
    return out


# -- fragments -------------------------------------------------------------------


@command("fragments", "build", [
    _in("--corpus", "fragments.corpus", "molecules TSV (id<TAB>smiles)"),
    _out("--out", "fragments.library"),
    Opt("--min-freq", "fragments.min_freq", 0.001, float),
    Opt("--max-blocks", "fragments.max_blocks", 3, int),
    Opt("--max-heavy", "fragments.max_heavy", 25, int),
    Opt("--min-heavy", "fragments.min_heavy", 3, int),
    Opt("--rule-of-three", "fragments.rule_of_three", False, lambda v: str(v).lower() in ("1", "true", "yes")),
    Opt("--keep-amide", "fragments.keep_amide", True, lambda v: str(v).lower() in ("1", "true", "yes")),
], "build the fragment library from a molecule corpus")
def cmd_fragments_build(ctx: Context):
    from .chemgraph.io import read_molecules
    from .fragmenter import CutRuleSet, RedundancyFilter, build_library

    corpus = [s for _, s in read_molecules(ctx.corpus)]
    lib = build_library(
        corpus, ctx.min_freq, RedundancyFilter(ctx.min_heavy, rule_of_three=ctx.rule_of_three),
        rules=CutRuleSet(ctx.keep_amide), max_blocks=ctx.max_blocks, max_heavy=ctx.max_heavy,
    )
    print(f"{len(lib)} fragments from {lib.corpus_size} molecules")
    if not ctx.dry_run:
        lib.write_jsonl(ctx.out(ctx.values["out"]), ctx.meta())


@command("fragments", "coverage", [
    _in("--library", "fragments.library"),
    _in("--probe", "fragments.probe", "molecules TSV"),
    _out("--out", "fragments.coverage_report", required=False),
], "fraction of probe molecules containing a library fragment")
def cmd_fragments_coverage(ctx: Context):
    from .chemgraph.io import read_molecules
    from .fragmenter import coverage

    lib = _load_library(ctx.library)
    probe = [s for _, s in read_molecules(ctx.probe)]
    cov = coverage(lib, probe)
    print(f"coverage = {_fmt(cov)}")
    if ctx.values["out"] and not ctx.dry_run:
        _write_json(ctx.out(ctx.values["out"]), {"coverage": cov, "n_probe": len(probe), **ctx.meta()})


# -- words -----------------------------------------------------------------------


@command("words", "segment", [
    _in("--proteins", "data.proteins", "proteins JSONL"),
    _in("--attn-dir", "words.attn_dir", "directory of <protein_id>.pwat"),
    _in("--emb-dir", "words.emb_dir", "directory of <protein_id>.pweb residue embeddings"),
    _out("--out", "words.raw"),
    _out("--emb-out", "words.raw_emb"),
    Opt("--edge-threshold", "words.edge_threshold", None, float),
    Opt("--percentile", "words.percentile", 90.0, float),
    Opt("--min-len", "words.min_len", 5, int),
    Opt("--max-len", "words.max_len", 20, int),
], "segment proteins into words from attention maps")
def cmd_words_segment(ctx: Context):
    import numpy as np

    from .dataset import read_proteins_jsonl
    from .formats import read_attention, read_embeddings, write_embeddings
    from .wordseg import (
        MAX_SEQUENCE_LENGTH, ProteinWord, build_attention_graph, louvain, word_embedding, write_words_jsonl,
    )

    proteins = read_proteins_jsonl(ctx.proteins)
    words, embs = [], []
    dim = None
    for pid, seq in proteins.items():
        if len(seq) > MAX_SEQUENCE_LENGTH:
            log.warning("skipping %s: length %d > %d", pid, len(seq), MAX_SEQUENCE_LENGTH)
            continue
        attn_p = Path(ctx.attn_dir) / f"{pid}.pwat"
        emb_p = Path(ctx.emb_dir) / f"{pid}.pweb"
        for p in (attn_p, emb_p):
            if not p.exists():
                raise UsageError(f"input not found: {p}")
        attn = read_attention(attn_p)
        res = read_embeddings(emb_p)
        if attn.shape[0] != len(seq) or res.shape[0] != len(seq):
            raise ValueError(f"{pid}: attention/embedding size does not match sequence length {len(seq)}")
        if dim is None:
            dim = res.shape[1]
        g = build_attention_graph(attn, ctx.edge_threshold, ctx.percentile)
        for comm in louvain(g, ctx.seed):
            if ctx.min_len <= len(comm) <= ctx.max_len:
                pos = tuple(sorted(comm))
                w = ProteinWord(pid, pos, "".join(seq[i] for i in pos))
                words.append(w)
                embs.append(word_embedding(w, res))
    print(f"{len(words)} words from {len(proteins)} proteins")
    if not ctx.dry_run:
        write_words_jsonl(ctx.out(ctx.values["out"]), words, ctx.meta())
        write_embeddings(ctx.out(ctx.emb_out), np.array(embs).reshape(len(embs), dim or 0))


@command("words", "dict", [
    _in("--words", "words.raw"),
    _in("--emb", "words.raw_emb"),
    _out("--out", "words.dictionary"),
    _out("--words-out", "words.filtered"),
    _out("--emb-out", "words.filtered_emb"),
    Opt("--min-count", "words.min_count", 2, int),
], "build the word dictionary and filter words through it")
def cmd_words_dict(ctx: Context):
    import numpy as np

    from .formats import read_embeddings, write_embeddings
    from .wordseg import build_dictionary, filter_words, read_words_jsonl, write_words_jsonl

    emb = read_embeddings(ctx.emb)
    words = read_words_jsonl(ctx.words, emb)
    d = build_dictionary(words, ctx.min_count)
    kept = filter_words(words, d)
    print(f"{sum(1 for k in d.counts if k in d)} dictionary words; {len(kept)}/{len(words)} occurrences kept")
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()} min_count={ctx.min_count}\n")
        for k, c in d.counts.items():
            fh.write(f"{k}\t{c}\n")
    write_words_jsonl(ctx.out(ctx.words_out), kept, ctx.meta())
    write_embeddings(ctx.out(ctx.emb_out), np.array([w.embedding for w in kept]).reshape(len(kept), emb.shape[1]))


# -- data --------------------------------------------------------------------------


@command("data", "ingest", [
    _in("--affinity", "data.affinity", "affinity JSONL"),
    _in("--proteins", "data.proteins"),
    _out("--out", "data.pairs"),
    _out("--rejects", "data.rejects", required=False),
], "canonicalize, deduplicate and binarize affinity records")
def cmd_data_ingest(ctx: Context):
    from .dataset import dedup_all, ingest, read_affinity_jsonl, read_proteins_jsonl

    rejects: list = []
    recs = dedup_all(ingest(read_affinity_jsonl(ctx.affinity), read_proteins_jsonl(ctx.proteins), rejects))
    print(f"{len(recs)} unique pairs; {len(rejects)} rejected")
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()}\n# protein_id\tsmiles\tactive\tvalue_nm\ttype\tsource\n")
        for r in recs:
            active = "1" if r.value_nm < 10_000 else "0"
            fh.write(f"{r.protein_id}\t{r.smiles}\t{active}\t{_fmt(r.value_nm)}\t{r.affinity_type}\t{r.source}\n")
    if ctx.rejects:
        with open(ctx.out(ctx.rejects), "w", encoding="utf-8") as fh:
            fh.write(f"# {ctx.header()}\n")
            for rec, why in rejects:
                fh.write(f"{rec.protein_id}\t{rec.smiles}\t{why}\n")


@command("data", "split", [
    _in("--pairs", "data.pairs"),
    _out("--out", "data.split"),
    Opt("--mode", "split.mode", "novel_protein", str, choices=("novel_protein", "novel_ligand", "novel_complex")),
    Opt("--ratios", "split.ratios", "0.8,0.1,0.1", str),
], "train/val/test split of the pair table")
def cmd_data_split(ctx: Context):
    from .dataset import SplitSpec, split

    try:
        ratios = tuple(float(x) for x in str(ctx.ratios).strip("()[]").split(","))
    except ValueError as exc:
        raise UsageError(f"bad --ratios {ctx.ratios!r}") from exc
    if len(ratios) != 3:
        raise UsageError("--ratios needs three comma-separated values")
    try:
        spec = SplitSpec(ctx.mode, ratios, ctx.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    pairs = _read_pairs(ctx.pairs)
    sp = split(pairs, spec)
    print(f"{ctx.mode}: train {len(sp.train)}, val {len(sp.val)}, test {len(sp.test)} pairs")
    if not ctx.dry_run:
        _write_json(ctx.out(ctx.values["out"]), {"_meta": ctx.meta(), "mode": ctx.mode, **sp.to_json()})


@command("data", "label", [
    _in("--pairs", "data.pairs"),
    _in("--library", "fragments.library"),
    _out("--out", "data.labels"),
    _in("--split", "data.split", required=False),
    Opt("--part", "label.part", None, str, choices=("train", "val", "test")),
    Opt("--min-actives", "label.min_actives", 1, int),
], "privileged-fragment label matrix (optionally for one split part)")
def cmd_data_label(ctx: Context):
    from .dataset import label_matrix

    pairs = _read_pairs(ctx.pairs)
    if (ctx.split is None) != (ctx.part is None):
        raise UsageError("--split and --part must be given together")
    if ctx.split:
        idx = json.loads(Path(ctx.split).read_text(encoding="utf-8"))[ctx.part]
        pairs = [pairs[i] for i in idx]
    lib = _load_library(ctx.library)
    lm = label_matrix(pairs, lib, ctx.min_actives)
    n1 = sum(1 for v in lm.labels.values() if v == 1)
    print(f"{len(lm.proteins)} proteins, {len(lm.labels)} observed labels ({n1} privileged)")
    if not ctx.dry_run:
        lm.write_tsv(ctx.out(ctx.values["out"]), ctx.header())


# -- model -------------------------------------------------------------------------

_MODEL_OPTS = [
    Opt("--embed-dim", "model.embed_dim", None, int),
    Opt("--n-layers", "model.n_layers", 2, int),
    Opt("--n-heads", "model.n_heads", 4, int),
    Opt("--ff-dim", "model.ff_dim", None, int),
    Opt("--max-words", "model.max_words", 64, int),
    Opt("--dropout", "model.dropout", 0.1, float),
]


@command("model", "train", [
    _in("--words", "words.filtered"),
    _in("--emb", "words.filtered_emb"),
    _in("--library", "fragments.library"),
    _in("--train-labels", "train.labels"),
    _in("--val-labels", "train.val_labels", "NAME=PATH label files for checkpoint selection", nargs="*", required=False),
    _out("--out", "model.checkpoint"),
    _out("--log", "train.log", required=False),
    *_MODEL_OPTS,
    Opt("--lr", "train.lr", 1e-3, float),
    Opt("--weight-decay", "train.weight_decay", 1e-5, float),
    Opt("--batch-size", "train.batch_size", 256, int),
    Opt("--t-max", "train.t_max", 20, int),
    Opt("--min-lr", "train.min_lr", 0.0, float),
    Opt("--max-epochs", "train.max_epochs", 600, int),
    Opt("--patience", "train.patience", 60, int),
    Opt("--threshold", "train.threshold", 0.5, float),
], "train the classifier")
def cmd_model_train(ctx: Context):
    from .classifier import ModelConfig, ModelState, TrainConfig, TrainLog, save_checkpoint, train

    lib = _load_library(ctx.library)
    _, byp = _load_words(ctx.words, ctx.emb)
    dim = ctx.embed_dim or _infer_dim(byp)
    vals = {}
    for item in ctx.val_labels or []:
        name, _, path = item.rpartition("=")
        vals[name or Path(path).stem] = _labeled_set(_load_labels([path], lib), byp, dim)
    tr = _labeled_set(_load_labels([ctx.train_labels], lib), byp, dim)
    mcfg = ModelConfig(dim, ctx.n_layers, ctx.n_heads, ctx.ff_dim, len(lib), ctx.max_words, ctx.dropout, ctx.seed)
    tcfg = TrainConfig(
        ctx.lr, ctx.weight_decay, ctx.batch_size, ctx.t_max, ctx.min_lr, ctx.max_epochs, ctx.patience,
        ctx.threshold, seed=ctx.seed,
    )
    if ctx.dry_run:
        print(f"would train on {len(tr)} proteins, {len(vals)} validation sets, F={len(lib)}, D={dim}")
        return
    tlog = TrainLog()
    state = train(ModelState.initial(mcfg), tr, vals, tcfg, tlog)
    print(f"best checkpoint at epoch {state.epoch} after {len(tlog.rows)} epochs")
    save_checkpoint(ctx.out(ctx.values["out"]), state, {**ctx.meta(), "fragments": lib.ids()})
    if ctx.log:
        ctx.out(ctx.log).write_text(f"# {ctx.header()}\n" + tlog.to_tsv(), encoding="utf-8")


def _infer_dim(byp) -> int:
    for ws in byp.values():
        for w in ws:
            return len(w.embedding)
    raise ValueError("no word embeddings to infer the embedding dimension from")


def _load_model(path, lib):
    from .classifier import load_checkpoint

    state, meta = load_checkpoint(path)
    if meta.get("fragments") and meta["fragments"] != lib.ids():
        raise ValueError("checkpoint was trained on a different fragment library")
    if state.config.n_fragments != len(lib):
        raise ValueError(f"checkpoint has {state.config.n_fragments} outputs, library has {len(lib)} fragments")
    return state


@command("model", "predict", [
    _in("--checkpoint", "model.checkpoint"),
    _in("--words", "words.filtered"),
    _in("--emb", "words.filtered_emb"),
    _in("--library", "fragments.library"),
    _out("--out", "model.predictions"),
], "fragment probabilities for every protein in the words file")
def cmd_model_predict(ctx: Context):
    import numpy as np

    from .classifier import predict

    lib = _load_library(ctx.library)
    state = _load_model(ctx.checkpoint, lib)
    _, byp = _load_words(ctx.words, ctx.emb)
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()}\n")
        for pid in sorted(byp):
            x = np.array([w.embedding for w in byp[pid]])
            for fid, p in zip(lib.ids(), predict(state, x)):
                fh.write(f"{pid}\t{fid}\t{_fmt(p)}\n")


# -- rules -------------------------------------------------------------------------


@command("rules", "extract", [
    _in("--checkpoint", "model.checkpoint"),
    _in("--words", "words.filtered"),
    _in("--emb", "words.filtered_emb"),
    _in("--library", "fragments.library"),
    _in("--labels", "rules.labels", "label TSVs of the proteins to explain", nargs="+"),
    _out("--out", "rules.raw"),
    Opt("--steps", "attribution.steps", 50, int),
], "Integrated Gradients rule extraction")
def cmd_rules_extract(ctx: Context):
    from .attribution import extract_rules, write_rules_jsonl

    lib = _load_library(ctx.library)
    state = _load_model(ctx.checkpoint, lib)
    _, byp = _load_words(ctx.words, ctx.emb)
    lm = _load_labels(ctx.labels, lib)
    rows: dict[str, dict[str, int]] = {}
    for (p, f), v in lm.labels.items():
        rows.setdefault(p, {})[f] = v
    rules = []
    for pid in lm.proteins:
        rules.extend(extract_rules(state, pid, byp.get(pid, []), rows.get(pid, {}), lib.ids(), steps=ctx.steps))
    print(f"{len(rules)} rules from {len(lm.proteins)} proteins")
    if not ctx.dry_run:
        write_rules_jsonl(ctx.out(ctx.values["out"]), rules, ctx.meta())


@command("rules", "accuracy", [
    _in("--rules", "rules.raw"),
    _in("--words", "words.filtered"),
    _in("--library", "fragments.library"),
    _in("--labels", "rules.labels", nargs="+"),
    _out("--out", "rules.scored"),
], "merge duplicate rules and compute rule accuracy against reference labels")
def cmd_rules_accuracy(ctx: Context):
    from .attribution import read_rules_jsonl, write_rules_jsonl
    from .rulebase import RuleDB, annotate_accuracy
    from .wordseg import read_words_jsonl

    lib = _load_library(ctx.library)
    lm = _load_labels(ctx.labels, lib)
    pw: dict[str, set[str]] = {}
    for w in read_words_jsonl(ctx.words):
        pw.setdefault(w.protein_id, set()).add(w.key)
    db, flagged = annotate_accuracy(RuleDB.from_rules(read_rules_jsonl(ctx.rules)), pw, lm)
    print(f"{len(db)} rules; {flagged} with no reference protein (accuracy 0)")
    if not ctx.dry_run:
        write_rules_jsonl(ctx.out(ctx.values["out"]), db, ctx.meta())


@command("rules", "filter", [
    _in("--rules", "rules.scored"),
    _out("--out", "rules.filtered"),
    _out("--db", "rules.db", required=False),
    Opt("--min-accuracy", "rules.min_accuracy", 0.5, float),
], "drop rules below the accuracy cutoff and compile the PWDB index")
def cmd_rules_filter(ctx: Context):
    from .attribution import write_rules_jsonl
    from .rulebase import filter_rules, write_pwdb

    db = _load_ruledb(ctx.rules)
    kept = filter_rules(db, ctx.min_accuracy)
    kept.meta = ctx.meta()
    print(f"{len(kept)}/{len(db)} rules kept")
    if not ctx.dry_run:
        write_rules_jsonl(ctx.out(ctx.values["out"]), kept, ctx.meta())
        if ctx.db:
            write_pwdb(ctx.out(ctx.db), kept)


def _query_words(words_path, protein):
    from .wordseg import read_words_jsonl

    keys = [w.key for w in read_words_jsonl(words_path) if w.protein_id == protein]
    if not keys:
        raise ValueError(f"protein {protein!r} has no words in {words_path}")
    return keys


_PRED_OPTS = [
    Opt("--method", "predict.method", "joint", str, choices=("joint", "max", "avg")),
    Opt("--threshold", "predict.threshold", 0.5, float),
]


@command("rules", "predict", [
    _in("--db", "rules.db"),
    _in("--words", "words.filtered"),
    Opt("--protein", "predict.protein", None, str, required=True),
    _out("--out", "predict.out"),
    *_PRED_OPTS,
], "privileged-fragment prediction for a query protein")
def cmd_rules_predict(ctx: Context):
    from .rulebase import predict_privileged

    preds = predict_privileged(_query_words(ctx.words, ctx.protein), _load_ruledb(ctx.db), ctx.method, ctx.threshold)
    print(f"{len(preds)} fragments matched, {sum(p.called for p in preds)} called privileged")
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()}\n# fragment_id\tscore\tn_matched\tcalled\n")
        for p in preds:
            fh.write(f"{p.fragment_id}\t{_fmt(p.score)}\t{p.n_matched}\t{int(p.called)}\n")


# -- screen ------------------------------------------------------------------------


@command("screen", "score", [
    _in("--db", "rules.db"),
    _in("--library", "fragments.library"),
    _in("--words", "words.filtered"),
    _in("--molecules", "screen.molecules"),
    Opt("--protein", "predict.protein", None, str, required=True),
    _out("--out", "screen.out"),
    Opt("--cap", "screen.cap", 10, int),
    *_PRED_OPTS,
], "PWScore a molecule library against a query protein")
def cmd_screen_score(ctx: Context):
    from .chemgraph import parse_smiles
    from .chemgraph.io import read_molecules
    from .rulebase import predict_privileged
    from .screening import pwscore, score_fragments

    lib = _load_library(ctx.library)
    preds = predict_privileged(_query_words(ctx.words, ctx.protein), _load_ruledb(ctx.db), ctx.method, ctx.threshold)
    scored = score_fragments(preds, lib)
    mols = read_molecules(ctx.molecules)
    results = [pwscore(mid, parse_smiles(smi), scored, lib, ctx.cap) for mid, smi in mols]
    results.sort(key=lambda r: (-r.pwscore, r.molecule_id))
    print(f"{len(scored)} scoring fragments; {len(results)} molecules scored")
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()}\n# rank\tmolecule_id\tpwscore\tcovered_fragments\n")
        for rank, r in enumerate(results, 1):
            fh.write(f"{rank}\t{r.molecule_id}\t{_fmt(r.pwscore)}\t{','.join(f for f, _ in r.covered)}\n")


@command("screen", "fuse", [
    _in("--a", "fuse.a"),
    _in("--b", "fuse.b"),
    Opt("--orientation-a", "fuse.orientation_a", "higher", str, choices=("higher", "lower")),
    Opt("--orientation-b", "fuse.orientation_b", "higher", str, choices=("higher", "lower")),
    _out("--out", "fuse.out"),
], "Z-score fusion of two score files")
def cmd_screen_fuse(ctx: Context):
    from .screening import rank_ids, zscore_fuse

    fused = zscore_fuse(
        _read_scores(ctx.a), _read_scores(ctx.b), ctx.orientation_a == "higher", ctx.orientation_b == "higher"
    )
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()}\n")
        for i in rank_ids(fused):
            fh.write(f"{i}\t{_fmt(fused[i])}\n")


@command("screen", "metrics", [
    _in("--scores", "metrics.scores"),
    _in("--actives", "metrics.actives", "file with one active id per line"),
    _out("--out", "metrics.out", required=False),
    Opt("--threshold", "metrics.threshold", None, float),
    Opt("--ef-levels", "metrics.ef_levels", "0.5,1,5", str),
], "EF / AUC / precision / MCC report")
def cmd_screen_metrics(ctx: Context):
    from .screening import metric_report

    scores = _read_scores(ctx.scores)
    actives = [
        line.strip() for line in Path(ctx.actives).read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]
    levels = tuple(float(x) for x in str(ctx.ef_levels).split(","))
    rep = metric_report(scores, actives, levels, ctx.threshold).to_dict()
    for k, v in sorted(rep.items()):
        print(f"{k} = {v}")
    if ctx.values["out"] and not ctx.dry_run:
        _write_json(ctx.out(ctx.values["out"]), {**rep, "_meta": ctx.meta()})


# -- structval ---------------------------------------------------------------------


@command("structval", "run", [
    _in("--manifest", "structval.manifest"),
    _in("--rules", "rules.filtered"),
    _in("--library", "fragments.library"),
    _in("--word-pool", "structval.word_pool", "words JSONL or dictionary TSV for the random control", required=False),
    _out("--out", "structval.distances"),
    _out("--report", "structval.report"),
    Opt("--n-random", "structval.n_random", None, int),
    Opt("--within", "structval.within", 15.0, float),
], "rule vs random word-fragment centroid distances in complexes")
def cmd_structval_run(ctx: Context):
    from .attribution import read_rules_jsonl
    from .structval import complex_distances, load_complex, random_control, read_manifest, summarize

    lib = _load_library(ctx.library)
    rules = read_rules_jsonl(ctx.rules)
    pairs = {(r.word, r.fragment_id) for r in rules}
    rule_words = {w for w, _ in pairs}
    pool_words = set(rule_words)
    if ctx.word_pool:
        pool_words |= _word_pool(ctx.word_pool)
    frags = {f.fragment_id: f.mol for f in lib}
    rule_frags = {fid: frags[fid] for _, fid in pairs if fid in frags}
    rule_d, pool = [], []
    for entry in read_manifest(ctx.manifest):
        chains, lig = load_complex(entry)
        rule_d += complex_distances(entry.complex_id, chains, lig, rule_words, rule_frags, pairs, "rule")
        pool += complex_distances(entry.complex_id, chains, lig, pool_words, frags, None, "random")
    n = ctx.n_random if ctx.n_random is not None else len(rule_d)
    control = random_control(pool, n, ctx.seed) if pool and n else []
    report = summarize(rule_d, control, ctx.within)
    for k, v in sorted(report.items()):
        print(f"{k} = {v}")
    if ctx.dry_run:
        return
    with open(ctx.out(ctx.values["out"]), "w", encoding="utf-8") as fh:
        fh.write(f"# {ctx.header()}\n# complex_id\tword\tfragment_id\tdistance\tsource\n")
        for p in rule_d + control:
            fh.write(f"{p.complex_id}\t{p.word}\t{p.fragment_id}\t{_fmt(p.distance)}\t{p.source}\n")
    _write_json(ctx.out(ctx.report), {**report, "_meta": ctx.meta()})


def _word_pool(path) -> set[str]:
    text = Path(path).read_text(encoding="utf-8")
    out = set()
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("{"):
            rec = json.loads(line)
            if "key" in rec:
                out.add(rec["key"])
        else:
            out.add(line.split("\t")[0])
    return out


# -- synthetic data ----------------------------------------------------------------


@command("synth", "generate", [
    Opt("--out", "synth.out", None, str, required=True),
    Opt("--n-proteins", "synth.n_proteins", 60, int),
    Opt("--n-ligands", "synth.n_ligands", 200, int),
], "write the synthetic planted-rule dataset")
def cmd_synth_generate(ctx: Context):
    from .synthetic import SyntheticConfig, generate

    cfg = SyntheticConfig(n_proteins=ctx.n_proteins, n_planted=ctx.n_proteins // 2, n_ligands=ctx.n_ligands, seed=ctx.seed)
    ds = generate(cfg)
    print(f"w* = {ds.w_star}; f* = {ds.f_star}; query protein {ds.query_protein}")
    if not ctx.dry_run:
        ds.write(ctx.values["out"])


# -- entry point -----------------------------------------------------------------------


def _common(suppress: bool) -> argparse.ArgumentParser:
    """Global flags; the sub-level copy uses suppressed defaults so values given
    before the subcommand are not overwritten."""
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="key=value config file")
    common.add_argument("--seed", type=int, default=d(None), help="global seed (default: config 'seed' or 0)")
    common.add_argument("--threads", type=int, default=d(1), help="cap on numeric library threads")
    common.add_argument("--dry-run", action="store_true", default=d(False), help="validate inputs and report without writing")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwrules", description=__doc__.splitlines()[0], parents=[_common(False)])
    common = _common(True)
    groups = parser.add_subparsers(dest="group", required=True)
    sub: dict[str, argparse._SubParsersAction] = {}
    for (group, name), (opts, _, help_) in COMMANDS.items():
        if group not in sub:
            sub[group] = groups.add_parser(group).add_subparsers(dest="cmd", required=True)
        p = sub[group].add_parser(name, help=help_, parents=[common])
        for o in opts:
            kw = {"dest": o.dest, "default": None, "help": f"{o.help} [config: {o.key}]".strip()}
            if o.nargs:
                kw["nargs"] = o.nargs
            p.add_argument(o.flag, **kw)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    from .chemgraph import ChemError
    from .errors import PWRulesError

    opts, fn, _ = COMMANDS[(args.group, args.cmd)]
    ctx = None
    try:
        file_cfg = load_config(args.config) if args.config else {}
        ctx = Context(f"{args.group} {args.cmd}", args, opts, file_cfg)
        fn(ctx)
        ctx.commit()
        return 0
    except (UsageError, ConfigError) as exc:
        if ctx:
            ctx.abort()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PWRulesError, ChemError, ValueError, KeyError, OSError) as exc:
        if ctx:
            ctx.abort()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        if ctx:
            ctx.abort()
        raise


if __name__ == "__main__":
    sys.exit(main())
