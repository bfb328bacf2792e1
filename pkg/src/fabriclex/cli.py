"""Command-line pipelines producing deterministic CSV/JSON artifacts.

Every subcommand writes its artifacts under
<output-dir>/artifacts/<subcommand>/ together with a manifest recording
inputs (with content hashes), the effective configuration and its hash,
and the seed. Artifacts themselves are byte-stable for fixed inputs and
seed; only the manifest carries a timestamp.

Configuration precedence: command-line flags > config file (key=value
lines) > built-in defaults. Exit codes: 0 success, 1 data error, 2 usage
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, attributes, corpus, embeddings, imagestats
from . import lexistats, retrieval, simstats, stattests, structure, textproc

SUBCOMMANDS = ("ingest", "validate", "stats", "lexicon", "attributes", "structure",
               "simstats", "retrieval", "invariance", "keywords", "imagestats", "report")

DATA_ERRORS = (corpus.CorpusError, textproc.TextProcError, lexistats.LexiconError,
               embeddings.EmbeddingError, attributes.AttributeSetError,
               structure.StructureError, stattests.StatTestError,
               simstats.SimStatsError, retrieval.RetrievalError,
               imagestats.ImageStatsError, OSError, json.JSONDecodeError)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


class ArtifactWriter:
    """Collects artifact files for one run and writes the manifest."""

    def __init__(self, output_dir: Path, subcommand: str, config: dict, seed: int):
        self.dir = output_dir / "artifacts" / subcommand
        self.dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.config = dict(sorted(config.items()))
        blob = json.dumps(self.config, sort_keys=True).encode()
        self.config_hash = hashlib.sha256(blob).hexdigest()[:16]
        self.seed = seed
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []

    def record_input(self, path: str | Path):
        p = Path(path)
        digest = hashlib.sha256()
        if p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.is_file():
                    digest.update(child.name.encode())
                    digest.update(child.read_bytes())
        else:
            digest.update(p.read_bytes())
        self.inputs[str(p)] = digest.hexdigest()

    def write_csv(self, name: str, header: list[str], rows):
        path = self.dir / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash={self.config_hash}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        self.artifacts.append(name)

    def write_json(self, name: str, obj: dict):
        path = self.dir / name
        payload = {"config_hash": self.config_hash, **obj}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        self.artifacts.append(name)

    def finish(self):
        manifest = {
            "subcommand": self.subcommand,
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "artifacts": sorted(self.artifacts),
            "created": datetime.now(timezone.utc).isoformat(),
        }
        with open(self.dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    out = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise corpus.CorpusError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _effective(args: argparse.Namespace, file_config: dict[str, str],
               defaults: dict) -> dict:
    """Merge flag > config-file > default for every known option."""
    merged = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in file_config:
            raw = file_config[key]
            if isinstance(default, bool):
                merged[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                merged[key] = int(raw)
            elif isinstance(default, float):
                merged[key] = float(raw)
            else:
                merged[key] = raw
        else:
            merged[key] = default
    return merged


def _prepare_text(cfg: dict, writer: ArtifactWriter):
    """Shared corpus loading + preprocessing for text-analytics subcommands."""
    corp = corpus.ingest(cfg["corpus"], cfg.get("format"))
    writer.record_input(cfg["corpus"])
    lemma_dict = textproc.LemmaDictionary.load(cfg.get("lemmas"), cfg.get("stopwords"))
    for key in ("lemmas", "stopwords"):
        if cfg.get(key):
            writer.record_input(cfg[key])
    spell = None
    if cfg.get("spell"):
        spell = textproc.build_spell_policy(d.text for d in corp.descriptions)
    pos = {}
    if cfg.get("pos"):
        pos = textproc.load_pos_annotations(cfg["pos"])
        writer.record_input(cfg["pos"])
    processed = textproc.preprocess_corpus(corp.descriptions, lemma_dict, spell,
                                           pos_annotations=pos)
    return corp, processed


def _load_attrs(cfg: dict, writer: ArtifactWriter, store=None):
    path = cfg["curation"]
    if path == "builtin":
        path = attributes.bundled_attribute_csv()
    writer.record_input(path)
    return attributes.attribute_set_from_csv(path, store=store)


def _summary_dict(s: textproc.Summary) -> dict:
    return {"mean": s.mean, "median": s.median, "q25": s.q25, "q75": s.q75}


def _cmd_ingest(cfg, writer):
    corp = corpus.ingest(cfg["corpus"], cfg.get("format"))
    writer.record_input(cfg["corpus"])
    by_status = {}
    for d in corp.descriptions:
        by_status[d.status] = by_status.get(d.status, 0) + 1
    writer.write_json("corpus_summary.json", {
        "n_descriptions": len(corp),
        "n_describers": len(corp.describers),
        "n_images": len(corp.images),
        "n_materials": len({im.material_id for im in corp.images.values()}),
        "by_status": dict(sorted(by_status.items())),
    })


def _cmd_validate(cfg, writer):
    corp = corpus.ingest(cfg["corpus"], cfg.get("format"))
    writer.record_input(cfg["corpus"])
    policy = corpus.ValidationPolicy(
        min_words=cfg["min_words"], max_words=cfg["max_words"],
        min_count=cfg["min_count"], max_share=cfg["max_share"],
        min_valid=cfg["min_valid"], share_basis=cfg["share_basis"])
    report = corpus.validate(corp, policy)
    rows = []
    rows += [("under_length", i, v) for i, v in report.under_length]
    rows += [("over_length", i, v) for i, v in report.over_length]
    rows += [("describer_below_min", i, v) for i, v in report.describers_below_min]
    rows += [("describer_over_share", i, v) for i, v in report.describers_over_share]
    rows += [("image_below_min_valid", i, v) for i, v in report.images_below_min_valid]
    writer.write_csv("flags.csv", ["kind", "id", "value"], rows)
    writer.write_json("validation_report.json", {
        "clean": report.clean,
        "n_under_length": len(report.under_length),
        "n_over_length": len(report.over_length),
        "n_describers_below_min": len(report.describers_below_min),
        "n_describers_over_share": len(report.describers_over_share),
        "n_images_below_min_valid": len(report.images_below_min_valid),
    })


def _cmd_stats(cfg, writer):
    corp, processed = _prepare_text(cfg, writer)
    raw_counts = {d.id: len(d.text.split()) for d in corp.descriptions
                  if d.status == "accepted"}
    stats = textproc.corpus_stats(processed, raw_token_counts=raw_counts)
    writer.write_json("text_stats.json", {
        "n_descriptions": stats.n_descriptions,
        "total_tokens": stats.total_tokens,
        "n_types": stats.n_types,
        "n_lemmas": stats.n_lemmas,
        "tokens_per_description": _summary_dict(stats.tokens_per_description),
        "types_per_description": _summary_dict(stats.types_per_description),
        "lemmas_per_description": _summary_dict(stats.lemmas_per_description),
        "pos_fractions": {t: _summary_dict(s) for t, s in stats.pos_fractions.items()},
    })
    rows = [("post", l, c) for l, c in stats.length_histogram.items()]
    if stats.raw_length_histogram:
        rows += [("pre", l, c) for l, c in stats.raw_length_histogram.items()]
    writer.write_csv("length_histogram.csv", ["source", "length", "count"], rows)


def _cmd_lexicon(cfg, writer):
    _, processed = _prepare_text(cfg, writer)
    table = lexistats.arf_table(processed)
    ranking = lexistats.arf_ranking(table)
    curve = lexistats.coverage_curve(processed, ranking)
    lex = lexistats.select_lexicon(curve, ranking, cfg["target"])
    writer.write_csv("coverage_curve.csv", ["k", "mean_coverage"],
                     [(k, c) for k, c in curve])
    writer.write_csv("lexicon.csv", ["rank", "lemma", "arf", "f"],
                     [(i + 1, lem, table[lem].arf, table[lem].f)
                      for i, lem in enumerate(lex.lemmas)])
    writer.write_json("lexicon.json", {
        "target": cfg["target"], "size": lex.size, "coverage": lex.coverage,
        "n_lemmas_total": len(ranking),
    })


def _cmd_attributes(cfg, writer):
    _, processed = _prepare_text(cfg, writer)
    store = embeddings.load_vectors(cfg["embeddings"], cfg["embeddings_format"])
    writer.record_input(cfg["embeddings"])
    if cfg.get("curation"):
        attrs = _load_attrs(cfg, writer, store=store)
    else:
        keys = list(store.keys)
        sim = np.clip(store.unit_matrix @ store.unit_matrix.T, -1.0, 1.0)
        result = attributes.affinity_propagation(sim, damping=cfg["damping"])
        clusters = {keys[i]: keys[int(result.labels[i])] for i in range(len(keys))}
        attrs = attributes.build_attribute_set(clusters, store=store)
    probs = attributes.attribute_probabilities(processed, attrs)
    writer.write_csv("attributes.csv", ["lemma", "attribute"],
                     sorted((lem, name) for lem, name in attrs.attribute_of().items()))
    writer.write_csv("p_attribute.csv", ["attribute", "p"],
                     [(n, float(p)) for n, p in zip(probs.names, probs.p)])
    cond_rows = []
    for i, ni in enumerate(probs.names):
        for j, nj in enumerate(probs.names):
            value = probs.p_cond[i, j]
            cond_rows.append((ni, nj, "n/a" if np.isnan(value) else float(value)))
    writer.write_csv("p_conditional.csv", ["attribute_i", "attribute_j", "p_i_given_j"],
                     cond_rows)
    # x,y left blank: filled by an external projection tool.
    writer.write_csv("cluster_export.csv", ["lemma", "attribute", "x", "y"],
                     sorted((lem, name, "", "") for lem, name in attrs.attribute_of().items()))
    writer.write_json("attributes.json", {
        "n_attributes": len(attrs.attributes),
        "attributes": list(attrs.names),
        "n_outliers": len(attrs.outliers),
    })


def _cmd_structure(cfg, writer):
    _, processed = _prepare_text(cfg, writer)
    attrs = _load_attrs(cfg, writer)
    table = structure.rank_table(processed, attrs)
    result = structure.structure_test(table, alpha=cfg["alpha"])
    group_of = {}
    for gid, group in enumerate(result.groups, start=1):
        for name in group:
            group_of[name] = gid
    rows = [(name, result.psi[name], group_of[name]) for name in result.attribute_order]
    for name in sorted(attrs.names):
        if name not in result.psi:
            rows.append((name, "n/a", "n/a"))
    writer.write_csv("rank_product.csv", ["attribute", "psi", "group_id"], rows)
    writer.write_json("structure.json", {
        "kruskal_wallis": {"H": result.kw.statistic, "p_value": result.kw.p_value,
                           "df": result.kw.df, "n": result.kw.n},
        "alpha": cfg["alpha"],
        "groups": [list(g) for g in result.groups],
        "rank_product": {k: v for k, v in sorted(result.psi.items())},
    })


def _cmd_simstats(cfg, writer):
    corp = corpus.ingest(cfg["corpus"], cfg.get("format"))
    writer.record_input(cfg["corpus"])
    store = embeddings.load_vectors(cfg["embeddings"], cfg["embeddings_format"])
    writer.record_input(cfg["embeddings"])
    image_of = {d.id: d.image_id for d in corp.descriptions}
    summary = simstats.intra_inter(
        store, image_of, anosim_mode=cfg["anosim_mode"],
        permutations=cfg["permutations"], seed=cfg["seed"],
        per_image=cfg["per_image"], max_images=cfg["max_images"])
    payload = {
        "intra_mean": summary.intra_mean, "intra_std": summary.intra_std,
        "inter_mean": summary.inter_mean, "inter_std": summary.inter_std,
        "n_intra_pairs": summary.n_intra_pairs, "n_inter_pairs": summary.n_inter_pairs,
        "std_basis": summary.std_basis,
    }
    if summary.anosim is not None:
        payload["anosim"] = json.loads(summary.anosim.to_json())
    writer.write_json("simstats.json", payload)


def _cmd_retrieval(cfg, writer):
    text_store = embeddings.load_vectors(cfg["text_embeddings"], cfg["embeddings_format"])
    image_store = embeddings.load_vectors(cfg["image_embeddings"], cfg["embeddings_format"])
    cases = retrieval.load_cases(cfg["cases"])
    for key in ("text_embeddings", "image_embeddings", "cases"):
        writer.record_input(cfg[key])
    meta = None
    if cfg.get("meta"):
        meta = retrieval.load_image_meta(cfg["meta"])
        writer.record_input(cfg["meta"])
    ks = tuple(int(k) for k in str(cfg["ks"]).split(","))
    table = retrieval.topk_recall(text_store, image_store, cases, ks=ks,
                                  meta=meta, mode=cfg["mode"])
    writer.write_csv("recall.csv", ["K", "recall"],
                     [(k, table.recall[k]) for k in table.ks])
    writer.write_json("retrieval.json", {
        "mode": cfg["mode"], "n_cases": table.n_cases,
        "recall": {str(k): table.recall[k] for k in table.ks},
    })


def _cmd_invariance(cfg, writer):
    store = embeddings.load_vectors(cfg["embeddings"], cfg["embeddings_format"])
    meta = retrieval.load_image_meta(cfg["meta"])
    writer.record_input(cfg["embeddings"])
    writer.record_input(cfg["meta"])
    result = retrieval.invariance(store, meta, mode=cfg["mode"])
    payload = {"mode": result.mode, "mean": result.mean, "std": result.std,
               "n_materials": len(result.per_material),
               "skipped_materials": list(result.skipped)}
    if cfg.get("compare"):
        other_store = embeddings.load_vectors(cfg["compare"], cfg["embeddings_format"])
        writer.record_input(cfg["compare"])
        other = retrieval.invariance(other_store, meta, mode=cfg["mode"])
        test = retrieval.compare_invariance(result, other)
        payload["compare"] = {"mean": other.mean, "std": other.std,
                              "wilcoxon": json.loads(test.to_json())}
    writer.write_csv("per_material.csv", ["material_id", "mean_similarity"],
                     sorted(result.per_material.items()))
    writer.write_json("invariance.json", payload)


def _cmd_keywords(cfg, writer):
    corp, processed = _prepare_text(cfg, writer)
    attrs = _load_attrs(cfg, writer)
    table = lexistats.arf_table(processed)
    ranking = lexistats.arf_ranking(table)
    curve = lexistats.coverage_curve(processed, ranking)
    lex = lexistats.select_lexicon(curve, ranking, cfg["target"])
    psi = structure.rank_product(structure.rank_table(processed, attrs))
    by_id = {d.description_id: d for d in processed}
    rows = []
    for image_id, descs in sorted(corp.by_image().items()):
        ordered = [by_id[d.id] for d in sorted(descs, key=lambda d: d.id)
                   if d.id in by_id]
        keywords = retrieval.extract_keywords(ordered, lex, attrs, psi,
                                              n_desc=cfg["n_desc"])
        for position, (lemma, attribute, support) in enumerate(keywords, start=1):
            rows.append((image_id, position, lemma, attribute, support))
    writer.write_csv("keywords.csv",
                     ["image_id", "position", "lemma", "attribute", "support"], rows)


def _cmd_imagestats(cfg, writer):
    image_dir = Path(cfg["images"])
    paths = sorted(p for p in image_dir.iterdir()
                   if p.suffix.lower() in (".png", ".ppm"))
    if not paths:
        raise imagestats.ImageStatsError(f"no PNG/PPM images in {image_dir}")
    writer.record_input(image_dir)
    offsets = tuple(tuple(int(x) for x in pair.split(":"))
                    for pair in str(cfg["offsets"]).split(","))
    images = [imagestats.load_gray_image(p, levels=cfg["levels"]) for p in paths]
    values = imagestats.glcm_entropy_many(images, offsets=offsets,
                                          threads=cfg["threads"])
    counts, edges = imagestats.entropy_histogram(values, bins=cfg["bins"])
    writer.write_csv("entropy.csv", ["image", "entropy"],
                     [(p.name, v) for p, v in zip(paths, values)])
    writer.write_csv("histogram.csv", ["bin_lo", "bin_hi", "count"],
                     [(float(edges[i]), float(edges[i + 1]), int(c))
                      for i, c in enumerate(counts)])


def _cmd_report(cfg, writer):
    """Aggregate prior artifacts in the output dir into one summary."""
    base = Path(cfg["output_dir"]) / "artifacts"
    sections = {}
    for sub in SUBCOMMANDS:
        if sub == "report":
            continue
        subdir = base / sub
        if not subdir.is_dir():
            continue
        section = {}
        for jf in sorted(subdir.glob("*.json")):
            if jf.name == "manifest.json":
                continue
            section[jf.stem] = json.loads(jf.read_text("utf-8"))
        if section:
            sections[sub] = section
    writer.write_json("report.json", {"sections": sections})
    lines = ["# Analysis report", ""]
    for sub, section in sections.items():
        lines.append(f"## {sub}")
        for name, payload in section.items():
            lines.append(f"### {name}")
            lines.append("```json")
            lines.append(json.dumps(payload, sort_keys=True, indent=2))
            lines.append("```")
        lines.append("")
    path = writer.dir / "report.md"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    writer.artifacts.append("report.md")


HANDLERS = {
    "ingest": _cmd_ingest, "validate": _cmd_validate, "stats": _cmd_stats,
    "lexicon": _cmd_lexicon, "attributes": _cmd_attributes,
    "structure": _cmd_structure, "simstats": _cmd_simstats,
    "retrieval": _cmd_retrieval, "invariance": _cmd_invariance,
    "keywords": _cmd_keywords, "imagestats": _cmd_imagestats, "report": _cmd_report,
}

# Defaults double as the type source when reading values from a config file.
COMMON_DEFAULTS = {"output_dir": "out", "seed": 0, "threads": 1}
SUB_DEFAULTS: dict[str, dict] = {
    "ingest": {"corpus": None, "format": None},
    "validate": {"corpus": None, "format": None, "min_words": 20, "max_words": 100,
                 "min_count": 10, "max_share": 0.09, "min_valid": 5,
                 "share_basis": "valid"},
    "stats": {"corpus": None, "format": None, "lemmas": None, "stopwords": None,
              "spell": False, "pos": None},
    "lexicon": {"corpus": None, "format": None, "lemmas": None, "stopwords": None,
                "spell": False, "pos": None, "target": 0.95},
    "attributes": {"corpus": None, "format": None, "lemmas": None, "stopwords": None,
                   "spell": False, "pos": None, "embeddings": None,
                   "embeddings_format": "text", "curation": None, "damping": 0.9},
    "structure": {"corpus": None, "format": None, "lemmas": None, "stopwords": None,
                  "spell": False, "pos": None, "curation": None, "alpha": 0.05},
    "simstats": {"corpus": None, "format": None, "embeddings": None,
                 "embeddings_format": "text", "anosim_mode": "subsample",
                 "permutations": 999, "per_image": 5, "max_images": 1000},
    "retrieval": {"text_embeddings": None, "image_embeddings": None, "cases": None,
                  "meta": None, "embeddings_format": "text", "ks": "1,5,10,20,100",
                  "mode": "material"},
    "invariance": {"embeddings": None, "meta": None, "embeddings_format": "text",
                   "mode": "geometry", "compare": None},
    "keywords": {"corpus": None, "format": None, "lemmas": None, "stopwords": None,
                 "spell": False, "pos": None, "curation": None, "target": 0.95,
                 "n_desc": 5},
    "imagestats": {"images": None, "levels": 64, "offsets": "1:0,0:1", "bins": 20},
    "report": {},
}
REQUIRED: dict[str, tuple[str, ...]] = {
    "ingest": ("corpus",), "validate": ("corpus",), "stats": ("corpus",),
    "lexicon": ("corpus",), "attributes": ("corpus", "embeddings"),
    "structure": ("corpus", "curation"), "simstats": ("corpus", "embeddings"),
    "retrieval": ("text_embeddings", "image_embeddings", "cases"),
    "invariance": ("embeddings", "meta"), "keywords": ("corpus", "curation"),
    "imagestats": ("images",), "report": (),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fabriclex",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand")
    for sub in SUBCOMMANDS:
        sp = subs.add_parser(sub)
        sp.add_argument("--config", default=None, help="key=value config file")
        for key, default in {**COMMON_DEFAULTS, **SUB_DEFAULTS[sub]}.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                sp.add_argument(flag, action="store_const", const=True, default=None)
            elif isinstance(default, int) and not isinstance(default, bool):
                sp.add_argument(flag, type=int, default=None)
            elif isinstance(default, float):
                sp.add_argument(flag, type=float, default=None)
            else:
                sp.add_argument(flag, default=None)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    if not args.subcommand:
        parser.print_usage(sys.stderr)
        return 2
    sub = args.subcommand
    try:
        file_config = _load_config_file(args.config)
        defaults = {**COMMON_DEFAULTS, **SUB_DEFAULTS[sub]}
        cfg = _effective(args, file_config, defaults)
        missing = [k for k in REQUIRED[sub] if not cfg.get(k)]
        if missing:
            print(f"{sub}: missing required option(s): "
                  + ", ".join("--" + m.replace("_", "-") for m in missing),
                  file=sys.stderr)
            return 2
        writer = ArtifactWriter(Path(cfg["output_dir"]), sub,
                                {k: v for k, v in cfg.items() if k != "output_dir"},
                                seed=cfg["seed"])
        HANDLERS[sub](cfg, writer)
        writer.finish()
        return 0
    except DATA_ERRORS as e:
        print(f"{sub}: error: {e}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    code = dispatch(sys.argv[1:] if argv is None else argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
