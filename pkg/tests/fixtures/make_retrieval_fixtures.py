#!/usr/bin/env python3
"""Regenerate the committed retrieval regression fixtures.

Deterministic: material directions, image variants and text queries all
come from one seeded generator. Run from anywhere; writes next to this
file. The baseline CSV is the frozen output the regression test compares
against byte-for-byte.
"""

import json
from pathlib import Path

import numpy as np

from fabriclex.embeddings import EmbeddingStore, save_vectors
from fabriclex.retrieval import RetrievalCase, load_image_meta, topk_recall

HERE = Path(__file__).parent / "retrieval"
N_MATERIALS = 20
GEOMETRIES = ("baseline", "sphere", "plane_draped")
QUERIES_PER_MATERIAL = 2
DIM = 16
KS = (1, 5, 10, 20, 60)


def main():
    HERE.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(20240601))
    bases = rng.normal(size=(N_MATERIALS, DIM))

    images, meta_rows = {}, []
    for m in range(N_MATERIALS):
        for geom in GEOMETRIES:
            key = f"m{m:02d}_{geom}"
            images[key] = bases[m] + 0.35 * rng.normal(size=DIM)
            meta_rows.append((key, f"m{m:02d}", geom, "baseline"))

    queries, cases = {}, []
    for m in range(N_MATERIALS):
        for q in range(QUERIES_PER_MATERIAL):
            key = f"q{m:02d}_{q}"
            queries[key] = bases[m] + 2.4 * rng.normal(size=DIM)
            cases.append({"query_key": key, "truth_material": f"m{m:02d}",
                          "candidate_filter": {}})

    save_vectors(EmbeddingStore(images), HERE / "images.txt", "text")
    save_vectors(EmbeddingStore(queries), HERE / "queries.txt", "text")
    with open(HERE / "meta.csv", "w", encoding="utf-8") as fh:
        fh.write("image_id,material_id,geometry,lighting\n")
        for row in meta_rows:
            fh.write(",".join(row) + "\n")
    with open(HERE / "cases.jsonl", "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case) + "\n")

    store_q = EmbeddingStore(queries)
    store_i = EmbeddingStore(images)
    meta = load_image_meta(HERE / "meta.csv")
    table = topk_recall(store_q, store_i,
                        [RetrievalCase(c["query_key"], c["truth_material"]) for c in cases],
                        ks=KS, meta=meta)
    with open(HERE / "baseline_recall.csv", "w", encoding="utf-8") as fh:
        fh.write("K,recall\n")
        for k in table.ks:
            fh.write(f"{k},{table.recall[k]!r}\n")
    print("recall:", {k: round(table.recall[k], 4) for k in table.ks})


if __name__ == "__main__":
    main()
