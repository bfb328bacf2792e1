import json

import numpy as np
import pytest

from fabriclex.corpus import ingest
from fabriclex.textproc import LemmaDictionary


@pytest.fixture(scope="session")
def lemma_dict():
    return LemmaDictionary.load()


@pytest.fixture()
def tiny_dict():
    return LemmaDictionary(
        mapping={"colors": "color", "colored": "color", "coloring": "color",
                 "stripes": "stripe", "softer": "soft"},
        stopwords=frozenset({"the", "is", "a", "and", "it"}),
    )


def write_corpus_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


def make_record(i, image="img1", material="mat1", describer="d1",
                text="a plain red fabric", status="accepted", **extra):
    rec = {"id": f"desc{i:03d}", "image_id": image, "material_id": material,
           "geometry": "baseline", "lighting": "baseline",
           "describer_id": describer, "text": text, "status": status}
    rec.update(extra)
    return rec


@pytest.fixture()
def toy_corpus(tmp_path):
    records = [
        make_record(1, text="the fabric is soft and red"),
        make_record(2, image="img2", material="mat2", describer="d2",
                    text="a shiny blue striped cloth"),
        make_record(3, describer="d2", text="a rough woven texture with stripes"),
    ]
    path = write_corpus_jsonl(tmp_path / "corpus.jsonl", records)
    return ingest(path)


def store_from(vectors):
    from fabriclex.embeddings import EmbeddingStore
    return EmbeddingStore({k: np.asarray(v, dtype=float) for k, v in vectors.items()})
