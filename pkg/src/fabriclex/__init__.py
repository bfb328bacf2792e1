"""Corpus analytics and retrieval evaluation for image-description datasets."""

__version__ = "0.1.0"

from . import (attributes, corpus, embeddings, imagestats, lexistats,
               retrieval, simstats, stattests, structure, textproc)

__all__ = [
    "attributes", "corpus", "embeddings", "imagestats", "lexistats",
    "retrieval", "simstats", "stattests", "structure", "textproc",
    "__version__",
]
