"""Produce embedding files for the analytics toolkit from external encoders."""

__version__ = "0.1.0"

from .jobs import EmbedJob, embed_images, embed_texts, export_word_vectors

__all__ = ["EmbedJob", "embed_texts", "embed_images", "export_word_vectors",
           "__version__"]
