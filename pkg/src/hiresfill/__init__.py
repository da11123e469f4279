"""Guided PatchMatch inpainting for high-resolution images with preference-based candidate curation."""

__version__ = "0.1.0"
