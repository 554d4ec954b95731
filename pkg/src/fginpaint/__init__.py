"""Foreground-guided facial image inpainting."""

__version__ = "0.1.0"
