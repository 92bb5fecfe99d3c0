"""Composition-based multi-relational graph convolutions on a numpy autodiff core."""

__version__ = "0.1.0"
