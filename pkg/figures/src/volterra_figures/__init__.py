"""Batch figure rendering for the Volterra simulation CSV outputs.

The plotting layer never recomputes statistics: it trusts the CSVs and only
re-fits the rate slope as a consistency cross-check against the stored
value.  Rendering is deterministic: the same input produces byte-identical
images.
"""

__version__ = "0.1.0"

from .plots import FigureJob, SchemaError, render

__all__ = ["FigureJob", "SchemaError", "render", "__version__"]
