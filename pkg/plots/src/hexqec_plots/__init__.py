"""Figure rendering for hexqec result files."""

from .render import FIGURE_KINDS, PlotSpec, SchemaError, render

__all__ = ["FIGURE_KINDS", "PlotSpec", "SchemaError", "render"]
