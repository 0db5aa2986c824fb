"""plotview: static figures from emlab trace/summary files."""

from .render import KINDS, FigureSpec, PlotDataError, render

__version__ = "0.1.0"

__all__ = ["FigureSpec", "PlotDataError", "render", "KINDS"]
