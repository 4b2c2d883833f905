"""Figure rendering for mvstable artifacts."""

__version__ = "0.1.0"

from .render import FIGURE_KINDS, ArtifactError, FigureSpec, render

__all__ = ["FIGURE_KINDS", "ArtifactError", "FigureSpec", "render"]
