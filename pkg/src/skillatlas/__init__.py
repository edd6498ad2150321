"""Self-evolving spatial heatmap memory and heatmap-grounded reward shaping for grid puzzles."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
