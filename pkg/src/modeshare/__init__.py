"""Road-network embeddings for zone-level mode-share models."""

__version__ = "0.1.0"

from .errors import DataError, ModeShareError, NumericalError, NumericalWarning, UsageError
from .graph import Graph, TractAssignment, build_graph

__all__ = [
    "DataError",
    "Graph",
    "ModeShareError",
    "NumericalError",
    "NumericalWarning",
    "TractAssignment",
    "UsageError",
    "build_graph",
]
