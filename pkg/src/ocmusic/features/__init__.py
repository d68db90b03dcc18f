"""Basic music features grouped by the aesthetic dimension they feed."""
from . import complexity, harmony, symmetry

__all__ = ["complexity", "harmony", "symmetry"]
