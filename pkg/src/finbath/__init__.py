"""Finite heat bath thermodynamics: mean-work bounds, LP-optimal maps, single-shot work."""
from .bath import BathSpec, DomainError, discretize
from .system import DiagonalState, SystemSpec, Transition

__version__ = "0.1.0"
__all__ = ["BathSpec", "DiagonalState", "DomainError", "SystemSpec", "Transition", "discretize"]
