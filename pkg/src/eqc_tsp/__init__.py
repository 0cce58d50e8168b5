"""Depth-1 equivariant quantum circuit policies for Euclidean TSP, evaluated classically."""

__version__ = "0.1.0"

from .eqc import EqcParams, SignedLogValue, gamma_max, q_value, zz_expectation
from .instances import Dataset, TspInstance, generate, load, save

__all__ = [
    "Dataset",
    "EqcParams",
    "SignedLogValue",
    "TspInstance",
    "gamma_max",
    "generate",
    "load",
    "q_value",
    "save",
    "zz_expectation",
    "__version__",
]
