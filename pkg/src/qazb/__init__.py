"""Finite-dimensional numerics for the quantum az+b group at an even root of
unity: lattice model, Schrodinger pair, quantum exponential solver,
multiplicative unitary and representation decomposition."""
from .errors import (
    CommutationError,
    ConvergenceError,
    DecompositionError,
    FormatError,
    MemoryBudgetError,
    NormalityError,
    ParameterError,
    PreconditionError,
    QazbError,
    RayError,
)
from .lattice import ZERO, GroupElement, LatticeParams, chi, chi_ray, embed, inv, make_lattice, mul

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ZERO",
    "GroupElement",
    "LatticeParams",
    "make_lattice",
    "embed",
    "mul",
    "inv",
    "chi",
    "chi_ray",
    "QazbError",
    "ParameterError",
    "RayError",
    "NormalityError",
    "CommutationError",
    "PreconditionError",
    "MemoryBudgetError",
    "DecompositionError",
    "ConvergenceError",
    "FormatError",
]
