"""Finite-dimensional laboratory for double operator integrals and spectral
shift functions of Hermitian matrices."""

from .doi import Kernel, SeparableRepresentation, divided_difference, doi_apply, g_kernel, select_a
from .funcspace import build_phi, cutoff_split, registry_function
from .linalg import (
    HermitianOperator,
    apply_function,
    eigh,
    resolvent_power,
    resolvent_power_diff,
    schatten_norm,
    trace,
)
from .ssf import StepFunction, counting_function, krein_residual, pseudometric, xi

__version__ = "0.1.0"
