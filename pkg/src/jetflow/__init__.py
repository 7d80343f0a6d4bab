"""Intermittent accelerating-jet convex integration on the 2D torus.

Pseudospectral building blocks for one step of a convex-integration
iteration for the Navier-Stokes-Reynolds system, plus the verification
harness that checks its identities and scaling laws numerically.
"""

from jetflow.spectral import (
    Grid,
    NormSpec,
    ScalarField,
    SymTensorField,
    VectorField,
)

__version__ = "0.1.0"

from jetflow.scheme import (  # noqa: E402
    Knobs,
    SchemeParams,
    StepOptions,
    check_exponents,
    run_iteration_step,
)

__all__ = [
    "Grid",
    "NormSpec",
    "ScalarField",
    "SymTensorField",
    "VectorField",
    "Knobs",
    "SchemeParams",
    "StepOptions",
    "check_exponents",
    "run_iteration_step",
    "__version__",
]
