"""Discrete-time bivariate risk model with common shocks: exact laws, ruin and simulation."""

__version__ = "0.1.0"

from .model import ModelSpec, ModelValidationError, Pmf, load_model, make_model, tm1, validate_model

__all__ = [
    "__version__",
    "ModelSpec",
    "ModelValidationError",
    "Pmf",
    "load_model",
    "make_model",
    "tm1",
    "validate_model",
]
