"""Branch-and-price solver for budget-constrained Bayesian Stackelberg security games."""

from .model import (
    Column,
    GameSG,
    GameSSG,
    MixedStrategy,
    Response,
    SolveReport,
    ValidationError,
    validate,
)

__all__ = [
    "Column",
    "GameSG",
    "GameSSG",
    "MixedStrategy",
    "Response",
    "SolveReport",
    "ValidationError",
    "validate",
]
