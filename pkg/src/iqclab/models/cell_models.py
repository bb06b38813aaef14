from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from ..core.errors import ValidationFailure
from ..core.matcore import as_matrix
from .grid_models import GridField

if TYPE_CHECKING:
    from ..core.envelopes import CellDensity


class CellProblemError(ValidationFailure):
    pass


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 500
    gradient_tol: float = 1e-8
    restarts: int = 4  # total number of starts, the zero field first
    seed: int = 0
    init_scale: float = 0.25  # typical size of |grad phi| for the random starts

    def __post_init__(self):
        if self.max_iters < 1:
            raise CellProblemError("max_iters must be positive")
        if self.gradient_tol <= 0.0:
            raise CellProblemError("gradient_tol must be positive")
        if self.restarts < 1:
            raise CellProblemError("At least one start is needed")


@dataclass
class CellProblem:
    """inf over admissible test fields phi of the average of density(X + grad phi) on (0, 1)^n."""
    density: "CellDensity"
    base_point: np.ndarray
    m: int = 8
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    quadrature: Optional[int] = None  # Gauss points per axis and cell

    def __post_init__(self):
        self.base_point = as_matrix(self.base_point, n=self.density.n)
        if self.base_point.ndim != 2:
            raise CellProblemError("The base point must be a single matrix")
        if self.m < 4:
            raise CellProblemError(f"Cell problems need m >= 4, got {self.m}")
        if self.quadrature is not None and not 1 <= self.quadrature <= 5:
            raise CellProblemError("quadrature must be between 1 and 5 points per axis")

    @property
    def n(self) -> int:
        return int(self.base_point.shape[0])


@dataclass
class CellProblemResult:
    value: float
    base_value: float
    coefficients: np.ndarray
    field: GridField
    iterations: int
    converged: bool
    start_values: list[float]
    max_divergence: float
    constraint: str
    message: str = ""
