"""Records for the variational experiments: configuration, per-eps results and the final report."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from ..core.errors import ValidationFailure
from ..core.matcore import as_matrix
from .cell_models import OptimizerOptions
from .density_models import DensityModel
from .grid_models import GridField, parse_faces

LOAD_TOL = 1e-8


class ExperimentConfigError(ValidationFailure):
    pass


class InadmissibleLoadError(ExperimentConfigError):
    pass


def load_moments(load: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Net force sum(l) h^n and first moment sum(l (x) x) h^n of a nodal load."""
    n = load.shape[-1]
    h = 1.0 / m
    nodes = np.stack(np.meshgrid(*[h * np.arange(m + 1)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    flat = load.reshape(-1, n)
    return flat.sum(axis=0) * h ** n, flat.T @ nodes * h ** n


@dataclass
class ExperimentConfig:
    model: DensityModel
    m: int = 8
    boundary: Optional[np.ndarray] = None  # Z_bc, g(x) = Z_bc x; None means zero
    dirichlet: object = "all"
    load: Optional[np.ndarray] = None  # nodal vectors, shape (m + 1,) * n + (n,)
    eps_list: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    seed: int = 0
    modes: int = 4  # potential modes per axis of the flow velocity
    flow_steps: int = 16
    quadrature: int = 3
    allow_upper_bound: bool = False

    def __post_init__(self):
        n = self.model.n
        if self.m < 4:
            raise ExperimentConfigError(f"Experiments need m >= 4, got {self.m}")
        self.dirichlet = parse_faces(n, self.dirichlet)
        if self.boundary is None:
            self.boundary = np.zeros((n, n))
        self.boundary = as_matrix(self.boundary, n=n)
        if abs(np.trace(self.boundary)) > 1e-12:
            raise ExperimentConfigError("The boundary matrix Z_bc must be traceless")
        if not self.eps_list or any(not 0.0 < e <= 1.0 for e in self.eps_list):
            raise ExperimentConfigError("eps_list entries must lie in (0, 1]")
        if self.modes < 1 or self.flow_steps < 4:
            raise ExperimentConfigError("Need modes >= 1 and flow_steps >= 4")
        if self.load is not None:
            load = np.asarray(self.load, dtype=float)
            if load.shape != (self.m + 1,) * n + (n,):
                raise ExperimentConfigError(f"load must have shape {(self.m + 1,) * n + (n,)}, got {load.shape}")
            force, moment = load_moments(load, self.m)
            if np.max(np.abs(force)) > LOAD_TOL or np.max(np.abs(moment)) > LOAD_TOL:
                raise InadmissibleLoadError(
                    "Loads must have zero net force and zero first moment "
                    f"(|force| = {np.max(np.abs(force)):.3e}, |moment| = {np.max(np.abs(moment)):.3e})"
                )
            self.load = load
        self.eps_list = tuple(float(e) for e in self.eps_list)

    @property
    def n(self) -> int:
        return self.model.n


@dataclass
class RelaxedResult:
    energy: float
    field: GridField  # displacement g + phi, MAC layout
    coefficients: np.ndarray
    iterations: int
    converged: bool


@dataclass
class NonlinearResult:
    eps: float
    energy: float
    field: GridField  # u_eps = (y - x) / eps, MAC layout
    coefficients: np.ndarray
    steps: int
    det_residual: float
    iterations: int
    converged: bool


@dataclass
class EnergyReport:
    relaxed: RelaxedResult
    nonlinear: list[NonlinearResult]
    order: float = float("nan")

    def gaps(self) -> list[float]:
        # signed, never clamped
        return [r.energy - self.relaxed.energy for r in self.nonlinear]

    def minimizer_distance(self) -> list[float]:
        """L2 distance between each u_eps and the relaxed minimizer."""
        return [
            r.field.replace(tuple(a - b for a, b in zip(r.field.components, self.relaxed.field.components))).norm()
            for r in self.nonlinear
        ]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "eps": [r.eps for r in self.nonlinear],
            "E_eps": [r.energy for r in self.nonlinear],
            "E_rel": [self.relaxed.energy] * len(self.nonlinear),
            "gap": self.gaps(),
            "minimizer_distance": self.minimizer_distance(),
            "det_residual": [r.det_residual for r in self.nonlinear],
            "steps": [r.steps for r in self.nonlinear],
        })
