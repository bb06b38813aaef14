from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.envelopes import (
    CellDensity,
    NematicIqcDensity,
    NematicLimitDensity,
    QuadraticDensity,
    TwoWellDensity,
    ZeroDensity,
    limit_density,
)
from ..core.settings import settings
from ..models.cell_models import OptimizerOptions
from .density_schemas import DensityModelSchema, parse_matrix, to_model
from .grid_schemas import GridFieldSchema


class OptimizerSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iters: int = Field(default=500, ge=1)
    gradient_tol: float = Field(default=1e-8, gt=0.0)
    restarts: int = Field(default_factory=lambda: settings.DEFAULT_RESTARTS, ge=1)
    init_scale: float = Field(default=0.25, ge=0.0)

    def to_options(self, seed: int) -> OptimizerOptions:
        return OptimizerOptions(
            max_iters=self.max_iters,
            gradient_tol=self.gradient_tol,
            restarts=self.restarts,
            seed=seed,
            init_scale=self.init_scale,
        )


class CellDensitySchema(BaseModel):
    """Finite densities for cell problems; `model-V` wraps the linearized limit of a density model."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["zero", "quadratic", "two-well", "nematic-V", "nematic-V-iqc", "model-V"]
    n: Literal[2, 3] = 3
    scale: float = 1.0
    projection: Literal["sym", "ils"] = "sym"
    U: Optional[list[list[float]]] = None
    rho: Optional[list[float]] = None
    model: Optional[DensityModelSchema] = None

    _parse_U = field_validator("U", mode="before")(parse_matrix)

    @model_validator(mode="after")
    def required_parameters(self):
        needs = {"two-well": "U", "nematic-V": "rho", "nematic-V-iqc": "rho", "model-V": "model"}
        name = needs.get(self.kind)
        if name is not None and getattr(self, name) is None:
            raise ValueError(f"Density kind {self.kind!r} needs {name!r}")
        return self

    def to_density(self) -> CellDensity:
        if self.kind == "zero":
            return ZeroDensity(n=self.n)
        if self.kind == "quadratic":
            return QuadraticDensity(n=self.n, scale=self.scale, projection=self.projection)
        if self.kind == "two-well":
            return TwoWellDensity(np.array(self.U))
        if self.kind == "nematic-V":
            return NematicLimitDensity(self.rho)
        if self.kind == "nematic-V-iqc":
            return NematicIqcDensity(self.rho)
        return limit_density(to_model(self.model))


class EvalEnvelopeConfig(BaseModel):
    """`iqc`/`iqc_alt`/`scaled_limit` read rho and Z; `W_qc` reads gamma and Z as the deformation gradient."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["iqc", "iqc_alt", "W_qc", "scaled_limit"] = "iqc"
    rho: Optional[list[float]] = Field(default=None, min_length=3, max_length=3)
    gamma: Optional[list[float]] = Field(default=None, min_length=3, max_length=3)
    Z: list[list[float]]
    eps_list: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025], min_length=1)
    seed: Optional[int] = None

    _parse_Z = field_validator("Z", mode="before")(parse_matrix)

    @model_validator(mode="after")
    def required_parameters(self):
        if self.kind == "W_qc" and self.gamma is None:
            raise ValueError("kind 'W_qc' needs gamma")
        if self.kind != "W_qc" and self.rho is None:
            raise ValueError(f"kind {self.kind!r} needs rho")
        return self


class EnvelopeValue(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    kind: str
    value: float
    region: Optional[int] = None
    seed: int


class ScaledLimitRow(BaseModel):
    eps: float
    value: float
    limit: float
    gap: float


class ScaledLimitReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    rows: list[ScaledLimitRow]
    order: float
    seed: int


class CellProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    density: CellDensitySchema
    X: list[list[float]]
    constraint: Literal["none", "div-free"] = "div-free"
    m: int = Field(default=8, ge=4)
    quadrature: Optional[int] = Field(default=None, ge=1, le=5)
    optimizer: OptimizerSchema = Field(default_factory=OptimizerSchema)
    seed: Optional[int] = None

    _parse_X = field_validator("X", mode="before")(parse_matrix)


class CellProblemReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    constraint: str
    value: float
    base_value: float
    iterations: int
    converged: bool
    start_values: list[float]
    max_divergence: float
    message: str
    seed: int
    field: GridFieldSchema


class PenalizedLadderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    density: CellDensitySchema
    X: list[list[float]]
    b_list: list[float] = Field(default_factory=lambda: [1.0, 4.0, 16.0, 64.0, 256.0], min_length=1)
    p: float = Field(default=2.0, gt=1.0)
    m: int = Field(default=8, ge=4)
    compare_iqc: bool = False
    optimizer: OptimizerSchema = Field(default_factory=OptimizerSchema)
    seed: Optional[int] = None

    _parse_X = field_validator("X", mode="before")(parse_matrix)

    @field_validator("b_list")
    @classmethod
    def increasing(cls, v: list[float]) -> list[float]:
        if v[0] < 1.0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("b_list must be strictly increasing with entries >= 1")
        return v


class LadderRow(BaseModel):
    b: float
    value: float
    iterations: int
    converged: bool
    iqc_value: Optional[float] = None


class LadderReport(BaseModel):
    rows: list[LadderRow]
    seed: int
