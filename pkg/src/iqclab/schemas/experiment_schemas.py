from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..models.experiment_models import EnergyReport, ExperimentConfig, NonlinearResult, RelaxedResult
from .density_schemas import DensityModelSchema, parse_matrix, to_model
from .envelope_schemas import OptimizerSchema
from .grid_schemas import GridFieldSchema


class ExperimentSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: DensityModelSchema
    m: int = Field(default=8, ge=4)
    boundary: Optional[list[list[float]]] = None
    dirichlet: Union[Literal["all", "none"], list[str]] = "all"
    load: Optional[list] = None  # nodal vectors, nested (m + 1)^n x n
    project_load: bool = False  # remove net force and first moment before validating
    eps_list: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025], min_length=1)
    modes: int = Field(default=4, ge=1)
    flow_steps: int = Field(default=16, ge=4)
    quadrature: int = Field(default=3, ge=1, le=5)
    allow_upper_bound: bool = False
    optimizer: OptimizerSchema = Field(default_factory=OptimizerSchema)
    seed: Optional[int] = None

    _parse_boundary = field_validator("boundary", mode="before")(parse_matrix)

    def to_config(self, seed: int) -> ExperimentConfig:
        # local import: solver pulls in jax
        from ..core.solver import project_admissible_load

        load = None
        if self.load is not None:
            load = np.asarray(self.load, dtype=float)
            if self.project_load:
                load = project_admissible_load(load, self.m)
        return ExperimentConfig(
            model=to_model(self.model),
            m=self.m,
            boundary=np.array(self.boundary) if self.boundary is not None else None,
            dirichlet=self.dirichlet,
            load=load,
            eps_list=tuple(self.eps_list),
            optimizer=self.optimizer.to_options(seed),
            seed=seed,
            modes=self.modes,
            flow_steps=self.flow_steps,
            quadrature=self.quadrature,
            allow_upper_bound=self.allow_upper_bound,
        )


class MinimizeConfig(ExperimentSchema):
    target: Literal["relaxed", "nonlinear", "both"] = "relaxed"
    eps: float = Field(default=0.05, gt=0.0, le=1.0)


class RelaxedSchema(BaseModel):
    energy: float
    iterations: int
    converged: bool
    field: GridFieldSchema

    @classmethod
    def from_result(cls, result: RelaxedResult) -> "RelaxedSchema":
        return cls(
            energy=result.energy,
            iterations=result.iterations,
            converged=result.converged,
            field=GridFieldSchema.from_field(result.field),
        )


class NonlinearSchema(BaseModel):
    eps: float
    energy: float
    steps: int
    det_residual: float
    iterations: int
    converged: bool
    field: GridFieldSchema

    @classmethod
    def from_result(cls, result: NonlinearResult) -> "NonlinearSchema":
        return cls(
            eps=result.eps,
            energy=result.energy,
            steps=result.steps,
            det_residual=result.det_residual,
            iterations=result.iterations,
            converged=result.converged,
            field=GridFieldSchema.from_field(result.field),
        )


class MinimizeReport(BaseModel):
    relaxed: Optional[RelaxedSchema] = None
    nonlinear: Optional[NonlinearSchema] = None
    seed: int


class EnergyReportSchema(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    eps: list[float]
    E_eps: list[float]
    E_rel: float
    gap: list[float]
    minimizer_distance: list[float]
    order: float
    seed: int
    relaxed: RelaxedSchema
    nonlinear: list[NonlinearSchema]

    @classmethod
    def from_report(cls, report: EnergyReport, seed: int) -> "EnergyReportSchema":
        return cls(
            eps=[r.eps for r in report.nonlinear],
            E_eps=[r.energy for r in report.nonlinear],
            E_rel=report.relaxed.energy,
            gap=report.gaps(),
            minimizer_distance=report.minimizer_distance(),
            order=report.order,
            seed=seed,
            relaxed=RelaxedSchema.from_result(report.relaxed),
            nonlinear=[NonlinearSchema.from_result(r) for r in report.nonlinear],
        )
