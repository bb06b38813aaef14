from __future__ import annotations

import math
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.densities import builtin_single_well
from ..core.matcore import from_row_major
from ..models.density_models import DensityModel, MultiWell, Nematic, Well


def parse_matrix(v):
    """Accepts nested rows or a flat row-major list of n^2 numbers; returns nested rows."""
    if v is None:
        return v
    try:
        return from_row_major(v).tolist()
    except (TypeError, ValueError) as exc:
        raise ValueError(f"Not a square matrix: {exc}") from exc


class WellSchema(BaseModel):
    a: list[list[float]]
    U: list[list[float]]
    w: float = 0.0

    _parse_matrices = field_validator("a", "U", mode="before")(parse_matrix)


class SingleWellSchema(BaseModel):
    model: Literal["singlewell"] = "singlewell"
    builtin: str = "dist2-sl"
    n: Literal[2, 3] = 3


class MultiWellSchema(BaseModel):
    model: Literal["multiwell"]
    wells: list[WellSchema] = Field(min_length=1)
    p: float = 2.0


class NematicSchema(BaseModel):
    model: Literal["nematic"]
    rho: list[float] = Field(min_length=3, max_length=3)
    rho_correction: Optional[list[float]] = None
    p: float = 2.0

    @field_validator("rho")
    @classmethod
    def rho_sorted(cls, v: list[float]) -> list[float]:
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("rho must be sorted ascending")
        if not math.isclose(sum(v), 0.0, abs_tol=1e-12):
            raise ValueError("rho must sum to zero")
        return v


DensityModelSchema = Annotated[
    Union[SingleWellSchema, MultiWellSchema, NematicSchema], Field(discriminator="model")
]


def to_model(schema: Union[SingleWellSchema, MultiWellSchema, NematicSchema]) -> DensityModel:
    if isinstance(schema, NematicSchema):
        return Nematic(rho=np.array(schema.rho), rho_correction=schema.rho_correction, p=schema.p)
    if isinstance(schema, MultiWellSchema):
        wells = [Well(a=np.array(w.a), U=np.array(w.U), w=w.w) for w in schema.wells]
        return MultiWell(wells=wells, p=schema.p)
    return builtin_single_well(schema.builtin, n=schema.n)


class EvalDensityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: DensityModelSchema
    kind: Literal["W", "V_eps", "V", "Q_fd"] = "W"
    eps: float = Field(default=0.1, gt=0.0)
    X: list[list[float]]
    step: float = 1e-3  # finite-difference step for Q_fd
    seed: Optional[int] = None

    _parse_X = field_validator("X", mode="before")(parse_matrix)


class DensityValue(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    kind: str
    eps: Optional[float] = None
    value: float
    seed: int


class CheckCConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: DensityModelSchema
    r: float = Field(default=1.0, ge=0.0)
    eps_list: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025], min_length=1)
    samples: int = Field(default=1000, ge=1000)
    seed: Optional[int] = None


class ConditionCRow(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    eps: float
    sup_deviation: float
    argmax_norm: float
    samples: int
    r: float
    ratio: Optional[float] = None


class ConditionCReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    rows: list[ConditionCRow]
    order: float
    seed: int
