from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..models.grid_models import GridField


class GridFieldSchema(BaseModel):
    """MAC field blob; floats round-trip bit-exactly through JSON."""
    model_config = ConfigDict(extra="forbid")

    n: Literal[2, 3]
    m: int = Field(ge=1)
    layout: Literal["mac"] = "mac"
    dirichlet: list[str] = Field(default_factory=list)
    length: float = 1.0
    origin: Optional[list[float]] = None
    components: list[list]

    @classmethod
    def from_field(cls, field: GridField) -> "GridFieldSchema":
        return cls(
            n=field.n,
            m=field.m,
            dirichlet=sorted(field.dirichlet),
            length=field.length,
            origin=list(field.origin),
            components=[c.tolist() for c in field.components],
        )

    def to_field(self) -> GridField:
        return GridField(
            n=self.n,
            m=self.m,
            components=tuple(np.asarray(c, dtype=float) for c in self.components),
            dirichlet=frozenset(self.dirichlet),
            length=self.length,
            origin=tuple(self.origin) if self.origin is not None else None,
        )


class SeriesSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["series"] = "series"
    modes: int = Field(default=4, ge=1)
    smoothness: float = 1.0
    amplitude: float = 1.0
    dirichlet: Union[Literal["all", "none"], list[str]] = "all"


class GridSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["grid"]
    field: GridFieldSchema


class FlowConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: Literal[2, 3] = 3
    m: int = Field(default=16, ge=2)
    eps: float = Field(default=0.1, gt=0.0)
    steps: int = Field(default=32, ge=4)
    velocity: Union[SeriesSource, GridSource] = Field(default_factory=SeriesSource, discriminator="kind")
    seed: Optional[int] = None

    @model_validator(mode="after")
    def grid_dimension(self):
        if isinstance(self.velocity, GridSource) and self.velocity.field.n != self.n:
            raise ValueError("The velocity field dimension does not match n")
        return self


class FlowReport(BaseModel):
    eps: float
    steps: int
    m: int
    det_residual: float
    det_residual_central: float
    residual_source: Literal["tangent", "central"]
    max_displacement: float
    seed: int


class CorrectDivConfig(BaseModel):
    """Either `field` is corrected, or a random solenoidal field plus `perturbation` times a zero-mean bump."""
    model_config = ConfigDict(extra="forbid")

    field: Optional[GridFieldSchema] = None
    n: Literal[2, 3] = 3
    m: int = Field(default=16, ge=4)
    perturbation: float = 0.1
    outer_m: Optional[int] = None  # extend the corrected field to a larger box
    seed: Optional[int] = None


class CorrectionReport(BaseModel):
    correction_norm: float
    divergence_norm: float
    ratio: float
    max_divergence: float
    iterations: int
    residual: float
    seed: int
    field: GridFieldSchema
