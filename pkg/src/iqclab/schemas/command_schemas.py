from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class ErrorReport(BaseModel):
    error: str  # "validation" or "numerical"
    message: str
    details: list[Any] = Field(default_factory=list)
