"""
Subcommand registry.

Each module under `iqclab.commands` owns a `CommandRouter` and decorates its
handlers with `@router.command(...)`; the CLI collects every router it finds.
A handler receives its validated config schema and the run context and
returns a `CommandResult`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import pandas as pd
from pydantic import BaseModel


@dataclass(frozen=True)
class RunContext:
    seed: int
    jobs: int
    format: str


@dataclass
class CommandResult:
    payload: BaseModel
    table: Optional[pd.DataFrame] = None  # preferred CSV body when present


Handler = Callable[[BaseModel, RunContext], CommandResult]


@dataclass(frozen=True)
class Command:
    name: str
    handler: Handler
    config: type[BaseModel]
    help: str = ""


@dataclass
class CommandRouter:
    tags: list[str] = field(default_factory=list)
    commands: dict[str, Command] = field(default_factory=dict)

    def command(self, name: str, config: type[BaseModel], help: str = "") -> Callable[[Handler], Handler]:
        def decorator(handler: Handler) -> Handler:
            if name in self.commands:
                raise ValueError(f"Subcommand {name!r} registered twice")
            doc = (handler.__doc__ or "").strip().splitlines()
            summary = help or (doc[0] if doc else "")
            self.commands[name] = Command(name=name, handler=handler, config=config, help=summary)
            return handler

        return decorator
