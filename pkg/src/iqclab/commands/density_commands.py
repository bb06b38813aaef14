"""
Density subcommands.

eval-density   W, V_eps, V or the finite-difference Q of a model at one matrix
check-c        sup |V_eps - V| over a traceless ball, per eps
"""
from __future__ import annotations

import numpy as np

from ..core.densities import check_condition_C, eval_Q_fd, eval_V, eval_V_eps, eval_W, fitted_order
from ..core.errors import ValidationFailure
from ..core.router import CommandResult, CommandRouter, RunContext
from ..models.density_models import SingleWell
from ..schemas.density_schemas import (
    CheckCConfig,
    ConditionCReport,
    ConditionCRow,
    DensityValue,
    EvalDensityConfig,
    to_model,
)

router = CommandRouter(tags=["Densities"])


@router.command("eval-density", config=EvalDensityConfig)
def eval_density(config: EvalDensityConfig, context: RunContext) -> CommandResult:
    """Evaluate one of W, V_eps, V, Q_fd at a matrix."""
    model = to_model(config.model)
    X = np.array(config.X)
    if config.kind == "W":
        value = eval_W(model, config.eps, X)
    elif config.kind == "V_eps":
        value = eval_V_eps(model, config.eps, X)
    elif config.kind == "V":
        value = eval_V(model, X)
    else:
        if not isinstance(model, SingleWell):
            raise ValidationFailure("Q_fd is defined for single-well models only")
        value = eval_Q_fd(model, X, t=config.step)
    eps = None if config.kind in ("V", "Q_fd") else config.eps
    return CommandResult(payload=DensityValue(kind=config.kind, eps=eps, value=float(value), seed=context.seed))


@router.command("check-c", config=CheckCConfig)
def check_c(config: CheckCConfig, context: RunContext) -> CommandResult:
    """Estimate the condition (C) deviations on an eps ladder."""
    table = check_condition_C(
        to_model(config.model), r=config.r, eps_list=config.eps_list, samples=config.samples, seed=context.seed
    )
    rows = [
        ConditionCRow(
            eps=float(row.eps),
            sup_deviation=float(row.sup_deviation),
            argmax_norm=float(row.argmax_norm),
            samples=int(row.samples),
            r=float(row.r),
            ratio=None if np.isnan(row.ratio) else float(row.ratio),
        )
        for row in table.itertuples(index=False)
    ]
    order = fitted_order(table["eps"], table["sup_deviation"])
    table["seed"] = context.seed
    return CommandResult(payload=ConditionCReport(rows=rows, order=order, seed=context.seed), table=table)
