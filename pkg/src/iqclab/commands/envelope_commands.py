"""
Envelope subcommands.

eval-envelope      closed-form nematic envelopes and the scaled qc limit
cell-problem       numerical qc / iqc value at one base point
penalized-ladder   qc values of f(X_dev) + b |tr X|^p along increasing b
"""
from __future__ import annotations

import numpy as np

from ..core.envelopes import (
    classify_region,
    nematic_V_iqc,
    nematic_V_iqc_alt,
    nematic_W_qc,
    numerical_iqc,
    numerical_qc,
    penalized_iqc,
    scaled_qc_limit,
)
from ..core.router import CommandResult, CommandRouter, RunContext
from ..models.cell_models import CellProblem
from ..schemas.envelope_schemas import (
    CellProblemConfig,
    CellProblemReport,
    EnvelopeValue,
    EvalEnvelopeConfig,
    LadderReport,
    LadderRow,
    PenalizedLadderConfig,
    ScaledLimitReport,
    ScaledLimitRow,
)
from ..schemas.grid_schemas import GridFieldSchema

router = CommandRouter(tags=["Envelopes"])


@router.command("eval-envelope", config=EvalEnvelopeConfig)
def eval_envelope(config: EvalEnvelopeConfig, context: RunContext) -> CommandResult:
    """Closed-form nematic envelope values."""
    Z = np.array(config.Z)
    if config.kind == "W_qc":
        value = float(nematic_W_qc(config.gamma, Z))
        return CommandResult(payload=EnvelopeValue(kind=config.kind, value=value, seed=context.seed))
    if config.kind == "scaled_limit":
        table = scaled_qc_limit(config.rho, Z, eps_list=config.eps_list)
        rows = [ScaledLimitRow(**{k: float(v) for k, v in row.items()}) for row in table.to_dict(orient="records")]
        report = ScaledLimitReport(rows=rows, order=table.attrs["order"], seed=context.seed)
        table["seed"] = context.seed
        return CommandResult(payload=report, table=table)
    evaluate = nematic_V_iqc if config.kind == "iqc" else nematic_V_iqc_alt
    value = float(evaluate(config.rho, Z))
    region = int(classify_region(config.rho, Z))
    return CommandResult(payload=EnvelopeValue(
        kind=config.kind, value=value, region=region if region else None, seed=context.seed
    ))


@router.command("cell-problem", config=CellProblemConfig)
def cell_problem(config: CellProblemConfig, context: RunContext) -> CommandResult:
    """Numerical qc (constraint none) or iqc (constraint div-free) envelope at X."""
    problem = CellProblem(
        density=config.density.to_density(),
        base_point=np.array(config.X),
        m=config.m,
        optimizer=config.optimizer.to_options(context.seed),
        quadrature=config.quadrature,
    )
    result = numerical_iqc(problem) if config.constraint == "div-free" else numerical_qc(problem)
    return CommandResult(payload=CellProblemReport(
        constraint=result.constraint,
        value=result.value,
        base_value=result.base_value,
        iterations=result.iterations,
        converged=result.converged,
        start_values=result.start_values,
        max_divergence=result.max_divergence,
        message=result.message,
        seed=context.seed,
        field=GridFieldSchema.from_field(result.field),
    ))


@router.command("penalized-ladder", config=PenalizedLadderConfig)
def penalized_ladder(config: PenalizedLadderConfig, context: RunContext) -> CommandResult:
    """Penalized qc ladder approaching the iqc envelope from below."""
    table = penalized_iqc(
        config.density.to_density(),
        np.array(config.X),
        b_list=config.b_list,
        m=config.m,
        p=config.p,
        optimizer=config.optimizer.to_options(context.seed),
        compare_iqc=config.compare_iqc,
    )
    rows = [
        LadderRow(
            b=float(row["b"]),
            value=float(row["value"]),
            iterations=int(row["iterations"]),
            converged=bool(row["converged"]),
            iqc_value=float(row["iqc_value"]) if "iqc_value" in row else None,
        )
        for row in table.to_dict(orient="records")
    ]
    table["seed"] = context.seed
    return CommandResult(payload=LadderReport(rows=rows, seed=context.seed), table=table)
