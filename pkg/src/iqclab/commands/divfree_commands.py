"""
Solenoidal-field subcommands.

flow          time-eps flow map of a smooth or grid velocity, with the det residual
correct-div   Poisson divergence correction of a MAC field (optionally extended to a larger box)
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from ..core.divfree import (
    GridVelocity,
    SeriesVelocity,
    bogovskii_correct,
    discrete_div,
    extend_solenoidal,
    flow_map,
    random_series,
    random_solenoidal,
)
from ..core.router import CommandResult, CommandRouter, RunContext
from ..models.grid_models import AXIS_NAMES
from ..schemas.grid_schemas import (
    CorrectDivConfig,
    CorrectionReport,
    FlowConfig,
    FlowReport,
    GridFieldSchema,
    GridSource,
)

router = CommandRouter(tags=["Solenoidal fields"])


@router.command("flow", config=FlowConfig)
def flow(config: FlowConfig, context: RunContext) -> CommandResult:
    """Flow map of a solenoidal velocity at every grid node.

    Grid velocities report the h-limited central-difference residual; see `residual_source`.
    """
    if isinstance(config.velocity, GridSource):
        velocity = GridVelocity(config.velocity.field.to_field())
    else:
        source = config.velocity
        series = random_series(
            config.n, modes=source.modes, smoothness=source.smoothness, seed=context.seed,
            dirichlet=source.dirichlet, amplitude=source.amplitude,
        )
        velocity = SeriesVelocity(series)
    result = flow_map(velocity, config.eps, config.steps, m=config.m)
    n = result.nodes.shape[-1]
    nodes = result.nodes.reshape(-1, n)
    displacement = result.displacement.reshape(-1, n)
    columns = {AXIS_NAMES[a]: nodes[:, a] for a in range(n)}
    columns.update({f"u_{AXIS_NAMES[a]}": displacement[:, a] for a in range(n)})
    table = pd.DataFrame(columns)
    report = FlowReport(
        eps=result.eps,
        steps=result.steps,
        m=int(result.nodes.shape[0]) - 1,
        det_residual=result.det_residual,
        det_residual_central=result.det_residual_central,
        residual_source=result.residual_source,
        max_displacement=float(np.max(np.abs(result.displacement))),
        seed=context.seed,
    )
    return CommandResult(payload=report, table=table)


def _perturbed_field(config: CorrectDivConfig, seed: int):
    base = random_solenoidal(config.n, config.m, seed=seed)
    rng = np.random.default_rng(seed)
    comps = []
    for axis, comp in enumerate(base.components):
        noise = rng.standard_normal(comp.shape)
        interior = [slice(None)] * config.n
        interior[axis] = slice(1, config.m)
        bump = np.zeros_like(comp)
        bump[tuple(interior)] = noise[tuple(interior)]
        comps.append(comp + config.perturbation * bump)
    return base.replace(comps)


@router.command("correct-div", config=CorrectDivConfig)
def correct_div(config: CorrectDivConfig, context: RunContext) -> CommandResult:
    """Remove the divergence of a MAC field with zero-mean divergence."""
    field = config.field.to_field() if config.field is not None else _perturbed_field(config, context.seed)
    correction = bogovskii_correct(field)
    corrected = correction.field
    if config.outer_m is not None:
        corrected = extend_solenoidal(corrected, config.outer_m)
    report = CorrectionReport(
        correction_norm=correction.correction_norm,
        divergence_norm=correction.divergence_norm,
        ratio=correction.ratio,
        max_divergence=float(np.max(np.abs(discrete_div(corrected)))),
        iterations=correction.iterations,
        residual=correction.residual,
        seed=context.seed,
        field=GridFieldSchema.from_field(corrected),
    )
    return CommandResult(payload=report)
