"""
Experiment subcommands.

minimize   relaxed and/or nonlinear minimization for one configuration
converge   eps ladder of nonlinear minima against the relaxed minimum (CSV: eps, E_eps, E_rel, gap)
"""
from __future__ import annotations

from ..core.router import CommandResult, CommandRouter, RunContext
from ..core.solver import convergence_experiment, minimize_F_eps, minimize_F_rel
from ..schemas.experiment_schemas import (
    EnergyReportSchema,
    ExperimentSchema,
    MinimizeConfig,
    MinimizeReport,
    NonlinearSchema,
    RelaxedSchema,
)

router = CommandRouter(tags=["Experiments"])


@router.command("minimize", config=MinimizeConfig)
def minimize(config: MinimizeConfig, context: RunContext) -> CommandResult:
    """Minimize F_rel, F_eps at one eps, or both."""
    experiment = config.to_config(context.seed)
    report = MinimizeReport(seed=context.seed)
    if config.target in ("relaxed", "both"):
        report.relaxed = RelaxedSchema.from_result(minimize_F_rel(experiment))
    if config.target in ("nonlinear", "both"):
        report.nonlinear = NonlinearSchema.from_result(minimize_F_eps(experiment, config.eps))
    return CommandResult(payload=report)


@router.command("converge", config=ExperimentSchema)
def converge(config: ExperimentSchema, context: RunContext) -> CommandResult:
    """Run the eps ladder and report signed gaps and the fitted order."""
    report = convergence_experiment(config.to_config(context.seed), jobs=context.jobs)
    table = report.to_frame()[["eps", "E_eps", "E_rel", "gap", "minimizer_distance", "det_residual", "steps"]]
    table["seed"] = context.seed
    return CommandResult(payload=EnergyReportSchema.from_report(report, context.seed), table=table)
