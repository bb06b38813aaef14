"""
Variational experiments on the unit box.

minimize_F_rel   relaxed linear functional: sum of the iqc envelope of the
                 symmetric strain minus the load work, over u = g + curl(psi)
minimize_F_eps   rescaled nonlinear functional over exactly incompressible
                 deformations y = exp(eps Z_bc) Phi(x), Phi the time-eps flow of
                 an optimizable solenoidal series
convergence_experiment
                 both of the above over an eps ladder, with the signed gaps and
                 a fitted convergence order

The nonlinear energy is differentiated with jax through the RK4 flow; the
relaxed energy reuses the spline-curl field space of the cell problems.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .cell_problem import FieldSpace, gauss_grid, multistart_minimize
from .densities import fitted_order, newton_polar
from .divfree import rk4_flow, series_velocity, SeriesVelocity
from .envelopes import NoClosedFormEnvelopeError, envelope_density
from .errors import NumericalFailure, ValidationFailure
from .matcore import matrix_exp, project_sym
from .settings import settings
from ..models.density_models import DensityModel, MultiWell, Nematic
from ..models.experiment_models import (
    EnergyReport,
    ExperimentConfig,
    InadmissibleLoadError,
    NonlinearResult,
    RelaxedResult,
    load_moments,
)
from ..models.grid_models import GridField, SolenoidalSeries

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)

MAX_FLOW_STEPS = 1024

__all__ = [
    "DetResidualExceededError",
    "InadmissibleLoadError",
    "NoClosedFormEnvelopeError",
    "convergence_experiment",
    "minimize_F_eps",
    "minimize_F_rel",
    "project_admissible_load",
]


class DetResidualExceededError(NumericalFailure):
    pass


def project_admissible_load(load, m: int) -> np.ndarray:
    """Subtract the least-squares fit c + B x so that net force and first moment vanish."""
    load = np.asarray(load, dtype=float)
    n = load.shape[-1]
    if load.shape != (m + 1,) * n + (n,):
        raise ValidationFailure(f"load must have shape {(m + 1,) * n + (n,)}, got {load.shape}")
    nodes = np.stack(np.meshgrid(*[np.arange(m + 1) / m] * n, indexing="ij"), axis=-1).reshape(-1, n)
    basis = np.hstack([np.ones((len(nodes), 1)), nodes])
    flat = load.reshape(-1, n)
    fit, *_ = np.linalg.lstsq(basis, flat, rcond=None)
    projected = (flat - basis @ fit).reshape(load.shape)
    force, moment = load_moments(projected, m)
    logger.debug("projected load: |force| %.2e, |moment| %.2e", np.abs(force).max(), np.abs(moment).max())
    return projected


def _grid_nodes(n: int, m: int) -> np.ndarray:
    return np.stack(np.meshgrid(*[np.linspace(0.0, 1.0, m + 1)] * n, indexing="ij"), axis=-1).reshape(-1, n)


def _affine_work(config: ExperimentConfig) -> float:
    """h^n sum_nodes load . Z_bc x; zero up to rounding for admissible loads."""
    if config.load is None:
        return 0.0
    nodes = _grid_nodes(config.n, config.m)
    return float(np.sum(config.load.reshape(-1, config.n) * (nodes @ config.boundary.T))) / config.m ** config.n


def _with_affine(field: GridField, Z: np.ndarray) -> GridField:
    comps = [c + (field.face_points(i) @ Z.T)[..., i] for i, c in enumerate(field.components)]
    return GridField(n=field.n, m=field.m, components=tuple(comps), dirichlet="none")


def _remove_rigid_gauge(space: FieldSpace, coeffs: np.ndarray, field: GridField) -> GridField:
    """Zero mean displacement and zero mean skew gradient (free boundary only)."""
    grad = space.gradient(coeffs)
    weights = space.weights / space.weights.sum()
    skew = np.einsum("q,qij->ij", weights, grad - np.swapaxes(grad, -1, -2)) / 2.0
    shift = weights @ (space.values(coeffs) - space.points @ skew.T)
    comps = [
        c - shift[i] - (field.face_points(i) @ skew.T)[..., i] for i, c in enumerate(field.components)
    ]
    return field.replace(comps)


def minimize_F_rel(config: ExperimentConfig) -> RelaxedResult:
    model = config.model
    density = envelope_density(model, allow_upper_bound=config.allow_upper_bound)
    if isinstance(model, MultiWell) and len(model.wells) >= 2:
        logger.warning("Relaxed run uses V itself, an upper bound for its iqc envelope")
    space = FieldSpace(config.n, config.m, kind="curl", quadrature=config.quadrature, dirichlet=config.dirichlet)
    Z = config.boundary
    w = space.weights
    load_vector = space.nodal_load_vector(config.load) if config.load is not None else None
    affine_work = _affine_work(config)

    def energy(coeffs: np.ndarray) -> tuple[float, np.ndarray]:
        values, grads = density.value_and_grad(Z + space.gradient(coeffs))
        total = float(np.dot(w, values))
        gradient = space.gradient_adjoint(grads * w[:, None, None])
        if load_vector is not None:
            total -= affine_work + float(np.dot(load_vector, coeffs))
            gradient = gradient - load_vector
        if not np.isfinite(total):
            raise NumericalFailure("Relaxed energy became non-finite")
        return total, gradient

    options = replace(config.optimizer, seed=config.seed)
    outcome = multistart_minimize(energy, space.size, options, scale=space.start_scale(options.init_scale))
    phi = space.sample(outcome.x)
    if not config.dirichlet:
        phi = _remove_rigid_gauge(space, outcome.x, phi)
    logger.info("F_rel (%s, m=%d): %.8e", density.label, config.m, outcome.value)
    return RelaxedResult(
        energy=outcome.value,
        field=_with_affine(phi, Z),
        coefficients=outcome.x,
        iterations=outcome.iterations,
        converged=outcome.converged,
    )


# Nonlinear densities written with jax.numpy

def _weighted_eigensum(weights: np.ndarray) -> Callable:
    """C -> sum_i weights_i mu_i(C), mu ascending, with V diag(weights) V^T as derivative.

    At repeated eigenvalues the eigh basis still gives a valid subgradient,
    where differentiating through eigh would divide by zero.
    """
    weights = jnp.asarray(weights)

    @jax.custom_jvp
    def eigensum(C):
        return jnp.sum(jnp.linalg.eigh(C)[0] * weights, axis=-1)

    @eigensum.defjvp
    def _eigensum_jvp(primals, tangents):
        (C,), (dC,) = primals, tangents
        mu, V = jnp.linalg.eigh(C)
        G = (V * weights) @ jnp.swapaxes(V, -1, -2)
        return jnp.sum(mu * weights, axis=-1), jnp.sum(G * dC, axis=(-2, -1))

    return eigensum


def _jax_energy(model: DensityModel, eps: float) -> Callable:
    """W_eps on stacks of deformation gradients already on SL(n)."""
    if isinstance(model, Nematic):
        eigensum = _weighted_eigensum(1.0 / model.gamma_at(eps) ** 2)
        return lambda F: eigensum(jnp.swapaxes(F, -1, -2) @ F) - 3.0
    if isinstance(model, MultiWell):
        targets = [(jnp.asarray(w.a), jnp.asarray(matrix_exp(eps * w.U)), eps ** 2 * w.w) for w in model.wells]

        def multiwell(F):
            U = jnp.swapaxes(newton_polar(F), -1, -2) @ F
            U = 0.5 * (U + jnp.swapaxes(U, -1, -2))
            values = []
            for a, target, offset in targets:
                M = U - target
                values.append(0.5 * jnp.sum((a @ M) * M, axis=(-2, -1)) + offset)
            return jnp.min(jnp.stack(values), axis=0)

        return multiwell
    if model.W_jax is None:
        raise ValidationFailure(f"Single-well density {model.name!r} has no jax form; nonlinear runs need one")
    return model.W_jax


def _nonlinear_energy(config: ExperimentConfig, eps: float, steps: int):
    n, m = config.n, config.m
    h = 1.0 / m
    points, weights = gauss_grid(n, m, config.quadrature)
    expZ = matrix_exp(eps * config.boundary)
    density = _jax_energy(config.model, eps)
    nodes = _grid_nodes(n, m)
    load = None if config.load is None else config.load.reshape(-1, n)
    shape = (3 if n == 3 else 1,) + (config.modes,) * n
    faces = config.dirichlet
    weights = jnp.asarray(weights / eps ** config.model.p)

    def energy(theta):
        coeffs = jnp.reshape(theta, shape)
        _, F = rk4_flow(
            jnp, lambda x: series_velocity(jnp, coeffs, x, faces), jnp.asarray(points), eps, steps, tangent=True
        )
        total = jnp.sum(weights * density(jnp.asarray(expZ) @ F))
        if load is not None:
            y_nodes, _ = rk4_flow(
                jnp, lambda x: series_velocity(jnp, coeffs, x, faces, jacobian=False), jnp.asarray(nodes), eps, steps,
                tangent=False,
            )
            u = (y_nodes @ jnp.asarray(expZ).T - nodes) / eps
            total = total - h ** n * jnp.sum(jnp.asarray(load) * u)
        return total

    value_and_grad = jax.jit(jax.value_and_grad(energy))

    def fun(theta: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = value_and_grad(jnp.asarray(theta))
        return float(value), np.asarray(grad, dtype=float)

    return fun, int(np.prod(shape)), shape


def _det_residual(config: ExperimentConfig, coeffs: np.ndarray, eps: float, steps: int) -> float:
    velocity = SeriesVelocity(SolenoidalSeries(n=config.n, coefficients=coeffs, dirichlet=config.dirichlet))
    grid = GridField.zeros(config.n, config.m, dirichlet="none")
    points = np.concatenate([grid.node_points().reshape(-1, config.n), grid.cell_centres().reshape(-1, config.n)])
    _, F = rk4_flow(np, velocity, points, eps, steps, tangent=True)
    # det exp(eps Z_bc) = 1 for traceless Z_bc
    return float(np.max(np.abs(np.linalg.det(F) - 1.0)))


def _displacement_field(config: ExperimentConfig, coeffs: np.ndarray, eps: float, steps: int) -> GridField:
    velocity = SeriesVelocity(SolenoidalSeries(n=config.n, coefficients=coeffs, dirichlet=config.dirichlet))
    expZ = matrix_exp(eps * config.boundary)
    grid = GridField.zeros(config.n, config.m, dirichlet="none")
    comps = []
    for i in range(config.n):
        x = grid.face_points(i)
        y, _ = rk4_flow(np, velocity, x.reshape(-1, config.n), eps, steps, tangent=False)
        u = (y @ expZ.T - x.reshape(-1, config.n)) / eps
        comps.append(u[:, i].reshape(x.shape[:-1]))
    return grid.replace(comps)


def minimize_F_eps(config: ExperimentConfig, eps: float) -> NonlinearResult:
    """Upper estimate of inf F_eps over flow-generated incompressible deformations."""
    if not 0.0 < eps <= 1.0:
        raise ValidationFailure(f"eps must lie in (0, 1], got {eps}")
    options = replace(config.optimizer, seed=config.seed)
    steps = config.flow_steps
    warm: Optional[np.ndarray] = None
    iterations = 0
    while True:
        fun, size, shape = _nonlinear_energy(config, eps, steps)
        outcome = multistart_minimize(
            fun, size, options, scale=options.init_scale, extra_starts=[warm] if warm is not None else None
        )
        iterations += outcome.iterations
        coeffs = outcome.x.reshape(shape)
        residual = _det_residual(config, coeffs, eps, steps)
        if residual <= settings.DET_RESIDUAL_BUDGET:
            break
        if steps >= MAX_FLOW_STEPS:
            raise DetResidualExceededError(
                f"det residual {residual:.3e} above {settings.DET_RESIDUAL_BUDGET:.1e} at {steps} flow steps"
            )
        logger.info("eps=%g: det residual %.3e at %d steps, doubling", eps, residual, steps)
        steps *= 2
        warm = outcome.x
        options = replace(options, restarts=1)
    logger.info(
        "F_eps (eps=%g, m=%d): %.8e, %d steps, det residual %.2e", eps, config.m, outcome.value, steps, residual
    )
    return NonlinearResult(
        eps=float(eps),
        energy=outcome.value,
        field=_displacement_field(config, coeffs, eps, steps),
        coefficients=coeffs,
        steps=steps,
        det_residual=residual,
        iterations=iterations,
        converged=outcome.converged,
    )


def convergence_experiment(config: ExperimentConfig, jobs: Optional[int] = None) -> EnergyReport:
    relaxed = minimize_F_rel(config)
    workers = max(1, jobs or settings.JOBS)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        nonlinear = list(pool.map(lambda eps: minimize_F_eps(config, eps), config.eps_list))
    report = EnergyReport(relaxed=relaxed, nonlinear=nonlinear)
    report.order = fitted_order(config.eps_list, report.gaps())
    for result, gap in zip(nonlinear, report.gaps()):
        logger.info("eps=%g: E_eps=%.8e gap=%+.3e", result.eps, result.energy, gap)
    return report


def affine_energy(config: ExperimentConfig) -> float:
    """Relaxed energy of the affine field g itself (no load)."""
    density = envelope_density(config.model, allow_upper_bound=config.allow_upper_bound)
    return float(density(project_sym(config.boundary)))
