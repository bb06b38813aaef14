"""
Discrete solenoidal fields on the MAC grid.

The velocity components live on cell faces, vector potentials on cell edges
(n = 3) or nodes (n = 2). Taking the discrete curl of any edge potential
gives a face field whose cell divergences telescope to exact zeros, which is
what every incompressible construction in the package relies on.

Smooth solenoidal fields come from `SolenoidalSeries`: a cosine expansion of
a vector potential, damped by a polynomial envelope on the Dirichlet faces.
Its velocity and velocity gradient are analytic, which lets `flow_map`
integrate the deformation gradient alongside the trajectories.
"""
from __future__ import annotations

import logging
from typing import Optional, Protocol

import numpy as np
from numpy.polynomial import Polynomial
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import cg

from .errors import NumericalFailure, ValidationFailure
from .settings import settings
from ..models.grid_models import (
    AXIS_NAMES,
    DivergenceCorrection,
    FlowResult,
    GridField,
    SolenoidalSeries,
    mac_shape,
    parse_faces,
)

logger = logging.getLogger(__name__)

MEAN_DIV_TOL = 1e-10
SOLENOIDAL_TOL = 1e-8
BOX_TOL = 1e-12


class NonZeroMeanDivergenceError(ValidationFailure):
    pass


class NotSolenoidalError(ValidationFailure):
    pass


class StepOutOfDomainError(NumericalFailure):
    pass


class PoissonSolveError(NumericalFailure):
    pass


def potential_components(n: int) -> int:
    return 3 if n == 3 else 1


def curl_terms(n: int) -> list[list[tuple[float, int, int]]]:
    """For each velocity component i, terms (sign, k, j) with phi_i = sum sign * d_j psi_k."""
    if n == 2:
        return [[(1.0, 0, 1)], [(-1.0, 0, 0)]]
    return [
        [(1.0, 2, 1), (-1.0, 1, 2)],
        [(1.0, 0, 2), (-1.0, 2, 0)],
        [(1.0, 1, 0), (-1.0, 0, 1)],
    ]


def potential_shape(n: int, m: int, k: int) -> tuple[int, ...]:
    """Edge potential along axis k (n = 3); nodal stream function (n = 2)."""
    if n == 2:
        return (m + 1, m + 1)
    return tuple(m if a == k else m + 1 for a in range(n))


def potential_points(n: int, m: int, k: int, length: float = 1.0, origin=None) -> np.ndarray:
    """Edge midpoints (n = 3) or nodes (n = 2) carrying potential component k."""
    origin = origin or (0.0,) * n
    h = length / m
    axes = []
    for a in range(n):
        if n == 3 and a == k:
            axes.append(origin[a] + h * (np.arange(m) + 0.5))
        else:
            # linspace keeps the far face exactly at origin + length
            axes.append(np.linspace(origin[a], origin[a] + length, m + 1))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def discrete_div(f: GridField) -> np.ndarray:
    """Per-cell divergence, shape (m,) * n."""
    return sum(np.diff(comp, axis=a) for a, comp in enumerate(f.components)) / f.h


def discrete_curl(potential, m: int, dirichlet=None, length: float = 1.0, origin=None) -> GridField:
    potential = [np.asarray(p, dtype=float) for p in potential]
    n = 3 if len(potential) == 3 else 2
    for k, p in enumerate(potential):
        if p.shape != potential_shape(n, m, k):
            raise ValidationFailure(f"Potential component {k} has shape {p.shape}, expected {potential_shape(n, m, k)}")
    h = length / m
    components = []
    for terms in curl_terms(n):
        components.append(sum(sign * np.diff(potential[k], axis=j) for sign, k, j in terms) / h)
    return GridField(n=n, m=m, components=tuple(components), dirichlet=dirichlet, length=length, origin=origin)


def sample_field(fn, n: int, m: int, dirichlet="none", length: float = 1.0, origin=None) -> GridField:
    """MAC field from point values of fn(points) -> (..., n) at face centres."""
    template = GridField.zeros(n, m, dirichlet="none", length=length, origin=origin)
    comps = []
    for axis in range(n):
        comp = np.asarray(fn(template.face_points(axis)), dtype=float)[..., axis]
        comps.append(comp)
    faces = parse_faces(n, dirichlet)
    for label in faces:
        axis = AXIS_NAMES.index(label[0])
        index = 0 if label[1] == "-" else m
        slicer = [slice(None)] * n
        slicer[axis] = index
        comps[axis][tuple(slicer)] = 0.0
    return GridField(n=n, m=m, components=tuple(comps), dirichlet=faces, length=length, origin=origin)


def _gradient_blocks(n: int, m: int, h: float, active: np.ndarray) -> list[sparse.csr_array]:
    """Per-axis face-gradient matrices on interior faces whose two cells are both active."""
    index = np.arange(m ** n).reshape((m,) * n)
    flat_active = active.reshape(-1)
    blocks = []
    for axis in range(n):
        lower = np.take(index, np.arange(m - 1), axis=axis).reshape(-1)
        upper = np.take(index, np.arange(1, m), axis=axis).reshape(-1)
        free = flat_active[lower] & flat_active[upper]
        rows = np.flatnonzero(free)
        data = np.concatenate([-np.ones(rows.size), np.ones(rows.size)]) / h
        G = sparse.coo_array(
            (data, (np.concatenate([rows, rows]), np.concatenate([lower[rows], upper[rows]]))),
            shape=(lower.size, m ** n),
        )
        blocks.append(G.tocsr())
    return blocks


def bogovskii_correct(
    f: GridField,
    active: Optional[np.ndarray] = None,
    mean_tol: float = MEAN_DIV_TOL,
    rtol: Optional[float] = None,
) -> DivergenceCorrection:
    """Remove the divergence of f by a discrete Neumann-Poisson gradient correction.

    Only interior faces between two `active` cells are changed, so masked and
    boundary faces (and everything next to an inactive cell) keep their values.
    """
    n, m, h = f.n, f.m, f.h
    active = np.ones((m,) * n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if active.shape != (m,) * n:
        raise ValidationFailure(f"Active-cell mask needs shape {(m,) * n}, got {active.shape}")
    div = discrete_div(f)
    net = float(np.sum(div[active]) * h ** n)
    if abs(net) > mean_tol:
        raise NonZeroMeanDivergenceError(f"Divergence has non-zero mean {net:.3e}; no solenoidal correction exists")
    if np.any(np.abs(div[~active]) > SOLENOIDAL_TOL):
        raise NotSolenoidalError("Inactive cells carry divergence the correction cannot reach")

    b = div[active]
    divergence_norm = float(np.sqrt(np.sum(div[active] ** 2) * h ** n))
    if b.size == 0 or np.max(np.abs(b)) <= 1e-13:
        return DivergenceCorrection(
            field=f, correction_norm=0.0, divergence_norm=divergence_norm,
            max_divergence=float(np.max(np.abs(div))) if div.size else 0.0, iterations=0, residual=0.0,
        )

    blocks = _gradient_blocks(n, m, h, active)
    A = sum(G.T @ G for G in blocks).tocsr()
    cols = np.flatnonzero(active.reshape(-1))
    A_act = A[cols][:, cols]
    rhs = -(b - b.mean())

    iterations = 0

    def _count(_xk):
        nonlocal iterations
        iterations += 1

    p_act, info = cg(A_act, rhs, rtol=rtol or settings.CG_RTOL, atol=0.0, maxiter=20 * cols.size, callback=_count)
    if info > 0:
        raise PoissonSolveError(f"Conjugate gradients did not converge in {info} iterations")
    residual = float(np.linalg.norm(A_act @ p_act - rhs))
    logger.debug("Poisson correction: %d CG iterations, residual %.3e", iterations, residual)

    p = np.zeros(m ** n)
    p[cols] = p_act
    components = []
    for axis, (comp, G) in enumerate(zip(f.components, blocks)):
        grad = (G @ p).reshape(tuple(m - 1 if a == axis else m for a in range(n)))
        new = np.array(comp)
        interior = [slice(None)] * n
        interior[axis] = slice(1, m)
        new[tuple(interior)] -= grad
        components.append(new)
    g = f.replace(components)
    div_g = discrete_div(g)
    correction = float(np.sqrt(sum(np.sum((a - c) ** 2) for a, c in zip(g.components, f.components)) * h ** n))
    return DivergenceCorrection(
        field=g,
        correction_norm=correction,
        divergence_norm=divergence_norm,
        max_divergence=float(np.max(np.abs(div_g))),
        iterations=iterations,
        residual=residual,
    )


def extend_solenoidal(f: GridField, outer_m: int) -> GridField:
    """Solenoidal extension of f to a box of outer_m cells of the same spacing, centred on f's box.

    f is padded by zero and the annulus alone is corrected, so the result
    agrees with f on its own box and vanishes on the outer boundary.
    """
    pad = outer_m - f.m
    if pad < 2 or pad % 2:
        raise ValidationFailure(f"outer_m - m must be a positive even number, got {pad}")
    if np.max(np.abs(discrete_div(f))) > SOLENOIDAL_TOL:
        raise NotSolenoidalError("extend_solenoidal needs a solenoidal field")
    offset = pad // 2
    n, h = f.n, f.h
    origin = tuple(o - offset * h for o in f.origin)
    comps = []
    for axis, comp in enumerate(f.components):
        outer = np.zeros(mac_shape(n, outer_m, axis))
        block = tuple(
            slice(offset, offset + f.m + 1) if a == axis else slice(offset, offset + f.m) for a in range(n)
        )
        outer[block] = comp
        comps.append(outer)
    padded = GridField(n=n, m=outer_m, components=tuple(comps), dirichlet="all", length=outer_m * h, origin=origin)
    annulus = np.ones((outer_m,) * n, dtype=bool)
    annulus[(slice(offset, offset + f.m),) * n] = False
    # flux leaving the inner box equals its (tiny) total divergence
    tolerance = max(MEAN_DIV_TOL, SOLENOIDAL_TOL * f.length ** n)
    return bogovskii_correct(padded, active=annulus, mean_tol=tolerance).field


# Smooth potentials

def envelope_polynomial(low: bool, high: bool) -> Polynomial:
    """x^3 for a Dirichlet face at 0, (1 - x)^3 for one at 1, multiplied."""
    poly = Polynomial([1.0])
    if low:
        poly = poly * Polynomial([0.0, 0.0, 0.0, 1.0])
    if high:
        poly = poly * Polynomial([1.0, -1.0]) ** 3
    return poly


def _horner(xp, coefficients, x):
    out = xp.zeros_like(x)
    for c in coefficients[::-1]:
        out = out * x + float(c)
    return out


def axis_tables(xp, x, modes: int, low: bool, high: bool):
    """Values, first and second derivatives of P(x) cos(k pi x), k < modes; each (len(x), modes)."""
    poly = envelope_polynomial(low, high)
    P = [_horner(xp, q.coef, x)[:, None] for q in (poly, poly.deriv(1), poly.deriv(2))]
    w = np.pi * np.arange(modes)
    c = xp.cos(x[:, None] * w)
    s = xp.sin(x[:, None] * w)
    value = P[0] * c
    first = P[1] * c - P[0] * w * s
    second = P[2] * c - 2.0 * P[1] * w * s - P[0] * w ** 2 * c
    return (value, first, second)


def _contract(xp, tables, coeffs):
    if len(tables) == 2:
        return xp.einsum("pi,pj,ij->p", tables[0], tables[1], coeffs)
    return xp.einsum("pi,pj,pl,ijl->p", tables[0], tables[1], tables[2], coeffs)


def series_velocity(xp, coefficients, points, dirichlet, jacobian: bool = True):
    """Velocity curl(psi) and (optionally) its gradient at `points` (N, n)."""
    n = points.shape[-1]
    modes = coefficients.shape[1]
    tables = [
        axis_tables(xp, points[:, a], modes, f"{AXIS_NAMES[a]}-" in dirichlet, f"{AXIS_NAMES[a]}+" in dirichlet)
        for a in range(n)
    ]
    cache = {}

    def derivative(k, orders):
        key = (k, orders)
        if key not in cache:
            cache[key] = _contract(xp, [tables[a][orders[a]] for a in range(n)], coefficients[k])
        return cache[key]

    def unit(*axes):
        orders = [0] * n
        for a in axes:
            orders[a] += 1
        return tuple(orders)

    terms = curl_terms(n)
    u = xp.stack([sum(sign * derivative(k, unit(j)) for sign, k, j in terms[i]) for i in range(n)], axis=-1)
    if not jacobian:
        return u, None
    rows = []
    for i in range(n):
        rows.append(xp.stack(
            [sum(sign * derivative(k, unit(j, l)) for sign, k, j in terms[i]) for l in range(n)], axis=-1
        ))
    return u, xp.stack(rows, axis=-2)


def random_series(
    n: int, modes: int = 4, smoothness: float = 1.0, seed: int = 0, dirichlet="all", amplitude: float = 1.0
) -> SolenoidalSeries:
    """Gaussian potential coefficients damped by (1 + |k|^2)^(-smoothness)."""
    if modes < 1:
        raise ValidationFailure("Need at least one mode per axis")
    rng = np.random.default_rng(seed)
    k = np.stack(np.meshgrid(*[np.arange(modes)] * n, indexing="ij"), axis=0)
    decay = (1.0 + np.sum(k ** 2, axis=0)) ** (-smoothness)
    coeffs = amplitude * rng.standard_normal((potential_components(n),) + (modes,) * n) * decay
    return SolenoidalSeries(n=n, coefficients=coeffs, dirichlet=dirichlet)


def sample_series(series: SolenoidalSeries, m: int) -> GridField:
    """MAC field of the series: discrete curl of its potential at edge midpoints / nodes."""
    n = series.n
    potential = []
    modes = series.modes
    for k in range(potential_components(n)):
        pts = potential_points(n, m, k)
        flat = pts.reshape(-1, n)
        tables = [
            axis_tables(np, flat[:, a], modes, f"{AXIS_NAMES[a]}-" in series.dirichlet,
                        f"{AXIS_NAMES[a]}+" in series.dirichlet)[0]
            for a in range(n)
        ]
        potential.append(_contract(np, tables, series.coefficients[k]).reshape(pts.shape[:-1]))
    return discrete_curl(potential, m, dirichlet=series.dirichlet)


def random_solenoidal(n: int, m: int, smoothness: float = 1.0, seed: int = 0, modes: int = 4) -> GridField:
    if m < 4:
        raise ValidationFailure(f"random_solenoidal needs m >= 4, got {m}")
    series = random_series(n, modes=modes, smoothness=smoothness, seed=seed)
    logger.debug("random_solenoidal: seed %d, low-mode fraction %.3f", seed, series.low_mode_fraction(1))
    return sample_series(series, m)


# Flow maps

class Velocity(Protocol):
    n: int
    has_jacobian: bool
    bounds: Optional[tuple[np.ndarray, np.ndarray]]

    def __call__(self, points: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]: ...


class SeriesVelocity:
    has_jacobian = True
    bounds = None

    def __init__(self, series: SolenoidalSeries):
        self.series = series
        self.n = series.n

    def __call__(self, points):
        return series_velocity(np, self.series.coefficients, points, self.series.dirichlet)


class AffineVelocity:
    """u(x) = A x + b."""
    has_jacobian = True
    bounds = None

    def __init__(self, A, b=None):
        self.A = np.asarray(A, dtype=float)
        self.n = self.A.shape[0]
        self.b = np.zeros(self.n) if b is None else np.asarray(b, dtype=float)

    def __call__(self, points):
        u = points @ self.A.T + self.b
        return u, np.broadcast_to(self.A, points.shape[:-1] + self.A.shape)


class GridVelocity:
    """Piecewise trilinear (bilinear) interpolation of a MAC field on its box.

    Cell-centred directions are padded to the walls with the edge value rather
    than extended by zero. The interpolant is only approximately solenoidal and
    has no Jacobian, so flows of it report the central-difference det residual,
    which is limited by the mesh width (first order in h), not by the time step.
    """
    has_jacobian = False

    def __init__(self, field: GridField):
        self.field = field
        self.n = field.n
        lo = np.asarray(field.origin)
        self.bounds = (lo, lo + field.length)
        self._interpolators = []
        for comp_axis, comp in enumerate(field.components):
            coords, values = [], comp
            for a in range(field.n):
                axis = field.axis_coordinates(a, comp_axis)
                if a != comp_axis:
                    # cell-centred direction: extend to the walls with the edge value
                    axis = np.concatenate([[lo[a]], axis, [lo[a] + field.length]])
                    values = np.concatenate(
                        [np.take(values, [0], axis=a), values, np.take(values, [-1], axis=a)], axis=a
                    )
                coords.append(axis)
            self._interpolators.append(RegularGridInterpolator(tuple(coords), values, bounds_error=True))

    def __call__(self, points):
        lo, hi = self.bounds
        if np.any(points < lo - BOX_TOL) or np.any(points > hi + BOX_TOL):
            raise StepOutOfDomainError("A trajectory left the interpolation box")
        clipped = np.clip(points, lo, hi)
        u = np.stack([interp(clipped) for interp in self._interpolators], axis=-1)
        return u, None


def rk4_flow(xp, velocity, points, t: float, steps: int, tangent: bool = True):
    """Classical RK4 for y' = u(y) and, with `tangent`, F' = grad u(y) F from F(0) = Id."""
    dt = t / steps
    n = points.shape[-1]
    y = points
    F = xp.broadcast_to(xp.eye(n), points.shape[:-1] + (n, n)) if tangent else None

    def rhs(y_, F_):
        u, J = velocity(y_)
        return u, (J @ F_ if tangent else None)

    for _ in range(steps):
        k1y, k1F = rhs(y, F)
        k2y, k2F = rhs(y + 0.5 * dt * k1y, F + 0.5 * dt * k1F if tangent else None)
        k3y, k3F = rhs(y + 0.5 * dt * k2y, F + 0.5 * dt * k2F if tangent else None)
        k4y, k4F = rhs(y + dt * k3y, F + dt * k3F if tangent else None)
        y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if tangent:
            F = F + dt / 6.0 * (k1F + 2.0 * k2F + 2.0 * k3F + k4F)
    return y, F


def flow_points(velocity: Velocity, points: np.ndarray, t: float, steps: int) -> np.ndarray:
    """Positions y(t, x) for x in `points` (N, n)."""
    y, _ = rk4_flow(np, velocity, np.asarray(points, dtype=float), t, steps, tangent=False)
    return y


def flow_map(velocity: Velocity, eps: float, steps: int, m: int = 16) -> FlowResult:
    """Time-eps flow of `velocity` at every node of the grid over its box (unit box if unbounded).

    `det_residual` is max |det grad y - 1| from the RK4 tangent flow when the
    velocity provides its Jacobian. Otherwise it falls back to central
    differences of y on the node grid and `residual_source` says "central".
    """
    if steps < 4:
        raise ValidationFailure(f"flow_map needs at least 4 steps, got {steps}")
    if isinstance(velocity, GridVelocity):
        grid = GridField.zeros(velocity.n, velocity.field.m, dirichlet="none",
                               length=velocity.field.length, origin=velocity.field.origin)
    else:
        grid = GridField.zeros(velocity.n, m, dirichlet="none")
    nodes = grid.node_points()
    flat = nodes.reshape(-1, grid.n)
    y, F = rk4_flow(np, velocity, flat, eps, steps, tangent=velocity.has_jacobian)
    y = y.reshape(nodes.shape)

    # gradient of the mapped positions by central differences on the node grid
    gradients = np.gradient(y, grid.h, axis=tuple(range(grid.n)), edge_order=2)
    F_central = np.stack(gradients, axis=-1)
    det_central = float(np.max(np.abs(np.linalg.det(F_central) - 1.0)))
    det_tangent = float(np.max(np.abs(np.linalg.det(F) - 1.0))) if F is not None else det_central
    source = "tangent" if F is not None else "central"
    logger.debug("flow_map: eps=%g steps=%d det residual %.3e (central %.3e)", eps, steps, det_tangent, det_central)
    return FlowResult(
        eps=float(eps),
        steps=int(steps),
        nodes=nodes,
        displacement=y - nodes,
        det_residual=det_tangent,
        det_residual_central=det_central,
        residual_source=source,
    )
