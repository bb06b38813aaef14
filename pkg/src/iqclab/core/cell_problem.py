"""
Discrete test fields on the unit box and the optimizer driver behind every
cell problem and relaxed minimization.

Two field spaces, both tensor-product B-splines on a uniform mesh of m cells
per axis, evaluated at Gauss points:

  "nodal"  each displacement component is a trilinear (bilinear) nodal field;
           no constraint besides vanishing on the Dirichlet faces.
  "curl"   the field is the curl of a C^1 quadratic-spline vector potential
           (n = 3) or the rotated gradient of a stream function (n = 2). It is
           divergence free at every point, not only at the quadrature points,
           so the discrete admissible set sits inside the continuous one.

Basis functions whose support reaches a Dirichlet face are dropped, which
makes the potential and its gradient (hence the field) vanish there.

Gradients are exact derivatives of the splines at the Gauss points, not
central differences of nodal values cell by cell.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline
from scipy.optimize import minimize

from .divfree import curl_terms, discrete_curl, potential_components
from .errors import NumericalFailure
from .matcore import trace
from ..models.cell_models import CellProblem, CellProblemResult, OptimizerOptions
from ..models.grid_models import AXIS_NAMES, GridField, parse_faces

logger = logging.getLogger(__name__)


class OptimizerDivergedError(NumericalFailure):
    pass


class NonFiniteEnergyError(NumericalFailure):
    pass


def _knots(m: int, degree: int, low_free: bool, high_free: bool) -> list[np.ndarray]:
    h = 1.0 / m
    if degree == 2:
        first, last = (-2 if low_free else 0), (m - 1 if high_free else m - 3)
        return [h * np.arange(j, j + 4) for j in range(first, last + 1)]
    first, last = (0 if low_free else 1), (m if high_free else m - 1)
    return [h * np.arange(j - 1, j + 2) for j in range(first, last + 1)]


def _basis_tables(knots: list[np.ndarray], x: np.ndarray, max_order: int) -> np.ndarray:
    """tables[order, q, j] = d^order B_j(x_q); zero outside each support."""
    tables = np.zeros((max_order + 1, len(x), len(knots)))
    for col, t in enumerate(knots):
        spline = BSpline.basis_element(t, extrapolate=False)
        for order in range(max_order + 1):
            fn = spline if order == 0 else spline.derivative(order)
            tables[order, :, col] = np.nan_to_num(fn(x), nan=0.0)
    return tables


def gauss_axis(m: int, quadrature: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1], `quadrature` per cell of width 1/m."""
    xi, wi = leggauss(quadrature)
    h = 1.0 / m
    x = ((np.arange(m)[:, None] + 0.5 * (xi[None, :] + 1.0)) * h).reshape(-1)
    return x, np.tile(0.5 * h * wi, m)


def gauss_grid(n: int, m: int, quadrature: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss points (N, n) and weights (N,) on the unit box."""
    x, w = gauss_axis(m, quadrature)
    points = np.stack(np.meshgrid(*[x] * n, indexing="ij"), axis=-1).reshape(-1, n)
    weights = w
    for _ in range(n - 1):
        weights = np.multiply.outer(weights, w)
    return points, weights.reshape(-1)


def _unit_orders(n: int, *axes: int) -> tuple[int, ...]:
    orders = [0] * n
    for a in axes:
        orders[a] += 1
    return tuple(orders)


class FieldSpace:
    """Linear map coefficients -> (field values, field gradient) at the quadrature points."""

    def __init__(self, n: int, m: int, kind: str = "curl", quadrature: int = 3, dirichlet="all"):
        if kind not in ("curl", "nodal"):
            raise ValueError(f"Unknown field space {kind!r}")
        self.n, self.m, self.kind = n, m, kind
        self.faces = parse_faces(n, dirichlet)
        self.h = 1.0 / m
        self.degree = 2 if kind == "curl" else 1
        self.components = potential_components(n) if kind == "curl" else n

        x, _ = gauss_axis(m, quadrature)
        self.knots = [
            _knots(m, self.degree, f"{AXIS_NAMES[a]}-" not in self.faces, f"{AXIS_NAMES[a]}+" not in self.faces)
            for a in range(n)
        ]
        self.tables = [_basis_tables(k, x, self.degree) for k in self.knots]
        self.quad_shape = (len(x),) * n
        self.points, self.weights = gauss_grid(n, m, quadrature)
        self.coeff_shape = tuple(len(k) for k in self.knots)
        self.size = self.components * int(np.prod(self.coeff_shape))

        if kind == "curl":
            terms = curl_terms(n)
            self.value_terms = [[(s, k, _unit_orders(n, j)) for s, k, j in terms[i]] for i in range(n)]
            self.grad_terms = [
                [[(s, k, _unit_orders(n, j, l)) for s, k, j in terms[i]] for l in range(n)] for i in range(n)
            ]
        else:
            self.value_terms = [[(1.0, i, _unit_orders(n))] for i in range(n)]
            self.grad_terms = [[[(1.0, i, _unit_orders(n, l))] for l in range(n)] for i in range(n)]

    def start_scale(self, field_gradient: float) -> float:
        """Coefficient size giving grad phi of order `field_gradient`."""
        return field_gradient * self.h ** self.degree

    def _forward(self, coeffs, tables, orders) -> np.ndarray:
        out = coeffs
        for a in range(self.n):
            out = np.tensordot(out, tables[a][orders[a]], axes=([0], [1]))
        return out.reshape(-1)

    def _adjoint(self, values, orders, tables=None) -> np.ndarray:
        tables = tables or self.tables
        out = values.reshape(tuple(t.shape[1] for t in tables))
        for a in range(self.n):
            out = np.tensordot(out, tables[a][orders[a]], axes=([0], [0]))
        return out

    def _coefficients(self, flat: np.ndarray) -> np.ndarray:
        return np.asarray(flat, dtype=float).reshape((self.components,) + self.coeff_shape)

    def gradient(self, flat: np.ndarray) -> np.ndarray:
        C = self._coefficients(flat)
        cache: dict = {}
        G = np.zeros((len(self.weights), self.n, self.n))
        for i in range(self.n):
            for l in range(self.n):
                for sign, k, orders in self.grad_terms[i][l]:
                    if (k, orders) not in cache:
                        cache[(k, orders)] = self._forward(C[k], self.tables, orders)
                    G[:, i, l] += sign * cache[(k, orders)]
        return G

    def gradient_adjoint(self, P: np.ndarray) -> np.ndarray:
        collected: dict = {}
        for i in range(self.n):
            for l in range(self.n):
                for sign, k, orders in self.grad_terms[i][l]:
                    collected[(k, orders)] = collected.get((k, orders), 0.0) + sign * P[:, i, l]
        return self._assemble(collected)

    def values(self, flat: np.ndarray) -> np.ndarray:
        C = self._coefficients(flat)
        U = np.zeros((len(self.weights), self.n))
        for i in range(self.n):
            for sign, k, orders in self.value_terms[i]:
                U[:, i] += sign * self._forward(C[k], self.tables, orders)
        return U

    def values_adjoint(self, P: np.ndarray, tables=None) -> np.ndarray:
        collected: dict = {}
        for i in range(self.n):
            for sign, k, orders in self.value_terms[i]:
                collected[(k, orders)] = collected.get((k, orders), 0.0) + sign * P[:, i]
        return self._assemble(collected, tables)

    def _assemble(self, collected: dict, tables=None) -> np.ndarray:
        out = np.zeros((self.components,) + self.coeff_shape)
        for (k, orders), values in collected.items():
            out[k] += self._adjoint(values, orders, tables)
        return out.reshape(-1)

    def nodal_load_vector(self, load: np.ndarray) -> np.ndarray:
        """Coefficient gradient of the load work h^n sum_nodes load . phi(node).

        The work is linear in the coefficients, so this vector is the whole map.
        """
        nodes = np.linspace(0.0, 1.0, self.m + 1)
        tables = [_basis_tables(k, nodes, self.degree) for k in self.knots]
        flat = np.asarray(load, dtype=float).reshape(-1, self.n) * self.h ** self.n
        return self.values_adjoint(flat, tables)

    def values_at(self, flat: np.ndarray, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Field values on the tensor grid `axes`, shape (len(axes[0]), ..., n)."""
        C = self._coefficients(flat)
        tables = [_basis_tables(k, np.asarray(x, dtype=float), self.degree) for k, x in zip(self.knots, axes)]
        shape = tuple(len(x) for x in axes)
        out = np.zeros(shape + (self.n,))
        for i in range(self.n):
            for sign, k, orders in self.value_terms[i]:
                out[..., i] += sign * self._forward(C[k], tables, orders).reshape(shape)
        return out

    def sample(self, flat: np.ndarray) -> GridField:
        """MAC representation of the field: exact face averages of the curl, or face-centre values."""
        C = self._coefficients(flat)
        nodes = self.h * np.arange(self.m + 1)
        centres = self.h * (np.arange(self.m) + 0.5)
        if self.kind == "curl":
            potential = []
            for k in range(self.components):
                axes = [centres if (self.n == 3 and a == k) else nodes for a in range(self.n)]
                tables = [_basis_tables(kn, x, 0) for kn, x in zip(self.knots, axes)]
                values = self._forward(C[k], tables, (0,) * self.n).reshape(tuple(len(x) for x in axes))
                for label in self.faces:
                    a = AXIS_NAMES.index(label[0])
                    if self.n == 2 or a != k:
                        index = [slice(None)] * self.n
                        index[a] = 0 if label[1] == "-" else self.m
                        values[tuple(index)] = 0.0
                potential.append(values)
            return discrete_curl(potential, self.m, dirichlet=self.faces)
        comps = []
        for i in range(self.n):
            axes = [nodes if a == i else centres for a in range(self.n)]
            values = self.values_at(flat, axes)[..., i]
            for label in self.faces:
                if AXIS_NAMES.index(label[0]) == i:
                    index = [slice(None)] * self.n
                    index[i] = 0 if label[1] == "-" else self.m
                    values[tuple(index)] = 0.0
            comps.append(values)
        return GridField(n=self.n, m=self.m, components=tuple(comps), dirichlet=self.faces)


@dataclass
class OptimizationOutcome:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    start_values: list[float]
    message: str


def multistart_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    size: int,
    options: OptimizerOptions,
    scale: float,
    extra_starts: Optional[list[np.ndarray]] = None,
) -> OptimizationOutcome:
    """L-BFGS-B from the zero vector, any extra starts, then seeded random starts; best result wins."""
    rng = np.random.default_rng(options.seed)
    starts = [np.zeros(size)] + [np.asarray(s, dtype=float) for s in (extra_starts or [])]
    starts += [scale * rng.standard_normal(size) for _ in range(options.restarts - 1)]
    best = None
    start_values: list[float] = []
    iterations = 0
    for index, x0 in enumerate(starts):
        f0, _ = fun(x0)
        result = minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": options.max_iters, "gtol": options.gradient_tol},
        )
        value = float(result.fun)
        if not np.isfinite(value):
            raise NonFiniteEnergyError(f"Start {index} produced a non-finite energy")
        if value > f0 + 1e-9 * (1.0 + abs(f0)):
            raise OptimizerDivergedError(f"Start {index} ended above its initial energy ({value:.6e} > {f0:.6e})")
        iterations += int(result.nit)
        start_values.append(value)
        logger.debug("start %d: %.6e -> %.6e in %d iterations (%s)", index, f0, value, result.nit, result.message)
        if best is None or value < best.fun:
            best = result
    assert best is not None
    return OptimizationOutcome(
        x=np.asarray(best.x, dtype=float),
        value=float(best.fun),
        iterations=iterations,
        converged=bool(best.success),
        start_values=start_values,
        message=str(best.message),
    )


def solve_cell_problem(
    problem: CellProblem, constraint: str, extra_starts: Optional[list[np.ndarray]] = None
) -> CellProblemResult:
    kind = "curl" if constraint == "div-free" else "nodal"
    quadrature = problem.quadrature or (3 if kind == "curl" else 2)
    space = FieldSpace(problem.n, problem.m, kind=kind, quadrature=quadrature, dirichlet="all")
    X = problem.base_point
    density = problem.density
    base_value = float(density.value(X[None])[0])
    if not np.isfinite(base_value):
        raise NonFiniteEnergyError("The density is not finite at the base point")

    def energy(coeffs: np.ndarray) -> tuple[float, np.ndarray]:
        values, grads = density.value_and_grad(X + space.gradient(coeffs))
        total = float(np.dot(space.weights, values))
        if not np.isfinite(total):
            raise NonFiniteEnergyError("Cell energy became non-finite; use a finite (penalized) density")
        return total, space.gradient_adjoint(grads * space.weights[:, None, None])

    outcome = multistart_minimize(
        energy, space.size, problem.optimizer,
        scale=space.start_scale(problem.optimizer.init_scale), extra_starts=extra_starts,
    )
    divergence = float(np.max(np.abs(trace(space.gradient(outcome.x)))))
    logger.info(
        "%s cell problem (%s, m=%d): %.6e from %.6e", constraint, density.label, problem.m, outcome.value, base_value
    )
    return CellProblemResult(
        value=outcome.value,
        base_value=base_value,
        coefficients=outcome.x,
        field=space.sample(outcome.x),
        iterations=outcome.iterations,
        converged=outcome.converged,
        start_values=outcome.start_values,
        max_divergence=divergence,
        constraint=constraint,
        message=outcome.message,
    )
