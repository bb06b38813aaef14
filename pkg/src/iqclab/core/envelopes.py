"""
Envelope formulas and numerical envelopes.

Closed forms:
  nematic_V_iqc / nematic_V_iqc_alt  the iqc envelope of the nematic limit
                                     density (two algebraically different
                                     but equal forms)
  nematic_W_qc                       the known quasiconvex envelope of the
                                     nonlinear nematic density
  scaled_qc_limit                    eps^-2 W_eps^qc(exp(eps Z)) against the
                                     iqc envelope, per eps

Numerical cell problems (`numerical_qc`, `numerical_iqc`, `penalized_iqc`)
minimize the cell average of a `CellDensity` over discrete test fields built
in `cell_problem`. Densities handed to them must be finite everywhere; use the
"on dev" forms below, never the raw +inf-valued incompressible densities.
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .cell_problem import solve_cell_problem
from .densities import eval_V, fitted_order
from .errors import NumericalFailure, ValidationFailure
from .matcore import (
    as_matrix,
    fro_norm,
    is_ils,
    matrix_exp,
    project_dev,
    project_ils,
    project_sym,
    singular_values,
    sym_eigenvalues,
    trace,
)
from .settings import settings
from ..models.cell_models import CellProblem, CellProblemResult, OptimizerOptions
from ..models.density_models import DensityModel, MultiWell, Nematic, SingleWell

logger = logging.getLogger(__name__)

TRACE_TOL = 1e-9
GAMMA_TOL = 1e-10
DEFAULT_B_LIST = (1.0, 4.0, 16.0, 64.0, 256.0)


class RegionClassificationError(NumericalFailure):
    pass


class NoClosedFormEnvelopeError(ValidationFailure):
    pass


def _check_rho(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.shape != (3,) or np.any(np.diff(rho) < 0.0) or abs(rho.sum()) > 1e-12:
        raise ValidationFailure("rho must be three ascending numbers summing to zero")
    return rho


def _flat(Z, n: int = 3) -> tuple[np.ndarray, tuple[int, ...]]:
    Z = as_matrix(Z, n=n)
    return Z.reshape(-1, n, n), Z.shape[:-2]


def _shaped(values: np.ndarray, batch: tuple[int, ...]):
    values = values.reshape(batch)
    return values.item() if batch == () else values


# Nematic iqc envelope

def _regions(d: np.ndarray, tol: float) -> np.ndarray:
    """First matching region (1..4) for each row of d = lambda - rho, 0 when none matches."""
    d1, d2, d3 = d[:, 0], d[:, 1], d[:, 2]
    conditions = [
        (d1 >= -tol) & (d3 <= tol),
        (d1 <= tol) & (d3 - d2 <= tol),
        (d1 - d2 <= tol) & (d2 - d3 <= tol),
        (d2 - d1 <= tol) & (d3 >= -tol),
    ]
    return np.select(conditions, [1, 2, 3, 4], default=0)


def _iqc_values(d: np.ndarray, region: np.ndarray) -> np.ndarray:
    return np.select(
        [region == 1, region == 2, region == 3, region == 4],
        [np.zeros(len(d)), 3.0 * d[:, 0] ** 2, 2.0 * np.sum(d ** 2, axis=1), 3.0 * d[:, 2] ** 2],
        default=np.nan,
    )


def _iqc_alt_values(d: np.ndarray, region: np.ndarray) -> np.ndarray:
    # twice the display that reads as a sum of squares of averaged deviations
    half = np.select(
        [region == 1, region == 2, region == 3, region == 4],
        [
            np.zeros(len(d)),
            d[:, 0] ** 2 + 2.0 * ((d[:, 1] + d[:, 2]) / 2.0) ** 2,
            np.sum(d ** 2, axis=1),
            2.0 * ((d[:, 0] + d[:, 1]) / 2.0) ** 2 + d[:, 2] ** 2,
        ],
        default=np.nan,
    )
    return 2.0 * half


def _classify(rho, Z):
    rho = _check_rho(rho)
    flat, batch = _flat(Z)
    traceless = np.abs(trace(flat)) <= TRACE_TOL * (1.0 + fro_norm(flat))
    d = np.zeros((len(flat), 3))
    if np.any(traceless):
        d[traceless] = sym_eigenvalues(project_ils(flat[traceless])) - rho
    region = np.where(traceless, _regions(d, settings.TIE_TOL), 0)
    if np.any(traceless & (region == 0)):
        raise RegionClassificationError("A traceless matrix matched none of the four envelope regions")
    return d, region, traceless, batch


def classify_region(rho, Z):
    """Envelope region 1..4 of each traceless Z (0 where tr Z != 0)."""
    _, region, _, batch = _classify(rho, Z)
    return _shaped(region, batch)


def nematic_V_iqc(rho, Z):
    """iqc envelope of Z -> 2 sum (lambda_i(Z_sym) - rho_i)^2; +inf when tr Z != 0."""
    d, region, traceless, batch = _classify(rho, Z)
    values = np.where(traceless, _iqc_values(d, region), np.inf)
    return _shaped(values, batch)


def nematic_V_iqc_alt(rho, Z):
    d, region, traceless, batch = _classify(rho, Z)
    values = np.where(traceless, _iqc_alt_values(d, region), np.inf)
    return _shaped(values, batch)


# Nematic quasiconvex envelope of W_eps

def _check_gamma(gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.shape != (3,) or np.any(gamma <= 0.0) or np.any(np.diff(gamma) < 0.0):
        raise ValidationFailure("gamma must be three ascending positive numbers")
    if abs(np.prod(gamma) - 1.0) > GAMMA_TOL:
        raise ValidationFailure(f"gamma must have unit product, got {np.prod(gamma):.12g}")
    return gamma


def nematic_W_qc(gamma, X):
    """Quasiconvex envelope of sum sigma_i^2/gamma_i^2 - 3 on SL(3); +inf off SL(3)."""
    gamma = _check_gamma(gamma)
    flat, batch = _flat(X)
    on_sl = np.abs(np.linalg.det(flat) - 1.0) <= settings.DET_TOL
    s = singular_values(flat) / gamma
    tol = 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        values = _qc_branches(s, tol)
    values = np.where(on_sl, np.maximum(values, 0.0), np.inf)
    return _shaped(values, batch)


def _qc_branches(s: np.ndarray, tol: float) -> np.ndarray:
    s1, s2, s3 = s[:, 0], s[:, 1], s[:, 2]
    return np.select(
        [
            (s1 >= 1.0 - tol) & (s3 <= 1.0 + tol),
            (s1 <= 1.0 + tol) & (s3 <= s2 + tol),
            (s1 <= s2 + tol) & (s2 <= s3 + tol),
            (s2 <= s1 + tol) & (s3 >= 1.0 - tol),
        ],
        [
            np.zeros(len(s)),
            s1 ** 2 + 2.0 / s1 - 3.0,
            np.sum(s ** 2, axis=1) - 3.0,
            s3 ** 2 + 2.0 / s3 - 3.0,
        ],
        default=np.nan,
    )


def scaled_qc_limit(rho, Z, eps_list: Sequence[float] = (0.1, 0.05, 0.025)) -> pd.DataFrame:
    """eps^-2 W_eps^qc(exp(eps Z)) per eps, next to its limit, the iqc envelope at Z."""
    rho = _check_rho(rho)
    Z = as_matrix(Z, n=3)
    if Z.ndim != 2 or not is_ils(Z, tol=1e-9):
        raise ValidationFailure("scaled_qc_limit needs one symmetric traceless matrix")
    Z = project_ils(Z)
    limit = float(nematic_V_iqc(rho, Z))
    rows = []
    for eps in eps_list:
        gamma = np.exp(eps * rho)
        value = float(nematic_W_qc(gamma, matrix_exp(eps * Z))) / eps ** 2
        rows.append({"eps": float(eps), "value": value, "limit": limit, "gap": value - limit})
    table = pd.DataFrame(rows)
    table.attrs["order"] = fitted_order(table["eps"], table["gap"])
    return table


# Densities with gradients, for cell problems and relaxed minimization

class CellDensity:
    """Finite energy density on stacks (N, n, n) with its gradient."""
    n: int = 3
    label: str = "density"

    def value_and_grad(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def value(self, X: np.ndarray) -> np.ndarray:
        return self.value_and_grad(X)[0]

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        values = self.value(X.reshape(-1, self.n, self.n))
        return values.reshape(X.shape[:-2]).item() if X.ndim == 2 else values.reshape(X.shape[:-2])


class ZeroDensity(CellDensity):
    """Identically zero; every envelope of it vanishes."""
    label = "zero"

    def __init__(self, n: int = 3):
        self.n = n

    def value_and_grad(self, X):
        return np.zeros(len(X)), np.zeros_like(X)


class QuadraticDensity(CellDensity):
    """scale * |P X|^2 with P the sym or ils projection (convex)."""

    def __init__(self, n: int = 3, scale: float = 1.0, projection: str = "sym"):
        if projection not in ("sym", "ils"):
            raise ValidationFailure(f"Unknown projection {projection!r}")
        self.n, self.scale, self.projection = n, float(scale), projection
        self.label = f"quadratic-{projection}"

    def value_and_grad(self, X):
        P = project_sym(X) if self.projection == "sym" else project_ils(X)
        return self.scale * np.sum(P * P, axis=(-2, -1)), 2.0 * self.scale * P


class TwoWellDensity(CellDensity):
    """min(|X_sym - U|^2, |X_sym + U|^2)."""
    label = "two-well"

    def __init__(self, U):
        self.U = project_sym(as_matrix(U))
        self.n = self.U.shape[-1]

    def value_and_grad(self, X):
        S = project_sym(X)
        minus, plus = S - self.U, S + self.U
        e_minus = np.sum(minus * minus, axis=(-2, -1))
        e_plus = np.sum(plus * plus, axis=(-2, -1))
        first = e_minus <= e_plus
        grad = 2.0 * np.where(first[:, None, None], minus, plus)
        return np.where(first, e_minus, e_plus), grad


class NematicLimitDensity(CellDensity):
    """2 sum (lambda_i - rho_i)^2 of the ils part of X."""
    label = "nematic-V"

    def __init__(self, rho):
        self.rho = _check_rho(rho)
        self.n = 3

    def value_and_grad(self, X):
        lam, V = np.linalg.eigh(project_ils(X))
        d = lam - self.rho
        grad = (V * (4.0 * d)[:, None, :]) @ np.swapaxes(V, -1, -2)
        return 2.0 * np.sum(d * d, axis=1), project_ils(grad)


class NematicIqcDensity(CellDensity):
    """The iqc envelope of NematicLimitDensity, on the ils part of X."""
    label = "nematic-V-iqc"

    def __init__(self, rho):
        self.rho = _check_rho(rho)
        self.n = 3

    def value_and_grad(self, X):
        lam, V = np.linalg.eigh(project_ils(X))
        d = lam - self.rho
        region = _regions(d, settings.TIE_TOL)
        if np.any(region == 0):
            raise RegionClassificationError("A traceless matrix matched none of the four envelope regions")
        weights = np.zeros_like(d)
        weights[region == 2, 0] = 6.0 * d[region == 2, 0]
        weights[region == 3] = 4.0 * d[region == 3]
        weights[region == 4, 2] = 6.0 * d[region == 4, 2]
        grad = (V * weights[:, None, :]) @ np.swapaxes(V, -1, -2)
        return _iqc_values(d, region), project_ils(grad)


class MultiWellLimitDensity(CellDensity):
    """min_i 1/2 <a_i (Z - U_i), Z - U_i> + w_i of the ils part Z of X."""

    def __init__(self, model: MultiWell):
        self.model = model
        self.n = model.n
        self.label = f"multiwell-V[{len(model.wells)}]"

    def value_and_grad(self, X):
        Z = project_ils(X)
        values, grads = [], []
        for well in self.model.wells:
            M = Z - well.U
            aM = well.a @ M
            values.append(0.5 * np.sum(aM * M, axis=(-2, -1)) + well.w)
            grads.append(aM)
        values_arr = np.stack(values)
        best = np.argmin(values_arr, axis=0)
        grad = np.stack(grads)[best, np.arange(len(X))]
        return values_arr[best, np.arange(len(X))], project_ils(grad)


class FiniteDifferenceDensity(CellDensity):
    """Wraps a value-only density; gradient by central differences per entry."""

    def __init__(self, fn, n: int, step: float = 1e-6, label: str = "fd"):
        self.fn, self.n, self.step, self.label = fn, n, step, label

    def value_and_grad(self, X):
        values = np.asarray(self.fn(X), dtype=float)
        grad = np.zeros_like(X)
        for i in range(self.n):
            for j in range(self.n):
                E = np.zeros((self.n, self.n))
                E[i, j] = self.step
                grad[:, i, j] = (np.asarray(self.fn(X + E)) - np.asarray(self.fn(X - E))) / (2.0 * self.step)
        return values, grad


class PenalizedDensity(CellDensity):
    """f(X_dev) + b |tr X|^p."""

    def __init__(self, base: CellDensity, b: float, p: float = 2.0):
        if b <= 0.0:
            raise ValidationFailure("Penalty weight b must be positive")
        self.base, self.b, self.p, self.n = base, float(b), float(p), base.n
        self.label = f"{base.label}+{b:g}|tr|^{p:g}"

    def value_and_grad(self, X):
        values, grad = self.base.value_and_grad(project_dev(X))
        tr = trace(X)
        penalty = self.b * np.abs(tr) ** self.p
        slope = self.b * self.p * np.abs(tr) ** (self.p - 1.0) * np.sign(tr)
        grad = project_dev(grad) + slope[:, None, None] * np.eye(self.n)
        return values + penalty, grad


def limit_density(model: DensityModel) -> CellDensity:
    """The model's linearized density V as a finite density on the ils part."""
    if isinstance(model, Nematic):
        return NematicLimitDensity(model.rho)
    if isinstance(model, MultiWell):
        return MultiWellLimitDensity(model)
    if model.name == "dist2-sl":
        return QuadraticDensity(n=model.n, scale=1.0, projection="ils")
    return FiniteDifferenceDensity(
        lambda X: eval_V(model, project_ils(X)), n=model.n, label=f"{model.name}-V"
    )


def envelope_density(model: DensityModel, allow_upper_bound: bool = False) -> CellDensity:
    """The iqc envelope of V when it is known in closed form.

    Single-well V = Q/2 and one-well multiwell V are convex, hence their own
    envelope. For two or more wells only V itself (an upper bound) is
    available, and only on explicit request.
    """
    if isinstance(model, Nematic):
        return NematicIqcDensity(model.rho)
    if isinstance(model, MultiWell) and len(model.wells) >= 2 and not allow_upper_bound:
        raise NoClosedFormEnvelopeError(
            "No closed-form iqc envelope for two or more wells; request the V upper bound explicitly"
        )
    return limit_density(model)


# Numerical envelopes

def numerical_qc(problem: CellProblem, extra_starts: Optional[list[np.ndarray]] = None) -> CellProblemResult:
    """Cell average minimized over nodal fields vanishing on the boundary.

    `extra_starts` are coefficient vectors tried after the zero field, e.g. a laminate.
    """
    return solve_cell_problem(problem, constraint="none", extra_starts=extra_starts)


def numerical_iqc(problem: CellProblem, extra_starts: Optional[list[np.ndarray]] = None) -> CellProblemResult:
    """Cell average minimized over exactly divergence-free fields (curl of a spline potential)."""
    if abs(float(np.trace(problem.base_point))) > TRACE_TOL * (1.0 + float(fro_norm(problem.base_point))):
        raise ValidationFailure("numerical_iqc needs a traceless base point")
    return solve_cell_problem(problem, constraint="div-free", extra_starts=extra_starts)


def penalized_iqc(
    density_on_dev: CellDensity,
    X,
    b_list: Sequence[float] = DEFAULT_B_LIST,
    m: int = 8,
    p: float = 2.0,
    optimizer: Optional[OptimizerOptions] = None,
    compare_iqc: bool = False,
) -> pd.DataFrame:
    """numerical_qc of f(X_dev) + b_j |tr X|^p along an increasing ladder b_j."""
    b_list = [float(b) for b in b_list]
    if not b_list or b_list[0] < 1.0 or np.any(np.diff(b_list) <= 0.0):
        raise ValidationFailure("b_list must be strictly increasing with entries >= 1")
    X = as_matrix(X, n=density_on_dev.n)
    optimizer = optimizer or OptimizerOptions()
    rows = []
    warm = None
    for b in b_list:
        problem = CellProblem(
            density=PenalizedDensity(density_on_dev, b, p), base_point=X, m=m, optimizer=optimizer
        )
        result = solve_cell_problem(problem, constraint="none", extra_starts=[warm] if warm is not None else None)
        warm = result.coefficients
        logger.info("penalized ladder: b=%g value=%.6e", b, result.value)
        rows.append({
            "b": b,
            "value": result.value,
            "iterations": result.iterations,
            "converged": result.converged,
        })
    table = pd.DataFrame(rows)
    if compare_iqc:
        reference = numerical_iqc(CellProblem(
            density=density_on_dev, base_point=project_dev(X), m=m, optimizer=optimizer
        ))
        table["iqc_value"] = reference.value
    return table
