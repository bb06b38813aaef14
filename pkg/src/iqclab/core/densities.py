"""
Nonlinear densities W_eps, their exponential rescalings V_eps and the
geometrically linear limits V for the single-well, multiwell and nematic
models.

Energies are plain floats; `math.inf` is the marker for "not in SL(n)" (for
W) and "not traceless" (for V). All evaluators accept one matrix or a stack
(..., n, n) and return a float or an array of the batch shape.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import ValidationFailure
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
from ..models.density_models import DensityModel, MultiWell, Nematic, SingleWell

logger = logging.getLogger(__name__)

TRACE_TOL = 1e-9
MIN_SAMPLES = 1000
POLAR_ITERATIONS = 12


class MissingQError(ValidationFailure):
    pass


class NonFiniteSampleError(ValidationFailure):
    pass


class NotDeviatoricError(ValidationFailure):
    pass


class StepOutOfRangeError(ValidationFailure):
    pass


def _flatten(X: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    n = X.shape[-1]
    return X.reshape(-1, n, n), X.shape[:-2]


def _unflatten(values: np.ndarray, batch: tuple[int, ...]):
    values = values.reshape(batch)
    return float(values) if batch == () else values


def _check_eps(eps: float) -> float:
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValidationFailure(f"eps must be a positive finite number, got {eps}")
    return float(eps)


def sqrt_gram(X: np.ndarray) -> np.ndarray:
    """sqrt(X^T X) for a stack of matrices, by symmetric eigendecomposition."""
    C = project_sym(np.swapaxes(X, -1, -2) @ X)
    w, V = np.linalg.eigh(C)
    return (V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(V, -1, -2)


def _pairing(a: np.ndarray, M: np.ndarray) -> np.ndarray:
    """<a M, M> = tr(M^T a M) over the stack of M."""
    return np.sum((a @ M) * M, axis=(-2, -1))


# Built-in single-well densities

def _dist2_W(X: np.ndarray) -> np.ndarray:
    sigma = singular_values(X)
    return np.sum((sigma - 1.0) ** 2, axis=-1)


def _dist2_Q(Z: np.ndarray) -> np.ndarray:
    return 2.0 * fro_norm(project_sym(Z)) ** 2


def newton_polar(X, iterations: int = POLAR_ITERATIONS):
    """Rotation factor of X (det X > 0) by Newton's iteration R <- (R + R^-T) / 2; jax-traceable."""
    import jax.numpy as jnp

    R = X
    for _ in range(iterations):
        R = 0.5 * (R + jnp.swapaxes(jnp.linalg.inv(R), -1, -2))
    return R


def _dist2_W_jax(X):
    # |sqrt(X^T X) - Id|^2 = |X|^2 - 2 tr sqrt(X^T X) + n, with tr sqrt(X^T X) = tr(R^T X)
    import jax.numpy as jnp

    n = X.shape[-1]
    R = newton_polar(X)
    tr_sqrt = jnp.sum(R * X, axis=(-2, -1))
    return jnp.sum(X * X, axis=(-2, -1)) - 2.0 * tr_sqrt + n


def builtin_single_well(name: str, n: int = 3) -> SingleWell:
    if name == "dist2-sl":
        return SingleWell(
            name=name,
            W_fn=_dist2_W,
            Q_form=_dist2_Q,
            W_jax=_dist2_W_jax,
            n=n,
            growth=(1.0, 1.0),
        )
    raise ValidationFailure(f"Unknown built-in single-well density {name!r}; known: {sorted(BUILTIN_SINGLE_WELLS)}")


BUILTIN_SINGLE_WELLS = ("dist2-sl",)


# Energy kernels on SL(n)

def _energy_on_sl(model: DensityModel, eps: float, X: np.ndarray) -> np.ndarray:
    if isinstance(model, Nematic):
        gamma = model.gamma_at(eps)
        return np.sum(singular_values(X) ** 2 / gamma ** 2, axis=-1) - 3.0
    if isinstance(model, MultiWell):
        U = sqrt_gram(X)
        values = []
        for well in model.wells:
            M = U - matrix_exp(eps * well.U)
            values.append(0.5 * _pairing(well.a, M) + eps ** 2 * well.w)
        return np.min(np.stack(values, axis=0), axis=0)
    return np.asarray(model.W_fn(X), dtype=float)


def eval_W(model: DensityModel, eps: float, X):
    """W_eps(X); +inf off SL(n), decided with settings.DET_TOL."""
    eps = _check_eps(eps)
    X = as_matrix(X, n=model.n)
    flat, batch = _flatten(X)
    det = np.linalg.det(flat)
    on_sl = np.abs(det - 1.0) <= settings.DET_TOL
    values = np.full(det.shape, np.inf)
    if np.any(on_sl):
        values[on_sl] = _energy_on_sl(model, eps, flat[on_sl])
    return _unflatten(values, batch)


def eval_V_eps(model: DensityModel, eps: float, Z):
    """V_eps(Z) = eps^-p W_eps(exp(eps Z)) for traceless Z."""
    eps = _check_eps(eps)
    if eps > 1.0:
        raise ValidationFailure(f"eval_V_eps needs eps <= 1, got {eps}")
    Z = as_matrix(Z, n=model.n)
    if np.any(np.abs(trace(Z)) > TRACE_TOL * (1.0 + fro_norm(Z))):
        raise NotDeviatoricError("eval_V_eps needs traceless Z")
    X = matrix_exp(eps * project_dev(Z))
    values = np.asarray(eval_W(model, eps, X), dtype=float)
    assert np.all(np.isfinite(values)), "exp of a traceless matrix left SL(n)"
    values = values / eps ** model.p
    return float(values) if values.ndim == 0 else values


def _limit_on_ils(model: DensityModel, Z: np.ndarray) -> np.ndarray:
    if isinstance(model, Nematic):
        lam = sym_eigenvalues(Z)
        return 2.0 * np.sum((lam - model.rho) ** 2, axis=-1)
    if isinstance(model, MultiWell):
        values = [0.5 * _pairing(w.a, Z - w.U) + w.w for w in model.wells]
        return np.min(np.stack(values, axis=0), axis=0)
    if model.Q_form is not None:
        return 0.5 * np.asarray(model.Q_form(Z), dtype=float)
    if not model.allow_fd:
        raise MissingQError(f"Single-well density {model.name!r} has no Q_form and finite differences are disabled")
    flat, batch = _flatten(Z)
    values = np.array([0.5 * eval_Q_fd(model, z) for z in flat])
    return values.reshape(batch)


def eval_V(model: DensityModel, Z):
    """Linearized limit V(Z); +inf when tr Z != 0, otherwise a function of Z_ils only."""
    Z = as_matrix(Z, n=model.n)
    flat, batch = _flatten(Z)
    traceless = np.abs(trace(flat)) <= TRACE_TOL * (1.0 + fro_norm(flat))
    values = np.full(traceless.shape, np.inf)
    if np.any(traceless):
        values[traceless] = _limit_on_ils(model, project_ils(flat[traceless]))
    return _unflatten(values, batch)


def eval_Q_fd(model: SingleWell, Z, t: float = 1e-3) -> float:
    """Q(Z) = d^2/dt^2 W(exp(tZ)) at t = 0 by central differences, Richardson over t and t/2."""
    if not (1e-5 <= t <= 1e-2):
        raise StepOutOfRangeError(f"Finite-difference step must lie in [1e-5, 1e-2], got {t}")
    Z = as_matrix(Z, n=model.n)
    if Z.ndim != 2 or not is_ils(Z, tol=1e-9):
        raise NotDeviatoricError("eval_Q_fd needs one symmetric traceless matrix")
    Z = project_ils(Z)
    identity = np.eye(model.n)

    def second_difference(step: float) -> float:
        samples = np.stack([matrix_exp(step * Z), identity, matrix_exp(-step * Z)])
        W = np.asarray(eval_W(model, 1.0, samples), dtype=float)
        if not np.all(np.isfinite(W)):
            raise NonFiniteSampleError(f"A sample at step {step} left SL({model.n})")
        return float((W[0] - 2.0 * W[1] + W[2]) / step ** 2)

    coarse = second_difference(t)
    fine = second_difference(t / 2.0)
    return (4.0 * fine - coarse) / 3.0


def dev_basis(n: int) -> np.ndarray:
    """Frobenius-orthonormal basis of the traceless n x n matrices, shape (n^2 - 1, n, n)."""
    basis = []
    for i in range(n):
        for j in range(n):
            if i != j:
                E = np.zeros((n, n))
                E[i, j] = 1.0
                basis.append(E)
    for k in range(1, n):
        D = np.zeros((n, n))
        D[np.arange(k), np.arange(k)] = 1.0
        D[k, k] = -float(k)
        basis.append(D / np.sqrt(k * (k + 1)))
    return np.stack(basis)


def sample_dev_ball(n: int, r: float, samples: int, seed: int) -> np.ndarray:
    """Low-discrepancy points of the traceless ball of radius r.

    Scrambled Sobol points in dimension d + 1 (d = n^2 - 1): d coordinates
    mapped to a Gaussian direction, the last to the radius r * u^(1/d).
    """
    d = n * n - 1
    sampler = qmc.Sobol(d=d + 1, scramble=True, seed=seed)
    u = sampler.random_base2(m=int(math.ceil(math.log2(max(samples, 2)))))[:samples]
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    direction = ndtri(u[:, :d])
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = r * u[:, d] ** (1.0 / d)
    coords = direction * radius[:, None]
    return np.einsum("sk,kij->sij", coords, dev_basis(n))


def check_condition_C(
    model: DensityModel,
    V_ref: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    r: float = 1.0,
    eps_list=(0.1, 0.05, 0.025),
    samples: int = 1000,
    seed: int = 0,
) -> pd.DataFrame:
    """Estimate sup over |Z| <= r, Z traceless, of |V_eps(Z) - V(Z)| for each eps.

    The same sample set is reused for every eps, so the estimates of a ladder
    are directly comparable.
    """
    if r < 0.0:
        raise ValidationFailure("Radius r must be non-negative")
    if samples < MIN_SAMPLES:
        raise ValidationFailure(f"At least {MIN_SAMPLES} samples are needed, got {samples}")
    V_ref = V_ref or (lambda Z: eval_V(model, Z))
    Z = sample_dev_ball(model.n, r, samples, seed)
    reference = np.asarray(V_ref(Z), dtype=float)
    rows = []
    for eps in eps_list:
        deviation = np.abs(np.asarray(eval_V_eps(model, eps, Z)) - reference)
        worst = int(np.argmax(deviation))
        rows.append({
            "eps": float(eps),
            "sup_deviation": float(deviation[worst]),
            "argmax_norm": float(fro_norm(Z[worst])),
            "samples": samples,
            "r": float(r),
        })
        logger.debug("condition C: eps=%g sup=%.6e", eps, deviation[worst])
    table = pd.DataFrame(rows)
    table["ratio"] = table["sup_deviation"].shift(1) / table["sup_deviation"]
    return table


def growth_constants(model: DensityModel) -> tuple[float, float]:
    """(alpha, beta) with alpha|Z_ils|^2 - beta <= V(Z) <= beta|Z|^2 + beta on traceless Z.

    For the nematic model beta also bounds the local Lipschitz constant:
    |V(Z) - V(Z')| <= beta (1 + |Z| + |Z'|) |Z - Z'|.
    """
    if isinstance(model, Nematic):
        rho2 = float(np.sum(model.rho ** 2))
        return 1.0, 4.0 + 4.0 * rho2
    if isinstance(model, MultiWell):
        lo = min(float(np.linalg.eigvalsh(w.a).min()) for w in model.wells)
        first = model.wells[0]
        hi = float(np.linalg.eigvalsh(first.a).max())
        shift = max(0.5 * float(np.linalg.eigvalsh(w.a).min()) * float(fro_norm(w.U)) ** 2 for w in model.wells)
        beta = max(hi, shift, hi * float(fro_norm(first.U)) ** 2 + first.w)
        return 0.25 * lo, beta
    if model.growth is None:
        raise ValidationFailure(f"Single-well density {model.name!r} does not declare growth constants")
    return model.growth


def nematic_lower_bound(model: Nematic, eps: float) -> tuple[float, float]:
    """(c, C) with W_eps(X) >= c dist(X, SO(3))^2 - C on SL(3).

    From sum s_i^2 - 3 >= (1/2) sum (s_i - 1)^2 for s_i = sigma_i/gamma_i with
    prod s_i = 1, and the triangle inequality through diag(gamma).
    """
    gamma = model.gamma_at(_check_eps(eps))
    g2 = float(gamma.max()) ** 2
    return 1.0 / (4.0 * g2), float(np.sum((gamma - 1.0) ** 2)) / (2.0 * g2)


def fitted_order(eps, gaps, floor: float = 1e-14) -> float:
    """Least-squares slope of log|gap| against log eps (nan with fewer than two usable points)."""
    eps = np.asarray(eps, dtype=float)
    gaps = np.abs(np.asarray(gaps, dtype=float))
    usable = (gaps > floor) & np.isfinite(gaps) & (eps > 0.0)
    if np.count_nonzero(usable) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(eps[usable]), np.log(gaps[usable]), 1)
    return float(slope)
