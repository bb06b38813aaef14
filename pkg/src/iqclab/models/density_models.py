"""Parameter records for the three application density models.

Plain dataclasses; invariants are checked once in `__post_init__` so every
evaluation routine can trust the parameters it is handed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ..core.errors import ValidationFailure
from ..core.matcore import as_matrix, fro_norm, is_ils, is_sym

PARAM_TOL = 1e-12


class DensityModelError(ValidationFailure):
    pass


@dataclass(frozen=True)
class Well:
    a: np.ndarray  # SPD, acts on matrices by left multiplication
    U: np.ndarray  # symmetric traceless
    w: float = 0.0

    def __post_init__(self):
        a = as_matrix(self.a)
        U = as_matrix(self.U, n=a.shape[-1])
        if a.ndim != 2:
            raise DensityModelError("Well parameter `a` must be a single matrix")
        if not is_sym(a, tol=1e-9):
            raise DensityModelError("Well parameter `a` must be symmetric")
        if np.linalg.eigvalsh(a).min() <= 0.0:
            raise DensityModelError("Well parameter `a` must be positive definite")
        if abs(np.trace(U)) > PARAM_TOL * (1.0 + fro_norm(U)):
            raise DensityModelError("Well matrix `U` must be traceless")
        if not is_ils(U, tol=1e-9):
            raise DensityModelError("Well matrix `U` must be symmetric")
        if self.w < 0.0:
            raise DensityModelError("Well offset `w` must be non-negative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "w", float(self.w))

    @property
    def n(self) -> int:
        return int(self.a.shape[-1])


@dataclass(frozen=True)
class SingleWell:
    """Frame-indifferent density with a single well at SO(n).

    `W_fn` is evaluated on stacks of matrices already known to lie on SL(n);
    `Q_form` (optional) is the closed-form Hessian at the identity;
    `W_jax` (optional) is the same energy written with jax.numpy, needed for
    the nonlinear minimization.
    """
    name: str
    W_fn: Callable[[np.ndarray], np.ndarray]
    Q_form: Optional[Callable[[np.ndarray], np.ndarray]] = None
    W_jax: Optional[Callable] = None
    n: int = 3
    p: float = 2.0
    allow_fd: bool = True
    growth: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.n not in (2, 3):
            raise DensityModelError(f"Dimension must be 2 or 3, got {self.n}")
        if self.p <= 1.0:
            raise DensityModelError("Growth exponent p must exceed 1")

    @property
    def kind(self) -> str:
        return "singlewell"


@dataclass(frozen=True)
class MultiWell:
    wells: list[Well] = field(default_factory=list)
    p: float = 2.0

    def __post_init__(self):
        if not self.wells:
            raise DensityModelError("A multiwell model needs at least one well")
        dims = {w.n for w in self.wells}
        if len(dims) != 1:
            raise DensityModelError(f"All wells must share one dimension, got {sorted(dims)}")
        if self.p <= 1.0:
            raise DensityModelError("Growth exponent p must exceed 1")
        object.__setattr__(self, "wells", list(self.wells))

    @property
    def n(self) -> int:
        return self.wells[0].n

    @property
    def kind(self) -> str:
        return "multiwell"


@dataclass(frozen=True)
class Nematic:
    """Nematic elastomer model with preferred stretches exp(eps * rho_i(eps)).

    rho_i(eps) = rho_i + eps * s_i for an optional correction s with zero sum.
    """
    rho: np.ndarray
    rho_correction: Optional[np.ndarray] = None
    p: float = 2.0

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if rho.shape != (3,):
            raise DensityModelError("rho needs exactly three entries")
        if np.any(np.diff(rho) < 0.0):
            raise DensityModelError("rho must be sorted ascending")
        if abs(rho.sum()) > PARAM_TOL:
            raise DensityModelError(f"rho must sum to zero, got {rho.sum():.3e}")
        object.__setattr__(self, "rho", rho)
        if self.rho_correction is not None:
            s = np.asarray(self.rho_correction, dtype=float).reshape(-1)
            if s.shape != (3,) or abs(s.sum()) > PARAM_TOL:
                raise DensityModelError("rho_correction needs three entries summing to zero")
            object.__setattr__(self, "rho_correction", s)
        if self.p <= 1.0:
            raise DensityModelError("Growth exponent p must exceed 1")

    @property
    def n(self) -> int:
        return 3

    @property
    def kind(self) -> str:
        return "nematic"

    def rho_at(self, eps: float) -> np.ndarray:
        """Exponents rho_i(eps), sorted so the stretches pair with ascending singular values.

        The only eps dependence is the linear path rho + eps * rho_correction.
        """
        if self.rho_correction is None:
            return self.rho.copy()
        values = self.rho + eps * self.rho_correction
        if abs(values.sum()) > PARAM_TOL * (1.0 + abs(eps)):
            raise DensityModelError(f"rho({eps}) does not sum to zero")
        return np.sort(values)

    def gamma_at(self, eps: float) -> np.ndarray:
        return np.exp(eps * self.rho_at(eps))


DensityModel = Union[SingleWell, MultiWell, Nematic]
