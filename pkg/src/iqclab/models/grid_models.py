"""Staggered-grid field records and the results of the solenoidal-field operations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from ..core.errors import ValidationFailure

AXIS_NAMES = ("x", "y", "z")


class GridFieldError(ValidationFailure):
    pass


def face_labels(n: int) -> tuple[str, ...]:
    """Boundary face names: "x-", "x+", "y-", ... for the first n axes."""
    return tuple(f"{AXIS_NAMES[a]}{side}" for a in range(n) for side in "-+")


def parse_faces(n: int, dirichlet: str | Iterable[str] | None) -> frozenset[str]:
    """"all" / "none" / None / iterable of face labels -> validated frozenset."""
    if dirichlet is None or dirichlet == "all":
        return frozenset(face_labels(n))
    if dirichlet == "none":
        return frozenset()
    faces = frozenset([dirichlet] if isinstance(dirichlet, str) else dirichlet)
    unknown = faces - set(face_labels(n))
    if unknown:
        raise GridFieldError(f"Unknown boundary faces {sorted(unknown)}; expected a subset of {face_labels(n)}")
    return faces


def mac_shape(n: int, m: int, axis: int) -> tuple[int, ...]:
    """Array shape of the component normal to `axis`: m + 1 faces along it, m cells elsewhere."""
    return tuple(m + 1 if a == axis else m for a in range(n))


@dataclass(frozen=True)
class GridField:
    """Vector field on a MAC grid of m^n cells over the box origin + [0, length]^n.

    Component i holds the normal velocity on the faces orthogonal to axis i.
    Faces listed in `dirichlet` are masked and carry exact zeros.
    """
    n: int
    m: int
    components: tuple[np.ndarray, ...]
    dirichlet: frozenset[str] = field(default=None)  # type: ignore[assignment]
    length: float = 1.0
    origin: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GridFieldError(f"Grid fields live in 2 or 3 dimensions, got {self.n}")
        if self.m < 1:
            raise GridFieldError(f"Need at least one cell per axis, got m = {self.m}")
        if self.length <= 0.0:
            raise GridFieldError("Box length must be positive")
        object.__setattr__(self, "dirichlet", parse_faces(self.n, self.dirichlet))
        origin = tuple(float(o) for o in (self.origin or (0.0,) * self.n))
        if len(origin) != self.n:
            raise GridFieldError(f"Origin needs {self.n} coordinates")
        object.__setattr__(self, "origin", origin)
        if len(self.components) != self.n:
            raise GridFieldError(f"Expected {self.n} components, got {len(self.components)}")
        comps = []
        for axis, comp in enumerate(self.components):
            arr = np.array(comp, dtype=float)
            if arr.shape != mac_shape(self.n, self.m, axis):
                raise GridFieldError(
                    f"Component {axis} has shape {arr.shape}, MAC layout needs {mac_shape(self.n, self.m, axis)}"
                )
            if not np.all(np.isfinite(arr)):
                raise GridFieldError(f"Component {axis} has non-finite values")
            arr.setflags(write=False)
            comps.append(arr)
        object.__setattr__(self, "components", tuple(comps))
        for label in self.dirichlet:
            values = self.boundary_values(label)
            if np.any(values != 0.0):
                raise GridFieldError(f"Masked face {label} carries non-zero values")

    @property
    def h(self) -> float:
        return self.length / self.m

    @classmethod
    def zeros(cls, n: int, m: int, dirichlet=None, length: float = 1.0, origin=None) -> "GridField":
        comps = tuple(np.zeros(mac_shape(n, m, a)) for a in range(n))
        return cls(n=n, m=m, components=comps, dirichlet=dirichlet, length=length, origin=origin)

    def replace(self, components) -> "GridField":
        return GridField(
            n=self.n, m=self.m, components=tuple(components),
            dirichlet=self.dirichlet, length=self.length, origin=self.origin,
        )

    def boundary_values(self, label: str) -> np.ndarray:
        axis = AXIS_NAMES.index(label[0])
        index = 0 if label[1] == "-" else self.m
        return np.take(self.components[axis], index, axis=axis)

    def axis_coordinates(self, axis: int, component: int) -> np.ndarray:
        """1-D coordinates of `component`'s samples along `axis` (nodes or cell centres)."""
        o, h = self.origin[axis], self.h
        if axis == component:
            return o + h * np.arange(self.m + 1)
        return o + h * (np.arange(self.m) + 0.5)

    def face_points(self, component: int) -> np.ndarray:
        """Coordinates of every sample of `component`, shape mac_shape + (n,)."""
        axes = [self.axis_coordinates(a, component) for a in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def node_points(self) -> np.ndarray:
        axes = [self.origin[a] + self.h * np.arange(self.m + 1) for a in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def cell_centres(self) -> np.ndarray:
        axes = [self.origin[a] + self.h * (np.arange(self.m) + 0.5) for a in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def norm(self) -> float:
        """Discrete L2 norm, each face weighted by the cell volume."""
        return float(np.sqrt(sum(np.sum(c ** 2) for c in self.components) * self.h ** self.n))


@dataclass(frozen=True)
class SolenoidalSeries:
    """Smooth vector potential on the unit box, expanded in modes cos(k pi x).

    `coefficients` has shape (potential components, K, ..., K); the
    potential is multiplied per axis by x^3 and/or (1 - x)^3 on the faces in
    `dirichlet`, so the induced velocity vanishes to second order there.
    """
    n: int
    coefficients: np.ndarray
    dirichlet: frozenset[str] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", parse_faces(self.n, self.dirichlet))
        coeffs = np.asarray(self.coefficients, dtype=float)
        components = 3 if self.n == 3 else 1
        if coeffs.ndim != self.n + 1 or coeffs.shape[0] != components or len(set(coeffs.shape[1:])) != 1:
            raise GridFieldError(f"Series coefficients need shape ({components}, K, ..., K), got {coeffs.shape}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def modes(self) -> int:
        return int(self.coefficients.shape[1])

    def low_mode_fraction(self, kmax: int) -> float:
        """Share of the coefficient energy carried by modes with all |k_a| <= kmax."""
        energy = self.coefficients ** 2
        low = energy[(slice(None),) + (slice(0, kmax + 1),) * self.n]
        total = float(np.sum(energy))
        return float(np.sum(low)) / total if total > 0.0 else 1.0


@dataclass(frozen=True)
class DivergenceCorrection:
    field: GridField
    correction_norm: float
    divergence_norm: float
    max_divergence: float
    iterations: int
    residual: float

    @property
    def ratio(self) -> float:
        """Fitted constant C in |g - f| <= C |div f| (0 when nothing needed correcting)."""
        if self.divergence_norm == 0.0:
            return 0.0
        return self.correction_norm / self.divergence_norm


@dataclass(frozen=True)
class FlowResult:
    eps: float
    steps: int
    nodes: np.ndarray
    displacement: np.ndarray  # y(eps, x) - x at every node
    det_residual: float
    det_residual_central: float
    residual_source: str = "tangent"  # "central" when the velocity has no Jacobian

    @property
    def u_eps(self) -> np.ndarray:
        return self.displacement / self.eps
