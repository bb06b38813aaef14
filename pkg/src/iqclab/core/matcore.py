"""
Small dense matrix kernels for n = 2 and n = 3.

Every function accepts either a single (n, n) matrix or a stack of shape
(..., n, n) and returns results with the leading batch shape preserved. The
only exceptions are `polar_decompose` and `jacobi_eigh`, which work on one
matrix at a time.

Tolerances follow the conventions of the rest of the package: 1e-12 for the
sym/dev/ils membership tests, eigenvalue domain (0.1, 10) for the matrix
logarithm (it is only ever needed near the identity).
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy.stats import special_ortho_group

from .errors import ValidationFailure

logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-12
LOG_DOMAIN = (0.1, 10.0)
DEGENERACY_TOL = 1e-12


class DimensionMismatch(ValidationFailure):
    pass


class NonFiniteEntriesError(ValidationFailure):
    pass


class NotSPDError(ValidationFailure):
    pass


class OutOfDomainError(ValidationFailure):
    pass


class NotOrientationPreservingError(ValidationFailure):
    pass


def as_matrix(X, n: int | None = None) -> np.ndarray:
    """Validate `X` as a (stack of) finite n x n matrices, n in {2, 3}."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2] or arr.shape[-1] not in (2, 3):
        raise DimensionMismatch(f"Expected (..., n, n) with n in (2, 3), got shape {arr.shape}")
    if n is not None and arr.shape[-1] != n:
        raise DimensionMismatch(f"Expected n = {n}, got n = {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntriesError("Matrix entries must be finite")
    return arr


def from_row_major(values: Sequence[float] | Sequence[Sequence[float]]) -> np.ndarray:
    """Matrix from a row-major flat list (length 4 or 9) or a nested list."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        n = int(round(np.sqrt(arr.size)))
        if n * n != arr.size:
            raise DimensionMismatch(f"A flat matrix needs n^2 entries, got {arr.size}")
        arr = arr.reshape(n, n)
    return as_matrix(arr)


def _eye_like(X: np.ndarray) -> np.ndarray:
    return np.eye(X.shape[-1])


def trace(X: np.ndarray) -> np.ndarray:
    return np.trace(X, axis1=-2, axis2=-1)


def fro_norm(X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(X) ** 2, axis=(-2, -1)))


def fro_inner(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(X) * np.asarray(Y), axis=(-2, -1))


def project_sym(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def project_dev(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    return X - (trace(X) / n)[..., None, None] * _eye_like(X)


def project_ils(X: np.ndarray) -> np.ndarray:
    return project_dev(project_sym(X))


def is_sym(X: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
    X = np.asarray(X, dtype=float)
    return bool(np.all(fro_norm(X - np.swapaxes(X, -1, -2)) <= tol * (1.0 + fro_norm(X))))


def is_dev(X: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
    X = np.asarray(X, dtype=float)
    return bool(np.all(np.abs(trace(X)) <= tol * (1.0 + fro_norm(X))))


def is_ils(X: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
    return is_sym(X, tol) and is_dev(X, tol)


def matrix_exp(Z: np.ndarray) -> np.ndarray:
    """e^Z by scipy's Pade scaling-and-squaring (batched over leading axes)."""
    return sla.expm(np.asarray(Z, dtype=float))


def matrix_log_spd(S: np.ndarray) -> np.ndarray:
    S = as_matrix(S)
    if not is_sym(S, tol=1e-9):
        raise NotSPDError("matrix_log_spd needs a symmetric matrix")
    w, V = np.linalg.eigh(project_sym(S))
    if np.any(w <= 0.0):
        raise NotSPDError(f"Matrix is not positive definite (min eigenvalue {w.min():.3e})")
    lo, hi = LOG_DOMAIN
    if np.any(w <= lo) or np.any(w >= hi):
        raise OutOfDomainError(
            f"Eigenvalues must lie in ({lo}, {hi}) for the logarithm, got [{w.min():.3e}, {w.max():.3e}]"
        )
    L = (V * np.log(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return project_sym(L)


def jacobi_eigh(S: np.ndarray, sweeps: int = 50, tol: float = 1e-15) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition of one symmetric matrix, ascending."""
    A = np.array(project_sym(as_matrix(S)), dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch("jacobi_eigh works on a single matrix")
    n = A.shape[0]
    V = np.eye(n)
    scale = max(fro_norm(A), np.finfo(float).tiny)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = c
                J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def _eigenvalues_2x2(S: np.ndarray) -> np.ndarray:
    a, b, d = S[..., 0, 0], 0.5 * (S[..., 0, 1] + S[..., 1, 0]), S[..., 1, 1]
    mean = 0.5 * (a + d)
    radius = np.hypot(0.5 * (a - d), b)
    return np.stack([mean - radius, mean + radius], axis=-1)


def _eigenvalues_3x3(S: np.ndarray) -> np.ndarray:
    q = trace(S) / 3.0
    B = S - q[..., None, None] * np.eye(3)
    p = np.sqrt(np.sum(B * B, axis=(-2, -1)) / 6.0)
    safe_p = np.where(p > 0.0, p, 1.0)
    r = np.clip(np.linalg.det(B / safe_p[..., None, None]) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam3 = q + 2.0 * p * np.cos(phi)
    lam1 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam2 = 3.0 * q - lam1 - lam3
    lam = np.stack([lam1, lam2, lam3], axis=-1)

    # sqrt of the characteristic discriminant = product of the eigenvalue gaps
    root_disc = np.sqrt(108.0 * p ** 6 * np.clip(1.0 - r * r, 0.0, None))
    degenerate = (p == 0.0) | (root_disc <= DEGENERACY_TOL * fro_norm(S) ** 3)
    if np.any(degenerate):
        flat_S = S.reshape(-1, 3, 3)
        flat_lam = lam.reshape(-1, 3)
        for idx in np.flatnonzero(degenerate.reshape(-1)):
            flat_lam[idx] = jacobi_eigh(flat_S[idx])[0]
        lam = flat_lam.reshape(lam.shape)
    return np.sort(lam, axis=-1)


def sym_eigenvalues(S: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of symmetric matrices by closed form.

    Trigonometric solution of the characteristic cubic for n = 3, with a Jacobi
    fallback on near-degenerate spectra; explicit formula for n = 2.
    """
    S = project_sym(as_matrix(S))
    if S.shape[-1] == 2:
        return _eigenvalues_2x2(S)
    return _eigenvalues_3x3(S)


def recover_eigenvector(S: np.ndarray, lam: float) -> np.ndarray:
    """Unit vector spanning (numerically) the kernel of S - lam*Id."""
    S = project_sym(as_matrix(S))
    n = S.shape[-1]
    M = S - lam * np.eye(n)
    if n == 2:
        candidates = [np.array([-M[0, 1], M[0, 0]]), np.array([-M[1, 1], M[1, 0]])]
    else:
        candidates = [np.cross(M[i], M[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    best = max(candidates, key=lambda v: float(np.linalg.norm(v)))
    norm = np.linalg.norm(best)
    if norm <= 1e-12 * (1.0 + fro_norm(S)):
        # multiple eigenvalue: any vector of the eigenspace will do
        w, V = jacobi_eigh(S)
        return V[:, int(np.argmin(np.abs(w - lam)))]
    return best / norm


def singular_values(X: np.ndarray) -> np.ndarray:
    return np.linalg.svd(as_matrix(X), compute_uv=False)[..., ::-1]


def dist_SO(X: np.ndarray) -> np.ndarray:
    """Frobenius distance to SO(n).

    For det X <= 0 the closest rotation flips the smallest singular direction,
    which gives the (sigma_1 + 1) term.
    """
    X = as_matrix(X)
    sigma = singular_values(X)
    regular = np.sum((sigma - 1.0) ** 2, axis=-1)
    flipped = (sigma[..., 0] + 1.0) ** 2 + np.sum((sigma[..., 1:] - 1.0) ** 2, axis=-1)
    return np.sqrt(np.where(np.linalg.det(X) > 0.0, regular, flipped))


def polar_decompose(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """F = R U with R in SO(n) and U = sqrt(F^T F) symmetric positive definite."""
    F = as_matrix(F)
    if F.ndim != 2:
        raise DimensionMismatch("polar_decompose works on a single matrix")
    if np.linalg.det(F) <= 0.0:
        raise NotOrientationPreservingError("polar_decompose needs det F > 0")
    R, U = sla.polar(F, side="right")
    return R, project_sym(U)


def random_rotations(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """`count` Haar-distributed rotations of size n, shape (count, n, n)."""
    rotations = special_ortho_group.rvs(dim=n, size=count, random_state=rng)
    return np.asarray(rotations, dtype=float).reshape(count, n, n)
