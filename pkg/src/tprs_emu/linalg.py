"""Correlation kernels, Kronecker algebra and block low-rank inverse updates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InputError, NumericalError, ParameterError, UpdateFailedError

DEFAULT_NUGGET = 1e-6


def _open_unit_vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float)).copy()
    if arr.ndim != 1 or arr.size == 0:
        raise ParameterError(f"{name} must be a non-empty vector")
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ParameterError(f"every {name} component must lie strictly in (0, 1), got {arr}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CorrelationParams:
    """Per-dimension correlation parameters for the input space.

    ``theta[j]`` is the correlation between two inputs that differ by half the
    unit range in dimension ``j``; values near 1 give smooth processes.
    """

    theta: np.ndarray
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        object.__setattr__(self, "theta", _open_unit_vector(self.theta, "theta"))
        if not np.isfinite(self.nugget) or self.nugget < 0:
            raise ParameterError(f"nugget must be >= 0, got {self.nugget}")
        object.__setattr__(self, "nugget", float(self.nugget))

    @property
    def dim(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class SpatialCorrelationParams:
    """Correlation parameters over the (standardized) output coordinates."""

    nu: np.ndarray = field()

    def __post_init__(self):
        object.__setattr__(self, "nu", _open_unit_vector(self.nu, "nu"))

    @property
    def dim(self) -> int:
        return self.nu.size


def _theta_of(params) -> np.ndarray:
    if isinstance(params, CorrelationParams):
        return params.theta
    if isinstance(params, SpatialCorrelationParams):
        return params.nu
    return _open_unit_vector(params, "theta")


def sqexp_correlation(x, x_prime, params) -> float:
    """Squared-exponential correlation ``prod_j theta_j ** (4 (x_j - x'_j)**2)``.

    The nugget is *not* applied here; see :func:`correlation_matrix`.
    """
    theta = _theta_of(params)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != theta.shape or x_prime.shape != theta.shape:
        raise InputError(
            f"dimension mismatch: x {x.shape}, x' {x_prime.shape}, theta {theta.shape}"
        )
    return float(np.exp(4.0 * np.sum((x - x_prime) ** 2 * np.log(theta))))


def cross_correlation(X1, X2, params) -> np.ndarray:
    """Matrix of correlations between the rows of ``X1`` and ``X2`` (no nugget)."""
    theta = _theta_of(params)
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != theta.size or X2.shape[1] != theta.size:
        raise InputError(
            f"points have {X1.shape[1]}/{X2.shape[1]} columns but theta has {theta.size}"
        )
    if not (np.all(np.isfinite(X1)) and np.all(np.isfinite(X2))):
        raise InputError("non-finite coordinates in correlation evaluation")
    log_theta = 4.0 * np.log(theta)
    expo = np.zeros((X1.shape[0], X2.shape[0]))
    for j in range(theta.size):
        diff = X1[:, j, None] - X2[None, :, j]
        expo += diff * diff * log_theta[j]
    return np.exp(expo)


def correlation_matrix(points, params, nugget: float | None = None) -> np.ndarray:
    """Correlation matrix of a point set with ``nugget`` added to the diagonal.

    ``nugget`` defaults to ``params.nugget`` when ``params`` is a
    :class:`CorrelationParams`, and to zero otherwise.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 1:
        raise InputError("correlation_matrix needs at least one point")
    if nugget is None:
        nugget = params.nugget if isinstance(params, CorrelationParams) else 0.0
    R = cross_correlation(points, points, params)
    # exact symmetry regardless of summation order
    R = 0.5 * (R + R.T)
    R[np.diag_indices_from(R)] = 1.0 + nugget
    return R


def kronecker_product(A, B) -> np.ndarray:
    """Dense Kronecker product; block ``(i, j)`` equals ``A[i, j] * B``."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def cholesky(A, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, raising :class:`NumericalError` naming ``name``."""
    try:
        return sla.cholesky(np.asarray(A, dtype=float), lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"{name} is not positive definite: {exc}") from exc


def chol_solve(L: np.ndarray, B) -> np.ndarray:
    return sla.cho_solve((L, True), B, check_finite=False)


def chol_logdet(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def chol_inverse(L: np.ndarray) -> np.ndarray:
    """Symmetric inverse from a lower Cholesky factor (LAPACK ``potri``)."""
    inv, info = sla.lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalError(f"inversion from Cholesky factor failed (info={info})")
    low = np.tril(inv)
    return low + np.tril(inv, -1).T


def kron_solve(LA: np.ndarray, LB: np.ndarray, v) -> np.ndarray:
    """Solve ``(A kron B) x = v`` from Cholesky factors of ``A`` and ``B``.

    ``v`` is run-major: the row-major flattening of an ``a x b`` matrix ``M``,
    for which ``(A kron B) vec(M) = vec(A M B^T)``.
    """
    a, b = LA.shape[0], LB.shape[0]
    v = np.asarray(v, dtype=float)
    M = v.reshape(a, b)
    X = chol_solve(LA, M)
    X = chol_solve(LB, X.T).T
    return X.reshape(v.shape)


def kron_quadratic_form(LA: np.ndarray, LB: np.ndarray, M) -> float:
    """``vec(M)^T (A kron B)^{-1} vec(M)`` for an ``a x b`` matrix ``M`` (run-major)."""
    M = np.asarray(M, dtype=float)
    X = chol_solve(LA, M)
    X = chol_solve(LB, X.T).T
    return float(np.sum(M * X))


def lowrank_factor(delta, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Factor ``delta = P1 @ Q1`` by LU with partial pivoting.

    Rows of ``U`` whose max-abs entry is below ``rtol * max|delta|`` are
    dropped together with the matching columns of ``L``, so the returned
    factors have as many columns/rows as the detected rank (possibly zero).
    """
    delta = np.asarray(delta, dtype=float)
    n = delta.shape[0]
    scale = np.max(np.abs(delta)) if delta.size else 0.0
    if scale == 0.0:
        return np.zeros((n, 0)), np.zeros((0, n))
    perm, lower, upper = sla.lu(delta)
    keep = np.max(np.abs(upper), axis=1) > rtol * scale
    return (perm @ lower)[:, keep], upper[keep, :]


def woodbury_terms(D_inv_block: np.ndarray, P1: np.ndarray, Q1: np.ndarray) -> np.ndarray:
    """``X = (I + Q1 D22^{-1} P1)^{-1}``; raises :class:`UpdateFailedError` if singular."""
    k = P1.shape[1]
    core = np.eye(k) + Q1 @ D_inv_block @ P1
    if not np.all(np.isfinite(core)):
        raise UpdateFailedError("Woodbury core matrix has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(core, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-13 * pivots.max():
        raise UpdateFailedError("Woodbury core matrix is numerically singular")
    return sla.lu_solve((lu, piv), np.eye(k), check_finite=False)


def apply_block_update(D_inv: np.ndarray, sl: slice, P1, X, Q1) -> np.ndarray:
    """Return ``D_inv - D_inv[:, sl] P1 X Q1 D_inv[sl, :]`` (symmetrized)."""
    left = D_inv[:, sl] @ P1
    right = Q1 @ D_inv[sl, :]
    out = D_inv - left @ (X @ right)
    return 0.5 * (out + out.T)


def woodbury_block_update(D_inv, delta, block_index: int) -> np.ndarray:
    """Inverse of ``D`` after adding ``delta`` to one diagonal ``n x n`` block.

    ``D_inv`` is the current inverse (``np x np``); ``block_index`` counts
    blocks of size ``n = delta.shape[0]`` from zero. The difference is
    factored as ``P1 Q1`` by LU, so only an ``n x n`` (or smaller, when
    ``delta`` is rank deficient) matrix is ever inverted.
    """
    D_inv = np.asarray(D_inv, dtype=float)
    delta = np.asarray(delta, dtype=float)
    n = delta.shape[0]
    if delta.shape != (n, n) or D_inv.shape[0] % n or D_inv.shape[0] != D_inv.shape[1]:
        raise InputError(f"incompatible shapes {D_inv.shape} and {delta.shape}")
    if not 0 <= block_index < D_inv.shape[0] // n:
        raise InputError(f"block_index {block_index} out of range")
    sl = slice(block_index * n, (block_index + 1) * n)
    P1, Q1 = lowrank_factor(delta)
    if P1.shape[1] == 0:
        return D_inv.copy()
    X = woodbury_terms(D_inv[sl, sl], P1, Q1)
    return apply_block_update(D_inv, sl, P1, X, Q1)
