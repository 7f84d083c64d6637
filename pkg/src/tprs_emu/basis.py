"""Output-grid bases: principal components and thin-plate regression splines."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn

from .errors import InputError, NumericalError, ParameterError
from .linalg import SpatialCorrelationParams, correlation_matrix, cross_correlation


@dataclass(eq=False)
class OutputGrid:
    """Common output locations for every simulator run.

    Parameters
    ----------
    locations : (r, q) array
        Physical coordinates, one row per output location.
    bounds : (q, 2) array, optional
        Box used to map coordinates to the unit cube. Defaults to the
        coordinate-wise min/max. Sub-grids keep the parent's bounds so that
        standardized coordinates agree.
    axes : tuple of 1-d arrays, optional
        Set when the grid is the Cartesian product of these axes in
        row-major ("ij") order; enables Kronecker shortcuts.
    """

    locations: np.ndarray
    bounds: np.ndarray | None = None
    axes: tuple | None = None

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc[:, None]
        if loc.ndim != 2 or loc.shape[0] < 1 or loc.shape[1] < 1:
            raise InputError("grid needs r >= 1 rows of q >= 1 coordinates")
        if not np.all(np.isfinite(loc)):
            raise InputError("grid coordinates must be finite")
        if np.unique(loc, axis=0).shape[0] != loc.shape[0]:
            raise InputError("grid contains duplicate locations")
        self.locations = loc
        if self.bounds is None:
            lo, hi = loc.min(axis=0), loc.max(axis=0)
            hi = np.where(hi > lo, hi, lo + 1.0)
            self.bounds = np.column_stack([lo, hi])
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(loc.shape[1], 2)

    @property
    def r(self) -> int:
        return self.locations.shape[0]

    @property
    def q(self) -> int:
        return self.locations.shape[1]

    @property
    def is_lattice(self) -> bool:
        return self.axes is not None

    @cached_property
    def unit(self) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (self.locations - lo) / (hi - lo)

    @cached_property
    def unit_axes(self) -> tuple | None:
        if self.axes is None:
            return None
        return tuple(
            (np.asarray(ax, dtype=float) - self.bounds[j, 0]) / (self.bounds[j, 1] - self.bounds[j, 0])
            for j, ax in enumerate(self.axes)
        )

    def subset(self, index) -> "OutputGrid":
        return OutputGrid(self.locations[np.asarray(index)], bounds=self.bounds)

    def same_as(self, other: "OutputGrid") -> bool:
        return (
            self.locations.shape == other.locations.shape
            and np.array_equal(self.locations, other.locations)
        )


def lattice_grid(counts, boxes) -> OutputGrid:
    """Regular lattice with no boundary points.

    Axis ``j`` places ``counts[j]`` points at ``a + (i - 0.5) (b - a) / counts[j]``
    for ``i = 1..counts[j]`` inside ``boxes[j] = (a, b)``.
    """
    axes = []
    for k, (a, b) in zip(counts, boxes):
        if k < 1 or not b > a:
            raise InputError(f"invalid lattice axis: {k} points on [{a}, {b}]")
        axes.append(a + (np.arange(1, k + 1) - 0.5) * (b - a) / k)
    mesh = np.meshgrid(*axes, indexing="ij")
    locations = np.column_stack([m.ravel() for m in mesh])
    return OutputGrid(locations, bounds=np.asarray(boxes, dtype=float), axes=tuple(axes))


def grid_from_locations(locations) -> OutputGrid:
    """Grid from raw coordinates, recognizing row-major lattices.

    When the rows are the Cartesian product of the per-column unique values
    (in ``ij`` order) the axes are recorded. Evenly spaced axes get the
    no-boundary box ``(first - h/2, last + h/2)``; other grids use min/max.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    axes = [np.unique(loc[:, j]) for j in range(loc.shape[1])]
    if int(np.prod([a.size for a in axes])) == loc.shape[0]:
        mesh = np.meshgrid(*axes, indexing="ij")
        if np.array_equal(np.column_stack([m.ravel() for m in mesh]), loc):
            bounds = []
            for a in axes:
                steps = np.diff(a)
                if a.size > 1 and np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                    bounds.append((a[0] - steps[0] / 2, a[-1] + steps[0] / 2))
                else:
                    bounds.append((a[0], a[-1] if a[-1] > a[0] else a[0] + 1.0))
            return OutputGrid(loc, bounds=np.asarray(bounds), axes=tuple(axes))
    return OutputGrid(loc)


def sublattice_index(grid: OutputGrid, counts) -> np.ndarray:
    """Row indices of ``grid`` forming the coarser no-boundary lattice ``counts``.

    Only exact sub-lattices are accepted (e.g. 10x10 inside 50x50).
    """
    if grid.axes is None:
        raise InputError("sublattice_index needs a lattice grid")
    coarse = lattice_grid(counts, grid.bounds)
    lookup = {tuple(row): i for i, row in enumerate(np.round(grid.unit, 12))}
    index = []
    for row in np.round(coarse.unit, 12):
        if tuple(row) not in lookup:
            raise InputError(f"{tuple(counts)} lattice is not a subset of the grid")
        index.append(lookup[tuple(row)])
    return np.asarray(index)


@dataclass(eq=False)
class BasisSet:
    """``p`` basis vectors over the output grid.

    For TPRS bases the first ``m`` columns are the spline vectors
    ``U_k D_k Z`` and the last ``p - m`` are the polynomial columns ``T``.
    """

    kind: str
    vectors: np.ndarray
    m: int | None = None
    l: int | None = None
    U: np.ndarray | None = None
    D: np.ndarray | None = None
    Z: np.ndarray | None = None
    T: np.ndarray | None = None
    _scale_cache: dict = field(default_factory=dict, repr=False)

    @property
    def r(self) -> int:
        return self.vectors.shape[0]

    @property
    def p(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        G = self.vectors.T @ self.vectors
        return 0.5 * (G + G.T)

    @cached_property
    def _qr(self):
        Qm, R = np.linalg.qr(self.vectors)
        diag = np.abs(np.diag(R))
        if diag.size and diag.min() <= 1e-10 * diag.max():
            worst = int(np.argmin(diag))
            raise NumericalError(
                f"basis is rank deficient: column {worst} has relative pivot "
                f"{diag[worst] / diag.max():.3e}"
            )
        return Qm, R

    @cached_property
    def spline_part(self) -> np.ndarray:
        """``U_k Z`` (orthonormal columns), used by the scale matrix."""
        if self.kind != "TPRS":
            raise InputError("spline_part is only defined for TPRS bases")
        return self.U @ self.Z


def pca_basis(Y, p: int) -> tuple[BasisSet, np.ndarray]:
    """Principal-component basis of a standardized ``r x n`` response matrix.

    Returns the basis (first ``p`` columns of ``n**-0.5 * Lambda Sigma``) and
    the ``n x p`` coefficient matrix ``n**0.5 * Omega[:, :p]``.
    Left singular vectors are sign-normalized so their largest-magnitude
    entry is positive.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InputError("Y must be an r x n matrix")
    r, n = Y.shape
    if not 1 <= p <= min(r, n):
        raise InputError(f"p={p} outside [1, min(r, n)={min(r, n)}]")
    try:
        lam, sig, omega_t = np.linalg.svd(Y, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    lam, sig, omega = lam[:, :p], sig[:p], omega_t[:p].T
    signs = np.sign(lam[np.argmax(np.abs(lam), axis=0), np.arange(p)])
    signs[signs == 0] = 1.0
    lam, omega = lam * signs, omega * signs
    basis = BasisSet("PC", lam * sig / math.sqrt(n))
    return basis, omega * math.sqrt(n)


def tprs_eta(t, l: int = 2, q: int = 2):
    """Thin-plate radial function ``eta_{lq}(t)``; ``eta(0) = 0`` by continuity."""
    if 2 * l <= q:
        raise ParameterError(f"need 2l > q, got l={l}, q={q}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InputError("eta is defined for t >= 0")
    power = 2 * l - q
    if q % 2 == 0:
        coef = (-1.0) ** (l + 1 + q // 2) / (
            2.0 ** (2 * l - 1) * math.pi ** (q / 2) * math.factorial(l - 1) * math.factorial(l - q // 2)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            out = coef * t**power * np.log(t)
    else:
        coef = gamma_fn(q / 2 - l) / (2.0 ** (2 * l) * math.pi ** (q / 2) * math.factorial(l - 1))
        out = coef * t**power
    out = np.where(t > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def polynomial_matrix(points, l: int, orthonormalize: bool) -> np.ndarray:
    """Monomials of total degree < ``l`` evaluated at ``points``.

    Columns: the constant first, then degree 1 in coordinate order, and so
    on. With ``orthonormalize`` the columns are Gram-Schmidt orthonormalized
    (QR with positive diagonal).
    """
    points = np.atleast_2d(points)
    r, q = points.shape
    cols = []
    for degree in range(l):
        for combo in itertools.combinations_with_replacement(range(q), degree):
            col = np.ones(r)
            for j in combo:
                col = col * points[:, j]
            cols.append(col)
    T = np.column_stack(cols)
    if orthonormalize:
        Qm, R = np.linalg.qr(T)
        T = Qm * np.sign(np.diag(R))
    return T


def radial_matrix(grid: OutputGrid, l: int = 2) -> np.ndarray:
    dist = cdist(grid.unit, grid.unit)
    E = tprs_eta(dist, l, grid.q)
    return 0.5 * (E + E.T)


_EIG_CACHE: dict = {}


def tprs_eigensystem(grid: OutputGrid, l: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the radial matrix ``E`` sorted by |eigenvalue| descending.

    Ties keep the solver's (ascending) order. Results are memoized per grid.
    """
    key = (grid.unit.tobytes(), grid.unit.shape, l)
    if key not in _EIG_CACHE:
        E = radial_matrix(grid, l)
        try:
            w, U = sla.eigh(E)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"eigendecomposition of E failed: {exc}") from exc
        order = np.argsort(-np.abs(w), kind="stable")
        if len(_EIG_CACHE) > 8:
            _EIG_CACHE.clear()
        _EIG_CACHE[key] = (w[order], U[:, order])
    return _EIG_CACHE[key]


def tprs_basis(grid: OutputGrid, m: int, l: int = 2) -> BasisSet:
    """Thin-plate regression spline basis with ``m`` spline columns.

    The radial matrix is truncated to its ``m + M`` leading eigenpairs, where
    ``M`` is the number of polynomial columns; projecting out ``T`` leaves
    exactly ``m`` constrained spline directions, so ``p = m + M``.
    """
    if 2 * l <= grid.q:
        raise ParameterError(f"need 2l > q, got l={l}, q={grid.q}")
    T = polynomial_matrix(grid.unit, l, orthonormalize=not grid.is_lattice)
    M = T.shape[1]
    k = m + M
    if m < 1 or k > grid.r:
        raise InputError(f"m={m} invalid: need 1 <= m and m + {M} <= r={grid.r}")
    w, U = tprs_eigensystem(grid, l)
    U_k, D_k = U[:, :k], w[:k]
    TU = T.T @ U_k
    Qm, R = np.linalg.qr(TU.T, mode="complete")
    rdiag = np.abs(np.diag(R[:M]))
    if rdiag.min() <= 1e-12 * max(rdiag.max(), 1.0):
        raise NumericalError("T^T U_k is rank deficient; increase m")
    Z = Qm[:, M:]
    spline = U_k @ (D_k[:, None] * Z)
    return BasisSet("TPRS", np.hstack([spline, T]), m=m, l=l, U=U_k, D=D_k, Z=Z, T=T)


def _lattice_corr_apply(grid: OutputGrid, nu: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``Q @ X`` for ``Q = Q_1 kron ... kron Q_q`` on a lattice grid."""
    factors = [correlation_matrix(ax[:, None], [nu[j]], nugget=0.0) for j, ax in enumerate(grid.unit_axes)]
    sizes = [f.shape[0] for f in factors]
    out = X.reshape(*sizes, -1)
    for j, F in enumerate(factors):
        out = np.moveaxis(np.tensordot(F, out, axes=([1], [j])), 0, j)
    return out.reshape(X.shape)


def spatial_correlation_apply(grid: OutputGrid, nu: SpatialCorrelationParams, X) -> np.ndarray:
    """``Q @ X`` where ``Q`` is the output-location correlation (no nugget)."""
    X = np.asarray(X, dtype=float)
    if nu.dim != grid.q:
        raise InputError(f"nu has {nu.dim} components but grid has q={grid.q}")
    if grid.is_lattice:
        return _lattice_corr_apply(grid, nu.nu, X)
    return cross_correlation(grid.unit, grid.unit, nu) @ X


def tprs_scale_matrix(
    basis: BasisSet, grid: OutputGrid, nu: SpatialCorrelationParams, nugget: float = 0.0
) -> np.ndarray:
    """Scale matrix ``blockdiag(Z^T U^T (Q + nugget I) U Z, I_{p-m})``."""
    if basis.kind != "TPRS":
        raise InputError("scale matrix is only defined for TPRS bases")
    if basis.r != grid.r:
        raise InputError("basis and grid sizes differ")
    key = (tuple(nu.nu), float(nugget), grid.unit.tobytes())
    if key not in basis._scale_cache:
        UZ = basis.spline_part
        top = UZ.T @ spatial_correlation_apply(grid, nu, UZ) + nugget * (UZ.T @ UZ)
        p, m = basis.p, basis.m
        V = np.zeros((p, p))
        V[:m, :m] = 0.5 * (top + top.T)
        V[m:, m:] = np.eye(p - m)
        basis._scale_cache[key] = V
    return basis._scale_cache[key].copy()


def project_coefficients(basis: BasisSet, y) -> np.ndarray:
    """Unpenalized least-squares coefficients of ``y`` on the basis.

    ``y`` is an ``r``-vector or an ``n x r`` matrix (one run per row); the
    result is a ``p``-vector or ``n x p`` matrix respectively.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != basis.r:
        raise InputError(f"response length {y.shape[-1]} != r={basis.r}")
    Qm, R = basis._qr
    rhs = Qm.T @ (y.T if y.ndim == 2 else y)
    beta = sla.solve_triangular(R, rhs)
    return beta.T if y.ndim == 2 else beta


def reconstruct(basis: BasisSet, beta) -> np.ndarray:
    """Response(s) ``sum_k a_k beta_k``; accepts a ``p``-vector or ``n x p`` matrix."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != basis.p:
        raise InputError(f"coefficient length {beta.shape[-1]} != p={basis.p}")
    return beta @ basis.vectors.T
