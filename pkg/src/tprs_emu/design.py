"""Experimental designs over the input box and response standardization."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InputError


@dataclass(frozen=True)
class InputRanges:
    """Per-dimension ``(low, high)`` limits in physical units."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=float))
        high = np.atleast_1d(np.asarray(self.high, dtype=float))
        if low.shape != high.shape or low.ndim != 1:
            raise InputError("low and high must be vectors of equal length")
        if not np.all(low < high):
            raise InputError(f"need low < high in every dimension, got {low} / {high}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @classmethod
    def from_pairs(cls, pairs) -> "InputRanges":
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    @property
    def d(self) -> int:
        return self.low.size

    def to_unit(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise InputError(f"inputs have {X.shape[1]} columns, ranges have {self.d}")
        return (X - self.low) / (self.high - self.low)

    def from_unit(self, U) -> np.ndarray:
        return self.low + np.atleast_2d(U) * (self.high - self.low)

    def to_dict(self) -> dict:
        return {"low": self.low.tolist(), "high": self.high.tolist()}


def _random_lhs(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (strata + rng.uniform(size=(n, d))) / n


def _maximin_key(U: np.ndarray) -> np.ndarray:
    # sorted pairwise distances compared lexicographically: the first entry is
    # the maximin criterion, the rest break its (rare) ties
    return np.sort(pdist(U))


def _better(a: np.ndarray, b: np.ndarray) -> bool:
    diff = np.nonzero(a != b)[0]
    return diff.size > 0 and a[diff[0]] > b[diff[0]]


def maximin_lhs_unit(n: int, d: int, iterations: int = 100, seed: int = 0) -> np.ndarray:
    """Maximin Latin hypercube on ``[0, 1]^d``.

    Iteration ``i`` draws one fresh random LHS and tries one pairwise swap
    (within a column, involving a point of the closest pair) on the
    incumbent; either replaces the incumbent only when its sorted distance
    profile is lexicographically larger. All randomness comes from a single
    sequential stream, so the first ``k`` iterations are identical for any
    ``iterations >= k`` and the criterion never decreases with more work.
    """
    if n < 2:
        raise InputError("maximin_lhs needs n >= 2")
    if iterations < 1:
        raise InputError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    rows_i, rows_j = np.triu_indices(n, 1)
    best = _random_lhs(rng, n, d)
    best_key = _maximin_key(best)
    for _ in range(iterations - 1):
        cand = _random_lhs(rng, n, d)
        key = _maximin_key(cand)
        if _better(key, best_key):
            best, best_key = cand, key
        # pairwise swap on the incumbent
        dist = pdist(best)
        closest = int(np.argmin(dist))
        i, j = int(rows_i[closest]), int(rows_j[closest])
        row = i if rng.uniform() < 0.5 else j
        other = int(rng.integers(n))
        col = int(rng.integers(d))
        if other in (i, j):
            continue
        trial = best.copy()
        trial[[row, other], col] = trial[[other, row], col]
        key = _maximin_key(trial)
        if _better(key, best_key):
            best, best_key = trial, key
    return best


def maximin_lhs(n: int, ranges: InputRanges, iterations: int = 100, seed: int = 0) -> np.ndarray:
    """Maximin Latin hypercube design of ``n`` runs in physical units."""
    return ranges.from_unit(maximin_lhs_unit(n, ranges.d, iterations, seed))


def monte_carlo_sample(n: int, ranges: InputRanges, seed: int = 0) -> np.ndarray:
    """``n`` i.i.d. uniform points in the input box."""
    if n < 1:
        raise InputError("monte_carlo_sample needs n >= 1")
    rng = np.random.default_rng(seed)
    return ranges.from_unit(rng.uniform(size=(n, ranges.d)))


@dataclass(frozen=True)
class StandardizationParams:
    """Per-location centering/scaling, optionally after ``log(y + 1)``.

    Locations whose spread is negligible are flagged ``degenerate``: their
    standardized values are zero and they map back to the stored constant.
    """

    mean: np.ndarray
    sd: np.ndarray
    degenerate: np.ndarray
    log1p: bool = False

    @property
    def r(self) -> int:
        return self.mean.size

    def _forward(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.shape[-1] != self.r:
            raise InputError(f"responses have {Y.shape[-1]} locations, expected {self.r}")
        if self.log1p:
            if np.any(Y < -1):
                raise InputError("log1p transform needs responses >= -1")
            Y = np.log1p(Y)
        return Y

    def transform(self, Y) -> np.ndarray:
        W = self._forward(Y)
        safe = np.where(self.degenerate, 1.0, self.sd)
        return np.where(self.degenerate, 0.0, (W - self.mean) / safe)

    def inverse(self, Z) -> np.ndarray:
        W = self.mean + np.asarray(Z, dtype=float) * np.where(self.degenerate, 0.0, self.sd)
        return np.expm1(W) if self.log1p else W

    def inverse_moments(self, mean, var) -> tuple[np.ndarray, np.ndarray]:
        """Original-scale mean and sd of a Gaussian on the standardized scale.

        Affine case is exact; with ``log1p`` the log-normal moments are used.
        """
        scale = np.where(self.degenerate, 0.0, self.sd)
        a = self.mean + np.asarray(mean) * scale
        b = np.asarray(var) * scale**2
        if not self.log1p:
            return a, np.sqrt(b)
        m = np.exp(a + 0.5 * b) - 1.0
        v = np.expm1(b) * np.exp(2 * a + b)
        return m, np.sqrt(v)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "degenerate": self.degenerate.tolist(),
            "log1p": self.log1p,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StandardizationParams":
        return cls(
            np.asarray(doc["mean"], dtype=float),
            np.asarray(doc["sd"], dtype=float),
            np.asarray(doc["degenerate"], dtype=bool),
            bool(doc["log1p"]),
        )


def standardize(responses, log1p: bool = False, degenerate_rtol: float = 1e-10):
    """Center and scale each output location to sample mean 0, sd 1.

    The sample sd uses the ``n - 1`` divisor. A location is degenerate when
    its sd is at most ``degenerate_rtol`` times its own absolute mean (this
    includes exactly constant columns); locations that are merely small
    everywhere are standardized like any other.
    Returns ``(standardized, params)``.
    """
    Y = np.asarray(responses, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise InputError("standardize needs an n x r matrix with n >= 2")
    if log1p:
        if np.any(Y < -1):
            raise InputError("log1p transform needs responses >= -1")
        Y = np.log1p(Y)
    mean = Y.mean(axis=0)
    # second pass removes most of the rounding left in the first mean
    mean = mean + (Y - mean).mean(axis=0)
    sd = Y.std(axis=0, ddof=1)
    degenerate = sd <= degenerate_rtol * np.abs(mean)
    params = StandardizationParams(mean, np.where(degenerate, 0.0, sd), degenerate, log1p)
    safe = np.where(degenerate, 1.0, sd)
    Z = np.where(degenerate, 0.0, (Y - mean) / safe)
    return Z, params


def write_design_csv(path, X) -> None:
    X = np.atleast_2d(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id"] + [f"x{j + 1}" for j in range(X.shape[1])])
        for i, row in enumerate(X):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_design_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(run_ids, X)`` from a ``run_id,x1,...,xd`` file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "run_id":
        raise InputError(f"{path}: expected header run_id,x1,...")
    body = [r for r in rows[1:] if r]
    ids = np.array([r[0] for r in body])
    try:
        X = np.array([[float(v) for v in r[1:]] for r in body])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric design entry ({exc})") from exc
    return ids, X.reshape(len(body), len(rows[0]) - 1)
