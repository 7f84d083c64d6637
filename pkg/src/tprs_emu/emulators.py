"""The four emulators: PC-GP, iTPRS-GP, sTPRS-GP and the separable sGP.

All models work on standardized responses. ``STPRS`` and ``SGP`` are
plug-in emulators (fixed correlation parameters, ``tau`` at its posterior
mean, ``sigma2`` from held-out runs); ``PCGP`` and ``ITPRS`` carry MCMC
draws of ``(sigma^-2, tau, theta)`` and average the conditional Gaussian
predictions over a subset of them.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisSet, OutputGrid, pca_basis, project_coefficients, tprs_scale_matrix
from .design import InputRanges, StandardizationParams, standardize
from .errors import InputError, ResourceError, StateError
from .linalg import (
    CorrelationParams,
    SpatialCorrelationParams,
    chol_solve,
    cholesky,
    correlation_matrix,
    cross_correlation,
    kron_quadratic_form,
)
from .mcmc import (
    ChainState,
    CoefficientPosterior,
    PosteriorSamples,
    PriorConfig,
    initial_state,
    metropolis_chain,
)
from .simulator import SimDataset

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
KINDS = ("PCGP", "ITPRS", "STPRS", "SGP")
SGP_CAP = 20000

# plug-in emulators use a vague prior on tau
PLUGIN_PRIORS = PriorConfig(a_tau=1.0, b_tau=1.0)


@dataclass
class MCMCConfig:
    """Sampler settings for the PC-GP and iTPRS-GP fits."""

    n_iter: int = 10000
    burn_in: int = 1000
    seed: int = 0
    proposal_scale: float = 0.3
    woodbury: bool = True
    refresh_every: int = 100
    sample_nugget: bool = False

    def __post_init__(self):
        if self.n_iter < 1:
            raise InputError("MCMC needs at least one iteration")
        if not 0 <= self.burn_in < self.n_iter:
            raise InputError(f"burn_in={self.burn_in} must lie in [0, n_iter={self.n_iter})")


@dataclass
class PredictiveDistribution:
    """Predictive mean and sd at ``m`` inputs over all ``r`` output locations.

    Arrays are ``m x r`` (``r``-vectors when a single input was given).
    ``samples`` (draws x m x r) is set only when requested from an MCMC model.
    """

    mean: np.ndarray
    sd: np.ndarray
    samples: np.ndarray | None = None
    scale: str = "original"
    # modeling-scale moments, kept so intervals map exactly through the
    # (monotone) inverse standardization
    std_mean: np.ndarray | None = None
    std_sd: np.ndarray | None = None
    standardization: StandardizationParams | None = field(default=None, repr=False)

    def interval(self, k: float = 3.0):
        """``(lower, upper)`` bounds of the ``mean ± k sd`` interval.

        On the original scale the modeling-scale interval is transformed
        endpoint by endpoint, so with ``log1p`` it is asymmetric about
        ``mean``.
        """
        if self.scale == "original" and self.standardization is not None:
            std = self.standardization
            return std.inverse(self.std_mean - k * self.std_sd), std.inverse(self.std_mean + k * self.std_sd)
        return self.mean - k * self.sd, self.mean + k * self.sd


@dataclass(eq=False)
class EmulatorModel:
    """A fitted emulator; see the module docstring for the four kinds.

    ``coefficients`` is ``n x p`` (run-major rows); its basis-major
    flattening ``coefficients.T.ravel()`` is the ``beta`` vector of the
    independent model. For ``SGP`` the standardized training responses on
    the sub-grid are kept in ``responses`` instead.
    """

    kind: str
    inputs: np.ndarray
    ranges: InputRanges
    grid: OutputGrid
    standardization: StandardizationParams
    priors: PriorConfig
    basis: BasisSet | None = None
    coefficients: np.ndarray | None = None
    responses: np.ndarray | None = None
    subgrid: np.ndarray | None = None
    theta: np.ndarray | None = None
    nu: np.ndarray | None = None
    nugget: float = 1e-6
    V: np.ndarray | None = None
    tau: float | None = None
    tau_shape: float | None = None
    tau_rate: float | None = None
    sigma2: float = 0.0
    samples: PosteriorSamples | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown emulator kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int | None:
        return None if self.basis is None else self.basis.p

    @property
    def fitted(self) -> bool:
        if self.kind in ("PCGP", "ITPRS"):
            return self.samples is not None and self.coefficients is not None
        if self.kind == "STPRS":
            return self.coefficients is not None and self.tau is not None and self.V is not None
        return self.responses is not None and self.tau is not None

    def _chol(self, name: str, build):
        if name not in self._cache:
            self._cache[name] = cholesky(build(), name)
        return self._cache[name]

    @property
    def L_W(self) -> np.ndarray:
        return self._chol("W", lambda: correlation_matrix(self.inputs, self.theta, nugget=self.nugget))

    @property
    def L_V(self) -> np.ndarray:
        return self._chol("V", lambda: self.V)

    @property
    def L_S(self) -> np.ndarray:
        return self._chol("W_s", lambda: correlation_matrix(self._train_locations, self.nu, nugget=self.nugget))

    @property
    def _train_locations(self) -> np.ndarray:
        unit = self.grid.unit
        return unit if self.subgrid is None else unit[self.subgrid]

    # serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        basis = None
        if self.basis is not None:
            basis = {"kind": self.basis.kind, "vectors": arr(self.basis.vectors), "m": self.basis.m, "l": self.basis.l}
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "inputs": arr(self.inputs),
            "ranges": self.ranges.to_dict(),
            "grid": {
                "locations": arr(self.grid.locations),
                "bounds": arr(self.grid.bounds),
                "axes": None if self.grid.axes is None else [arr(a) for a in self.grid.axes],
            },
            "standardization": self.standardization.to_dict(),
            "priors": self.priors.to_dict(),
            "basis": basis,
            "coefficients": arr(self.coefficients),
            "responses": arr(self.responses),
            "subgrid": arr(self.subgrid),
            "theta": arr(self.theta),
            "nu": arr(self.nu),
            "nugget": self.nugget,
            "V": arr(self.V),
            "tau": self.tau,
            "tau_shape": self.tau_shape,
            "tau_rate": self.tau_rate,
            "sigma2": self.sigma2,
            "samples": None if self.samples is None else self.samples.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EmulatorModel":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported model format_version {version!r}")

        def arr(key, dtype=float):
            v = doc.get(key)
            return None if v is None else np.asarray(v, dtype=dtype)

        g = doc["grid"]
        grid = OutputGrid(
            np.asarray(g["locations"], dtype=float),
            bounds=np.asarray(g["bounds"], dtype=float),
            axes=None if g["axes"] is None else tuple(np.asarray(a, dtype=float) for a in g["axes"]),
        )
        basis = None
        if doc["basis"] is not None:
            b = doc["basis"]
            basis = BasisSet(b["kind"], np.asarray(b["vectors"], dtype=float), m=b["m"], l=b["l"])
        return cls(
            kind=doc["kind"],
            inputs=np.asarray(doc["inputs"], dtype=float).reshape(len(doc["inputs"]), -1),
            ranges=InputRanges(doc["ranges"]["low"], doc["ranges"]["high"]),
            grid=grid,
            standardization=StandardizationParams.from_dict(doc["standardization"]),
            priors=PriorConfig(**doc["priors"]),
            basis=basis,
            coefficients=arr("coefficients"),
            responses=arr("responses"),
            subgrid=arr("subgrid", int),
            theta=arr("theta"),
            nu=arr("nu"),
            nugget=float(doc["nugget"]),
            V=arr("V"),
            tau=doc["tau"],
            tau_shape=doc["tau_shape"],
            tau_rate=doc["tau_rate"],
            sigma2=float(doc["sigma2"]),
            samples=None if doc["samples"] is None else PosteriorSamples.from_dict(doc["samples"]),
        )


def save_model(model: EmulatorModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> EmulatorModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    return EmulatorModel.from_dict(doc)


# --------------------------------------------------------------------------
# fitting


def _theta_vec(theta, d: int) -> np.ndarray:
    t = theta.theta if isinstance(theta, CorrelationParams) else CorrelationParams(theta).theta
    if t.size == 1 and d > 1:
        t = np.repeat(t, d)
    if t.size != d:
        raise InputError(f"theta has {t.size} components for d={d} inputs")
    return np.array(t)


def _nu_vec(nu, q: int) -> np.ndarray:
    v = nu.nu if isinstance(nu, SpatialCorrelationParams) else SpatialCorrelationParams(nu).nu
    if v.size != q:
        raise InputError(f"nu has {v.size} components for q={q} output coordinates")
    return np.array(v)


def _tau_posterior(priors: PriorConfig, quad: float, count: int) -> tuple[float, float, float]:
    """Plug-in ``tau`` and the Gamma law of ``tau^-1`` given ``beta^T C^-1 beta``.

    The inverse-gamma density proportional to
    ``tau^-(a + N)/2 exp(-(b + quad) / (2 tau))`` has mean
    ``(b + quad) / (a + N - 2)``; equivalently ``tau^-1`` is Gamma with shape
    ``(a + N) / 2`` and rate ``(b + quad) / 2``.
    """
    a, b = priors.a_tau, priors.b_tau
    if a + count <= 2:
        raise InputError("tau posterior mean needs a_tau + n p > 2")
    return (b + quad) / (a + count - 2), 0.5 * (a + count), 0.5 * (b + quad)


def _check_dataset(data: SimDataset, grid_r: int | None = None) -> None:
    if data.n < 2:
        raise InputError("need at least two training runs")
    if grid_r is not None and data.grid.r != grid_r:
        raise InputError(f"dataset has r={data.grid.r} locations, basis has {grid_r}")


def fit_stprs(data: SimDataset, basis: BasisSet, theta, nu, priors: PriorConfig = PLUGIN_PRIORS,
              log1p: bool = False, nugget: float | None = None) -> EmulatorModel:
    """Separable TPRS emulator: ``Var(beta) = tau W kron V`` (run-major).

    ``W`` is the input correlation of the training runs and ``V`` the TPRS
    scale matrix built from the output correlation with parameters ``nu``.
    The quadratic form ``beta^T (W^-1 kron V^-1) beta`` is evaluated
    factor-wise.
    """
    if basis.kind != "TPRS":
        raise InputError("fit_stprs needs a TPRS basis")
    _check_dataset(data, basis.r)
    nugget = priors.nugget if nugget is None else nugget
    Z, std = standardize(data.responses, log1p=log1p)
    beta = project_coefficients(basis, Z)
    model = EmulatorModel(
        "STPRS", data.unit_inputs, data.ranges, data.grid, std, priors, basis=basis,
        coefficients=beta, theta=_theta_vec(theta, data.ranges.d), nu=_nu_vec(nu, data.grid.q),
        nugget=nugget,
    )
    model.V = tprs_scale_matrix(basis, data.grid, SpatialCorrelationParams(model.nu), nugget=nugget)
    quad = kron_quadratic_form(model.L_W, model.L_V, beta)
    model.tau, model.tau_shape, model.tau_rate = _tau_posterior(priors, quad, beta.size)
    return model


def fit_sgp(data: SimDataset, theta, nu, priors: PriorConfig = PLUGIN_PRIORS, subgrid=None,
            log1p: bool = False, nugget: float | None = None, cap: int = SGP_CAP) -> EmulatorModel:
    """Separable GP on inputs x locations with covariance ``tau W_x kron W_s``.

    Only the locations in ``subgrid`` (row indices into the grid) are used
    for training; predictions cover the whole grid.
    """
    _check_dataset(data)
    nugget = priors.nugget if nugget is None else nugget
    if subgrid is not None:
        subgrid = np.asarray(subgrid, dtype=int)
        if subgrid.ndim != 1 or subgrid.size == 0 or subgrid.min() < 0 or subgrid.max() >= data.grid.r:
            raise InputError("subgrid must index rows of the output grid")
        if np.unique(subgrid).size != subgrid.size:
            raise InputError("subgrid has repeated locations")
    r_train = data.grid.r if subgrid is None else subgrid.size
    if data.n * r_train > cap:
        raise ResourceError(
            f"sGP training size n*r = {data.n}*{r_train} exceeds cap {cap}; train on a sub-grid"
        )
    Z, std = standardize(data.responses, log1p=log1p)
    Y = Z if subgrid is None else Z[:, subgrid]
    model = EmulatorModel(
        "SGP", data.unit_inputs, data.ranges, data.grid, std, priors, responses=Y, subgrid=subgrid,
        theta=_theta_vec(theta, data.ranges.d), nu=_nu_vec(nu, data.grid.q), nugget=nugget,
    )
    quad = kron_quadratic_form(model.L_W, model.L_S, Y)
    model.tau, model.tau_shape, model.tau_rate = _tau_posterior(priors, quad, Y.size)
    return model


def _fit_mcmc(kind: str, data: SimDataset, basis: BasisSet, Z, std, priors: PriorConfig,
              mcmc: MCMCConfig | None) -> EmulatorModel:
    mcmc = mcmc or MCMCConfig()
    beta = project_coefficients(basis, Z)
    resid = Z - beta @ basis.vectors.T
    sse = float(np.sum(resid * resid))
    resid_dof = data.n * (basis.r - basis.p)
    X = data.unit_inputs
    post = CoefficientPosterior(
        X, basis.gram, beta, priors, sse, resid_dof, woodbury=mcmc.woodbury, refresh_every=mcmc.refresh_every
    )
    blocks = ("sigma2_inv", "tau", "theta") + (("nugget",) if mcmc.sample_nugget else ())
    init = initial_state(beta, priors, sse, resid_dof, data.ranges.d)
    samples = metropolis_chain(
        post, init, proposal_scales=mcmc.proposal_scale, n_iter=mcmc.n_iter, burn_in=mcmc.burn_in,
        seed=mcmc.seed, blocks=blocks,
    )
    if post.refresh_errors:
        log.info("largest cached-inverse drift at refresh: %.3e", max(post.refresh_errors))
    return EmulatorModel(
        kind, X, data.ranges, data.grid, std, priors, basis=basis, coefficients=beta,
        nugget=priors.nugget, samples=samples,
    )


def fit_itprs(data: SimDataset, basis: BasisSet, priors: PriorConfig | None = None,
              mcmc: MCMCConfig | None = None, log1p: bool = False) -> EmulatorModel:
    """Independent-coefficient TPRS emulator (``V = I``), sampled by MCMC."""
    if basis.kind != "TPRS":
        raise InputError("fit_itprs needs a TPRS basis")
    _check_dataset(data, basis.r)
    Z, std = standardize(data.responses, log1p=log1p)
    return _fit_mcmc("ITPRS", data, basis, Z, std, priors or PriorConfig(), mcmc)


def fit_pcgp(data: SimDataset, p: int, priors: PriorConfig | None = None,
             mcmc: MCMCConfig | None = None, log1p: bool = False) -> EmulatorModel:
    """Principal-component emulator with independent coefficient GPs."""
    _check_dataset(data)
    Z, std = standardize(data.responses, log1p=log1p)
    basis, _ = pca_basis(Z.T, p)
    return _fit_mcmc("PCGP", data, basis, Z, std, priors or PriorConfig(), mcmc)


# --------------------------------------------------------------------------
# prediction


def _clamp_variance(var: np.ndarray, label: str) -> np.ndarray:
    neg = var < 0
    if np.any(neg):
        worst = float(var.min())
        if worst < -1e-10:
            log.warning("%s: predictive variance %.3e < 0 clamped to 0", label, worst)
        else:
            log.debug("%s: rounding-level negative variance %.3e clamped", label, worst)
        var = np.where(neg, 0.0, var)
    return var


def _unit_inputs(model: EmulatorModel, x_star, unit: bool) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x_star, dtype=float))
    if x.shape[1] != model.d:
        raise InputError(f"x_star has {x.shape[1]} components, model has d={model.d}")
    if not np.all(np.isfinite(x)):
        raise InputError("x_star must be finite")
    u = x if unit else model.ranges.to_unit(x)
    if np.any((u < -1e-12) | (u > 1 + 1e-12)):
        warnings.warn("x_star outside the training box: extrapolating", RuntimeWarning, stacklevel=3)
    return u


def predict_coefficients(model: EmulatorModel, x_star, unit: bool = False):
    """sTPRS coefficient predictive mean (``m x p``) and covariance factor.

    Returns ``(mean, shrink, V)`` with coefficient covariance
    ``tau * shrink[i] * V`` at input ``i``.
    """
    if model.kind != "STPRS":
        raise InputError("predict_coefficients is for sTPRS models")
    if not model.fitted:
        raise StateError("model is not fitted")
    u = _unit_inputs(model, x_star, unit)
    w = cross_correlation(model.inputs, u, model.theta)
    Wi_w = chol_solve(model.L_W, w)
    mean = Wi_w.T @ model.coefficients
    shrink = np.maximum(1.0 - np.sum(w * Wi_w, axis=0), 0.0)
    return mean, shrink, model.V


def _predict_stprs(model: EmulatorModel, u: np.ndarray):
    mean_c, shrink, V = predict_coefficients(model, u, unit=True)
    B = model.basis.vectors
    mean = mean_c @ B.T
    bvb = np.sum((B @ V) * B, axis=1)
    var = model.tau * shrink[:, None] * bvb[None, :] + model.sigma2
    return mean, _clamp_variance(var, "sTPRS")


def _predict_sgp(model: EmulatorModel, u: np.ndarray):
    wx = cross_correlation(model.inputs, u, model.theta)
    ws = cross_correlation(model._train_locations, model.grid.unit, model.nu)
    Lx, Ls = model.L_W, model.L_S
    if "alpha" not in model._cache:
        a = chol_solve(Lx, model.responses)
        model._cache["alpha"] = chol_solve(Ls, a.T).T
    alpha = model._cache["alpha"]
    mean = wx.T @ alpha @ ws
    kx = np.sum(wx * chol_solve(Lx, wx), axis=0)
    ks = np.sum(ws * chol_solve(Ls, ws), axis=0)
    var = model.tau * (1.0 - kx[:, None] * ks[None, :]) + model.sigma2
    return mean, _clamp_variance(var, "sGP")


def _draw_indices(samples: PosteriorSamples, n_samples: int) -> np.ndarray:
    n = samples.n_draws
    if n_samples >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, n_samples).round().astype(int))


def _mcmc_conditional(model: EmulatorModel, state: ChainState, u: np.ndarray, post: CoefficientPosterior):
    """Mean (m x p) and covariance (m x p x p) of ``beta(x*)`` given one draw."""
    n, p = model.n, model.p
    cache = post.conditional_draw_inputs(state)
    Dinv, Dinv_b = cache["Dinv"], cache["Dinv_b"]
    m = u.shape[0]
    # G[k] = tau_k * w*_k, n x m
    G = np.empty((p, n, m))
    for k in range(p):
        G[k] = state.tau[k] * cross_correlation(model.inputs, u, state.theta[k])
    mean = np.einsum("knm,kn->mk", G, Dinv_b.reshape(p, n))
    Dblk = Dinv.reshape(p, n, p, n)
    cross = np.einsum("kai,kalb,lbi->ikl", G, Dblk, G)
    cov = -cross
    idx = np.arange(p)
    cov[:, idx, idx] += state.tau
    return mean, cov


def _predict_mcmc(model: EmulatorModel, u: np.ndarray, n_samples: int, rng, return_samples: bool):
    # the response is the basis expansion of the coefficient draws; unlike
    # the plug-in emulators no independent error term is added
    samples = model.samples
    post = CoefficientPosterior(
        model.inputs, model.basis.gram, model.coefficients, model.priors, woodbury=False
    )
    B = model.basis.vectors
    idx = _draw_indices(samples, n_samples)
    m, r = u.shape[0], B.shape[0]
    means = np.empty((idx.size, m, r))
    variances = np.empty((idx.size, m, r))
    draws = np.empty((idx.size, m, r)) if return_samples else None
    for j, i in enumerate(idx):
        state = samples.state(int(i))
        mean_c, cov_c = _mcmc_conditional(model, state, u, post)
        means[j] = mean_c @ B.T
        variances[j] = _clamp_variance(np.einsum("rk,mkl,rl->mr", B, cov_c, B), model.kind)
        if return_samples:
            for t in range(m):
                c = cov_c[t]
                w, Q = np.linalg.eigh(0.5 * (c + c.T))
                beta = mean_c[t] + Q @ (np.sqrt(np.maximum(w, 0.0)) * rng.standard_normal(w.size))
                draws[j, t] = B @ beta
    if return_samples:
        return draws.mean(axis=0), draws.var(axis=0, ddof=0), draws
    # law of total variance over the retained draws
    mean = means.mean(axis=0)
    var = variances.mean(axis=0) + means.var(axis=0)
    return mean, var, None


def predict(model: EmulatorModel, x_star, n_samples: int = 500, scale: str = "original",
            return_samples: bool = False, unit: bool = False, seed: int = 0) -> PredictiveDistribution:
    """Posterior predictive distribution over the output grid at ``x_star``.

    Parameters
    ----------
    x_star : (d,) or (m, d) array
        Untried inputs, in physical units unless ``unit`` is set.
    n_samples : int
        MCMC emulators: number of evenly spaced retained draws used.
    scale : {"original", "standardized"}
        Report on the response scale or the modeling scale.
    return_samples : bool
        MCMC emulators only: draw one response field per used draw and
        report their sample mean and sd (and the draws themselves).
    """
    if scale not in ("original", "standardized"):
        raise InputError(f"scale must be 'original' or 'standardized', got {scale!r}")
    if not model.fitted:
        raise StateError(f"{model.kind} model is not fitted")
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    single = np.asarray(x_star).ndim == 1
    u = _unit_inputs(model, x_star, unit)
    draws = None
    if model.kind == "STPRS":
        mean, var = _predict_stprs(model, u)
    elif model.kind == "SGP":
        mean, var = _predict_sgp(model, u)
    else:
        if return_samples is False:
            mean, var, _ = _predict_mcmc(model, u, n_samples, None, False)
        else:
            mean, var, draws = _predict_mcmc(model, u, n_samples, np.random.default_rng(seed), True)
    if return_samples and draws is None:
        raise InputError("samples are only available for MCMC emulators")
    std = model.standardization
    std_mean, std_sd = mean, np.sqrt(var)
    if scale == "original":
        if draws is not None:
            draws = std.inverse(draws)
            mean, sd = draws.mean(axis=0), draws.std(axis=0)
        else:
            mean, sd = std.inverse_moments(mean, var)
    else:
        sd = std_sd
    if single:
        mean, sd, std_mean, std_sd = mean[0], sd[0], std_mean[0], std_sd[0]
        if draws is not None:
            draws = draws[:, 0]
    return PredictiveDistribution(mean, sd, draws, scale, std_mean, std_sd, std)


def predict_mean_standardized(model: EmulatorModel, x_star, n_samples: int = 500, unit: bool = False):
    """Posterior-mean field on the modeling scale (``m x r``)."""
    u = _unit_inputs(model, x_star, unit)
    if model.kind == "STPRS":
        mean_c, _, _ = predict_coefficients(model, u, unit=True)
        return mean_c @ model.basis.vectors.T
    if model.kind == "SGP":
        return _predict_sgp(model, u)[0]
    return _predict_mcmc(model, u, n_samples, None, False)[0]


def estimate_sigma2(model: EmulatorModel, holdout: SimDataset, n_samples: int = 500) -> float:
    """Mean squared standardized residual on held-out runs; stored in ``model.sigma2``."""
    if holdout.n < 1:
        raise InputError("holdout set is empty")
    if not model.grid.same_as(holdout.grid):
        raise InputError("holdout grid differs from the training grid")
    if not model.fitted:
        raise StateError("model is not fitted")
    truth = model.standardization.transform(holdout.responses)
    pred = predict_mean_standardized(model, holdout.inputs, n_samples=n_samples)
    resid = pred - truth
    model.sigma2 = float(np.mean(resid * resid))
    return model.sigma2


__all__ = [
    "EmulatorModel",
    "MCMCConfig",
    "PLUGIN_PRIORS",
    "PredictiveDistribution",
    "estimate_sigma2",
    "fit_itprs",
    "fit_pcgp",
    "fit_sgp",
    "fit_stprs",
    "load_model",
    "predict",
    "predict_coefficients",
    "predict_mean_standardized",
    "save_model",
]
