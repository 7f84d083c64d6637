"""Experiment pipeline: datasets, validation search, metrics and CSV output."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .basis import lattice_grid, sublattice_index, tprs_basis
from .design import InputRanges, maximin_lhs, monte_carlo_sample
from .emulators import (
    PLUGIN_PRIORS,
    MCMCConfig,
    estimate_sigma2,
    fit_itprs,
    fit_pcgp,
    fit_sgp,
    fit_stprs,
    predict,
    predict_mean_standardized,
)
from .errors import EmulatorError, InputError
from .mcmc import PriorConfig
from .simulator import (
    DEFAULT_LOCATION_BOX,
    DEFAULT_TIME_BOX,
    SimDataset,
    SpillConfig,
    generate_dataset,
    read_external,
)

log = logging.getLogger(__name__)

THETA_LEVELS = (0.01, 0.05, 0.15, 0.3, 0.5, 0.7, 0.85, 0.95, 0.99)
EMULATOR_NAMES = ("pcgp", "itprs", "stprs", "sgp")


def thread_cap() -> int:
    """Worker count from ``TPRS_EMU_THREADS`` (default 1)."""
    raw = os.environ.get("TPRS_EMU_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise InputError(f"TPRS_EMU_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise InputError("TPRS_EMU_THREADS must be >= 1")
    return n


# --------------------------------------------------------------------------
# metrics


@dataclass
class RMSEResult:
    per_run: np.ndarray
    summary: dict


def rmse(pred_means, truth) -> RMSEResult:
    """Per-run root mean squared error over locations, with quartile summary."""
    pred = np.atleast_2d(np.asarray(pred_means, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != truth.shape:
        raise InputError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    err = pred - truth
    per_run = np.sqrt(np.mean(err * err, axis=1))
    q = np.quantile(per_run, [0.0, 0.25, 0.5, 0.75, 1.0])
    summary = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))
    summary["mean"] = float(per_run.mean())
    return RMSEResult(per_run, summary)


def coverage(mean, sd, truth, k: float = 3.0) -> float:
    """Fraction of cells with ``|truth - mean| <= k sd``.

    Cells with zero sd count as covered only on exact equality.
    """
    if not k > 0:
        raise InputError("coverage multiplier k must be positive")
    mean, sd, truth = (np.asarray(a, dtype=float) for a in (mean, sd, truth))
    if not mean.shape == sd.shape == truth.shape:
        raise InputError("mean, sd and truth must share a shape")
    if np.any(sd < 0):
        raise InputError("negative predictive sd")
    return float(np.mean(np.abs(truth - mean) <= k * sd))


def interval_coverage(lower, upper, truth) -> float:
    """Fraction of cells with ``lower <= truth <= upper``."""
    lower, upper, truth = (np.asarray(a, dtype=float) for a in (lower, upper, truth))
    if not lower.shape == upper.shape == truth.shape:
        raise InputError("lower, upper and truth must share a shape")
    if np.any(upper < lower):
        raise InputError("interval upper bound below lower bound")
    return float(np.mean((truth >= lower) & (truth <= upper)))


# --------------------------------------------------------------------------
# search


@dataclass
class SearchResult:
    best: dict
    score: float
    table: list

    def write_csv(self, path) -> None:
        keys = sorted({k for row in self.table for k in row["candidate"]})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index"] + keys + ["rmse", "error"])
            for row in self.table:
                cand = row["candidate"]
                w.writerow(
                    [row["index"]]
                    + [json.dumps(cand[k]) if k in cand else "" for k in keys]
                    + ["" if row["score"] is None else repr(row["score"]), row["error"] or ""]
                )


def _size_of(candidate: dict) -> float:
    for key in ("p", "m"):
        if key in candidate:
            return candidate[key]
    return 0


def grid_search(evaluate, candidates, threads: int | None = None) -> SearchResult:
    """Score every candidate and return the one with the lowest score.

    ``evaluate(candidate) -> float`` fits on training data and returns the
    validation RMSE. Ties go to the smaller basis size (``p`` or ``m`` key),
    then to the earlier candidate. Failures are recorded in the table; if
    every candidate fails an :class:`EmulatorError` lists the causes.
    """
    candidates = list(candidates)
    if not candidates:
        raise InputError("grid_search needs at least one candidate")
    threads = thread_cap() if threads is None else threads

    def run(item):
        i, cand = item
        try:
            return {"index": i, "candidate": cand, "score": float(evaluate(cand)), "error": None}
        except EmulatorError as exc:
            return {"index": i, "candidate": cand, "score": None, "error": f"{type(exc).__name__}: {exc}"}

    items = list(enumerate(candidates))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            table = list(pool.map(run, items))
    else:
        table = [run(it) for it in items]
    ok = [row for row in table if row["score"] is not None and np.isfinite(row["score"])]
    if not ok:
        causes = "; ".join(f"#{row['index']}: {row['error'] or 'non-finite score'}" for row in table)
        raise EmulatorError(f"all {len(table)} candidates failed: {causes}")
    best = min(ok, key=lambda row: (row["score"], _size_of(row["candidate"]), row["index"]))
    return SearchResult(dict(best["candidate"]), best["score"], table)


def coordinate_search(evaluate, start: dict, levels: dict, sweeps: int = 2,
                      threads: int | None = None) -> SearchResult:
    """Cyclic coordinate-wise grid search.

    ``levels`` maps a key of ``start`` to its candidate values; a key of the
    form ``("theta", j)`` addresses entry ``j`` of the list ``start["theta"]``.
    Each coordinate is optimized in turn with the others held at the current
    best, for ``sweeps`` passes. Every evaluation is kept in the table.
    """
    current = _copy(start)
    table, cache = [], {}
    best_score = None

    def scored(cand):
        key = json.dumps(cand, sort_keys=True)
        if key not in cache:
            cache[key] = float(evaluate(cand))
        return cache[key]

    for _ in range(sweeps):
        for coord, values in levels.items():
            cands = [_assign(current, coord, v) for v in values]
            res = grid_search(scored, cands, threads=threads)
            for row in res.table:
                table.append(dict(row, index=len(table)))
            if best_score is None or res.score <= best_score:
                current, best_score = res.best, res.score
    return SearchResult(current, best_score, table)


def _copy(cand: dict) -> dict:
    return {k: list(v) if isinstance(v, list) else v for k, v in cand.items()}


def _assign(cand: dict, coord, value) -> dict:
    out = _copy(cand)
    if isinstance(coord, tuple):
        key, j = coord
        out[key][j] = value
    else:
        out[coord] = value
    return out


# --------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Settings for one comparison; loadable from a flat JSON document.

    ``scenario`` is ``1..4`` for the built-in simulator or a mapping with
    ``train``, ``validation`` and ``test`` directories each holding the
    ``inputs.csv``/``grid.csv``/``outputs.csv`` triple.
    """

    scenario: int | dict = 4
    n_train: int = 80
    n_validation: int = 10
    n_test: int = 10
    grid: tuple = (50, 50)
    location_box: tuple = DEFAULT_LOCATION_BOX
    time_box: tuple = DEFAULT_TIME_BOX
    lhs_iterations: int = 100
    emulators: tuple = ("stprs", "sgp")
    theta_levels: tuple = THETA_LEVELS
    nu_levels: tuple = THETA_LEVELS
    stprs_m_levels: tuple = (10, 20, 40, 60, 100)
    stprs_nu: tuple = (0.05, 0.05)
    sgp_subgrid: tuple | None = (10, 10)
    itprs_m: int = 2
    pcgp_p: int = 3
    search_sweeps: int = 2
    itprs_priors: dict = field(default_factory=lambda: {"a_theta": 1.0, "b_theta": 0.1})
    pcgp_priors: dict = field(default_factory=lambda: {"a_theta": 1.0, "b_theta": 3.0})
    plugin_priors: dict = field(default_factory=lambda: {"a_tau": 1.0, "b_tau": 1.0})
    mcmc_iterations: int = 10000
    mcmc_burn_in: int = 1000
    predict_draws: int = 500
    log1p: bool = False
    original_scale: bool = False
    sigma2_from: str = "validation"
    coverage_k: float = 3.0
    replicates: int = 1
    seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if isinstance(self.scenario, dict):
            missing = {"train", "validation", "test"} - set(self.scenario)
            if missing:
                raise InputError(f"external scenario needs directories {sorted(missing)}")
        elif self.scenario not in (1, 2, 3, 4):
            raise InputError(f"scenario must be 1..4 or an external mapping, got {self.scenario!r}")
        unknown = set(self.emulators) - set(EMULATOR_NAMES)
        if unknown:
            raise InputError(f"unknown emulators {sorted(unknown)}; choose from {EMULATOR_NAMES}")
        if min(self.n_train, self.n_validation, self.n_test) < 1 or self.n_train < 2:
            raise InputError("design sizes must be positive (n_train >= 2)")
        if self.replicates < 1:
            raise InputError("replicates must be >= 1")
        if self.sigma2_from not in ("validation", "test"):
            raise InputError(f"sigma2_from must be 'validation' or 'test', got {self.sigma2_from!r}")
        for name in ("grid", "location_box", "time_box", "theta_levels", "nu_levels",
                     "stprs_m_levels", "stprs_nu", "emulators"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.sgp_subgrid is not None:
            self.sgp_subgrid = tuple(self.sgp_subgrid)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def replicate_seeds(seed: int) -> tuple[int, int, int]:
    """Independent integer seeds for the training, validation and test designs."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


@dataclass
class Datasets:
    train: SimDataset
    validation: SimDataset
    test: SimDataset


def make_datasets(config: ExperimentConfig, seed: int) -> Datasets:
    """Training (maximin LHS), validation and test (Monte Carlo) runs."""
    if isinstance(config.scenario, dict):
        train = _read_dir(config.scenario["train"])
        ranges = train.ranges
        val = _read_dir(config.scenario["validation"], ranges, train.grid)
        test = _read_dir(config.scenario["test"], ranges, train.grid)
        return Datasets(train, val, test)
    d = config.scenario
    spill = SpillConfig.scenario(d)
    grid = lattice_grid(config.grid, (config.location_box, config.time_box))
    s_train, s_val, s_test = replicate_seeds(seed)
    ranges = spill.ranges
    train = generate_dataset(maximin_lhs(config.n_train, ranges, config.lhs_iterations, s_train), d, grid, spill)
    val = generate_dataset(monte_carlo_sample(config.n_validation, ranges, s_val), d, grid, spill)
    test = generate_dataset(monte_carlo_sample(config.n_test, ranges, s_test), d, grid, spill)
    return Datasets(train, val, test)


def _read_dir(directory, ranges: InputRanges | None = None, grid=None) -> SimDataset:
    directory = Path(directory)
    return read_external(directory / "inputs.csv", directory / "grid.csv", directory / "outputs.csv",
                         ranges=ranges, grid=grid)


# --------------------------------------------------------------------------
# fitting with validation


def _validation_rmse(model, validation: SimDataset, n_samples: int = 100) -> float:
    truth = model.standardization.transform(validation.responses)
    pred = predict_mean_standardized(model, validation.inputs, n_samples=n_samples)
    return rmse(pred, truth).summary["mean"]


class _BasisCache:
    def __init__(self, grid):
        self.grid = grid
        self._store = {}

    def __call__(self, m: int):
        if m not in self._store:
            self._store[m] = tprs_basis(self.grid, m)
        return self._store[m]


def fit_selected(name: str, data: Datasets, config: ExperimentConfig, seed: int = 0):
    """Fit emulator ``name`` with validation-chosen settings.

    Returns ``(model, search)`` where ``search`` is the
    :class:`SearchResult` (``None`` for the MCMC emulators, whose settings
    are fixed by the config).
    """
    train, val = data.train, data.validation
    d = train.ranges.d
    plugin = PriorConfig(**config.plugin_priors) if config.plugin_priors else PLUGIN_PRIORS
    levels = {("theta", j): list(config.theta_levels) for j in range(d)}
    if name == "stprs":
        bases = _BasisCache(train.grid)
        m_levels = [m for m in config.stprs_m_levels if m + 3 <= train.grid.r]

        def evaluate(c):
            return _validation_rmse(fit_stprs(train, bases(c["m"]), c["theta"], c["nu"], plugin, config.log1p), val)

        start = {"theta": [0.5] * d, "m": m_levels[len(m_levels) // 2], "nu": list(config.stprs_nu)}
        search = coordinate_search(evaluate, start, {**levels, "m": m_levels}, config.search_sweeps)
        c = search.best
        model = fit_stprs(train, bases(c["m"]), c["theta"], c["nu"], plugin, config.log1p)
    elif name == "sgp":
        sub = None if config.sgp_subgrid is None else sublattice_index(train.grid, config.sgp_subgrid)
        q = train.grid.q

        def evaluate(c):
            return _validation_rmse(fit_sgp(train, c["theta"], c["nu"], plugin, sub, config.log1p), val)

        start = {"theta": [0.5] * d, "nu": [0.5] * q}
        nu_levels = {("nu", j): list(config.nu_levels) for j in range(q)}
        search = coordinate_search(evaluate, start, {**levels, **nu_levels}, config.search_sweeps)
        c = search.best
        model = fit_sgp(train, c["theta"], c["nu"], plugin, sub, config.log1p)
    elif name in ("itprs", "pcgp"):
        mcmc = MCMCConfig(n_iter=config.mcmc_iterations, burn_in=config.mcmc_burn_in, seed=seed)
        if name == "itprs":
            priors = PriorConfig(**config.itprs_priors)
            model = fit_itprs(train, tprs_basis(train.grid, config.itprs_m), priors, mcmc, config.log1p)
        else:
            priors = PriorConfig(**config.pcgp_priors)
            model = fit_pcgp(train, config.pcgp_p, priors, mcmc, config.log1p)
        search = None
    else:
        raise InputError(f"unknown emulator {name!r}")
    holdout = data.test if config.sigma2_from == "test" else val
    estimate_sigma2(model, holdout, n_samples=min(config.predict_draws, 100))
    return model, search


@dataclass
class EmulatorResult:
    name: str
    mean: np.ndarray
    sd: np.ndarray
    truth: np.ndarray
    rmse: RMSEResult
    coverage: float
    search: SearchResult | None
    model: object = None


def evaluate_on_test(name: str, model, test: SimDataset, config: ExperimentConfig, search=None) -> EmulatorResult:
    scale = "original" if config.original_scale else "standardized"
    pred = predict(model, test.inputs, n_samples=config.predict_draws, scale=scale)
    truth = test.responses if config.original_scale else model.standardization.transform(test.responses)
    mean, sd = np.atleast_2d(pred.mean), np.atleast_2d(pred.sd)
    lower, upper = (np.atleast_2d(b) for b in pred.interval(config.coverage_k))
    return EmulatorResult(name, mean, sd, truth, rmse(mean, truth), interval_coverage(lower, upper, truth),
                          search, model)


def run_replicate(config: ExperimentConfig, seed: int) -> dict:
    """Fit and test every configured emulator on one set of designs."""
    data = make_datasets(config, seed)
    out = {}
    for name in config.emulators:
        model, search = fit_selected(name, data, config, seed)
        out[name] = evaluate_on_test(name, model, data.test, config, search)
        log.info("seed %d %s: mean RMSE %.4g coverage %.3f", seed, name, out[name].rmse.summary["mean"],
                 out[name].coverage)
    return out


def compare(config: ExperimentConfig, output_dir=None) -> dict:
    """Run all replicates and write the metric and prediction CSVs.

    Files: ``rmse.csv`` (replicate, emulator, run_id, rmse), ``summary.csv``
    (replicate, emulator, mean/quartile RMSE, coverage), ``rmse_difference.csv``
    (per replicate and run, pairwise RMSE differences), one long-format
    ``predictions_<emulator>.csv`` (replicate, run_id, loc_id, truth, mean,
    sd) per emulator, and the search tables.
    """
    out_dir = Path(output_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for i in range(config.replicates):
        results.append(run_replicate(config, config.seed + i))
    names = list(config.emulators)
    with open(out_dir / "rmse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "emulator", "run_id", "rmse"])
        for i, res in enumerate(results):
            for name in names:
                for j, v in enumerate(res[name].rmse.per_run):
                    w.writerow([i, name, j, repr(float(v))])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "emulator", "mean", "min", "q1", "median", "q3", "max", "coverage"])
        for i, res in enumerate(results):
            for name in names:
                s = res[name].rmse.summary
                w.writerow([i, name] + [repr(s[k]) for k in ("mean", "min", "q1", "median", "q3", "max")]
                           + [repr(res[name].coverage)])
    if len(names) > 1:
        with open(out_dir / "rmse_difference.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "run_id", "first", "second", "difference"])
            for i, res in enumerate(results):
                for a in range(len(names)):
                    for b in range(a + 1, len(names)):
                        diff = res[names[a]].rmse.per_run - res[names[b]].rmse.per_run
                        for j, v in enumerate(diff):
                            w.writerow([i, j, names[a], names[b], repr(float(v))])
    for name in names:
        write_predictions(out_dir / f"predictions_{name}.csv", [(i, res[name]) for i, res in enumerate(results)])
        for i, res in enumerate(results):
            if res[name].search is not None:
                res[name].search.write_csv(out_dir / f"search_{name}_{i}.csv")
    (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return {"results": results, "output_dir": out_dir}


def write_predictions(path, items) -> None:
    """Long-format ``replicate,run_id,loc_id,truth,mean,sd`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "run_id", "loc_id", "truth", "mean", "sd"])
        for rep, res in items:
            for i in range(res.mean.shape[0]):
                for j in range(res.mean.shape[1]):
                    w.writerow([rep, i, j, repr(float(res.truth[i, j])), repr(float(res.mean[i, j])),
                                repr(float(res.sd[i, j]))])


def rmse_from_predictions(path) -> dict:
    """Recompute per-run RMSE by streaming a long-format prediction file."""
    sums, counts = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["replicate"]), int(row["run_id"]))
            e = float(row["mean"]) - float(row["truth"])
            sums[key] = sums.get(key, 0.0) + e * e
            counts[key] = counts.get(key, 0) + 1
    return {k: float(np.sqrt(sums[k] / counts[k])) for k in sorted(sums)}
