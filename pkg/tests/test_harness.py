import math

import numpy as np
import pytest

from tprs_emu.errors import EmulatorError, InputError
from tprs_emu.harness import (
    ExperimentConfig,
    compare,
    coordinate_search,
    coverage,
    grid_search,
    interval_coverage,
    make_datasets,
    replicate_seeds,
    rmse,
    rmse_from_predictions,
)


def test_rmse_examples():
    T = np.arange(6.0).reshape(2, 3)
    assert rmse(T, T).per_run.tolist() == [0.0, 0.0]
    np.testing.assert_allclose(rmse(T + 2.0, T).per_run, [2.0, 2.0])
    res = rmse(np.array([[3.0, 4.0], [0.0, 0.0]]), np.zeros((2, 2)))
    np.testing.assert_allclose(res.per_run, [math.sqrt(12.5), 0.0], rtol=1e-15)
    assert res.summary["max"] == pytest.approx(math.sqrt(12.5))
    assert set(res.summary) == {"min", "q1", "median", "q3", "max", "mean"}


def test_rmse_shape_mismatch():
    with pytest.raises(InputError):
        rmse(np.zeros((2, 3)), np.zeros((3, 2)))


def test_coverage_examples(rng):
    truth = rng.normal(size=(10, 5))
    assert coverage(np.zeros_like(truth), np.full_like(truth, 1e6), truth) == 1.0
    assert coverage(truth + 1.0, np.zeros_like(truth), truth) == 0.0
    assert coverage(truth, np.zeros_like(truth), truth) == 1.0
    resid = np.random.default_rng(12).normal(size=(100, 100))
    c = coverage(resid, np.ones_like(resid), np.zeros_like(resid), k=3)
    assert 0.995 <= c <= 1.0


def test_coverage_errors():
    with pytest.raises(InputError):
        coverage([0.0], [1.0], [0.0], k=0)
    with pytest.raises(InputError):
        coverage([0.0], [-1.0], [0.0])
    with pytest.raises(InputError):
        interval_coverage([1.0], [0.0], [0.5])


def test_interval_coverage_matches_symmetric(rng):
    m, s, t = rng.normal(size=50), rng.uniform(0.1, 1, size=50), rng.normal(size=50)
    assert interval_coverage(m - 2 * s, m + 2 * s, t) == coverage(m, s, t, k=2)


def test_single_candidate():
    res = grid_search(lambda c: 0.7, [{"p": 3}])
    assert res.best == {"p": 3} and res.score == 0.7


def test_duplicates_first_wins():
    res = grid_search(lambda c: 1.0, [{"theta": 0.5}, {"theta": 0.5}], threads=1)
    assert res.table[0]["index"] == 0
    best = min(res.table, key=lambda r: (r["score"], r["index"]))
    assert best["index"] == 0 and res.best == {"theta": 0.5}


def test_ties_prefer_smaller_basis():
    res = grid_search(lambda c: 1.0, [{"p": 5}, {"p": 2}, {"p": 3}])
    assert res.best == {"p": 2}


def test_constructed_toy_spanning_basis_wins(rng):
    r = 12
    Q, _ = np.linalg.qr(rng.normal(size=(r, 6)))
    truth = rng.normal(size=(4, 2)) @ Q[:, :2].T
    bases = {1: Q[:, :1], 2: Q[:, :2], 3: Q[:, [0, 3, 4]]}

    def evaluate(c):
        B = bases[c["p"]]
        fit = truth @ B @ B.T
        return float(np.sqrt(np.mean((fit - truth) ** 2)))

    res = grid_search(evaluate, [{"p": 1}, {"p": 2}, {"p": 3}], threads=2)
    assert res.best == {"p": 2}
    assert res.score < 1e-12


def test_all_candidates_fail():
    def bad(c):
        raise InputError(f"broken {c['p']}")

    with pytest.raises(EmulatorError, match="broken 1.*broken 2"):
        grid_search(bad, [{"p": 1}, {"p": 2}])
    with pytest.raises(InputError):
        grid_search(bad, [])


def test_failures_recorded_in_table():
    def evaluate(c):
        if c["p"] == 1:
            raise InputError("nope")
        return 0.5

    res = grid_search(evaluate, [{"p": 1}, {"p": 2}])
    assert res.best == {"p": 2}
    assert "nope" in res.table[0]["error"]


def test_coordinate_search_finds_separable_minimum():
    f = lambda c: (c["theta"][0] - 0.3) ** 2 + (c["theta"][1] - 0.7) ** 2 + (c["m"] - 20) ** 2
    levels = {("theta", 0): [0.1, 0.3, 0.5], ("theta", 1): [0.5, 0.7, 0.9], "m": [10, 20, 40]}
    res = coordinate_search(f, {"theta": [0.5, 0.5], "m": 10}, levels, sweeps=2)
    assert res.best == {"theta": [0.3, 0.7], "m": 20}


def test_config_validation(tmp_path):
    with pytest.raises(InputError):
        ExperimentConfig(scenario=5)
    with pytest.raises(InputError):
        ExperimentConfig(emulators=("gp",))
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(InputError):
        ExperimentConfig(sigma2_from="train")
    cfg = ExperimentConfig(scenario=2, replicates=3)
    (tmp_path / "c.json").write_text('{"scenario": 2, "replicates": 3}')
    assert ExperimentConfig.from_json(tmp_path / "c.json").to_dict() == cfg.to_dict()


def test_replicate_seeds_distinct():
    a = replicate_seeds(0)
    assert len(set(a)) == 3 and a == replicate_seeds(0) and a != replicate_seeds(1)


def _small(tmp_path, **kw):
    doc = dict(scenario=2, n_train=10, n_validation=3, n_test=3, grid=(10, 10), lhs_iterations=10,
               emulators=("stprs", "sgp"), theta_levels=(0.3, 0.7), nu_levels=(0.3, 0.7), stprs_m_levels=(5, 10),
               sgp_subgrid=(2, 2), search_sweeps=1, replicates=2, output_dir=str(tmp_path))
    doc.update(kw)
    return ExperimentConfig(**doc)


def test_datasets_disjoint_and_sized(tmp_path):
    data = make_datasets(_small(tmp_path), 0)
    assert (data.train.n, data.validation.n, data.test.n) == (10, 3, 3)
    all_rows = np.vstack([data.train.inputs, data.validation.inputs, data.test.inputs])
    assert np.unique(all_rows, axis=0).shape[0] == 16


def test_compare_outputs_reproducible_and_consistent(tmp_path):
    files = ("rmse.csv", "summary.csv", "rmse_difference.csv", "predictions_stprs.csv", "predictions_sgp.csv")
    runs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        res = compare(_small(out))
        runs.append({f: (out / f).read_bytes() for f in files})
    assert runs[0] == runs[1]
    for name in ("stprs", "sgp"):
        streamed = rmse_from_predictions(tmp_path / "a" / f"predictions_{name}.csv")
        for rep, result in enumerate(res["results"]):
            for j, v in enumerate(result[name].rmse.per_run):
                assert abs(streamed[(rep, j)] - v) < 1e-10
    header = (tmp_path / "a" / "predictions_sgp.csv").read_text().splitlines()[0]
    assert header == "replicate,run_id,loc_id,truth,mean,sd"
    assert (tmp_path / "a" / "search_stprs_0.csv").exists()


def test_compare_sigma2_from_test(tmp_path):
    res = compare(_small(tmp_path, replicates=1, emulators=("stprs",), sigma2_from="test"))
    result = res["results"][0]["stprs"]
    assert result.model.sigma2 == pytest.approx(float(np.mean((result.mean - result.truth) ** 2)), rel=1e-10)
