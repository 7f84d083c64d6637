import numpy as np
import pytest
from scipy.spatial.distance import pdist

from tprs_emu.design import (
    InputRanges,
    maximin_lhs,
    maximin_lhs_unit,
    monte_carlo_sample,
    read_design_csv,
    standardize,
    write_design_csv,
)
from tprs_emu.errors import InputError


def _strata(U):
    n = U.shape[0]
    return np.floor(U * n).astype(int)


def test_lhs_two_points_one_dim():
    U = maximin_lhs_unit(2, 1, iterations=5, seed=3)
    assert sorted(_strata(U)[:, 0]) == [0, 1]


def test_lhs_columns_are_permutations():
    U = maximin_lhs_unit(4, 2, iterations=20, seed=0)
    for j in range(2):
        assert sorted(_strata(U)[:, j]) == [0, 1, 2, 3]


def test_maximin_non_decreasing_in_iterations():
    dists = [pdist(maximin_lhs_unit(12, 3, iterations=k, seed=5)).min() for k in (1, 10, 100, 1000)]
    assert all(b >= a for a, b in zip(dists, dists[1:]))


def test_maximin_deterministic_and_in_ranges():
    R = InputRanges([7.0, 0.02], [13.0, 0.12])
    a, b = maximin_lhs(10, R, 30, seed=9), maximin_lhs(10, R, 30, seed=9)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= R.low) & (a <= R.high))


def test_lhs_errors():
    with pytest.raises(InputError):
        maximin_lhs_unit(1, 2)
    with pytest.raises(InputError):
        maximin_lhs_unit(4, 2, iterations=0)


def test_ranges_validation():
    with pytest.raises(InputError):
        InputRanges([1.0], [1.0])
    R = InputRanges.from_pairs([[0, 2], [10, 20]])
    np.testing.assert_allclose(R.to_unit([[1.0, 15.0]]), [[0.5, 0.5]])
    np.testing.assert_allclose(R.from_unit([[0.5, 0.5]]), [[1.0, 15.0]])


def test_monte_carlo_within_box_and_deterministic():
    R = InputRanges([7.0, 0.02], [13.0, 0.12])
    a = monte_carlo_sample(50, R, seed=1)
    assert np.all((a >= R.low) & (a <= R.high))
    np.testing.assert_array_equal(a, monte_carlo_sample(50, R, seed=1))


def test_monte_carlo_clt_bound():
    R = InputRanges([7.0], [13.0])
    x = monte_carlo_sample(10000, R, seed=11)[:, 0]
    sigma = 6.0 / np.sqrt(12.0)
    assert abs(x.mean() - 10.0) < 3 * sigma / np.sqrt(10000)


def test_standardize_hand_column():
    Z, params = standardize(np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(Z[:, 0], [-1 / np.sqrt(2), 1 / np.sqrt(2)], rtol=1e-14)
    assert params.sd[0] == pytest.approx(np.sqrt(2.0))


def test_standardize_constant_column():
    Y = np.column_stack([[1.0, 2.0, 4.0], [5.0, 5.0, 5.0]])
    Z, params = standardize(Y)
    assert params.degenerate.tolist() == [False, True]
    np.testing.assert_array_equal(Z[:, 1], 0.0)
    np.testing.assert_allclose(params.inverse(Z), Y, atol=1e-12)


def test_standardize_keeps_tiny_but_varying_column():
    Y = np.column_stack([[1.0, 2.0, 4.0], [1e-60, 3e-60, 2e-60]])
    Z, params = standardize(Y)
    assert not params.degenerate[1]
    assert Z[:, 1].std(ddof=1) == pytest.approx(1.0)


def test_standardize_round_trip(rng):
    Y = rng.gamma(2.0, size=(6, 5))
    for log1p in (False, True):
        Z, params = standardize(Y, log1p=log1p)
        np.testing.assert_allclose(params.inverse(Z), Y, atol=1e-10)
        np.testing.assert_allclose(params.transform(Y), Z, atol=1e-12)


def test_standardize_log1p_negative_rejected():
    with pytest.raises(InputError):
        standardize(np.array([[-2.0], [1.0]]), log1p=True)


def test_standardize_needs_two_runs():
    with pytest.raises(InputError):
        standardize(np.ones((1, 3)))


def test_inverse_moments_lognormal_matches_monte_carlo():
    Z, params = standardize(np.array([[0.5, 1.0], [2.0, 3.0], [1.0, 0.2]]), log1p=True)
    m, s = params.inverse_moments(np.array([0.3, -0.2]), np.array([0.25, 0.5]))
    rng = np.random.default_rng(4)
    draws = rng.normal([0.3, -0.2], np.sqrt([0.25, 0.5]), size=(400000, 2))
    y = params.inverse(draws)
    np.testing.assert_allclose(m, y.mean(axis=0), rtol=5e-3)
    np.testing.assert_allclose(s, y.std(axis=0), rtol=1e-2)


def test_design_csv_round_trip(tmp_path, rng):
    X = rng.uniform(size=(5, 3))
    write_design_csv(tmp_path / "d.csv", X)
    ids, Y = read_design_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(Y, X)
    assert ids.tolist() == ["0", "1", "2", "3", "4"]
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "run_id,x1,x2,x3"
