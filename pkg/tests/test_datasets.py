import numpy as np
import pytest

from nyridge.datasets import (
    Dataset,
    cross_validate_lambda,
    load_dataset,
    write_dataset_csv,
)
from nyridge.errors import (
    ConfigError,
    MissingValueError,
    NonNumericError,
    ParseError,
)
from nyridge.kernels import KernelSpec


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadDataset:
    def test_toy_csv_exact_parse(self, tmp_path):
        path = write(tmp_path, "a,b,target\n1,2,3\n4,5,6\n7,8,9\n")
        data = load_dataset(path, "target", standardize=False, min_rows=3)
        assert np.array_equal(data.features, [[1.0, 2.0], [4.0, 5.0], [7.0, 8.0]])
        assert np.array_equal(data.targets, [3.0, 6.0, 9.0])
        assert data.feature_names == ("a", "b")

    def test_standardization(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(loc=3.0, scale=2.0, size=(50, 3))
        y = rng.normal(size=50)
        src = tmp_path / "raw.csv"
        write_dataset_csv(src, X, y, feature_names=["a", "b", "c"])
        data = load_dataset(src, "target")
        assert np.allclose(data.features.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(data.features.std(axis=0), 1.0, atol=1e-12)
        assert abs(data.targets.mean()) <= 1e-12

    def test_constant_column_dropped_with_warning(self, tmp_path, caplog):
        rows = ["a,b,target"] + [f"{i},5.0,{i * 2}" for i in range(12)]
        path = write(tmp_path, "\n".join(rows) + "\n")
        with caplog.at_level("WARNING"):
            data = load_dataset(path, "target")
        assert data.features.shape[1] == 1
        assert data.feature_names == ("a",)
        assert any("zero-variance" in r.message for r in caplog.records)

    def test_missing_value_error(self, tmp_path):
        path = write(tmp_path, "a,target\n1,2\n,3\n" + "4,5\n" * 10)
        with pytest.raises(MissingValueError):
            load_dataset(path, "target")

    def test_non_numeric_error(self, tmp_path):
        path = write(tmp_path, "a,target\n1,2\nfoo,3\n" + "4,5\n" * 10)
        with pytest.raises(NonNumericError):
            load_dataset(path, "target")

    def test_parse_error_on_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(tmp_path / "nope.csv", "target")

    def test_parse_error_on_extra_cells(self, tmp_path):
        path = write(tmp_path, "a,target\n1,2,3\n" + "4,5\n" * 10)
        with pytest.raises(ParseError):
            load_dataset(path, "target")

    def test_bad_target_column(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n" * 1)
        with pytest.raises(ConfigError):
            load_dataset(path, "target")

    def test_min_rows_enforced(self, tmp_path):
        path = write(tmp_path, "a,target\n1,2\n3,4\n")
        with pytest.raises(ConfigError):
            load_dataset(path, "target")

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 4))
        y = rng.normal(size=20)
        path = tmp_path / "round.csv"
        write_dataset_csv(path, X, y)
        data = load_dataset(path, "target", standardize=False)
        assert np.array_equal(data.features, X)
        assert np.array_equal(data.targets, y)

    def test_error_codes_distinct(self):
        assert ParseError.code != MissingValueError.code != NonNumericError.code


def make_dataset(n, noise, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    signal = np.sin(X[:, 0]) + 0.5 * X[:, 1]
    y = signal + noise * rng.standard_normal(n)
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    return Dataset(features=X, targets=y - y.mean(), name="toy")


class TestCrossValidateLambda:
    def test_pure_noise_prefers_large_lambda(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(80, 2))
        data = Dataset(
            features=(X - X.mean(0)) / X.std(0),
            targets=rng.standard_normal(80),
            name="noise",
        )
        grid = np.geomspace(1e-6, 10.0, 12)
        res = cross_validate_lambda(data, KernelSpec.gaussian(1.0), grid, folds=4, seed=0)
        assert res.lambda_star >= grid[-3]

    def test_smooth_target_prefers_interior_lambda(self):
        data = make_dataset(120, noise=0.0, seed=3)
        grid = np.geomspace(1e-8, 10.0, 12)
        res = cross_validate_lambda(data, KernelSpec.gaussian(1.2), grid, folds=4, seed=1)
        assert res.lambda_star < grid[-1]

    def test_deterministic_given_seed(self):
        data = make_dataset(60, noise=0.3, seed=4)
        grid = np.geomspace(1e-6, 1.0, 8)
        a = cross_validate_lambda(data, KernelSpec.gaussian(1.0), grid, folds=3, seed=7)
        b = cross_validate_lambda(data, KernelSpec.gaussian(1.0), grid, folds=3, seed=7)
        assert a.lambda_star == b.lambda_star
        assert np.array_equal(a.errors, b.errors)
        assert a.ranks == b.ranks

    def test_fold_validation(self):
        data = make_dataset(30, noise=0.1, seed=5)
        with pytest.raises(ConfigError):
            cross_validate_lambda(data, KernelSpec.gaussian(1.0), [0.1], folds=1)
        with pytest.raises(ConfigError):
            cross_validate_lambda(data, KernelSpec.gaussian(1.0), [], folds=3)
        with pytest.raises(ConfigError):
            cross_validate_lambda(data, KernelSpec.gaussian(1.0), [0.1], folds=20)

    def test_rank_respects_trace_tolerance(self):
        data = make_dataset(90, noise=0.1, seed=6)
        res = cross_validate_lambda(
            data, KernelSpec.gaussian(1.0), [1e-3], folds=3, seed=2, trace_rtol=0.05
        )
        assert all(1 <= r < 60 for r in res.ranks)
