import numpy as np
import pytest

import stabcp
from stabcp import (
    DataError,
    GeneratorSpec,
    InvalidInputError,
    RidgeModel,
    ScoreFunction,
    TabularDataset,
    gen_friedman1,
    gen_linear_gaussian,
    load_csv,
    read_csv_columns,
    save_csv,
    split,
    standardize,
    stab_cp_interval,
    tau_linear_exact,
)

ABS = ScoreFunction.absolute_residual()


# -------------------------------------------------------------- generators

def test_linear_gaussian_deterministic():
    spec = GeneratorSpec("linear-gaussian", 25, 4, 1.0, seed=99)
    a = gen_linear_gaussian(spec)
    b = gen_linear_gaussian(spec)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.targets, b.targets)
    assert np.array_equal(a.test_point, b.test_point)
    assert a.test_target == b.test_target


def test_linear_gaussian_noiseless_single_feature_is_linear():
    ds = gen_linear_gaussian(GeneratorSpec("linear-gaussian", 20, 1, 0.0, seed=3))
    coef = ds.meta["coef"]
    assert np.allclose(ds.targets, ds.features @ coef)
    assert ds.test_target == pytest.approx(float(ds.test_point @ coef))


def test_linear_gaussian_signal_correlates_with_targets():
    ds = gen_linear_gaussian(GeneratorSpec("linear-gaussian", 300, 10, 1.0, seed=8))
    signal = ds.features @ ds.meta["coef"]
    corr = np.corrcoef(signal, ds.targets)[0, 1]
    # needs to clear a 3/sqrt(n) null band by a wide margin
    assert corr > 0.5


def test_friedman_deterministic_and_depends_on_first_five():
    spec = GeneratorSpec("friedman1", 50, 8, 0.0, seed=5)
    ds = gen_friedman1(spec)
    again = gen_friedman1(spec)
    assert np.array_equal(ds.targets, again.targets)
    X = ds.features
    formula = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
               + 10 * X[:, 3] + 5 * X[:, 4])
    assert np.allclose(ds.targets, formula)


def test_friedman_response_range_consistent_with_formula():
    ds = gen_friedman1(GeneratorSpec("friedman1", 10_000, 5, 0.0, seed=1))
    # term-by-term extremes: [-10, 10] + [0, 5] + [0, 10] + [0, 5]
    assert ds.targets.min() >= -10.0
    assert ds.targets.max() <= 30.0
    assert ds.targets.max() - ds.targets.min() > 15.0  # actually spreads out


def test_friedman_rejects_too_few_features():
    with pytest.raises(InvalidInputError):
        gen_friedman1(GeneratorSpec("friedman1", 20, 4, 1.0, seed=0))


def test_generator_spec_validation():
    with pytest.raises(InvalidInputError):
        GeneratorSpec("nonsense", 10, 3)
    with pytest.raises(InvalidInputError):
        GeneratorSpec("linear-gaussian", 1, 3)
    with pytest.raises(InvalidInputError):
        GeneratorSpec("linear-gaussian", 10, 3, noise_sd=-1.0)


# --------------------------------------------------------------------- csv

def test_read_csv_columns_by_name(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,b\n1,2\n3,4\n", encoding="utf-8")
    X, y, names = read_csv_columns(path, target_column="b")
    assert X.tolist() == [[1.0], [3.0]]
    assert y.tolist() == [2.0, 4.0]
    assert names == ["a"]


def test_read_csv_missing_header_rejected(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_csv_columns(path)


def test_read_csv_reports_bad_cell_location(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,b\n1,2\n3,oops\n", encoding="utf-8")
    with pytest.raises(DataError, match="row 3"):
        read_csv_columns(path)
    path.write_text("a,b\n1,2\n3,inf\n", encoding="utf-8")
    with pytest.raises(DataError, match="row 3"):
        read_csv_columns(path)


def test_csv_round_trip_identity(tmp_path):
    ds = gen_linear_gaussian(GeneratorSpec("linear-gaussian", 12, 3, 1.0, seed=2))
    path = tmp_path / "ds.csv"
    save_csv(ds, path)
    loaded = load_csv(path)
    assert np.array_equal(loaded.features, ds.features)
    assert np.array_equal(loaded.targets, ds.targets)
    assert np.array_equal(loaded.test_point, ds.test_point)
    assert loaded.test_target == ds.test_target


def test_load_csv_holds_out_requested_row(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,y\n1,2\n3,4\n5,6\n7,8\n", encoding="utf-8")
    ds = load_csv(path, test_row=1)
    assert ds.test_point.tolist() == [3.0]
    assert ds.test_target == 4.0
    assert ds.targets.tolist() == [2.0, 6.0, 8.0]


# -------------------------------------------------------------- standardize

def test_standardize_centers_and_scales(small_dataset):
    out, transform = standardize(small_dataset)
    assert np.allclose(out.features.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.features.std(axis=0), 1.0, atol=1e-12)
    assert np.allclose(out.targets.mean(), 0.0, atol=1e-12)
    # round trip on the targets
    back = transform.invert_value(out.targets)
    assert np.allclose(back, small_dataset.targets)


def test_standardize_already_standardized_near_identity():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((400, 3))
    y = rng.standard_normal(400)
    # standardize exactly on the rows that become the observed set
    Xo = (X[:-1] - X[:-1].mean(axis=0)) / X[:-1].std(axis=0)
    yo = (y[:-1] - y[:-1].mean()) / y[:-1].std()
    ds = TabularDataset(Xo, yo, X[-1])
    out, transform = standardize(ds)
    assert np.allclose(transform.feature_offset, 0.0, atol=1e-12)
    assert np.allclose(transform.feature_scale, 1.0, atol=1e-12)
    assert np.allclose(out.features, ds.features, atol=1e-10)


def test_standardize_constant_column_needs_flag():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    ds = TabularDataset(X, np.arange(5.0), np.array([1.0, 2.0]))
    with pytest.raises(InvalidInputError):
        standardize(ds)
    out, transform = standardize(ds, allow_constant=True)
    assert np.allclose(out.features[:, 0], 1.0)  # left untouched
    assert transform.constant_columns.tolist() == [True, False]
    assert out.meta["standardized"]["constant_columns"] == [0]


def test_target_scaling_pipeline_matches_direct_intervals():
    # Scale-only target standardization: the ridge objective's 1/m scaling
    # makes the same penalty optimal in both pipelines, so the interval in
    # scaled units maps back exactly.
    ds = gen_linear_gaussian(GeneratorSpec("linear-gaussian", 40, 4, 1.0, seed=31))
    lam, alpha = 0.5, 0.1
    spec = RidgeModel(lam)

    direct_tau = tau_linear_exact(spec.fit(ds, 0.0), ds)
    direct = stab_cp_interval(ds, 0.0, spec, ABS, direct_tau, alpha)

    scaled, transform = standardize(ds, transform_targets=True,
                                    center_targets=False, scale_targets=True)
    # features untouched in this pipeline: rebuild with original features
    scaled = TabularDataset(ds.features, scaled.targets, ds.test_point,
                            scaled.test_target)
    scaled_tau = tau_linear_exact(spec.fit(scaled, 0.0), scaled)
    scaled_report = stab_cp_interval(scaled, 0.0, spec, ABS, scaled_tau, alpha)

    mapped = transform.invert_interval(scaled_report.set.intervals[0])
    (dlo, dhi), = direct.set.intervals
    assert mapped[0] == pytest.approx(dlo, abs=1e-10)
    assert mapped[1] == pytest.approx(dhi, abs=1e-10)


# -------------------------------------------------------------------- split

def test_split_even_sizes(small_dataset):
    train, cal = split(small_dataset, 0.5, seed=0)
    assert len(train) == 5 and len(cal) == 5


def test_split_parts_partition_rows(small_dataset):
    train, cal = split(small_dataset, 0.3, seed=1)
    union = sorted(np.concatenate([train, cal]).tolist())
    assert union == list(range(small_dataset.n))


def test_split_deterministic(small_dataset):
    a = split(small_dataset, 0.5, seed=7)
    b = split(small_dataset, 0.5, seed=7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_split_rejects_degenerate(small_dataset):
    with pytest.raises(InvalidInputError):
        split(small_dataset, 0.01, seed=0)
    with pytest.raises(InvalidInputError):
        split(small_dataset, 0.999, seed=0)
