"""Dataset ingestion, synthetic generators, standardization, and splitting.

Generators are pure functions of their spec (seed included): the same spec
produces bit-identical arrays.  The held-out row is drawn from the same law as
the observed ones, so coverage experiments on generated data are exchangeable
by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import TabularDataset, _as_finite_array
from .errors import DataError, InvalidInputError

GENERATOR_KINDS = ("linear-gaussian", "friedman1")


@dataclass(frozen=True)
class GeneratorSpec:
    """Settings of a synthetic dataset: kind, size, noise level, seed."""

    kind: str
    n: int
    p: int
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise InvalidInputError(f"unknown generator kind {self.kind!r}")
        if int(self.n) < 2:
            raise InvalidInputError("n must be at least 2")
        if int(self.p) < 1:
            raise InvalidInputError("p must be at least 1")
        if not (math.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise InvalidInputError("noise_sd must be a finite nonnegative real")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "noise_sd", float(self.noise_sd))
        object.__setattr__(self, "seed", int(self.seed))


def gen_linear_gaussian(spec: GeneratorSpec) -> TabularDataset:
    """Standard-normal features with a sparse random linear signal plus noise.

    Ten percent of the coordinates (at least one) carry standard-normal
    coefficients; the rest are pure noise features.  The last generated row is
    held out as the query point with its true response recorded.
    """
    if spec.kind != "linear-gaussian":
        raise InvalidInputError(f"spec kind is {spec.kind!r}, expected 'linear-gaussian'")
    rng = np.random.default_rng(spec.seed)
    total = spec.n + 1
    X = rng.standard_normal((total, spec.p))
    n_informative = max(1, int(round(0.1 * spec.p)))
    informative = np.sort(rng.choice(spec.p, size=n_informative, replace=False))
    coef = np.zeros(spec.p)
    coef[informative] = rng.standard_normal(n_informative)
    y = X @ coef + spec.noise_sd * rng.standard_normal(total)
    meta = {
        "kind": spec.kind, "n": spec.n, "p": spec.p,
        "noise_sd": spec.noise_sd, "seed": spec.seed,
        "coef": coef, "informative": informative,
    }
    return TabularDataset(X[:-1], y[:-1], X[-1], test_target=float(y[-1]), meta=meta)


def gen_friedman1(spec: GeneratorSpec) -> TabularDataset:
    """The classic five-feature nonlinear benchmark response with noise.

    ``y = 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5 + noise`` on
    uniform [0, 1] features; coordinates beyond the fifth are inert.
    """
    if spec.kind != "friedman1":
        raise InvalidInputError(f"spec kind is {spec.kind!r}, expected 'friedman1'")
    if spec.p < 5:
        raise InvalidInputError("friedman1 needs p >= 5")
    rng = np.random.default_rng(spec.seed)
    total = spec.n + 1
    X = rng.uniform(0.0, 1.0, size=(total, spec.p))
    y = (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
         + 20.0 * (X[:, 2] - 0.5) ** 2
         + 10.0 * X[:, 3]
         + 5.0 * X[:, 4]
         + spec.noise_sd * rng.standard_normal(total))
    meta = {"kind": spec.kind, "n": spec.n, "p": spec.p,
            "noise_sd": spec.noise_sd, "seed": spec.seed}
    return TabularDataset(X[:-1], y[:-1], X[-1], test_target=float(y[-1]), meta=meta)


def generate(spec: GeneratorSpec) -> TabularDataset:
    if spec.kind == "linear-gaussian":
        return gen_linear_gaussian(spec)
    return gen_friedman1(spec)


def _parse_cell(text: str, row: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise DataError(f"row {row}, column {name!r}: not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {name!r}: non-finite value {text!r}")
    return value


def read_csv_columns(path, target_column=None) -> tuple[np.ndarray, np.ndarray, list]:
    """Parse a headered numeric CSV into (features, targets, feature_names).

    The target column is selected by name, or the last column when none is
    given.  Rejects files without a header and any non-finite cell, reporting
    the offending row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if row]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [cell.strip() for cell in rows[0]]

    def _is_number(cell: str) -> bool:
        try:
            float(cell)
        except ValueError:
            return False
        return True

    if all(_is_number(cell) for cell in header):
        raise DataError(f"{path}: missing header row")
    if target_column is None:
        target_idx = len(header) - 1
    else:
        if target_column not in header:
            raise DataError(f"{path}: no column named {target_column!r}")
        target_idx = header.index(target_column)
    feature_names = [name for i, name in enumerate(header) if i != target_idx]
    X_rows, y_values = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r}: expected {len(header)} cells, got {len(row)}")
        values = [_parse_cell(cell, r, header[i]) for i, cell in enumerate(row)]
        y_values.append(values[target_idx])
        X_rows.append([v for i, v in enumerate(values) if i != target_idx])
    return np.asarray(X_rows, dtype=float), np.asarray(y_values, dtype=float), feature_names


def load_csv(path, target_column=None, test_row="last") -> TabularDataset:
    """Load a CSV and hold one row out as the query point.

    ``test_row`` picks the held-out row ("last" or a 0-based index); its
    response is kept as the true target for benchmark mode.
    """
    X, y, names = read_csv_columns(path, target_column)
    total = X.shape[0]
    if total < 3:
        raise DataError(f"{path}: need at least three data rows (two observed + query)")
    idx = total - 1 if test_row == "last" else int(test_row)
    if not 0 <= idx < total:
        raise DataError(f"{path}: test row {idx} out of range")
    keep = np.ones(total, dtype=bool)
    keep[idx] = False
    meta = {"path": str(path), "feature_names": names, "test_row": idx}
    return TabularDataset(X[keep], y[keep], X[idx], test_target=float(y[idx]), meta=meta)


def save_csv(dataset: TabularDataset, path, target_name: str = "y") -> None:
    """Write the observed rows plus the query row (last) as a headered CSV.

    Floats are written with full round-trip precision, so save/load is the
    identity.  The query row needs a known true target.
    """
    if dataset.test_target is None:
        raise DataError("cannot save a dataset whose query row has no true target")
    names = dataset.meta.get("feature_names") or [f"x{i + 1}" for i in range(dataset.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [target_name])
        for row, target in zip(dataset.features, dataset.targets):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
        writer.writerow([repr(float(v)) for v in dataset.test_point]
                        + [repr(float(dataset.test_target))])


@dataclass(frozen=True)
class StandardizeTransform:
    """Per-column statistics used to standardize, kept for inversion.

    Intervals produced in standardized target units map back to original
    units through ``invert_value``/``invert_interval`` (a monotone affine
    map, so interval endpoints transform directly).
    """

    feature_offset: np.ndarray
    feature_scale: np.ndarray
    target_offset: float
    target_scale: float
    constant_columns: np.ndarray = field(default=None)

    def apply_features(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_offset) / self.feature_scale

    def apply_target(self, value):
        return (np.asarray(value, dtype=float) - self.target_offset) / self.target_scale

    def invert_value(self, value):
        return self.target_offset + self.target_scale * np.asarray(value, dtype=float)

    def invert_interval(self, interval) -> tuple[float, float]:
        lo, hi = interval
        return float(self.invert_value(lo)), float(self.invert_value(hi))


def standardize(dataset: TabularDataset, allow_constant: bool = False,
                transform_targets: bool = True, center_targets: bool = True,
                scale_targets: bool = True) -> tuple[TabularDataset, StandardizeTransform]:
    """Column-wise mean-0/variance-1 scaling fitted on the observed rows.

    The query point is transformed with the same statistics.  Constant
    feature columns are rejected unless ``allow_constant``, in which case
    they are left untouched and recorded.  Target standardization is optional
    and split into centering and scaling so pipelines that need an exactly
    invertible model (no intercept) can scale without centering.
    """
    X = dataset.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = std == 0.0
    if constant.any() and not allow_constant:
        bad = int(np.argmax(constant))
        raise InvalidInputError(
            f"feature column {bad} has zero variance; pass allow_constant=True to keep it"
        )
    offset = np.where(constant, 0.0, mean)
    scale = np.where(constant, 1.0, std)

    t_offset, t_scale = 0.0, 1.0
    if transform_targets:
        if center_targets:
            t_offset = float(dataset.targets.mean())
        if scale_targets:
            t_scale = float(dataset.targets.std())
            if t_scale == 0.0:
                raise InvalidInputError("targets have zero variance; cannot scale")
    transform = StandardizeTransform(offset, scale, t_offset, t_scale,
                                     constant_columns=constant)
    new_meta = dict(dataset.meta)
    new_meta["standardized"] = {
        "features": True, "targets": bool(transform_targets),
        "center_targets": bool(center_targets and transform_targets),
        "scale_targets": bool(scale_targets and transform_targets),
        "constant_columns": np.flatnonzero(constant).tolist(),
    }
    new_target = dataset.test_target
    if new_target is not None:
        new_target = float(transform.apply_target(new_target))
    out = TabularDataset(
        transform.apply_features(X),
        np.asarray(transform.apply_target(dataset.targets), dtype=float),
        transform.apply_features(dataset.test_point[None, :])[0],
        test_target=new_target,
        meta=new_meta,
    )
    return out, transform


def split(dataset: TabularDataset, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled split of the observed row indices.

    Returns ``(train_idx, calibration_idx)``; both parts are nonempty and
    together cover every observed row exactly once.
    """
    train_fraction = float(train_fraction)
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError("train_fraction must lie strictly between 0 and 1")
    n = dataset.n
    m = int(round(n * train_fraction))
    if m < 1 or n - m < 1:
        raise InvalidInputError(
            f"split of {n} rows at fraction {train_fraction} leaves an empty part"
        )
    order = np.random.default_rng(int(seed)).permutation(n)
    return order[:m], order[m:]


def reordered_for_split(dataset: TabularDataset, train_idx, cal_idx) -> tuple[TabularDataset, int]:
    """Dataset with rows arranged train-first, plus the split index."""
    train_idx = np.asarray(train_idx, dtype=int)
    cal_idx = np.asarray(cal_idx, dtype=int)
    order = np.concatenate([train_idx, cal_idx])
    return dataset.permuted(order), int(train_idx.size)


def dataset_from_rows(X, y, test_index: int, meta=None) -> TabularDataset:
    """Build a dataset from a pooled table by holding one row out."""
    X = _as_finite_array(X, "X", 2)
    y = _as_finite_array(y, "y", 1)
    total = X.shape[0]
    test_index = int(test_index)
    if not 0 <= test_index < total:
        raise InvalidInputError(f"test_index {test_index} out of range")
    keep = np.ones(total, dtype=bool)
    keep[test_index] = False
    return TabularDataset(X[keep], y[keep], X[test_index],
                          test_target=float(y[test_index]), meta=dict(meta or {}))
