"""Rank statistics, conformity scores, and the grid-evaluated exact conformal set.

The conformity of a candidate target value is one minus the normalized rank of
its nonconformity score within the augmented sample.  The grid sweep here
refits the model at every candidate and is the slow-but-trustworthy baseline
that every faster construction in :mod:`stabcp.conformal` is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NotFittedError

_TOL = 1e-9

PREDICTION_SHAPES = ("interval", "union-of-intervals", "whole-range", "empty")


def _ceil_tol(x: float) -> int:
    """Ceiling that forgives float noise just below an integer."""
    return math.ceil(x - _TOL)


def _floor_tol(x: float) -> int:
    """Floor that forgives float noise just above an integer."""
    return math.floor(x + _TOL)


def _as_finite_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class TabularDataset:
    """Observed regression pairs plus the feature vector of the query point.

    Parameters
    ----------
    features : ndarray of shape (n, p)
        One observed sample per row.
    targets : ndarray of shape (n,)
        Observed responses, aligned with ``features``.
    test_point : ndarray of shape (p,)
        Features of the point whose response is to be predicted.
    test_target : float, optional
        Held-out true response, available in benchmark mode only.
    meta : dict
        Free-form provenance (generator settings, column names, ...).
    """

    features: np.ndarray
    targets: np.ndarray
    test_point: np.ndarray
    test_target: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = _as_finite_array(self.features, "features", 2)
        y = _as_finite_array(self.targets, "targets", 1)
        x_new = _as_finite_array(self.test_point, "test_point", 1)
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"features has {X.shape[0]} rows but targets has {y.shape[0]} entries"
            )
        if X.shape[0] < 2:
            raise InvalidInputError("need at least two observed rows")
        if X.shape[1] < 1:
            raise InvalidInputError("need at least one feature column")
        if x_new.shape[0] != X.shape[1]:
            raise InvalidInputError(
                f"test_point has {x_new.shape[0]} entries, expected {X.shape[1]}"
            )
        if self.test_target is not None:
            t = float(self.test_target)
            if not math.isfinite(t):
                raise InvalidInputError("test_target must be finite")
            object.__setattr__(self, "test_target", t)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "test_point", x_new)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def augmented_design(self) -> np.ndarray:
        """Design matrix of shape (n+1, p): observed rows then the query row."""
        return np.vstack([self.features, self.test_point[None, :]])

    def augmented_targets(self, candidate: float) -> np.ndarray:
        """The response vector with ``candidate`` appended for the query row."""
        candidate = float(candidate)
        if not math.isfinite(candidate):
            raise InvalidInputError("candidate must be finite")
        return np.append(self.targets, candidate)

    def target_range(self) -> tuple[float, float]:
        """Smallest and largest observed response, the default candidate range."""
        return float(self.targets.min()), float(self.targets.max())

    def permuted(self, order) -> "TabularDataset":
        """Dataset with the observed rows reordered; the query point is untouched."""
        order = np.asarray(order, dtype=int)
        if sorted(order.tolist()) != list(range(self.n)):
            raise InvalidInputError("order must be a permutation of the observed rows")
        return TabularDataset(
            self.features[order],
            self.targets[order],
            self.test_point,
            self.test_target,
            dict(self.meta),
        )


@dataclass(frozen=True)
class ScoreFunction:
    """Nonconformity score ``S(q, m)`` with a declared regularity constant.

    ``gamma`` bounds the variation in the second (prediction) argument:
    ``|S(q, m1) - S(q, m2)| <= gamma * |m1 - m2|`` for all ``q``.
    """

    kind: str
    gamma: float
    fn: object = None

    @classmethod
    def absolute_residual(cls) -> "ScoreFunction":
        """The default score ``S(q, m) = |q - m|`` (gamma = 1)."""
        return cls(kind="absolute-residual", gamma=1.0)

    @classmethod
    def custom(cls, fn, gamma: float) -> "ScoreFunction":
        gamma = float(gamma)
        if not (math.isfinite(gamma) and gamma >= 0):
            raise InvalidInputError("gamma must be a finite nonnegative real")
        if not callable(fn):
            raise InvalidInputError("custom score needs a callable fn(q, m)")
        return cls(kind="custom", gamma=gamma, fn=fn)

    def evaluate(self, q, m):
        """Elementwise score; broadcasts like numpy."""
        q = np.asarray(q, dtype=float)
        m = np.asarray(m, dtype=float)
        if self.kind == "absolute-residual":
            out = np.abs(q - m)
        elif self.kind == "custom":
            out = np.asarray(self.fn(q, m), dtype=float)
        else:
            raise InvalidInputError(f"unknown score kind {self.kind!r}")
        if out.ndim == 0:
            return float(out)
        return out


def rank(values, index: int) -> int:
    """Tie-inclusive rank of the ``index``-th entry (1-based).

    Counts how many entries are <= the chosen one.  The entry counts itself,
    so the result lies in ``1..len(values)`` and ties push the rank up.
    """
    arr = _as_finite_array(np.ravel(np.asarray(values, dtype=float)), "values", 1)
    m = arr.size
    if m == 0:
        raise InvalidInputError("values must be nonempty")
    if not 1 <= int(index) <= m:
        raise InvalidInputError(f"index must lie in 1..{m}, got {index}")
    return int(np.count_nonzero(arr <= arr[int(index) - 1]))


def conformity_scores(dataset: TabularDataset, candidate: float, model, score: ScoreFunction) -> np.ndarray:
    """Scores of all n+1 points under a model fitted on the augmented data.

    Entry ``i < n`` is ``S(y_i, mu(x_i))``; the last entry scores the
    candidate against the model's prediction at the query point.
    """
    if not getattr(model, "fitted", False):
        raise NotFittedError("model must be fitted on the augmented data first")
    preds = np.asarray(model.row_predictions, dtype=float)
    if preds.shape != (dataset.n + 1,):
        raise InvalidInputError(
            f"model caches {preds.shape} row predictions, expected ({dataset.n + 1},)"
        )
    q = dataset.augmented_targets(candidate)
    scores = np.asarray(score.evaluate(q, preds), dtype=float)
    if not np.all(np.isfinite(scores)):
        raise InvalidInputError("score function produced non-finite values")
    if np.any(scores < 0):
        raise InvalidInputError("score function produced negative values")
    return scores


def pi_from_scores(scores) -> float:
    """Conformity of the last entry: 1 - rank/(m) over the given scores."""
    arr = _as_finite_array(np.ravel(np.asarray(scores, dtype=float)), "scores", 1)
    m = arr.size
    return 1.0 - rank(arr, m) / m


def pi_exact(dataset: TabularDataset, candidate: float, model_spec, score: ScoreFunction) -> float:
    """Exact conformity of ``candidate``: fit on the augmented data, then rank.

    Always a multiple of ``1/(n+1)``; equals 0 when every score ties.
    """
    fitted = model_spec.fit(dataset, candidate)
    return pi_from_scores(conformity_scores(dataset, candidate, fitted, score))


@dataclass
class PredictionSet:
    """A prediction region for the query point's response.

    ``intervals`` is an ascending list of disjoint closed ``(lo, hi)`` pairs in
    target units.  ``whole-range`` sets carry the active candidate range, and
    ``truncated`` flags endpoints clamped to that range.
    """

    shape: str
    intervals: list
    method: str
    alpha: float
    truncated: bool = False
    candidate_range: tuple | None = None

    def __post_init__(self):
        if self.shape not in PREDICTION_SHAPES:
            raise InvalidInputError(f"unknown prediction-set shape {self.shape!r}")

    @classmethod
    def empty_set(cls, method: str, alpha: float, candidate_range=None) -> "PredictionSet":
        return cls("empty", [], method, alpha, candidate_range=candidate_range)

    @classmethod
    def whole_range(cls, method: str, alpha: float, candidate_range, truncated: bool = True) -> "PredictionSet":
        lo, hi = float(candidate_range[0]), float(candidate_range[1])
        return cls("whole-range", [(lo, hi)], method, alpha,
                   truncated=truncated, candidate_range=(lo, hi))

    @classmethod
    def from_intervals(cls, intervals, method: str, alpha: float,
                       truncated: bool = False, candidate_range=None) -> "PredictionSet":
        cleaned = []
        for lo, hi in intervals:
            lo, hi = float(lo), float(hi)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise InvalidInputError(f"bad interval ({lo}, {hi})")
            cleaned.append((lo, hi))
        cleaned.sort()
        for (a, b), (c, _) in zip(cleaned, cleaned[1:]):
            if c <= b:
                raise InvalidInputError("intervals must be disjoint")
        if not cleaned:
            return cls.empty_set(method, alpha, candidate_range)
        shape = "interval" if len(cleaned) == 1 else "union-of-intervals"
        return cls(shape, cleaned, method, alpha, truncated=truncated,
                   candidate_range=candidate_range)

    def length(self) -> float:
        """Total Lebesgue length of the region."""
        return float(sum(hi - lo for lo, hi in self.intervals))

    def contains(self, value: float) -> bool:
        # a whole-range set is everything; its stored interval is only the
        # clamped display of the active candidate range
        if self.shape == "whole-range":
            return True
        value = float(value)
        return any(lo <= value <= hi for lo, hi in self.intervals)

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "method": self.method,
            "alpha": self.alpha,
            "truncated": self.truncated,
            "candidate_range": list(self.candidate_range) if self.candidate_range else None,
        }


def default_candidate_grid(dataset: TabularDataset, num: int = 200) -> np.ndarray:
    """Equally spaced candidates spanning the observed response range."""
    lo, hi = dataset.target_range()
    return np.linspace(lo, hi, int(num))


def conformal_set_grid(dataset: TabularDataset, model_spec, score: ScoreFunction,
                       alpha: float, grid) -> PredictionSet:
    """Exact conformal set evaluated on a candidate grid, one refit per point.

    Keeps the grid points whose conformity reaches ``alpha`` and merges
    consecutive kept points into closed intervals.  This is the verification
    oracle for the single-fit constructions; it costs ``len(grid)`` fits.
    """
    alpha = check_alpha(alpha)
    grid = _as_finite_array(np.ravel(np.asarray(grid, dtype=float)), "grid", 1)
    if grid.size == 0:
        raise InvalidInputError("grid must be nonempty")
    if np.any(np.diff(grid) < 0):
        raise InvalidInputError("grid must be sorted ascending")
    n = dataset.n
    threshold = _floor_tol((1.0 - alpha) * (n + 1))
    kept = np.zeros(grid.size, dtype=bool)
    for j, z in enumerate(grid):
        fitted = model_spec.fit(dataset, z)
        scores = conformity_scores(dataset, z, fitted, score)
        kept[j] = rank(scores, n + 1) <= threshold
    intervals = []
    start = None
    for j, flag in enumerate(kept):
        if flag and start is None:
            start = j
        elif not flag and start is not None:
            intervals.append((grid[start], grid[j - 1]))
            start = None
    if start is not None:
        intervals.append((grid[start], grid[-1]))
    return PredictionSet.from_intervals(
        intervals, method="gridcp", alpha=alpha,
        candidate_range=(float(grid[0]), float(grid[-1])),
    )
