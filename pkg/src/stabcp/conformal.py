"""Single-fit conformal sets: the conformity sandwich and its competitors.

One model fit at an anchor candidate, together with per-point stability
bounds, traps the exact conformity function between two computable envelopes.
The upper envelope's superlevel set is a prediction region that contains the
exact conformal set, costs a single fit, and keeps the coverage guarantee.
This module provides that construction in closed form (absolute-residual
score) and by bisection (any score with convex level sets), the batch and
interpolated refinements, and the split/oracle/root-finding baselines used
for benchmarking.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    PredictionSet,
    ScoreFunction,
    TabularDataset,
    _as_finite_array,
    _ceil_tol,
    _floor_tol,
    check_alpha,
    conformity_scores,
    pi_from_scores,
    rank,
)
from .errors import InvalidInputError
from .stability import StabilityBounds


@dataclass
class PiBounds:
    """Sandwich values at one candidate: ``0 <= lo <= up <= 1``.

    ``n_lo`` and ``n_up`` are the integer indicator sums behind the two
    envelopes (``lo = 1 - n_lo/(n+1)``), kept for exact rank comparisons.
    """

    lo: float
    up: float
    n_lo: int
    n_up: int

    @property
    def gap(self) -> float:
        return self.up - self.lo


@dataclass
class MethodReport:
    """Outcome of one prediction method on one dataset."""

    set: PredictionSet
    covered: bool | None
    length: float
    fit_count: int
    wall_time: float
    details: dict = field(default_factory=dict)


@dataclass
class ConformityBounds:
    """Score envelopes around one anchor fit.

    The envelopes of the observed rows do not depend on the probed candidate;
    only the query-point envelope does, and it is materialized on demand from
    the anchor prediction.  ``upper - lower == 2 * tau`` rowwise.
    """

    anchor: float
    lower: np.ndarray
    upper: np.ndarray
    mu_test: float
    tau_test: float
    score: ScoreFunction
    n: int
    lower_sorted: np.ndarray = None
    upper_sorted: np.ndarray = None

    def __post_init__(self):
        self.lower_sorted = np.sort(self.lower)
        self.upper_sorted = np.sort(self.upper)

    def test_bounds(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper envelope of the query-point score at candidate(s) z."""
        s = self.score.evaluate(np.asarray(z, dtype=float), self.mu_test)
        return s - self.tau_test, s + self.tau_test

    def counts_at(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Indicator sums (n_lo, n_up) over all n+1 rows, vectorized in z."""
        low_test, up_test = self.test_bounds(z)
        n_lo = np.searchsorted(self.lower_sorted, up_test, side="right") + 1
        self_term = 1 if self.tau_test == 0.0 else 0
        n_up = np.searchsorted(self.upper_sorted, low_test, side="right") + self_term
        return n_lo, n_up

    def pi_bounds_at(self, z: float) -> PiBounds:
        n_lo, n_up = self.counts_at(float(z))
        m = self.n + 1
        return PiBounds(1.0 - float(n_lo) / m, 1.0 - float(n_up) / m, int(n_lo), int(n_up))


def anchor_bounds(dataset: TabularDataset, anchor: float, model_spec,
                  score: ScoreFunction, tau: StabilityBounds) -> tuple[ConformityBounds, object]:
    """Fit once at the anchor and build the score envelopes (one fit total)."""
    tau_arr = tau.tau
    if tau_arr.size != dataset.n + 1:
        raise InvalidInputError(
            f"tau has {tau_arr.size} entries, expected {dataset.n + 1}"
        )
    fitted = model_spec.fit(dataset, anchor)
    scores = conformity_scores(dataset, anchor, fitted, score)
    observed = scores[:-1]
    bounds = ConformityBounds(
        anchor=float(anchor),
        lower=observed - tau_arr[:-1],
        upper=observed + tau_arr[:-1],
        mu_test=float(fitted.mu_test),
        tau_test=float(tau_arr[-1]),
        score=score,
        n=dataset.n,
    )
    return bounds, fitted


def pi_bounds(z: float, anchor_fit, scores_at_anchor, tau: StabilityBounds,
              score: ScoreFunction) -> PiBounds:
    """Envelope values of the conformity function at candidate ``z``.

    ``scores_at_anchor`` holds the observed rows' scores under the anchor fit;
    the query-point term is recomputed from the anchor prediction.  With all
    bounds zero and tie-free scores the two envelopes collapse onto the
    conformity computed from the anchor scores.
    """
    observed = _as_finite_array(np.ravel(np.asarray(scores_at_anchor, dtype=float)),
                                "scores_at_anchor", 1)
    n = observed.size
    tau_arr = tau.tau
    if tau_arr.size != n + 1:
        raise InvalidInputError(f"tau has {tau_arr.size} entries, expected {n + 1}")
    bounds = ConformityBounds(
        anchor=float(getattr(anchor_fit, "candidate", math.nan)),
        lower=observed - tau_arr[:-1],
        upper=observed + tau_arr[:-1],
        mu_test=float(anchor_fit.mu_test),
        tau_test=float(tau_arr[-1]),
        score=score,
        n=n,
    )
    return bounds.pi_bounds_at(z)


def batch_pi_bounds(z: float, anchors, tau: StabilityBounds,
                    score: ScoreFunction) -> PiBounds:
    """Tightest envelopes over a batch of anchor fits.

    ``anchors`` is a sequence of ``(fitted_model, scores_at_anchor)`` pairs.
    The lower envelope is the best (largest) lower value over the batch and
    the upper envelope the best (smallest) upper value.
    """
    anchors = list(anchors)
    if not anchors:
        raise InvalidInputError("need at least one anchor")
    per_anchor = [pi_bounds(z, fitted, scores, tau, score) for fitted, scores in anchors]
    best_lo = max(per_anchor, key=lambda pb: pb.lo)
    best_up = min(per_anchor, key=lambda pb: pb.up)
    return PiBounds(best_lo.lo, best_up.up, best_lo.n_lo, best_up.n_up)


def anchored_upper_interval(mu_test: float, upper_scores, tau_test: float, alpha: float,
                            candidate_range, method: str) -> PredictionSet:
    """Closed-form superlevel set of the upper envelope, absolute-residual score.

    ``upper_scores`` are the inflated observed scores at the anchor.  With a
    strictly positive query-point bound the region is the centered interval
    whose half-width is the ceil((1-alpha)(n+1))-th order statistic plus that
    bound; with a zero bound the query point's own indicator fires, which
    shifts the order-statistic index down by one (the zero-stability limit
    shared with the oracle construction).
    """
    alpha = check_alpha(alpha)
    upper = np.sort(_as_finite_array(np.ravel(np.asarray(upper_scores, dtype=float)),
                                     "upper_scores", 1))
    n = upper.size
    tau_test = float(tau_test)
    if tau_test < 0:
        raise InvalidInputError("tau_test must be nonnegative")
    v = (1.0 - alpha) * (n + 1)
    if tau_test > 0:
        k = _ceil_tol(v)
        if k > n:
            return PredictionSet.whole_range(method, alpha, candidate_range)
        half = float(upper[k - 1]) + tau_test
    else:
        j = _floor_tol(v - 1.0) + 1
        if j > n:
            return PredictionSet.whole_range(method, alpha, candidate_range)
        if j < 1:
            return PredictionSet.empty_set(method, alpha, candidate_range)
        half = float(upper[j - 1])
    return PredictionSet.from_intervals([(mu_test - half, mu_test + half)],
                                        method, alpha, candidate_range=candidate_range)


def _report(prediction_set: PredictionSet, dataset: TabularDataset, fit_count: int,
            started: float, **details) -> MethodReport:
    covered = None
    if dataset.test_target is not None:
        covered = prediction_set.contains(dataset.test_target)
    return MethodReport(
        set=prediction_set,
        covered=covered,
        length=prediction_set.length(),
        fit_count=fit_count,
        wall_time=time.perf_counter() - started,
        details=dict(details),
    )


def stab_cp_interval(dataset: TabularDataset, anchor: float, model_spec,
                     score: ScoreFunction, tau: StabilityBounds, alpha: float) -> MethodReport:
    """Single-fit stable conformal interval (absolute-residual score).

    Fits once at the anchor, inflates the observed scores by their stability
    bounds, and returns the interval centered at the anchor prediction with
    half-width ``Q + tau_test`` where Q is the ceil((1-alpha)(n+1))-th order
    statistic of the inflated scores.  When that index exceeds n the whole
    candidate range is returned.
    """
    started = time.perf_counter()
    alpha = check_alpha(alpha)
    if score.kind != "absolute-residual":
        raise InvalidInputError("closed form requires the absolute-residual score; "
                                "use stab_cp_bisection for other scores")
    if tau.tau_test <= 0:
        raise InvalidInputError("the closed form requires tau[-1] > 0")
    bounds, _ = anchor_bounds(dataset, anchor, model_spec, score, tau)
    candidate_range = tau.candidate_range or dataset.target_range()
    prediction_set = anchored_upper_interval(bounds.mu_test, bounds.upper, bounds.tau_test,
                                             alpha, candidate_range, method="stabcp")
    return _report(prediction_set, dataset, 1, started,
                   anchor=float(anchor), tau_provenance=tau.provenance,
                   tau_coverage_safe=tau.coverage_safe)


def _level_threshold(n: int, alpha: float) -> int:
    """Largest indicator sum compatible with the superlevel set at alpha."""
    return _floor_tol((1.0 - alpha) * (n + 1))


def _bisect_boundary(selected, lo: float, hi: float, eps_r: float,
                     select_hi: bool) -> tuple[float, int]:
    """Midpoint of the final bracket around the selection boundary.

    ``select_hi`` says which end of the bracket is inside the region (the
    region is a single interval, so exactly one end is).  Returns the number
    of evaluations used along with the point.
    """
    evals = 0
    while hi - lo > eps_r:
        mid = 0.5 * (lo + hi)
        evals += 1
        if selected(mid) == select_hi:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), evals


def stab_cp_bisection(dataset: TabularDataset, anchor: float, model_spec,
                      score: ScoreFunction, tau: StabilityBounds, alpha: float,
                      z_min: float | None = None, z_max: float | None = None,
                      eps_r: float = 1e-4, probe_points: int = 20) -> MethodReport:
    """Stable conformal set by bisection on the upper envelope, no refits.

    Works for any score whose level sets in the candidate are intervals.  A
    coarse probe of the range locates a point inside the region; two
    bisections then pin each endpoint to within ``eps_r``.  Endpoints falling
    outside the range are clamped and flagged as truncated.
    """
    started = time.perf_counter()
    alpha = check_alpha(alpha)
    eps_r = float(eps_r)
    if eps_r <= 0:
        raise InvalidInputError("eps_r must be positive")
    if z_min is None or z_max is None:
        lo_range, hi_range = dataset.target_range()
        z_min = lo_range if z_min is None else float(z_min)
        z_max = hi_range if z_max is None else float(z_max)
    if not z_min < z_max:
        raise InvalidInputError("need z_min < z_max")
    bounds, _ = anchor_bounds(dataset, anchor, model_spec, score, tau)
    threshold = _level_threshold(dataset.n, alpha)
    eval_count = 0

    def selected(z: float) -> bool:
        nonlocal eval_count
        eval_count += 1
        _, n_up = bounds.counts_at(z)
        return int(n_up) <= threshold

    probes = np.linspace(z_min, z_max, int(probe_points))
    probe_selected = np.array([selected(z) for z in probes])
    if not probe_selected.any():
        prediction_set = PredictionSet.empty_set("stabcp-bisection", alpha,
                                                 candidate_range=(z_min, z_max))
        return _report(prediction_set, dataset, 1, started,
                       anchor=float(anchor), pi_up_evaluations=eval_count,
                       tau_provenance=tau.provenance,
                       tau_coverage_safe=tau.coverage_safe)
    z0 = float(probes[int(np.argmax(probe_selected))])

    truncated = False
    bisections = 0
    if probe_selected[0]:
        left = float(z_min)
        truncated = True
    else:
        left, used = _bisect_boundary(selected, float(z_min), z0, eps_r, select_hi=True)
        bisections += used
    if probe_selected[-1]:
        right = float(z_max)
        truncated = True
    else:
        right, used = _bisect_boundary(selected, z0, float(z_max), eps_r, select_hi=False)
        bisections += used

    if probe_selected[0] and probe_selected[-1]:
        prediction_set = PredictionSet.whole_range("stabcp-bisection", alpha,
                                                   (float(z_min), float(z_max)))
    else:
        prediction_set = PredictionSet.from_intervals(
            [(left, right)], "stabcp-bisection", alpha,
            truncated=truncated, candidate_range=(float(z_min), float(z_max)),
        )
    return _report(prediction_set, dataset, 1, started,
                   anchor=float(anchor), z0=z0,
                   pi_up_evaluations=eval_count, bisection_evaluations=bisections,
                   tau_provenance=tau.provenance,
                   tau_coverage_safe=tau.coverage_safe)


def interpolated_cp(dataset: TabularDataset, interpolated, tau_tilde: StabilityBounds,
                    score: ScoreFunction, alpha: float, grid) -> MethodReport:
    """Prediction set from the interpolated model family, no further refits.

    Evaluates the upper envelope of the interpolated conformity function on
    the grid: every row's score moves with the candidate through the
    interpolated predictions, and all rows carry the inflated interpolation
    bounds.  Returns the alpha-superlevel set merged into intervals.
    """
    started = time.perf_counter()
    alpha = check_alpha(alpha)
    grid = _as_finite_array(np.ravel(np.asarray(grid, dtype=float)), "grid", 1)
    if grid.size == 0:
        raise InvalidInputError("grid must be nonempty")
    if np.any(np.diff(grid) < 0):
        raise InvalidInputError("grid must be sorted ascending")
    n = dataset.n
    tau_arr = tau_tilde.tau
    if tau_arr.size != n + 1:
        raise InvalidInputError(f"tau has {tau_arr.size} entries, expected {n + 1}")
    threshold = _level_threshold(n, alpha)
    kept = np.zeros(grid.size, dtype=bool)
    for j, z in enumerate(grid):
        preds = interpolated.row_predictions_at(z)
        q = dataset.augmented_targets(z)
        scores = np.asarray(score.evaluate(q, preds), dtype=float)
        upper = scores + tau_arr
        lower_test = scores[-1] - tau_arr[-1]
        n_up = int(np.count_nonzero(upper <= lower_test))
        kept[j] = n_up <= threshold
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
    prediction_set = PredictionSet.from_intervals(
        intervals, "interpcp", alpha,
        candidate_range=(float(grid[0]), float(grid[-1])),
    )
    return _report(prediction_set, dataset, interpolated.fit_count, started,
                   tau_provenance=tau_tilde.provenance,
                   tau_coverage_safe=tau_tilde.coverage_safe)


def split_cp(dataset: TabularDataset, split_index: int, model_spec,
             score: ScoreFunction, alpha: float) -> MethodReport:
    """Split conformal set: fit on the first rows, calibrate on the rest.

    The model is fitted on rows ``1..m`` only; the remaining rows provide
    calibration scores.  For the absolute-residual score the set is the
    interval around the trained prediction whose half-width is the
    ceil((1-alpha)(n-m+1))-th calibration order statistic; other scores with
    interval level sets go through the bisection extraction.
    """
    started = time.perf_counter()
    alpha = check_alpha(alpha)
    m = int(split_index)
    n = dataset.n
    if not 1 <= m < n:
        raise InvalidInputError(f"split index must satisfy 1 <= m < n, got m={m}, n={n}")
    trained = model_spec.fit_rows(dataset.features[:m], dataset.targets[:m])
    cal_predictions = trained.predict_rows(dataset.features[m:])
    cal_scores = np.asarray(score.evaluate(dataset.targets[m:], cal_predictions), dtype=float)
    mu_test = trained.predict(dataset.test_point)
    n_cal = n - m
    candidate_range = dataset.target_range()
    if score.kind == "absolute-residual":
        k = _ceil_tol((1.0 - alpha) * (n_cal + 1))
        if k > n_cal:
            prediction_set = PredictionSet.whole_range("splitcp", alpha, candidate_range)
        else:
            half = float(np.sort(cal_scores)[k - 1])
            prediction_set = PredictionSet.from_intervals(
                [(mu_test - half, mu_test + half)], "splitcp", alpha,
                candidate_range=candidate_range,
            )
    else:
        # same indicator arithmetic, denominator n_cal + 1, self term included
        bounds = ConformityBounds(
            anchor=math.nan, lower=cal_scores, upper=cal_scores,
            mu_test=float(mu_test), tau_test=0.0, score=score, n=n_cal,
        )
        prediction_set = _superlevel_by_bisection(bounds, n_cal, alpha,
                                                  candidate_range, "splitcp")
    return _report(prediction_set, dataset, 1, started,
                   split_index=m, calibration_size=n_cal)


def split_pi(dataset: TabularDataset, split_index: int, model_spec,
             score: ScoreFunction):
    """Split conformity function ``z -> pi_split(z)`` (one fit, reusable)."""
    m = int(split_index)
    n = dataset.n
    if not 1 <= m < n:
        raise InvalidInputError(f"split index must satisfy 1 <= m < n, got m={m}, n={n}")
    trained = model_spec.fit_rows(dataset.features[:m], dataset.targets[:m])
    cal_predictions = trained.predict_rows(dataset.features[m:])
    cal_scores = np.sort(np.asarray(
        score.evaluate(dataset.targets[m:], cal_predictions), dtype=float))
    mu_test = trained.predict(dataset.test_point)
    n_cal = n - m

    def pi(z):
        test_score = score.evaluate(np.asarray(z, dtype=float), mu_test)
        count = np.searchsorted(cal_scores, test_score, side="right") + 1
        return 1.0 - count / (n_cal + 1)

    return pi


def oracle_cp(dataset: TabularDataset, true_target: float, model_spec,
              score: ScoreFunction, alpha: float) -> MethodReport:
    """Reference set computed as if the held-out response were known.

    One fit at the true response; the set keeps the candidates whose score
    against that fit ranks low enough among the fixed scores.  This is the
    zero-stability limit of the single-fit construction anchored at the truth.
    """
    started = time.perf_counter()
    alpha = check_alpha(alpha)
    true_target = float(true_target)
    if not math.isfinite(true_target):
        raise InvalidInputError("true_target must be finite")
    fitted = model_spec.fit(dataset, true_target)
    scores = conformity_scores(dataset, true_target, fitted, score)
    candidate_range = dataset.target_range()
    if score.kind == "absolute-residual":
        prediction_set = anchored_upper_interval(fitted.mu_test, scores[:-1], 0.0, alpha,
                                                 candidate_range, method="oraclecp")
    else:
        bounds = ConformityBounds(
            anchor=true_target, lower=scores[:-1], upper=scores[:-1],
            mu_test=float(fitted.mu_test), tau_test=0.0, score=score, n=dataset.n,
        )
        prediction_set = _superlevel_by_bisection(bounds, dataset.n, alpha,
                                                  candidate_range, "oraclecp")
    return _report(prediction_set, dataset, 1, started, anchor=true_target)


def _superlevel_by_bisection(bounds: ConformityBounds, n: int,
                             alpha: float, candidate_range, method: str,
                             eps_r: float = 1e-6, probe_points: int = 64) -> PredictionSet:
    """Level-set extraction shared by the non-closed-form single-fit paths."""
    threshold = _level_threshold(n, alpha)
    z_min, z_max = candidate_range

    def selected(z: float) -> bool:
        _, n_up = bounds.counts_at(z)
        return int(n_up) <= threshold

    probes = np.linspace(z_min, z_max, probe_points)
    flags = np.array([selected(z) for z in probes])
    if not flags.any():
        return PredictionSet.empty_set(method, alpha, candidate_range)
    z0 = float(probes[int(np.argmax(flags))])
    truncated = False
    if flags[0]:
        left = float(z_min)
        truncated = True
    else:
        left, _ = _bisect_boundary(selected, float(z_min), z0, eps_r, select_hi=True)
    if flags[-1]:
        right = float(z_max)
        truncated = True
    else:
        right, _ = _bisect_boundary(selected, z0, float(z_max), eps_r, select_hi=False)
    return PredictionSet.from_intervals([(left, right)], method, alpha,
                                        truncated=truncated, candidate_range=candidate_range)


def root_cp(dataset: TabularDataset, model_spec, score: ScoreFunction, alpha: float,
            z_range=None, eps_r: float = 1e-4, probe_points: int = 20) -> MethodReport:
    """Endpoints of the exact conformal set by bisection, one refit per probe.

    Assumes the exact set is a bounded interval inside the candidate range.
    Every conformity evaluation refits the model, so the fit counter grows
    with both the coarse probe and the two bisections.
    """
    started = time.perf_counter()
    alpha = check_alpha(alpha)
    eps_r = float(eps_r)
    if eps_r <= 0:
        raise InvalidInputError("eps_r must be positive")
    if z_range is None:
        z_range = dataset.target_range()
    z_min, z_max = float(z_range[0]), float(z_range[1])
    if not z_min < z_max:
        raise InvalidInputError("need z_min < z_max")
    n = dataset.n
    threshold = _level_threshold(n, alpha)
    fit_count = 0

    def selected(z: float) -> bool:
        nonlocal fit_count
        fit_count += 1
        fitted = model_spec.fit(dataset, z)
        scores = conformity_scores(dataset, z, fitted, score)
        return rank(scores, n + 1) <= threshold

    probes = np.linspace(z_min, z_max, int(probe_points))
    flags = np.array([selected(z) for z in probes])
    if not flags.any():
        prediction_set = PredictionSet.empty_set("rootcp", alpha, (z_min, z_max))
        return _report(prediction_set, dataset, fit_count, started)
    z0 = float(probes[int(np.argmax(flags))])
    truncated = False
    if flags[0]:
        left = z_min
        truncated = True
    else:
        left, _ = _bisect_boundary(selected, z_min, z0, eps_r, select_hi=True)
    if flags[-1]:
        right = z_max
        truncated = True
    else:
        right, _ = _bisect_boundary(selected, z0, z_max, eps_r, select_hi=False)
    prediction_set = PredictionSet.from_intervals([(left, right)], "rootcp", alpha,
                                                  truncated=truncated,
                                                  candidate_range=(z_min, z_max))
    return _report(prediction_set, dataset, fit_count, started, z0=z0)


def grid_cp(dataset: TabularDataset, model_spec, score: ScoreFunction, alpha: float,
            grid) -> MethodReport:
    """The grid-evaluated exact set wrapped with timing and fit bookkeeping."""
    from .core import conformal_set_grid

    started = time.perf_counter()
    grid = np.asarray(grid, dtype=float)
    prediction_set = conformal_set_grid(dataset, model_spec, score, alpha, grid)
    return _report(prediction_set, dataset, int(grid.size), started)


def gap_profile(dataset: TabularDataset, anchor: float, model_spec,
                score: ScoreFunction, tau: StabilityBounds, grid) -> list:
    """Diagnostic sweep: ``(z, pi_lo, pi_up, pi_exact)`` per grid point.

    The envelope values reuse the single anchor fit; the exact conformity
    refits at every grid point, so this is for plots and verification only.
    """
    grid = _as_finite_array(np.ravel(np.asarray(grid, dtype=float)), "grid", 1)
    if grid.size == 0:
        raise InvalidInputError("grid must be nonempty")
    bounds, _ = anchor_bounds(dataset, anchor, model_spec, score, tau)
    rows = []
    for z in grid:
        pb = bounds.pi_bounds_at(z)
        fitted = model_spec.fit(dataset, z)
        exact = pi_from_scores(conformity_scores(dataset, z, fitted, score))
        rows.append((float(z), pb.lo, pb.up, exact))
    return rows


def default_anchor(dataset: TabularDataset, model_spec) -> float:
    """Anchor candidate: prediction at the query point of a fit on the observed rows."""
    trained = model_spec.fit_rows(dataset.features, dataset.targets)
    return float(trained.predict(dataset.test_point))
