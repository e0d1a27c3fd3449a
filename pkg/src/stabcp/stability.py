"""Per-point bounds on how much a score can move when the candidate changes.

Each constructor returns a :class:`StabilityBounds` holding one bound per
augmented row (the last entry belongs to the query point) together with its
provenance.  Bounds derived from regularity constants are coverage-safe; the
iteration-count heuristic is not and is flagged so reports can quarantine it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import TabularDataset, _as_finite_array
from .errors import DataError, InvalidInputError

PROVENANCES = (
    "strongly-convex-loss",
    "regularized-lipschitz",
    "regularized-smooth",
    "sgd-heuristic",
    "linear-exact",
    "user-supplied",
    "interpolated",
)


@dataclass(frozen=True)
class StabilityBounds:
    """Vector of per-point score-variation bounds.

    ``tau[i]`` bounds ``|S(q, mu_z(x_i)) - S(q, mu_z0(x_i))|`` over the
    candidate range; ``tau[-1]`` is the query point's bound.  The single-fit
    closed form requires ``tau[-1] > 0``.
    """

    tau: np.ndarray
    provenance: str
    candidate_range: tuple | None = None
    coverage_safe: bool = True

    def __post_init__(self):
        tau = _as_finite_array(np.ravel(np.asarray(self.tau, dtype=float)), "tau", 1)
        if tau.size < 2:
            raise InvalidInputError("tau must cover the observed rows plus the query point")
        if np.any(tau < 0):
            raise InvalidInputError("tau entries must be nonnegative")
        if self.provenance not in PROVENANCES:
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "tau", tau)
        if self.candidate_range is not None:
            lo, hi = float(self.candidate_range[0]), float(self.candidate_range[1])
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise InvalidInputError("candidate_range must be a finite (lo, hi) pair")
            object.__setattr__(self, "candidate_range", (lo, hi))

    @property
    def n(self) -> int:
        return self.tau.size - 1

    @property
    def tau_test(self) -> float:
        return float(self.tau[-1])


def augmented_row_norms(dataset: TabularDataset) -> np.ndarray:
    """Euclidean norms of all n+1 feature rows, query row last."""
    return np.linalg.norm(dataset.augmented_design(), axis=1)


def _check_positive(value: float, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise InvalidInputError(f"{name} must be positive")
    return value


def _check_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value >= 0):
        raise InvalidInputError(f"{name} must be a finite nonnegative real")
    return value


def _check_row_norms(row_norms) -> np.ndarray:
    norms = _as_finite_array(np.ravel(np.asarray(row_norms, dtype=float)), "row_norms", 1)
    if norms.size < 2:
        raise InvalidInputError("row_norms must include the query row")
    if np.any(norms < 0):
        raise InvalidInputError("row norms must be nonnegative")
    return norms


def tau_strongly_convex(gamma: float, rho: float, lambda_sc: float, n: int,
                        candidate_range=None) -> StabilityBounds:
    """Uniform bound ``2*gamma*rho/lambda_sc`` from a strongly convex objective.

    Applies when the fit minimizes a ``lambda_sc``-strongly-convex,
    ``rho``-Lipschitz function of the prediction vector and the score is
    ``gamma``-Lipschitz in the prediction.
    """
    gamma = _check_nonnegative(gamma, "gamma")
    rho = _check_nonnegative(rho, "rho")
    lambda_sc = _check_positive(lambda_sc, "lambda_sc")
    if int(n) < 1:
        raise InvalidInputError("n must be at least 1")
    value = 2.0 * gamma * rho / lambda_sc
    return StabilityBounds(np.full(int(n) + 1, value), "strongly-convex-loss",
                           candidate_range=candidate_range)


def tau_regularized_lipschitz(gamma: float, rho: float, l_phi: float, lambda_sc: float,
                              row_norms, candidate_range=None) -> StabilityBounds:
    """Per-row bound ``2*gamma*rho*l_phi*||x_i||/lambda_sc`` (Lipschitz loss)."""
    gamma = _check_nonnegative(gamma, "gamma")
    rho = _check_nonnegative(rho, "rho")
    l_phi = _check_positive(l_phi, "l_phi")
    lambda_sc = _check_positive(lambda_sc, "lambda_sc")
    norms = _check_row_norms(row_norms)
    tau = 2.0 * gamma * rho * l_phi * norms / lambda_sc
    return StabilityBounds(tau, "regularized-lipschitz", candidate_range=candidate_range)


def tau_regularized_smooth(gamma: float, nu: float, loss_bound_C: float, l_phi: float,
                           lambda_sc: float, row_norms, candidate_range=None) -> StabilityBounds:
    """Per-row bound ``2*gamma*l_phi*||x_i||*sqrt(2*nu*C)/(lambda_sc - nu)``.

    Needs a ``nu``-smooth loss with ``nu < lambda_sc`` and the optimal loss
    bounded by ``C`` over the candidate range.
    """
    gamma = _check_nonnegative(gamma, "gamma")
    nu = _check_nonnegative(nu, "nu")
    loss_bound_C = _check_nonnegative(loss_bound_C, "loss_bound_C")
    l_phi = _check_positive(l_phi, "l_phi")
    lambda_sc = _check_positive(lambda_sc, "lambda_sc")
    if nu >= lambda_sc:
        raise InvalidInputError(
            f"smooth-loss bound needs nu < lambda_sc, got nu={nu} >= lambda_sc={lambda_sc}"
        )
    norms = _check_row_norms(row_norms)
    tau = 2.0 * gamma * l_phi * norms * math.sqrt(2.0 * nu * loss_bound_C) / (lambda_sc - nu)
    return StabilityBounds(tau, "regularized-smooth", candidate_range=candidate_range)


def scaled_squared_loss(y, predictions) -> float:
    """``||y - u||^2 / m`` for ``m = len(y)``."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(predictions, dtype=float)
    return float(np.mean((y - u) ** 2))


def scaled_absolute_loss(y, predictions) -> float:
    """``||y - u||_1 / m`` for ``m = len(y)``."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(predictions, dtype=float)
    return float(np.mean(np.abs(y - u)))


def bound_loss_C(dataset: TabularDataset, loss, z_range=None, convex_in_z: bool = True,
                 grid_points: int = 1000) -> float:
    """Bound on the optimal loss: the loss of the zero prediction over the range.

    The optimal fit can only improve on predicting zero, so
    ``sup_z loss(y(z), 0)`` over the candidate range bounds the optimal loss.
    For a loss convex in the candidate the supremum sits at an endpoint;
    otherwise a dense grid maximum is taken.
    """
    if z_range is None:
        z_range = dataset.target_range()
    lo, hi = float(z_range[0]), float(z_range[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise InvalidInputError("z_range must be a finite (lo, hi) pair")
    zeros = np.zeros(dataset.n + 1)
    if convex_in_z:
        candidates = (lo, hi)
    else:
        candidates = np.linspace(lo, hi, int(grid_points))
    return max(float(loss(dataset.augmented_targets(z), zeros)) for z in candidates)


def tau_sgd_heuristic(n_iter: int, row_norms, n: int) -> StabilityBounds:
    """Iteration-count heuristic ``n_iter * ||x_i|| / (n + 1)``.

    An order-of-magnitude estimate for models trained by T gradient passes.
    NOT coverage-safe: the result is flagged so reports can exclude it from
    coverage claims.
    """
    if int(n_iter) < 0:
        raise InvalidInputError("n_iter must be nonnegative")
    norms = _check_row_norms(row_norms)
    if norms.size != int(n) + 1:
        raise InvalidInputError(f"row_norms must have n+1 = {int(n) + 1} entries")
    tau = int(n_iter) * norms / (int(n) + 1)
    return StabilityBounds(tau, "sgd-heuristic", coverage_safe=False)


def tau_linear_exact(ridge_model, dataset: TabularDataset, z_range=None,
                     gamma: float = 1.0) -> StabilityBounds:
    """Exact worst-case deviation for a predictor affine in the candidate.

    For ``mu_z(x_i) = a_i + b_i * z`` the deviation over a range of width W is
    exactly ``|b_i| * W``; the score moves by at most ``gamma`` times that.
    """
    gamma = _check_nonnegative(gamma, "gamma")
    row_b = getattr(ridge_model, "row_b", None)
    if row_b is None:
        raise InvalidInputError("model lacks the affine-in-candidate decomposition; "
                                "fit a RidgeModel on the augmented data first")
    if z_range is None:
        z_range = dataset.target_range()
    lo, hi = float(z_range[0]), float(z_range[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise InvalidInputError("z_range must be a finite (lo, hi) pair")
    tau = gamma * np.abs(np.asarray(row_b, dtype=float)) * (hi - lo)
    return StabilityBounds(tau, "linear-exact", candidate_range=(lo, hi))


def tau_interpolated(base: StabilityBounds, gamma: float) -> StabilityBounds:
    """Bound for the piecewise-linear interpolated model: ``3*gamma*tau_i``.

    Interpolation adds at most one base deviation on each side of the direct
    comparison, and the score's Lipschitz constant converts predictions to
    scores, giving the factor ``3*gamma``.
    """
    gamma = _check_nonnegative(gamma, "gamma")
    return StabilityBounds(3.0 * gamma * base.tau, "interpolated",
                           candidate_range=base.candidate_range,
                           coverage_safe=base.coverage_safe)


def tau_user_supplied(values, candidate_range=None) -> StabilityBounds:
    """Wrap externally computed bounds; treated as coverage-safe."""
    return StabilityBounds(np.asarray(values, dtype=float), "user-supplied",
                           candidate_range=candidate_range)


def load_tau_csv(path) -> StabilityBounds:
    """Read a one-column CSV of bounds, one row per point plus the query row."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: empty tau file")
    start = 0
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        start = 1  # header row
    for r, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        try:
            values.append(float(row[0]))
        except ValueError as exc:
            raise DataError(f"{path}: row {r}: not a number: {row[0]!r}") from exc
    if len(values) < 2:
        raise DataError(f"{path}: need at least two tau values")
    return tau_user_supplied(values)


def tau_auto(model_spec, dataset: TabularDataset, score, z_range=None) -> StabilityBounds:
    """Bounds from the constants the model declares.

    Lipschitz-loss models get the per-row Lipschitz bound; smooth-loss models
    get the smooth bound with the loss bound taken at the zero prediction over
    the candidate range.
    """
    if z_range is None:
        z_range = dataset.target_range()
    constants = model_spec.regularity(dataset)
    norms = augmented_row_norms(dataset)
    if constants.rho is not None and constants.rho > 0:
        return tau_regularized_lipschitz(score.gamma, constants.rho, constants.l_phi,
                                         constants.lambda_sc, norms,
                                         candidate_range=z_range)
    if constants.nu is not None and constants.nu > 0:
        C = constants.loss_bound_C
        if C is None:
            C = bound_loss_C(dataset, scaled_squared_loss, z_range=z_range)
        return tau_regularized_smooth(score.gamma, constants.nu, C, constants.l_phi,
                                      constants.lambda_sc, norms,
                                      candidate_range=z_range)
    raise InvalidInputError("model declares neither a Lipschitz nor a smooth loss constant")
