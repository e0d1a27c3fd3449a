"""Symmetric regression fitters with declared regularity constants.

All fitters treat the rows exchangeably: the objective is a sum over rows, so
permuting the observed pairs leaves the fit unchanged (up to solver tolerance
for the iterative one).  Losses carry the explicit ``1/m`` scaling, with
``m`` the number of rows entering the fit; the constants declared through
:class:`RegularityConstants` assume that convention.

No intercept is added implicitly: append a constant feature column if one is
wanted.  This keeps the row norms entering the stability bounds honest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TabularDataset, _as_finite_array
from .errors import InvalidInputError, NotFittedError, NumericalError


@dataclass(frozen=True)
class RegularityConstants:
    """Regularity constants a model declares for the stability bounds.

    ``None`` marks a constant the model does not provide (e.g. the squared
    loss has no global Lipschitz constant).

    Attributes
    ----------
    rho : float or None
        Lipschitz constant of the total loss in the prediction vector
        (Euclidean norm).
    lambda_sc : float
        Strong-convexity modulus of the regularizer (``c * ||b||^2`` is
        ``2c``-strongly convex).
    nu : float or None
        Smoothness constant of the loss; ``None``/0 means not smooth.
    loss_bound_C : float or None
        Uniform bound on the optimal loss over the candidate range.
    l_phi : float
        Lipschitz factor of the feature map relative to ``x^T beta``
        (1 for linear models).
    """

    rho: float | None = None
    lambda_sc: float = 0.0
    nu: float | None = None
    loss_bound_C: float | None = None
    l_phi: float = 1.0

    def __post_init__(self):
        for name in ("rho", "nu", "loss_bound_C"):
            value = getattr(self, name)
            if value is not None and (not math.isfinite(value) or value < 0):
                raise InvalidInputError(f"{name} must be a finite nonnegative real")
        if not math.isfinite(self.lambda_sc) or self.lambda_sc < 0:
            raise InvalidInputError("lambda_sc must be a finite nonnegative real")
        if not math.isfinite(self.l_phi) or self.l_phi <= 0:
            raise InvalidInputError("l_phi must be a finite positive real")


def ridge_coefficients(X, y, lambda_reg: float) -> np.ndarray:
    """Solve ``(X^T X + m * lambda_reg * I) beta = X^T y`` for ``m = len(y)``.

    This is the minimizer of ``||y - X beta||^2 / m + lambda_reg * ||beta||^2``.
    With ``lambda_reg = 0`` the Gram matrix must be invertible.
    """
    X = _as_finite_array(X, "X", 2)
    y = _as_finite_array(y, "y", 1)
    if X.shape[0] != y.shape[0]:
        raise InvalidInputError("X and y row counts differ")
    lambda_reg = float(lambda_reg)
    if lambda_reg < 0:
        raise InvalidInputError("lambda_reg must be nonnegative")
    m, p = X.shape
    gram = X.T @ X + m * lambda_reg * np.eye(p)
    try:
        return np.linalg.solve(gram, X.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal equations are singular: {exc}") from exc


class RidgeModel:
    """Ridge regression with a closed-form solve and a linear response in z.

    Objective on ``m`` rows: ``||y - X beta||^2 / m + lambda_reg * ||beta||^2``.
    When fitted on the augmented data, the prediction at any point is affine
    in the candidate value: ``mu_z(x) = a(x) + b(x) * z``.  The two components
    come from solving the normal equations once with the observed responses
    (and 0 in the query slot) and once with the query-slot indicator.
    """

    def __init__(self, lambda_reg: float = 1.0):
        lambda_reg = float(lambda_reg)
        if lambda_reg < 0 or not math.isfinite(lambda_reg):
            raise InvalidInputError("lambda_reg must be a finite nonnegative real")
        self.lambda_reg = lambda_reg
        self.fitted = False
        self.coefficients = None
        self.beta_base = None
        self.beta_candidate = None
        self.row_predictions = None
        self.row_b = None
        self.mu_test = None
        self.candidate = None

    def _new(self) -> "RidgeModel":
        return RidgeModel(self.lambda_reg)

    def fit_rows(self, X, y) -> "RidgeModel":
        """Plain fit on the given rows, no augmentation."""
        model = self._new()
        model.coefficients = ridge_coefficients(X, y, self.lambda_reg)
        model.fitted = True
        return model

    def fit(self, dataset: TabularDataset, candidate: float) -> "RidgeModel":
        """Fit on the augmented data and cache the affine-in-z decomposition."""
        X = dataset.augmented_design()
        y0 = np.append(dataset.targets, 0.0)
        m, p = X.shape
        gram = X.T @ X + m * self.lambda_reg * np.eye(p)
        rhs = np.column_stack([X.T @ y0, dataset.test_point])
        try:
            solved = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"normal equations are singular: {exc}") from exc
        model = self._new()
        candidate = float(candidate)
        model.beta_base = solved[:, 0]
        model.beta_candidate = solved[:, 1]
        model.coefficients = model.beta_base + candidate * model.beta_candidate
        model.row_predictions = X @ model.coefficients
        model.row_b = X @ model.beta_candidate
        model.mu_test = float(model.row_predictions[-1])
        model.candidate = candidate
        model.fitted = True
        return model

    def predict(self, x) -> float:
        if not self.fitted:
            raise NotFittedError("RidgeModel.predict called before fit")
        x = _as_finite_array(x, "x", 1)
        if x.shape[0] != self.coefficients.shape[0]:
            raise InvalidInputError(
                f"x has {x.shape[0]} entries, expected {self.coefficients.shape[0]}"
            )
        return float(x @ self.coefficients)

    def predict_rows(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("RidgeModel.predict_rows called before fit")
        return np.asarray(X, dtype=float) @ self.coefficients

    def linear_response(self, x) -> tuple[float, float]:
        """Coefficients ``(a, b)`` of ``mu_z(x) = a + b * z`` at this design."""
        if self.beta_candidate is None:
            raise NotFittedError("linear response requires a fit on augmented data")
        x = _as_finite_array(x, "x", 1)
        return float(x @ self.beta_base), float(x @ self.beta_candidate)

    def regularity(self, dataset: TabularDataset) -> RegularityConstants:
        """Smooth-loss constants: the scaled squared loss is 2/m-smooth."""
        m = dataset.n + 1
        return RegularityConstants(
            rho=None,
            lambda_sc=2.0 * self.lambda_reg,
            nu=2.0 / m,
            loss_bound_C=None,
            l_phi=1.0,
        )


class LadRidgeModel:
    """Least absolute deviation with a ridge penalty, solved to a certificate.

    Objective on ``m`` rows: ``||y - X beta||_1 / m + lambda_reg * ||beta||^2``.
    The solver is deterministic full-batch operator splitting (ADMM on the
    residual split, with a cached Cholesky factor and residual-balanced
    penalty).  Clipping the scaled dual variable into the feasible box gives
    a duality gap at every check, so the returned iterate carries an explicit
    suboptimality certificate; the incumbent is the best primal point seen,
    whose recorded objectives decrease monotonically by construction.
    Hitting ``max_iter`` without reaching ``solver_tol`` is reported through
    ``converged``/``duality_gap``, not raised.
    """

    def __init__(self, lambda_reg: float, solver_tol: float = 1e-8, max_iter: int = 20_000):
        lambda_reg = float(lambda_reg)
        if not (math.isfinite(lambda_reg) and lambda_reg > 0):
            raise InvalidInputError("lambda_reg must be positive (strong convexity)")
        solver_tol = float(solver_tol)
        if not (math.isfinite(solver_tol) and solver_tol > 0):
            raise InvalidInputError("solver_tol must be positive")
        if int(max_iter) < 1:
            raise InvalidInputError("max_iter must be a positive integer")
        self.lambda_reg = lambda_reg
        self.solver_tol = solver_tol
        self.max_iter = int(max_iter)
        self.fitted = False
        self.coefficients = None
        self.row_predictions = None
        self.mu_test = None
        self.candidate = None
        self.objective = None
        self.duality_gap = None
        self.converged = None
        self.iterations = None
        self.accepted_objectives = None

    def _new(self) -> "LadRidgeModel":
        return LadRidgeModel(self.lambda_reg, self.solver_tol, self.max_iter)

    def _objective(self, X, y, beta) -> float:
        m = y.shape[0]
        return float(np.abs(y - X @ beta).sum() / m + self.lambda_reg * beta @ beta)

    def _dual_objective(self, X, y, theta) -> float:
        v = X.T @ theta
        return float(-theta @ y - (v @ v) / (4.0 * self.lambda_reg))

    def fit_rows(self, X, y) -> "LadRidgeModel":
        X = _as_finite_array(X, "X", 2)
        y = _as_finite_array(y, "y", 1)
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError("X and y row counts differ")
        m, p = X.shape
        model = self._new()

        beta = np.zeros(p)
        best_beta = beta.copy()
        best_obj = self._objective(X, y, beta)
        accepted = [best_obj]
        best_gap = math.inf
        iterations = 0

        gram = X.T @ X
        eye = np.eye(p)
        # Penalty starts at the scale of the soft threshold and is then
        # residual-balanced; every change refactorizes the cached Cholesky.
        rho = 1.0 / (m * max(float(np.std(y)), 1e-12))
        chol = np.linalg.cholesky(2.0 * self.lambda_reg * eye + rho * gram)
        v = np.zeros(m)
        u = np.zeros(m)
        relax = 1.7
        check_every = 10
        refactorizations = 0

        for k in range(1, self.max_iter + 1):
            rhs = rho * (X.T @ (y - v - u))
            beta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            fitted_rows = X @ beta
            relaxed = relax * fitted_rows + (1.0 - relax) * (y - v)
            v_old = v
            residual = y - relaxed - u
            v = np.sign(residual) * np.maximum(np.abs(residual) - 1.0 / (m * rho), 0.0)
            u = u + relaxed + v - y
            iterations = k
            if k % check_every == 0 or k == self.max_iter:
                obj = self._objective(X, y, beta)
                if obj < best_obj:
                    best_obj = obj
                    best_beta = beta.copy()
                    accepted.append(obj)
                theta = np.clip(rho * u, -1.0 / m, 1.0 / m)
                gap = max(best_obj - self._dual_objective(X, y, theta), 0.0)
                best_gap = min(best_gap, gap)
                if best_gap <= self.solver_tol:
                    break
                primal_res = float(np.linalg.norm(fitted_rows + v - y))
                dual_res = rho * float(np.linalg.norm(X.T @ (v - v_old)))
                if refactorizations < 40:
                    if primal_res > 10.0 * dual_res:
                        rho *= 2.0
                        u /= 2.0
                        chol = np.linalg.cholesky(2.0 * self.lambda_reg * eye + rho * gram)
                        refactorizations += 1
                    elif dual_res > 10.0 * primal_res:
                        rho /= 2.0
                        u *= 2.0
                        chol = np.linalg.cholesky(2.0 * self.lambda_reg * eye + rho * gram)
                        refactorizations += 1

        model.coefficients = best_beta
        model.objective = best_obj
        model.duality_gap = best_gap
        model.converged = best_gap <= self.solver_tol
        model.iterations = iterations
        model.accepted_objectives = accepted
        model.fitted = True
        return model

    def fit(self, dataset: TabularDataset, candidate: float) -> "LadRidgeModel":
        X = dataset.augmented_design()
        y = dataset.augmented_targets(candidate)
        model = self.fit_rows(X, y)
        model.row_predictions = X @ model.coefficients
        model.mu_test = float(model.row_predictions[-1])
        model.candidate = float(candidate)
        return model

    def predict(self, x) -> float:
        if not self.fitted:
            raise NotFittedError("LadRidgeModel.predict called before fit")
        x = _as_finite_array(x, "x", 1)
        if x.shape[0] != self.coefficients.shape[0]:
            raise InvalidInputError(
                f"x has {x.shape[0]} entries, expected {self.coefficients.shape[0]}"
            )
        return float(x @ self.coefficients)

    def predict_rows(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("LadRidgeModel.predict_rows called before fit")
        return np.asarray(X, dtype=float) @ self.coefficients

    def regularity(self, dataset: TabularDataset) -> RegularityConstants:
        """Lipschitz-loss constant for candidate changes.

        Only the query row's term of the scaled L1 loss moves with the
        candidate, and that term is ``||x_query|| / m``-Lipschitz in the
        coefficients.  (The naive whole-loss constant ``1/sqrt(m)`` is NOT
        sound here: the query row's leverage can exceed it, and measured
        deviations do cross that smaller bound.)
        """
        m = dataset.n + 1
        query_norm = float(np.linalg.norm(dataset.test_point))
        return RegularityConstants(
            rho=query_norm / m,
            lambda_sc=2.0 * self.lambda_reg,
            nu=0.0,
            loss_bound_C=None,
            l_phi=1.0,
        )


class PretrainedLinearModel:
    """Fixed linear coefficients; fitting only caches predictions.

    The predictions do not depend on the candidate value, so the zero vector
    is a genuinely sound stability bound for this model.  Useful as the
    zero-stability reference in tests and diagnostics.
    """

    def __init__(self, coefficients):
        self.coefficients = _as_finite_array(coefficients, "coefficients", 1)
        self.fitted = False
        self.row_predictions = None
        self.mu_test = None
        self.candidate = None

    def fit_rows(self, X, y) -> "PretrainedLinearModel":
        model = PretrainedLinearModel(self.coefficients)
        model.fitted = True
        return model

    def fit(self, dataset: TabularDataset, candidate: float) -> "PretrainedLinearModel":
        model = PretrainedLinearModel(self.coefficients)
        X = dataset.augmented_design()
        model.row_predictions = X @ model.coefficients
        model.mu_test = float(model.row_predictions[-1])
        model.candidate = float(candidate)
        model.fitted = True
        return model

    def predict(self, x) -> float:
        x = _as_finite_array(x, "x", 1)
        if x.shape[0] != self.coefficients.shape[0]:
            raise InvalidInputError("dimension mismatch")
        return float(x @ self.coefficients)

    def predict_rows(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients


class InterpolatedModel:
    """Piecewise-linear interpolation of a per-candidate model family.

    Base models are fitted once per knot (the range endpoints plus the
    interior anchors).  Inside the knot range the prediction at a candidate is
    the convex combination of the two bracketing knot models; outside it is
    the affine extension of the nearest segment.  The segment weight formula
    is used unclamped, which yields exactly that extension.
    """

    def __init__(self, knots, knot_models, base_tau=None):
        knots = _as_finite_array(knots, "knots", 1)
        if knots.size < 3:
            raise InvalidInputError("need at least three knots (two endpoints, one anchor)")
        if np.any(np.diff(knots) <= 0):
            raise InvalidInputError("knots must be strictly increasing")
        if len(knot_models) != knots.size:
            raise InvalidInputError("one fitted model per knot required")
        self.knots = knots
        self.knot_models = list(knot_models)
        self.base_tau = base_tau
        self.knot_row_predictions = np.vstack(
            [np.asarray(m.row_predictions, dtype=float) for m in self.knot_models]
        )
        self.fit_count = knots.size
        self.fitted = True

    @property
    def anchors(self) -> np.ndarray:
        return self.knots[1:-1]

    @property
    def z_min(self) -> float:
        return float(self.knots[0])

    @property
    def z_max(self) -> float:
        return float(self.knots[-1])

    def _segment(self, z: float) -> tuple[int, float]:
        """Segment index and left-knot weight; weights leave [0,1] outside the range."""
        z = float(z)
        t = int(np.searchsorted(self.knots, z, side="right")) - 1
        t = min(max(t, 0), self.knots.size - 2)
        left, right = self.knots[t], self.knots[t + 1]
        w = (right - z) / (right - left)
        return t, w

    def row_predictions_at(self, z: float) -> np.ndarray:
        """Interpolated predictions for the n+1 augmented rows at candidate z."""
        t, w = self._segment(z)
        return w * self.knot_row_predictions[t] + (1.0 - w) * self.knot_row_predictions[t + 1]

    def mu_test_at(self, z: float) -> float:
        return float(self.row_predictions_at(z)[-1])

    def predict(self, x, z: float) -> float:
        t, w = self._segment(z)
        return w * self.knot_models[t].predict(x) + (1.0 - w) * self.knot_models[t + 1].predict(x)


def fit_ridge(dataset: TabularDataset, candidate: float, lambda_reg: float) -> RidgeModel:
    """Closed-form ridge fit on the augmented data."""
    return RidgeModel(lambda_reg).fit(dataset, candidate)


def fit_lad_ridge(dataset: TabularDataset, candidate: float, lambda_reg: float,
                  solver_tol: float = 1e-8, max_iter: int = 50_000) -> LadRidgeModel:
    """LAD-ridge fit on the augmented data with a duality-gap certificate."""
    return LadRidgeModel(lambda_reg, solver_tol, max_iter).fit(dataset, candidate)


def build_interpolated_model(dataset: TabularDataset, anchors, z_min: float, z_max: float,
                             base_model_spec, base_tau=None) -> InterpolatedModel:
    """Fit the base model at every anchor and both endpoints (d + 2 fits)."""
    anchors = _as_finite_array(np.ravel(np.asarray(anchors, dtype=float)), "anchors", 1)
    if anchors.size < 1:
        raise InvalidInputError("need at least one anchor")
    if np.any(np.diff(anchors) <= 0):
        raise InvalidInputError("anchors must be strictly increasing")
    z_min, z_max = float(z_min), float(z_max)
    if not (z_min < anchors[0] and anchors[-1] < z_max):
        raise InvalidInputError("anchors must lie strictly inside (z_min, z_max)")
    knots = np.concatenate([[z_min], anchors, [z_max]])
    models = [base_model_spec.fit(dataset, z) for z in knots]
    return InterpolatedModel(knots, models, base_tau=base_tau)


def predict(model, x, candidate: float | None = None) -> float:
    """Prediction of a fitted model at ``x``.

    Interpolated models need the candidate value; plain models ignore it.
    """
    if isinstance(model, InterpolatedModel):
        if candidate is None:
            raise InvalidInputError("interpolated models need the candidate value")
        return model.predict(x, candidate)
    return model.predict(x)
