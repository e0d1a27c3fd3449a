"""Benchmark protocol: repeated draws, per-method coverage/length/time.

Each repetition gets an independent dataset (a fresh synthetic draw, or a
fresh permutation of a fixed table with a new held-out row), runs every
requested method, and records whether the held-out response was covered, the
region length, the wall time, and the fit counter.  Aggregation normalizes
mean times by the oracle method's mean, which is therefore always run.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conformal import (
    default_anchor,
    grid_cp,
    interpolated_cp,
    oracle_cp,
    root_cp,
    split_cp,
    stab_cp_interval,
)
from .core import ScoreFunction, TabularDataset, default_candidate_grid
from .data import GeneratorSpec, dataset_from_rows, generate
from .errors import InvalidInputError
from .models import LadRidgeModel, RidgeModel, build_interpolated_model
from .stability import tau_auto, tau_interpolated, tau_linear_exact, tau_sgd_heuristic
from .stability import augmented_row_norms, load_tau_csv

METHOD_NAMES = ("stabcp", "splitcp", "oraclecp", "rootcp", "gridcp", "interpcp")
MODEL_NAMES = ("ridge", "ladridge")
TAU_SOURCES = ("auto", "linear-exact", "sgd-heuristic", "file")


@dataclass
class RunConfig:
    """Method settings shared across benchmark repetitions."""

    model: str = "ridge"
    lambda_reg: float = 0.5
    solver_tol: float = 1e-8
    max_iter: int = 50_000
    alpha: float = 0.1
    tau_source: str = "auto"
    tau_file: str | None = None
    allow_unsafe_tau: bool = False
    anchor: str | float = "auto"
    eps_r: float = 1e-4
    grid_size: int = 200
    n_anchors: int = 3
    split_fraction: float = 0.5
    sgd_iters: int | None = None

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise InvalidInputError(f"unknown model {self.model!r}")
        if self.tau_source not in TAU_SOURCES:
            raise InvalidInputError(f"unknown tau source {self.tau_source!r}")

    def model_spec(self):
        if self.model == "ridge":
            return RidgeModel(self.lambda_reg)
        return LadRidgeModel(self.lambda_reg, self.solver_tol, self.max_iter)


def build_tau(config: RunConfig, dataset: TabularDataset, score: ScoreFunction):
    """Stability bounds per the configured source; returns (tau, aux_fit_count)."""
    spec = config.model_spec()
    z_range = dataset.target_range()
    if config.tau_source == "auto":
        return tau_auto(spec, dataset, score, z_range=z_range), 0
    if config.tau_source == "linear-exact":
        if config.model != "ridge":
            raise InvalidInputError("linear-exact bounds need the ridge model")
        fitted = spec.fit(dataset, 0.0)
        return tau_linear_exact(fitted, dataset, z_range=z_range, gamma=score.gamma), 1
    if config.tau_source == "sgd-heuristic":
        if not config.allow_unsafe_tau:
            raise InvalidInputError(
                "heuristic stability bounds are not coverage-safe; "
                "pass allow_unsafe_tau to use them anyway"
            )
        n_iter = config.sgd_iters if config.sgd_iters is not None else max(1, dataset.n // 10)
        return tau_sgd_heuristic(n_iter, augmented_row_norms(dataset), dataset.n), 0
    if config.tau_file is None:
        raise InvalidInputError("tau source 'file' needs a tau file path")
    return load_tau_csv(config.tau_file), 0


def resolve_anchor(config: RunConfig, dataset: TabularDataset) -> tuple[float, int]:
    """Anchor value and the number of auxiliary fits spent choosing it."""
    if config.anchor == "auto":
        return default_anchor(dataset, config.model_spec()), 1
    if config.anchor == "zero":
        return 0.0, 0
    return float(config.anchor), 0


def run_method(method: str, dataset: TabularDataset, config: RunConfig,
               score: ScoreFunction | None = None):
    """Run one method on one dataset, timing everything it needs end to end."""
    if method not in METHOD_NAMES:
        raise InvalidInputError(f"unknown method {method!r}")
    score = score or ScoreFunction.absolute_residual()
    spec = config.model_spec()
    started = time.perf_counter()

    if method == "stabcp":
        anchor, aux = resolve_anchor(config, dataset)
        tau, tau_aux = build_tau(config, dataset, score)
        report = stab_cp_interval(dataset, anchor, spec, score, tau, config.alpha)
        report.details["aux_fits"] = aux + tau_aux
    elif method == "splitcp":
        m = max(1, min(dataset.n - 1, int(round(dataset.n * config.split_fraction))))
        report = split_cp(dataset, m, spec, score, config.alpha)
    elif method == "oraclecp":
        if dataset.test_target is None:
            raise InvalidInputError("oracle method needs the true target")
        report = oracle_cp(dataset, dataset.test_target, spec, score, config.alpha)
    elif method == "rootcp":
        report = root_cp(dataset, spec, score, config.alpha, eps_r=config.eps_r)
    elif method == "gridcp":
        grid = default_candidate_grid(dataset, config.grid_size)
        report = grid_cp(dataset, spec, score, config.alpha, grid)
    else:  # interpcp
        tau, tau_aux = build_tau(config, dataset, score)
        z_min, z_max = dataset.target_range()
        anchors = np.linspace(z_min, z_max, config.n_anchors + 2)[1:-1]
        interp = build_interpolated_model(dataset, anchors, z_min, z_max, spec, base_tau=tau)
        tau_tilde = tau_interpolated(tau, score.gamma)
        grid = default_candidate_grid(dataset, config.grid_size)
        report = interpolated_cp(dataset, interp, tau_tilde, score, config.alpha, grid)
        report.details["aux_fits"] = tau_aux

    report.wall_time = time.perf_counter() - started
    report.details.setdefault("tau_provenance", None)
    return report


def synthetic_source(spec: GeneratorSpec):
    """Repetition source drawing a fresh dataset per seed, same law."""
    def draw(rep_seed: int) -> TabularDataset:
        rep_spec = GeneratorSpec(spec.kind, spec.n, spec.p, spec.noise_sd, int(rep_seed))
        return generate(rep_spec)
    return draw


def permutation_source(dataset: TabularDataset):
    """Repetition source permuting a fixed table, fresh held-out row each time."""
    if dataset.test_target is None:
        raise InvalidInputError("permutation benchmarking needs the query row's true target")
    X = np.vstack([dataset.features, dataset.test_point[None, :]])
    y = np.append(dataset.targets, dataset.test_target)

    def draw(rep_seed: int) -> TabularDataset:
        order = np.random.default_rng(int(rep_seed)).permutation(X.shape[0])
        Xp, yp = X[order], y[order]
        return dataset_from_rows(Xp, yp, Xp.shape[0] - 1, meta={"mode": "permutation"})
    return draw


def _one_repetition(rep: int, rep_seed: int, source, methods, config: RunConfig):
    dataset = source(rep_seed)
    rows = []
    for method in methods:
        try:
            report = run_method(method, dataset, config)
            rows.append({
                "rep": rep, "method": method,
                "covered": report.covered, "length": report.length,
                "fit_count": report.fit_count, "wall_time": report.wall_time,
                "lo": report.set.intervals[0][0] if report.set.intervals else None,
                "hi": report.set.intervals[-1][1] if report.set.intervals else None,
                "truncated": report.set.truncated,
                "tau_provenance": report.details.get("tau_provenance"),
                "tau_coverage_safe": report.details.get("tau_coverage_safe"),
                "error": None,
            })
        except Exception as exc:  # failures are recorded per repetition, not fatal
            rows.append({
                "rep": rep, "method": method, "covered": None, "length": None,
                "fit_count": None, "wall_time": None, "lo": None, "hi": None,
                "truncated": None, "tau_provenance": None,
                "tau_coverage_safe": None, "error": str(exc),
            })
    return rows


def run_benchmark(source, methods, repetitions: int, seed: int, config: RunConfig,
                  jobs: int = 1):
    """Full protocol: returns (report dict, per-repetition rows).

    The oracle method is always included so times can be normalized by its
    mean.  Methods backed by non-coverage-safe bounds have their coverage
    reported under a separate key so safe aggregates stay clean.
    """
    repetitions = int(repetitions)
    if repetitions < 1:
        raise InvalidInputError("repetitions must be at least 1")
    methods = list(dict.fromkeys(methods))
    if not methods:
        raise InvalidInputError("need at least one method")
    for method in methods:
        if method not in METHOD_NAMES:
            raise InvalidInputError(f"unknown method {method!r}")
    if "oraclecp" not in methods:
        methods.append("oraclecp")

    rep_seeds = np.random.default_rng(int(seed)).integers(0, 2**63 - 1, size=repetitions)
    jobs = max(1, int(jobs))
    if jobs == 1:
        nested = [_one_repetition(r, rep_seeds[r], source, methods, config)
                  for r in range(repetitions)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            nested = list(pool.map(
                lambda r: _one_repetition(r, rep_seeds[r], source, methods, config),
                range(repetitions),
            ))
    rows = [row for rep_rows in sorted(nested, key=lambda rr: rr[0]["rep"]) for row in rep_rows]

    per_method = {}
    for method in methods:
        ok = [row for row in rows if row["method"] == method and row["error"] is None]
        failures = sum(1 for row in rows if row["method"] == method and row["error"] is not None)
        if not ok:
            per_method[method] = {"failures": failures, "repetitions": 0}
            continue
        lengths = np.array([row["length"] for row in ok], dtype=float)
        times = np.array([row["wall_time"] for row in ok], dtype=float)
        fits = np.array([row["fit_count"] for row in ok], dtype=int)
        covered = np.array([bool(row["covered"]) for row in ok if row["covered"] is not None])
        coverage = float(covered.mean()) if covered.size else None
        unsafe = any(row["tau_coverage_safe"] is False for row in ok)
        entry = {
            "repetitions": len(ok),
            "failures": failures,
            "length_mean": float(lengths.mean()),
            "length_q25": float(np.percentile(lengths, 25)),
            "length_q50": float(np.percentile(lengths, 50)),
            "length_q75": float(np.percentile(lengths, 75)),
            "time_mean_s": float(times.mean()),
            "fit_count_total": int(fits.sum()),
            "fit_count_mean": float(fits.mean()),
            "tau_unsafe": unsafe,
        }
        if unsafe:
            entry["coverage"] = None
            entry["coverage_unvalidated"] = coverage
        else:
            entry["coverage"] = coverage
        per_method[method] = entry

    oracle_mean = per_method.get("oraclecp", {}).get("time_mean_s")
    for entry in per_method.values():
        if oracle_mean and entry.get("time_mean_s") is not None:
            entry["time_normalized"] = entry["time_mean_s"] / oracle_mean
        else:
            entry["time_normalized"] = None

    report = {
        "schema": "stabcp/benchmark/1",
        "repetitions": repetitions,
        "seed": int(seed),
        "alpha": config.alpha,
        "model": config.model,
        "lambda_reg": config.lambda_reg,
        "tau_source": config.tau_source,
        "methods": per_method,
    }
    return report, rows
