"""Command-line surface: dataset generation, intervals, benchmarks, curves.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command is deterministic given --seed; JSON outputs carry a "schema"
key so downstream parsers can pin the format.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .conformal import gap_profile, split_pi
from .core import ScoreFunction, default_candidate_grid
from .data import GeneratorSpec, generate, load_csv, save_csv
from .errors import DataError, InvalidInputError, NotFittedError, NumericalError
from .harness import (
    METHOD_NAMES,
    MODEL_NAMES,
    TAU_SOURCES,
    RunConfig,
    build_tau,
    permutation_source,
    resolve_anchor,
    run_benchmark,
    run_method,
    synthetic_source,
)


@click.group()
def cli():
    """Distribution-free regression intervals from a single model fit."""


def _sidecar_path(data_path: str) -> str:
    return data_path + ".json"


def _load_dataset(data_path: str, target_column, sidecar, trust_holdout: bool = False):
    """Load a CSV; the held-out row's response is only kept as the true
    target in harness mode or when a generator sidecar vouches for it."""
    dataset = load_csv(data_path, target_column=target_column)
    sidecar_path = sidecar or _sidecar_path(data_path)
    has_sidecar = os.path.exists(sidecar_path)
    if has_sidecar:
        with open(sidecar_path, encoding="utf-8") as fh:
            dataset.meta["sidecar"] = json.load(fh)
    if not (trust_holdout or has_sidecar):
        dataset = type(dataset)(dataset.features, dataset.targets,
                                dataset.test_point, None, dataset.meta)
    return dataset


def _config_from_flags(**kw) -> RunConfig:
    return RunConfig(
        model=kw["model"], lambda_reg=kw["lambda_reg"], solver_tol=kw["solver_tol"],
        max_iter=kw["max_iter"], alpha=kw["alpha"], tau_source=kw["tau"],
        tau_file=kw.get("tau_file"), allow_unsafe_tau=kw["allow_unsafe_tau"],
        anchor=kw["anchor"], eps_r=kw["eps_r"], grid_size=kw["grid_size"],
        n_anchors=kw["n_anchors"], split_fraction=kw["split_fraction"],
    )


_model_opts = [
    click.option("--model", type=click.Choice(MODEL_NAMES), default="ridge", show_default=True),
    click.option("--lambda-reg", type=float, default=0.5, show_default=True,
                 help="Penalty weight of the squared-norm regularizer."),
    click.option("--solver-tol", type=float, default=1e-8, show_default=True),
    click.option("--max-iter", type=int, default=50_000, show_default=True),
    click.option("--alpha", type=float, default=0.1, show_default=True),
    click.option("--tau", type=click.Choice(TAU_SOURCES), default="auto", show_default=True,
                 help="Source of the stability bounds."),
    click.option("--tau-file", type=click.Path(), default=None,
                 help="CSV of user-supplied bounds (one per row, query row last)."),
    click.option("--allow-unsafe-tau", is_flag=True, default=False,
                 help="Permit heuristic bounds that carry no coverage guarantee."),
    click.option("--anchor", default="auto", show_default=True,
                 help="'auto' (fit on observed rows), 'zero', or a number."),
    click.option("--eps-r", type=float, default=1e-4, show_default=True),
    click.option("--grid-size", type=int, default=200, show_default=True),
    click.option("--n-anchors", type=int, default=3, show_default=True),
    click.option("--split-fraction", type=float, default=0.5, show_default=True),
]


def _add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@cli.command("gen")
@click.option("--kind", type=click.Choice(["linear", "friedman1"]), default="linear",
              show_default=True)
@click.option("--n", type=int, required=True, help="Observed sample size.")
@click.option("--p", type=int, required=True, help="Feature count.")
@click.option("--noise", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_gen(kind, n, p, noise, seed, out):
    """Generate a synthetic dataset CSV (query row last) plus a sidecar JSON."""
    spec_kind = "linear-gaussian" if kind == "linear" else "friedman1"
    dataset = generate(GeneratorSpec(spec_kind, n, p, noise, seed))
    save_csv(dataset, out)
    sidecar = {
        "schema": "stabcp/dataset/1",
        "kind": spec_kind, "n": n, "p": p, "noise_sd": noise, "seed": seed,
        "target_column": "y", "holdout_row": "last",
        "test_target": dataset.test_target,
    }
    with open(_sidecar_path(out), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
    click.echo(f"wrote {out} ({n + 1} data rows, query row last) and {_sidecar_path(out)}")


@cli.command("predict")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--target-column", default=None)
@click.option("--sidecar", type=click.Path(), default=None)
@click.option("--method", type=click.Choice(METHOD_NAMES), default="stabcp", show_default=True)
@click.option("--true-target", type=float, default=None,
              help="Held-out response (oracle method).")
@click.option("--out", type=click.Path(), default=None, help="Write JSON here instead of stdout.")
@_add_options(_model_opts)
def cmd_predict(data_path, target_column, sidecar, method, true_target, out, **kw):
    """Compute one prediction interval and emit it as JSON."""
    dataset = _load_dataset(data_path, target_column, sidecar)
    if true_target is not None:
        dataset = type(dataset)(dataset.features, dataset.targets, dataset.test_point,
                                test_target=float(true_target), meta=dataset.meta)
    if method == "oraclecp" and dataset.test_target is None:
        raise click.UsageError("oraclecp needs --true-target (or a dataset with a held-out target)")
    if kw["tau"] == "sgd-heuristic" and not kw["allow_unsafe_tau"]:
        raise click.UsageError("refusing heuristic stability bounds without --allow-unsafe-tau")
    config = _config_from_flags(**kw)
    report = run_method(method, dataset, config)
    payload = {
        "schema": "stabcp/predict/1",
        "method": method,
        "alpha": config.alpha,
        "shape": report.set.shape,
        "intervals": [[lo, hi] for lo, hi in report.set.intervals],
        "length": report.length,
        "fit_count": report.fit_count,
        "tau_provenance": report.details.get("tau_provenance"),
        "truncated_to_range": report.set.truncated,
        "covered": report.covered,
        "wall_time_s": report.wall_time,
    }
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@cli.command("benchmark")
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="CSV table to permute per repetition; omit to redraw synthetic data.")
@click.option("--target-column", default=None)
@click.option("--kind", type=click.Choice(["linear", "friedman1"]), default="linear",
              show_default=True)
@click.option("--n", type=int, default=300, show_default=True)
@click.option("--p", type=int, default=20, show_default=True)
@click.option("--noise", type=float, default=1.0, show_default=True)
@click.option("--methods", default="stabcp,splitcp,oraclecp,rootcp", show_default=True,
              help="Comma-separated method list.")
@click.option("--reps", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=None,
              help="Concurrent repetitions; defaults to STABCP_JOBS or 1.")
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-csv", type=click.Path(), default=None)
@_add_options(_model_opts)
def cmd_benchmark(data_path, target_column, kind, n, p, noise, methods, reps, seed,
                  jobs, out_json, out_csv, **kw):
    """Run the coverage/length/time protocol and emit the aggregate report."""
    method_list = [name.strip() for name in methods.split(",") if name.strip()]
    if not method_list:
        raise click.UsageError("--methods must name at least one method")
    for name in method_list:
        if name not in METHOD_NAMES:
            raise click.UsageError(f"unknown method {name!r}")
    if kw["tau"] == "sgd-heuristic" and not kw["allow_unsafe_tau"]:
        raise click.UsageError("refusing heuristic stability bounds without --allow-unsafe-tau")
    if jobs is None:
        jobs = int(os.environ.get("STABCP_JOBS", "1"))
    config = _config_from_flags(**kw)
    if data_path:
        dataset = _load_dataset(data_path, target_column, None, trust_holdout=True)
        source = permutation_source(dataset)
        source_echo = {"data": data_path, "mode": "permutation"}
    else:
        spec_kind = "linear-gaussian" if kind == "linear" else "friedman1"
        source = synthetic_source(GeneratorSpec(spec_kind, n, p, noise, seed))
        source_echo = {"kind": spec_kind, "n": n, "p": p, "noise_sd": noise, "mode": "redraw"}
    report, rows = run_benchmark(source, method_list, reps, seed, config, jobs=jobs)
    report["source"] = source_echo
    text = json.dumps(report, indent=2)
    if out_json:
        with open(out_json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)
    if out_csv:
        import csv as _csv
        fields = ["rep", "method", "covered", "length", "fit_count", "wall_time",
                  "lo", "hi", "truncated", "tau_provenance", "tau_coverage_safe",
                  "error"]
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)


@cli.command("curve")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--target-column", default=None)
@click.option("--sidecar", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True, help="CSV of the curves.")
@_add_options(_model_opts)
def cmd_curve(data_path, target_column, sidecar, out, **kw):
    """Sweep the candidate grid and emit conformity curves for plotting.

    Diagnostic mode: the exact curve refits at every grid point.
    """
    if kw["tau"] == "sgd-heuristic" and not kw["allow_unsafe_tau"]:
        raise click.UsageError("refusing heuristic stability bounds without --allow-unsafe-tau")
    dataset = _load_dataset(data_path, target_column, sidecar)
    config = _config_from_flags(**kw)
    score = ScoreFunction.absolute_residual()
    spec = config.model_spec()
    anchor, _ = resolve_anchor(config, dataset)
    tau, _ = build_tau(config, dataset, score)
    grid = default_candidate_grid(dataset, config.grid_size)
    rows = gap_profile(dataset, anchor, spec, score, tau, grid)
    m = max(1, min(dataset.n - 1, int(round(dataset.n * config.split_fraction))))
    pi_split_fn = split_pi(dataset, m, spec, score)

    import csv as _csv
    crossings = {"pi_lo": [], "pi_up": [], "pi_exact": [], "pi_split": []}
    previous = None
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["z", "pi_lo", "pi_up", "pi_exact", "pi_split"])
        for z, lo, up, exact in rows:
            ps = float(pi_split_fn(z))
            writer.writerow([repr(z), repr(lo), repr(up), repr(exact), repr(ps)])
            current = {"pi_lo": lo, "pi_up": up, "pi_exact": exact, "pi_split": ps}
            if previous is not None:
                for name, value in current.items():
                    was = previous[name] >= config.alpha
                    now = value >= config.alpha
                    if was != now:
                        crossings[name].append(z)
            previous = current
    click.echo(json.dumps({
        "schema": "stabcp/curve/1",
        "alpha": config.alpha,
        "anchor": anchor,
        "grid_points": len(rows),
        "alpha_crossings": crossings,
        "out": out,
    }, indent=2))


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        return 1
    except (DataError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except InvalidInputError as exc:
        click.echo(f"invalid input: {exc}", err=True)
        return 2
    except (NumericalError, NotFittedError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except click.ClickException as exc:
        exc.show()
        return 1


if __name__ == "__main__":
    sys.exit(main())
