"""Command-line harness: generate data, fit dictionaries, evaluate the
exact marginal cost, sweep cost grids, and render figures.

Every command writes a JSON run manifest next to its primary output with
all parameters fully resolved, so a run can be reproduced exactly from
the manifest alone. Exit codes: 0 success, 2 usage, 3 input/output,
4 domain, 5 enumeration budget.
"""

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, plotting
from .dataio import (
    generate_dataset,
    load_docword,
    load_model,
    preset_w1,
    preset_w2,
    save_docword,
    save_model,
    SyntheticSpec,
)
from .errors import (
    BudgetExceededError,
    DataFormatError,
    DegenerateSupportError,
    NumericalError,
    ParameterError,
    ShapeError,
)
from .inference import McemConfig, run_mcem, write_trace_csv
from .marginal import (
    AdmissibleSetSpec,
    DEFAULT_TERM_BUDGET,
    marginal_nll,
    marginal_nll_decomposed,
)
from .model import GapModel

EXIT_IO = 3
EXIT_DOMAIN = 4
EXIT_BUDGET = 5


def _translated(fn):
    """Map library errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BudgetExceededError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_BUDGET)
        except (DataFormatError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (ParameterError, ShapeError, DegenerateSupportError, NumericalError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DOMAIN)

    return wrapper


def _write_manifest(primary_output, subcommand, parameters, inputs, outputs):
    path = f"{primary_output}.manifest.json"
    doc = {
        "subcommand": subcommand,
        "parameters": parameters,
        "inputs": inputs,
        "outputs": outputs,
        "library_version": __version__,
    }
    with open(path, "w") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


@click.group()
@click.version_option(version=__version__, prog_name="gap")
def main():
    """Gamma-Poisson matrix factorization toolkit."""


@main.command()
@click.option("--preset", type=click.Choice(["w1", "w2"]), help="Bundled ground-truth dictionary.")
@click.option("--w", "w_path", type=click.Path(), help="Text file with the ground-truth dictionary (rows by columns).")
@click.option("--n", "n_docs", type=int, required=True, help="Number of documents to draw.")
@click.option("--alpha", type=float, default=1.0, show_default=True, help="Gamma shape, shared by all components.")
@click.option("--beta", type=float, default=1.0, show_default=True, help="Gamma rate, shared by all components.")
@click.option("--seed", type=int, required=True, help="Seed for the draw.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Output docword file.")
@_translated
def generate(preset, w_path, n_docs, alpha, beta, seed, out_path):
    """Draw a synthetic dataset from the generative model."""
    if (preset is None) == (w_path is None):
        raise click.UsageError("exactly one of --preset and --w is required")
    if n_docs < 1:
        raise click.UsageError("--n must be at least 1")
    if preset is not None:
        w_true = preset_w1() if preset == "w1" else preset_w2()
    else:
        w_true = np.loadtxt(w_path, ndmin=2)
    k = w_true.shape[1]
    spec = SyntheticSpec(
        w_true=w_true,
        alpha=np.full(k, alpha),
        beta=np.full(k, beta),
        n_docs=n_docs,
        seed=seed,
    )
    counts = generate_dataset(spec)
    save_docword(counts, out_path)
    _write_manifest(
        out_path,
        "generate",
        {
            "preset": preset,
            "w": w_path,
            "n": n_docs,
            "alpha": alpha,
            "beta": beta,
            "seed": seed,
        },
        {},
        {"dataset": str(out_path)},
    )
    click.echo(
        f"wrote {counts.n_rows} x {counts.n_docs} dataset "
        f"({counts.nnz} stored entries) to {out_path}"
    )


@main.command()
@click.option("--data", "data_path", type=click.Path(), required=True, help="Input docword file.")
@click.option("--k", "n_components", type=int, required=True, help="Number of dictionary columns to fit.")
@click.option("--algorithm", type=click.Choice(["c", "h", "ch"]), required=True, help="M-step variant.")
@click.option("--iters", type=int, default=500, show_default=True, help="EM iterations.")
@click.option("--gibbs", type=int, default=300, show_default=True, help="Gibbs sweeps per E-step.")
@click.option("--burn-in", type=int, default=None, help="Discarded sweeps per E-step  [default: gibbs/2].")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--trace-every", type=int, default=1, show_default=True, help="Record a trace row every this many iterations.")
@click.option("--eval-ml-budget", type=int, default=0, show_default=True, help="Per-record exact-cost term budget; 0 disables evaluation.")
@click.option("--w-floor", type=float, default=0.0, show_default=True, help="Lower clamp for the multiplicative update.")
@click.option("--threads", type=int, default=None, help="Worker threads  [default: all cores].")
@click.option("--plot/--no-plot", default=False, show_default=True, help="Also render the column-norm figure next to the trace.")
@click.option("--out-model", type=click.Path(), required=True)
@click.option("--out-trace", type=click.Path(), required=True)
@_translated
def fit(
    data_path,
    n_components,
    algorithm,
    iters,
    gibbs,
    burn_in,
    alpha,
    beta,
    seed,
    trace_every,
    eval_ml_budget,
    w_floor,
    threads,
    plot,
    out_model,
    out_trace,
):
    """Estimate a dictionary by Monte Carlo EM."""
    counts = load_docword(data_path)
    threads = threads if threads is not None else (os.cpu_count() or 1)
    config = McemConfig(
        n_iters=iters,
        algorithm=algorithm,
        seed=seed,
        n_gibbs=gibbs,
        burn_in=burn_in,
        w_floor=w_floor,
        trace_every=trace_every,
    )
    model, records = run_mcem(
        counts,
        n_components,
        np.full(n_components, alpha),
        np.full(n_components, beta),
        config,
        eval_ml_budget=eval_ml_budget,
        threads=threads,
    )
    save_model(model, out_model)
    write_trace_csv(records, out_trace)
    figure = None
    if plot:
        figure = str(Path(out_trace).with_suffix(".png"))
        plotting.plot_trace_norms([out_trace], figure, labels=[f"mcem-{algorithm}"])
    outputs = {"model": str(out_model), "trace": str(out_trace)}
    if figure:
        outputs["figure"] = figure
    _write_manifest(
        out_model,
        "fit",
        {
            "k": n_components,
            "algorithm": algorithm,
            "iters": iters,
            "gibbs": gibbs,
            "burn_in": config.burn_in,
            "alpha": alpha,
            "beta": beta,
            "seed": seed,
            "trace_every": trace_every,
            "eval_ml_budget": eval_ml_budget,
            "w_floor": w_floor,
            "threads": threads,
        },
        {"data": str(data_path)},
        outputs,
    )
    norms = ", ".join(f"{x:.4g}" for x in model.column_norms())
    click.echo(f"fit mcem-{algorithm}: column norms [{norms}]")


@main.command("eval-ml")
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--budget", type=int, default=DEFAULT_TERM_BUDGET, show_default=True, help="Enumeration term budget.")
@click.option("--decompose", is_flag=True, help="Also print the interaction / regularizer / constant split.")
@click.option("--threads", type=int, default=None, help="Worker threads  [default: all cores].")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Optional JSON record.")
@_translated
def eval_ml(data_path, model_path, budget, decompose, threads, out_path):
    """Evaluate the exact marginal cost of a model on a dataset."""
    counts = load_docword(data_path)
    model = load_model(model_path)
    threads = threads if threads is not None else (os.cpu_count() or 1)
    spec = AdmissibleSetSpec.describe(counts, model.n_components)
    value = marginal_nll(model, counts, budget=budget, threads=threads)
    record = {
        "c_ml": value,
        "n_terms": spec.n_terms,
        "cardinality": str(spec.cardinality),
    }
    click.echo(f"c_ml {value!r}")
    if decompose:
        parts = marginal_nll_decomposed(model, counts, budget=budget, threads=threads)
        record["decomposition"] = {
            "interaction": parts.interaction,
            "regularizer": parts.regularizer,
            "constant": parts.constant,
        }
        click.echo(f"interaction {parts.interaction!r}")
        click.echo(f"regularizer {parts.regularizer!r}")
        click.echo(f"constant {parts.constant!r}")
    if out_path:
        with open(out_path, "w") as handle:
            json.dump(record, handle, indent=2, sort_keys=True)
            handle.write("\n")
        _write_manifest(
            out_path,
            "eval-ml",
            {"budget": budget, "decompose": decompose, "threads": threads},
            {"data": str(data_path), "model": str(model_path)},
            {"record": str(out_path)},
        )


@main.command("ml-grid")
@click.option("--data", "data_path", type=click.Path(), required=True, help="Single-row docword file.")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--w-min", type=float, default=0.0, show_default=True)
@click.option("--w-max", type=float, required=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--budget", type=int, default=DEFAULT_TERM_BUDGET, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads  [default: all cores].")
@click.option("--plot/--no-plot", default=False, show_default=True, help="Also render the contour figure next to the CSV.")
@click.option("--trace", "trace_path", type=click.Path(), default=None, help="Trace CSV to overlay on the contour figure.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Output CSV of w1,w2,c_ml rows.")
@_translated
def ml_grid(data_path, alpha, beta, w_min, w_max, steps, budget, threads, plot, trace_path, out_path):
    """Sweep the exact marginal cost over a two-column dictionary grid."""
    counts = load_docword(data_path)
    if counts.n_rows != 1:
        raise click.UsageError(
            f"grid sweeps support single-row data only, got {counts.n_rows} rows"
        )
    if steps < 1:
        raise click.UsageError("--steps must be at least 1")
    if not w_min >= 0 or not w_max >= w_min:
        raise click.UsageError("need 0 <= w-min <= w-max")
    threads = threads if threads is not None else (os.cpu_count() or 1)
    spec = AdmissibleSetSpec.describe(counts, 2)
    if spec.n_terms > budget:
        raise BudgetExceededError(spec.cardinality, spec.n_terms, budget)
    grid = np.linspace(w_min, w_max, steps) if steps > 1 else np.array([w_min])
    hyper_a = np.array([alpha, alpha])
    hyper_b = np.array([beta, beta])
    with open(out_path, "w") as handle:
        handle.write("w1,w2,c_ml\n")
        for w1 in grid:
            for w2 in grid:
                model = GapModel(np.array([[w1, w2]]), hyper_a, hyper_b)
                value = marginal_nll(model, counts, budget=None, threads=threads)
                handle.write(f"{w1!r},{w2!r},{value!r}\n")
    figure = None
    if plot:
        figure = str(Path(out_path).with_suffix(".png"))
        plotting.plot_ml_grid(out_path, figure, trace_path=trace_path)
    outputs = {"grid": str(out_path)}
    if figure:
        outputs["figure"] = figure
    _write_manifest(
        out_path,
        "ml-grid",
        {
            "alpha": alpha,
            "beta": beta,
            "w_min": w_min,
            "w_max": w_max,
            "steps": steps,
            "budget": budget,
            "threads": threads,
        },
        {"data": str(data_path), "trace": trace_path},
        outputs,
    )
    click.echo(f"wrote {grid.size * grid.size} grid rows to {out_path}")


@main.group()
def plot():
    """Render figures from previously written CSV outputs."""


@plot.command("trace")
@click.option("--trace", "trace_paths", type=click.Path(), multiple=True, required=True)
@click.option("--label", "labels", multiple=True, help="One label per trace, in order.")
@click.option("--metric", type=click.Choice(["norms", "cost"]), default="norms", show_default=True)
@click.option("--x", "x_axis", type=click.Choice(["cpu", "iter"]), default="cpu", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_translated
def plot_trace(trace_paths, labels, metric, x_axis, out_path):
    """Plot column norms or marginal cost from one or more trace CSVs."""
    labels = list(labels) if labels else None
    if metric == "norms":
        plotting.plot_trace_norms(list(trace_paths), out_path, labels=labels, x_axis=x_axis)
    else:
        plotting.plot_trace_cost(list(trace_paths), out_path, labels=labels, x_axis=x_axis)
    _write_manifest(
        out_path,
        "plot-trace",
        {"metric": metric, "x": x_axis, "labels": labels},
        {"traces": [str(p) for p in trace_paths]},
        {"figure": str(out_path)},
    )
    click.echo(f"wrote {out_path}")


@plot.command("grid")
@click.option("--grid", "grid_path", type=click.Path(), required=True)
@click.option("--trace", "trace_path", type=click.Path(), default=None, help="Optional two-column trace overlay.")
@click.option("--levels", type=int, default=30, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_translated
def plot_grid(grid_path, trace_path, levels, out_path):
    """Contour plot of a marginal-cost grid CSV."""
    plotting.plot_ml_grid(grid_path, out_path, trace_path=trace_path, levels=levels)
    _write_manifest(
        out_path,
        "plot-grid",
        {"levels": levels},
        {"grid": str(grid_path), "trace": trace_path},
        {"figure": str(out_path)},
    )
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
