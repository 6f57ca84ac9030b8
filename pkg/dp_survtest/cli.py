import functools
import json as _json
import sys
from typing import Any, Dict, List, Optional

import click

from . import __version__
from .dp_core import PrivacyBudget
from .dp_tests import ScoreTestConfig
from .exceptions import DpSurvError
from .harness import ExperimentGrid, ExperimentRunner, SingleTestSpec, read_grid_file, write_summary
from .hazard_estimator import dp_nelson_aalen, read_curve_csv, write_curve_csv
from .data_model import SimulationConfig, read_dataset_csv
from .storage import ThresholdStore
from .two_sample import coordinate, two_sample_threshold
from .utility import derive_stream, load_config, setup_logging


def get_runner(db_path: Optional[str] = None, quiet: bool = False, with_store: bool = True) -> ExperimentRunner:
    """Build a runner per command; only commands that calibrate open the threshold store."""
    store = ThresholdStore(db_path or load_config().get("threshold_db")) if with_store else None
    return ExperimentRunner(store, progress=not quiet and sys.stderr.isatty())


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except DpSurvError as e:
            click.secho(f"Error: {e}", fg="red", err=True)
            click.get_current_context().exit(1)
    return wrapper


def _or_default(value, defaults: Dict[str, Any], key: str):
    return defaults[key] if value is None else value


def parse_vector(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    if not value.strip():
        return []
    try:
        return [float(v) for v in value.split(",")]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def parse_int_list(ctx, param, value: Optional[str]) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        return [int(v) for v in value.split(",")]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


def grid_options(func):
    """Flags mirroring the ExperimentGrid keys; they override values from --config."""
    options = [
        click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
                     help="Flat JSON grid file"),
        click.option("--test-kind", type=click.Choice(["binary", "score", "two_sample"])),
        click.option("--n-values", callback=parse_int_list, help="Comma-separated sample sizes"),
        click.option("--epsilon-values", callback=parse_vector, help="Comma-separated privacy budgets"),
        click.option("--delta", type=float),
        click.option("--reps", type=int),
        click.option("--master-seed", type=int),
        click.option("--d", type=int),
        click.option("--beta-star", callback=parse_vector),
        click.option("--beta0", callback=parse_vector),
        click.option("--beta1", callback=parse_vector),
        click.option("--gamma", type=float),
        click.option("--c", type=float),
        click.option("--c1", type=float),
        click.option("--c2", type=float),
        click.option("--alpha", type=float),
        click.option("--n-mc", type=int),
        click.option("--baseline-rate", type=float),
        click.option("--censor-rate", type=float),
        click.option("--threshold-mode", type=click.Choice(["formula", "mc"])),
        click.option("--score-mode", type=click.Choice(["plugin", "oracle"])),
        click.option("--threshold", type=float),
    ]
    for option in reversed(options):
        func = option(func)
    return func


GRID_FLAGS = ("test_kind", "n_values", "epsilon_values", "delta", "reps", "master_seed", "d", "beta_star",
              "beta0", "beta1", "gamma", "c", "c1", "c2", "alpha", "n_mc", "baseline_rate", "censor_rate",
              "threshold_mode", "score_mode", "threshold")


def build_grid(config_file: Optional[str], flags: Dict[str, Any]) -> ExperimentGrid:
    data: Dict[str, Any] = {}
    if config_file:
        data = read_grid_file(config_file)
    data.update({k: v for k, v in flags.items() if k in GRID_FLAGS and v is not None})
    return ExperimentGrid.from_dict(data)


@click.group()
@click.version_option(version=__version__, message="%(version)s (dp-survtest)")
@click.option("--log-level", default=None, help="Logging level (DEBUG, INFO, WARNING, ...)")
@click.option("--log-file", type=click.Path(dir_okay=False), default=None, help="Also log to this file")
def cli(log_level, log_file):
    """Differentially private hypothesis tests for survival data.

    Examples:
      dp-survtest simulate --n 500 --d 3 --beta-star 0.2,0.2,0.2 -o data.csv
      dp-survtest test data.csv --kind binary --beta0 0,0,0 --beta1 0.2,0.2,0.2 --epsilon 1
      dp-survtest power-curve --config grid.json -o rows.csv
    """
    config = load_config()
    try:
        setup_logging(log_level or config.get("log_level", "INFO"), log_file or config.get("log_file"))
    except DpSurvError as e:
        raise click.BadParameter(str(e), param_hint="--log-level")


@cli.command(help="Simulate a dataset and write it as CSV.\n\nExample: dp-survtest simulate --n 500 --d 3 --beta-star 0.2,0.2,0.2")
@click.option("--n", type=int, required=True)
@click.option("--d", type=int, default=0, show_default=True)
@click.option("--beta-star", callback=parse_vector, default="")
@click.option("--baseline-rate", type=float, default=1.0, show_default=True)
@click.option("--censor-rate", type=float, default=0.3, show_default=True)
@click.option("--gamma", type=float, default=0.0, show_default=True, help="Hazard shift of the second arm")
@click.option("--two-sample-arm", is_flag=True, help="Covariate-free arm with hazard rate*(1+gamma)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="Output file (default stdout)")
@handle_errors
def simulate(n, d, beta_star, baseline_rate, censor_rate, gamma, two_sample_arm, seed, output):
    config = SimulationConfig(n=n, d=d, beta_star=tuple(beta_star), baseline_rate=baseline_rate,
                              censor_rate=censor_rate, gamma=gamma, seed=seed)
    target = output if output else sys.stdout
    dataset = get_runner(with_store=False).simulate(config, target, two_sample_arm=two_sample_arm)
    if output:
        click.echo(f"Wrote {dataset.n} observations ({dataset.event_count} events) to {output}")


@cli.command(help="Run one private test on a dataset file.\n\nExample: dp-survtest test data.csv --kind score --beta0 0,0,0 --epsilon 2 --json")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["binary", "score", "score_oracle"]), default="binary", show_default=True)
@click.option("--beta0", callback=parse_vector, required=True)
@click.option("--beta1", callback=parse_vector, default="")
@click.option("--epsilon", type=float, required=True)
@click.option("--threshold", type=float, default=None, help="Binary threshold (default 0) or oracle tau")
@click.option("--c1", type=float, default=None)
@click.option("--c2", type=float, default=None)
@click.option("--covariate-bound", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise-off", is_flag=True, help="Disable privacy noise (output is NOT private)")
@click.option("--json", is_flag=True, help="Output in JSON format")
@handle_errors
def test(dataset, kind, beta0, beta1, epsilon, threshold, c1, c2, covariate_bound, seed, noise_off, json):
    defaults = load_config()["defaults"]
    spec = SingleTestSpec(kind=kind, beta0=beta0, beta1=beta1, threshold=threshold,
                          score_config=ScoreTestConfig(c1=_or_default(c1, defaults, "c1"),
                                                        c2=_or_default(c2, defaults, "c2")))
    stream_seed, rng = derive_stream(seed)
    row, result = get_runner(with_store=False).run_single_test(dataset, spec, PrivacyBudget(epsilon), rng, seed=stream_seed,
                                               covariate_bound=_or_default(covariate_bound, defaults, "covariate_bound"),
                                               noise_off=noise_off)
    if json:
        data = result.to_json()
        data["row"] = row.to_json()
        data["private"] = not noise_off
        click.echo(_json.dumps(data, indent=2))
        return
    if noise_off:
        click.secho("NON-PRIVATE: privacy noise disabled", fg="yellow")
    click.secho("Decision: reject H0" if result.reject else "Decision: do not reject H0",
                fg="red" if result.reject else "green")
    click.echo(f"Released statistic: {result.released:.6g}")
    click.echo(f"Threshold: {result.threshold:.6g}")
    click.echo(f"Budget: eps={result.budget.epsilon}, delta={result.budget.delta}")


@cli.command(help="Calibrate Monte Carlo thresholds for grid cells and store them.")
@grid_options
@click.option("--cell-index", type=int, default=None, help="Only this cell (default all)")
@click.option("--level", type=float, default=None, help="Type-I level (default alpha)")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--db", "db_path", type=click.Path(dir_okay=False), default=None, help="Threshold store path")
@click.option("--noise-off", is_flag=True)
@click.option("--quiet", is_flag=True)
@click.option("--json", is_flag=True, help="Output in JSON format")
@handle_errors
def calibrate(config_file, cell_index, level, workers, db_path, noise_off, quiet, json, **flags):
    grid = build_grid(config_file, flags)
    runner = get_runner(db_path, quiet)
    indices = [cell_index] if cell_index is not None else [i for i, _, _ in grid.cells()]
    entries = [runner.calibrate(grid, i, level=level, workers=workers, noise_off=noise_off) for i in indices]
    if json:
        click.echo(_json.dumps([e.to_json() for e in entries], indent=2))
        return
    for e in entries:
        click.echo(f"{e.test_kind} n={e.n} d={e.d} eps={e.epsilon} delta={e.delta} level={e.level}: "
                   f"threshold={e.threshold:.6g} ({e.n_mc} draws)")


@cli.command("power-curve", help="Run an experiment grid and write one CSV row per repetition.\n\nExample: dp-survtest power-curve --config grid.json -o rows.csv --summary summary.csv")
@grid_options
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="Row CSV (default stdout)")
@click.option("--summary", "summary_file", type=click.Path(dir_okay=False), default=None, help="Summary CSV")
@click.option("--workers", type=int, default=None)
@click.option("--db", "db_path", type=click.Path(dir_okay=False), default=None)
@click.option("--noise-off", is_flag=True, help="Disable privacy noise; output is stamped NON-PRIVATE")
@click.option("--quiet", is_flag=True)
@handle_errors
def power_curve(config_file, output, summary_file, workers, db_path, noise_off, quiet, **flags):
    grid = build_grid(config_file, flags)
    runner = get_runner(db_path, quiet)
    workers = workers or load_config().get("workers", 1)
    if output:
        with open(output, "w", newline="") as f:
            summaries = runner.run_experiment(grid, f, workers=workers, noise_off=noise_off)
    else:
        summaries = runner.run_experiment(grid, sys.stdout, workers=workers, noise_off=noise_off)
    if summary_file:
        with open(summary_file, "w", newline="") as f:
            write_summary(summaries, f)
    click.echo(f"{'n':>8} {'eps':>6} {'rate':>8} {'se':>8}", err=True)
    for s in summaries:
        if s.failed:
            click.secho(f"{s.n:8d} {s.epsilon:6g}   failed: {s.error}", fg="yellow", err=True)
        else:
            click.echo(f"{s.n:8d} {s.epsilon:6g} {s.rate:8.3f} {s.standard_error:8.3f}", err=True)


@cli.command(help="Release a private cumulative hazard curve from a covariate-free dataset.")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", type=float, required=True)
@click.option("--delta", type=float, default=None, help="Default from config (0.001)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="Curve CSV (default stdout)")
@click.option("--noise-off", is_flag=True, help="Disable privacy noise (curve is NOT private)")
@click.option("--json", is_flag=True, help="Print curve metadata as JSON")
@handle_errors
def estimate(dataset, epsilon, delta, seed, output, noise_off, json):
    data = read_dataset_csv(dataset)
    budget = PrivacyBudget(epsilon, delta if delta is not None else load_config()["defaults"]["delta"])
    _, rng = derive_stream(seed)
    curve = dp_nelson_aalen(data, budget, rng, noise_off=noise_off)
    if json:
        click.echo(_json.dumps(curve.to_json(), indent=2))
        return
    write_curve_csv(curve, output if output else sys.stdout)
    if curve.clamp_floored:
        click.secho("Warning: at-risk estimate was floored at 1/n'", fg="yellow", err=True)


@cli.command(help="Compare two exchanged curve files (offline coordinator).\n\nExample: dp-survtest compare a.csv b.csv --n1 5000 --n2 5000 --eps1 1 --eps2 1")
@click.argument("curve1", type=click.Path(exists=True, dir_okay=False))
@click.argument("curve2", type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=None, help="Fixed tau; otherwise the closed-form threshold")
@click.option("--n1", type=int, default=None)
@click.option("--n2", type=int, default=None)
@click.option("--eps1", type=float, default=None)
@click.option("--eps2", type=float, default=None)
@click.option("--delta1", type=float, default=None)
@click.option("--delta2", type=float, default=None)
@click.option("--c", type=float, default=None)
@click.option("--json", is_flag=True, help="Output in JSON format")
@handle_errors
def compare(curve1, curve2, threshold, n1, n2, eps1, eps2, delta1, delta2, c, json):
    a, b = read_curve_csv(curve1), read_curve_csv(curve2)
    if threshold is None:
        if None in (n1, n2, eps1, eps2):
            raise click.UsageError("give --threshold or all of --n1 --n2 --eps1 --eps2")
        defaults = load_config()["defaults"]
        threshold = two_sample_threshold(n1, n2, eps1, eps2, _or_default(delta1, defaults, "delta"),
                                         _or_default(delta2, defaults, "delta"), _or_default(c, defaults, "c"))
    result = coordinate(a, b, threshold)
    private = a.private and b.private
    if json:
        data = result.to_json()
        data["private"] = private
        click.echo(_json.dumps(data, indent=2))
        return
    if not private:
        click.secho("NON-PRIVATE: at least one curve was built without noise", fg="yellow")
    click.secho("Decision: reject H0" if result.reject else "Decision: do not reject H0",
                fg="red" if result.reject else "green")
    click.echo(f"Sup distance: {result.statistic:.6g}")
    click.echo(f"Threshold: {result.threshold:.6g}")


@cli.command(help="List calibrated thresholds in the store.")
@click.option("--db", "db_path", type=click.Path(dir_okay=False), default=None)
@click.option("--kind", type=click.Choice(["binary", "score", "two_sample"]), default=None)
@click.option("--json", is_flag=True, help="Output in JSON format")
@handle_errors
def thresholds(db_path, kind, json):
    store = get_runner(db_path).store
    entries = store.list_entries(kind)
    if json:
        click.echo(_json.dumps([e.to_json() for e in entries], indent=2))
        return
    click.secho(f"Stored thresholds: {store.count_entries()}", bold=True)
    click.echo(f"{'kind':12} {'n':>7} {'d':>3} {'eps':>6} {'delta':>8} {'level':>6} {'threshold':>12}")
    click.echo("-" * 60)
    for e in entries:
        click.echo(f"{e.test_kind:12} {e.n:7d} {e.d:3d} {e.epsilon:6g} {e.delta:8g} {e.level:6g} {e.threshold:12.6g}")
