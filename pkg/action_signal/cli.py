"""Command-line interface for action-signal."""

import functools
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click

from action_signal import __version__
from action_signal.config.loader import ConfigManager
from action_signal.config.schema import RunConfig
from action_signal.core.exceptions import ConfigurationError, ResultsNotFoundError
from action_signal.core.pipeline import Pipeline, PipelineSummary, StageResult
from action_signal.utils.logger import setup_logger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE_FAILURE = 2


def _split(value: Optional[str]) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def _int_list(value: Optional[str], option: str) -> List[int]:
    try:
        return [int(v) for v in _split(value)]
    except ValueError:
        raise click.BadParameter(
            f"expected comma-separated integers, got {value!r}", param_hint=option
        )


def build_overrides(
    seed: Optional[int],
    workers: Optional[int],
    out: Optional[str],
    metrics: Optional[str],
    horizons: Optional[str],
    schemes: Optional[str],
    seeds: Optional[str],
) -> Dict[str, Any]:
    """Nested configuration overrides from command-line flags."""
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["simulator"] = {"seed": seed}
    if workers is not None:
        overrides["workers"] = workers
    if out:
        overrides["output_dir"] = out
    grid: Dict[str, Any] = {}
    if metrics:
        grid["metrics"] = _split(metrics)
    if horizons:
        grid["horizons"] = _int_list(horizons, "--horizons")
    if schemes:
        grid["schemes"] = _split(schemes)
    if seeds:
        grid["seeds"] = _int_list(seeds, "--seeds")
    if grid:
        overrides["grid"] = grid
    return overrides


def run_options(func):
    """Configuration and grid-filter flags shared by every stage command."""

    @click.option(
        "-c",
        "--config",
        "config_path",
        type=click.Path(exists=True),
        help="Run config file or directory",
    )
    @click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), help="Simulator seed")
    @click.option(
        "--workers",
        type=click.IntRange(min=1),
        envvar="ASL_WORKERS",
        help="Worker processes (env ASL_WORKERS)",
    )
    @click.option(
        "--out", type=click.Path(file_okay=False), help="Output directory for run directories"
    )
    @click.option("--metrics", help="Comma-separated severity metrics, e.g. SOFA,SIRS")
    @click.option("--horizons", help="Comma-separated horizons in hours, e.g. 6,12")
    @click.option("--schemes", help="Comma-separated training schemes")
    @click.option("--seeds", help="Comma-separated grid training seeds")
    @functools.wraps(func)
    def wrapper(
        *args, config_path, seed, workers, out, metrics, horizons, schemes, seeds, **kwargs
    ):
        ctx = click.get_current_context()
        overrides = build_overrides(seed, workers, out, metrics, horizons, schemes, seeds)
        manager = ConfigManager(config_path or ctx.obj.get("config_path"), overrides)
        try:
            config = manager.load()
        except ConfigurationError as e:
            raise click.UsageError(f"invalid configuration: {e}", ctx=ctx)
        return func(*args, config=config, **kwargs)

    return wrapper


def print_stage(result: StageResult) -> None:
    click.echo(f"\n{result.stage}:")
    click.echo(f"  Status: {'SUCCESS' if result.success else 'FAILED'}")
    click.echo(f"  Files: {len(result.files)}")
    for key, value in sorted(result.details.items()):
        if isinstance(value, (str, int, float)):
            click.echo(f"  {key}: {value}")
    for item in result.failed_items:
        click.echo(f"  Failed: {item}")
    if result.error:
        click.echo(f"  Error: {result.error}")


def print_summary(summary: PipelineSummary) -> int:
    """Print the stage summary and return the exit code."""
    click.echo("\n" + "=" * 60)
    click.echo("Run Summary")
    click.echo("=" * 60)
    click.echo(f"Run directory: {summary.run_dir}")
    click.echo(f"Stages: {len(summary.results)}")
    click.echo(f"Duration: {summary.duration:.2f}s")
    for result in summary.results:
        print_stage(result)
    return EXIT_OK if summary.success else EXIT_STAGE_FAILURE


def run_stages(config: RunConfig, stages: Sequence[str], **kwargs: Any) -> int:
    pipeline = Pipeline(config)
    try:
        summary = pipeline.run(stages, **kwargs)
    except ResultsNotFoundError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_STAGE_FAILURE
    return print_summary(summary)


@click.group()
@click.version_option(version=__version__)
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True),
    help="Path to configuration file or directory",
)
@click.option(
    "-v",
    "--verbose",
    is_flag=True,
    help="Enable verbose output",
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]),
    default="INFO",
    help="Log level",
)
@click.pass_context
def main(ctx, config_path: Optional[str], verbose: bool, log_level: str):
    """Action-informativeness diagnostics for offline treatment data.

    Simulates a sepsis cohort, trains dynamics models with and without
    treatment inputs, and reports whether the recorded actions carry
    predictive signal.
    """
    if verbose:
        log_level = "DEBUG"
    setup_logger(level=log_level)

    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@main.command()
@click.pass_context
def init(ctx):
    """Write a starter configuration directory.

    Creates configs/run.yaml with every default if no config files exist yet.
    """
    config_path = ctx.obj.get("config_path")
    config_dir = Path(config_path) if config_path else Path.cwd() / "configs"

    if config_dir.exists() and any(config_dir.glob("*.yaml")):
        click.echo(f"Configuration directory already exists with config files: {config_dir}")
        return EXIT_OK

    config_dir.mkdir(parents=True, exist_ok=True)
    target = config_dir / "run.yaml"
    ConfigManager().save(target, RunConfig())
    click.echo(f"Created configuration file: {target}")

    click.echo("\nNext steps:")
    click.echo("1. Adjust simulator and grid settings in configs/run.yaml")
    click.echo("2. Run everything: action-signal full-run -c configs")
    click.echo("3. Read <out>/<hash>/report/verdict.json")
    return EXIT_OK


@main.command()
@click.option("--events", is_flag=True, help="Also export the sub-hourly event stream")
@run_options
def simulate(config: RunConfig, events: bool):
    """Generate the synthetic cohort CSV."""
    return run_stages(config, ["simulate"], events=events)


@main.command()
@click.option(
    "-i",
    "--input",
    "input_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Cohort or event-stream CSV (defaults to the simulated cohort)",
)
@run_options
def preprocess(config: RunConfig, input_path: Optional[str]):
    """Split, impute, normalize and assemble model datasets."""
    pipeline = Pipeline(config)
    result = pipeline.run_stage("preprocess", input_path=input_path)
    print_stage(result)
    return EXIT_OK if result.success else EXIT_STAGE_FAILURE


@main.command("train-dynamics")
@run_options
def train_dynamics(config: RunConfig):
    """Train and evaluate the dynamics grid."""
    return run_stages(config, ["train-dynamics"])


@main.command("train-bc")
@run_options
def train_bc(config: RunConfig):
    """Train and evaluate the behavior-cloning replicates."""
    return run_stages(config, ["train-bc"])


@main.command()
@run_options
def report(config: RunConfig):
    """Emit tables, verdict and histograms from stored results."""
    return run_stages(config, ["report"])


@main.command("full-run")
@click.option("--events", is_flag=True, help="Also export the sub-hourly event stream")
@run_options
def full_run(config: RunConfig, events: bool):
    """Run every configured stage in order."""
    return run_stages(config, config.stages, events=events)


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code.

    Exit codes: 0 success, 1 usage error, 2 stage failure.
    """
    try:
        code = main.main(
            args=list(argv) if argv is not None else None,
            prog_name="action-signal",
            standalone_mode=False,
        )
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_STAGE_FAILURE
    return int(code or EXIT_OK)


def run() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    run()
