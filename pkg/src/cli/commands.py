"""
CLI commands for the ion-trap simulator.

One command per experiment, each reading a run configuration file:

    iontrap-sim <experiment> --config <file> [--out <dir>] [--seed <n>]

Exit codes: 0 success, 2 config error, 3 model error, 4 fit non-convergence.
"""

from pathlib import Path
from typing import Optional

import typer
from pydantic import ValidationError

from .. import __version__
from ..core.fit_models import list_fit_models
from ..core.runconfig import list_presets, load_config, load_preset
from ..core.runner import ExperimentRunner, with_overrides
from ..sim.errors import ConfigError, IonTrapError, MaxIterationsExceeded
from ..utils.config import get_settings
from ..utils.constants import Experiment
from ..utils.helpers import setup_logging
from .display import (
    console,
    create_progress,
    display_config_text,
    display_error,
    display_info,
    display_outputs,
    display_report,
    display_success,
    display_summary,
    display_warning,
)

# Create Typer app
app = typer.Typer(
    name="iontrap-sim",
    help="Single-ion 88Sr+ Paul trap simulator - run experiments and fit their data",
    no_args_is_help=True,
    add_completion=True,
)

EXPERIMENT_HELP = {
    Experiment.SPECTRUM: "S1/2-P1/2 fluorescence spectrum with dark resonances.",
    Experiment.MICROMOTION: "Micromotion compensation map over voltage and drive frequency.",
    Experiment.RABI_THERMAL: "Thermal carrier Rabi flopping on the 674 nm line.",
    Experiment.SIDEBANDS: "Red and blue axial sideband spectrum and resonant flopping.",
    Experiment.COOLING: "Continuous plus pulsed sideband cooling from the Doppler limit.",
    Experiment.HEATING: "Sideband excitation versus heating delay.",
    Experiment.QUBIT_RABI: "Zeeman qubit Rabi flopping with decay.",
    Experiment.RAMSEY: "Monte Carlo Ramsey fringes under magnetic field noise.",
    Experiment.FIT: "Fit a named model to a data file and write a report.",
}


def _run_experiment(
    experiment: Experiment,
    config: Path,
    out: Optional[Path],
    seed: Optional[int],
    debug: bool,
):
    """Load, run and report one experiment; maps errors to exit codes."""
    exit_code = 0
    try:
        settings = get_settings()
        setup_logging(
            "DEBUG" if debug else settings.log_level,
            settings.log_file,
            use_rich=settings.use_colors,
        )
        run_config = with_overrides(load_config(config, experiment.value), out, seed)
        runner = ExperimentRunner(settings)
        out_dir = runner.output_dir(run_config)

        display_info(f"Running '{experiment.value}' from {config}")
        if settings.show_progress:
            with create_progress() as progress:
                task = progress.add_task(f"[cyan]Simulating {experiment.value}...", total=None)
                manifest = runner.run(run_config)
                progress.update(task, completed=True)
        else:
            manifest = runner.run(run_config)

        display_outputs(manifest, out_dir)
        display_summary(manifest.summary)
        if experiment == Experiment.FIT:
            display_report((out_dir / "fit_report.txt").read_text(encoding="utf-8"))
        display_success(f"Wrote {len(manifest.outputs)} file(s) to {out_dir}")

    except MaxIterationsExceeded as e:
        if e.result is not None:
            display_warning(f"Best parameters so far: {e.result.as_dict()}")
        display_error(f"{experiment.value}: {e}")
        exit_code = e.exit_code
    except IonTrapError as e:
        display_error(f"{experiment.value}: {e}")
        if debug:
            console.print_exception()
        exit_code = e.exit_code
    except ValidationError as e:
        display_error(f"{experiment.value}: invalid settings or parameters: {e}")
        exit_code = ConfigError.exit_code
    except Exception as e:
        if debug:
            console.print_exception()
        else:
            display_error(f"{experiment.value}: unexpected error: {e}")
            display_info("Use --debug for more details")
        exit_code = 1

    if exit_code:
        raise typer.Exit(exit_code)


def _register(experiment: Experiment):
    """Add the command for one experiment."""

    def command(
        config: Path = typer.Option(
            ...,
            "--config",
            "-c",
            help="Run configuration file",
        ),
        out: Optional[Path] = typer.Option(
            None,
            "--out",
            "-o",
            help="Output directory (overrides [run] output_dir)",
        ),
        seed: Optional[int] = typer.Option(
            None,
            "--seed",
            "-s",
            min=0,
            help="Monte Carlo seed (overrides [run] seed)",
        ),
        debug: bool = typer.Option(
            False,
            "--debug",
            help="Enable debug logging and tracebacks",
        ),
    ):
        _run_experiment(experiment, config, out, seed, debug)

    command.__doc__ = EXPERIMENT_HELP[experiment]
    app.command(name=experiment.value, help=EXPERIMENT_HELP[experiment])(command)


for _experiment in Experiment:
    _register(_experiment)


@app.command()
def presets(
    show: Optional[str] = typer.Option(
        None,
        "--show",
        "-s",
        help="Print the named preset",
    ),
):
    """
    List the shipped presets or print one.

    Examples:
        iontrap-sim presets
        iontrap-sim presets --show paper_defaults
    """
    from rich.table import Table

    if show:
        try:
            text = load_preset(show)
        except ConfigError as e:
            display_error(str(e))
            raise typer.Exit(e.exit_code)
        display_config_text(text, title=f"Preset: {show}")
        return

    table = Table(title="Available Presets", show_header=True, header_style="bold cyan")
    table.add_column("Preset", style="green")
    table.add_column("Description", style="white")
    for name in list_presets():
        first = load_preset(name).lstrip().splitlines()[0]
        table.add_row(name, first.lstrip("# ") if first.startswith("#") else "")
    console.print(table)
    console.print(f"\n[dim]Fit models: {', '.join(list_fit_models())}[/dim]")


@app.command()
def config(
    show: bool = typer.Option(
        False,
        "--show",
        "-s",
        help="Show current configuration",
    ),
    check: bool = typer.Option(
        False,
        "--check",
        "-c",
        help="Check configuration validity",
    ),
):
    """
    Show process settings (IONTRAP_* environment variables and .env).

    Examples:
        iontrap-sim config --show
        iontrap-sim config --check
    """
    from rich.table import Table

    from ..utils.constants import get_constants

    try:
        settings = get_settings()

        if check:
            constants = get_constants()
            display_success("Configuration is valid")
            display_info(f"Atomic constants version {constants.version}")

        if show or not check:
            table = Table(
                title="Current Configuration",
                show_header=True,
                header_style="bold cyan",
            )
            table.add_column("Setting", style="yellow")
            table.add_column("Value", style="white")
            for key, value in settings.safe_debug_dict().items():
                table.add_row(key, value)
            console.print(table)

    except (ValidationError, IonTrapError) as e:
        display_error(f"Configuration error: {e}")
        display_info("Please check your .env file or IONTRAP_* environment variables")
        raise typer.Exit(2)


@app.command()
def version():
    """Show version information."""
    from rich.panel import Panel

    version_info = f"""
[bold cyan]iontrap-sim[/bold cyan]
Version: {__version__}
Simulator and fitting toolkit for a single 88Sr+ ion in a miniature linear Paul trap

[dim]Experiments: {', '.join(e.value for e in Experiment)}[/dim]
    """

    console.print(Panel(version_info.strip(), title="About", border_style="cyan"))


def main():
    """Main CLI entry point."""
    app()


if __name__ == "__main__":
    main()
