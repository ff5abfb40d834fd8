"""
Rich terminal output and display utilities for CLI.

Provides formatted console output for run results, fit reports and presets.
"""

from pathlib import Path
from typing import Any, Mapping

from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.syntax import Syntax
from rich.table import Table

from ..core.runner import RunManifest
from ..utils.helpers import format_duration, format_file_size

# Create console instance
console = Console()


def display_error(message: str):
    """Display error message in red."""
    console.print(f"[bold red]✗[/bold red] {message}")


def display_success(message: str):
    """Display success message in green."""
    console.print(f"[bold green]✓[/bold green] {message}")


def display_info(message: str):
    """Display info message in cyan."""
    console.print(f"[cyan]ℹ[/cyan] {message}")


def display_warning(message: str):
    """Display warning message in yellow."""
    console.print(f"[yellow]⚠[/yellow] {message}")


def display_outputs(manifest: RunManifest, out_dir: Path):
    """
    Display the files a run wrote.

    Args:
        manifest: Manifest of the run.
        out_dir: Directory the outputs were written to.
    """
    table = Table(
        title=f"Outputs of '{manifest.experiment}'",
        show_header=True,
        header_style="bold cyan",
    )
    table.add_column("#", style="dim")
    table.add_column("Filename", style="green")
    table.add_column("Size", style="yellow")

    for i, name in enumerate(manifest.outputs, 1):
        path = out_dir / name
        size = format_file_size(path.stat().st_size) if path.exists() else "N/A"
        table.add_row(str(i), name, size)

    console.print(table)
    total = manifest.timings.get("total")
    if total is not None:
        console.print(f"[dim]Directory: {out_dir}  Time: {format_duration(total)}[/dim]")
    console.print(f"[dim]Config hash: {manifest.config_hash[:16]}[/dim]")


def display_summary(summary: Mapping[str, Any], title: str = "Summary"):
    """
    Display key results of a run.

    Args:
        summary: Result name to value.
        title: Table title.
    """
    if not summary:
        return
    table = Table(title=title, show_header=False, box=None)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="white")
    for key, value in summary.items():
        if isinstance(value, float):
            text = f"{value:.6g}"
        elif isinstance(value, (list, tuple)):
            text = ", ".join(f"{v:.4g}" if isinstance(v, float) else str(v) for v in value)
        else:
            text = str(value)
        table.add_row(key, text)
    console.print(table)


def display_report(report: str, title: str = "Fit report"):
    """Display a plain-text fit report in a panel."""
    console.print(Panel(report.rstrip(), title=title, border_style="cyan"))


def display_config_text(text: str, title: str):
    """
    Display configuration text with INI syntax highlighting.

    Args:
        text: Config file contents.
        title: Panel title.
    """
    syntax = Syntax(text.rstrip(), "ini", theme="monokai", line_numbers=False)
    console.print(Panel(syntax, title=title, border_style="cyan"))


def create_progress() -> Progress:
    """
    Create a progress spinner for long-running operations.

    Returns:
        Progress instance with spinner.
    """
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True,
    )
