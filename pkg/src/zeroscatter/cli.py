"""
Command-line interface for zeroscatter.
"""

import json
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .core.config import RunConfig
from .core.errors import InvalidArgumentError, NoConvergenceError, ZeroScatterError
from .core.logging_config import RUN_LOG, get_logger, setup_logging
from .core.version import get_version
from .data.field_dump import read_field, write_field
from .data.heatmap import QUANTITIES, write_heatmap
from .data.tables import cycles_frame, write_report, write_table
from .dynamics import SINK, SOURCE, find_cycles, scattering_relation
from .fields import SpectralField, TorusGrid, high_frequency_fraction
from .psido import assemble, eigencheck, limiting_absorption
from .scattering import ScatteringProblem, conjugate, fio_check, scattering_matrix
from .symbols import SymbolDescriptor

app = typer.Typer(help="zeroscatter - scattering of 0th order operators on the 2-torus")
console = Console()
logger = get_logger(__name__)


def _floats(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _symbol(text: Optional[str]):
    if text is None:
        return None
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"--symbol must be a JSON object: {exc}") from exc
    if not isinstance(value, dict):
        raise InvalidArgumentError("--symbol must be a JSON object")
    return value


def _load_config(config: Optional[Path], **overrides) -> RunConfig:
    """Config file (or defaults) with every given flag applied on top."""
    base = RunConfig.from_json(config) if config else RunConfig()
    overrides["symbol"] = _symbol(overrides.get("symbol"))
    overrides["epsilons"] = _floats(overrides.get("epsilons"))
    overrides["deltas"] = _floats(overrides.get("deltas"))
    return base.with_overrides(**overrides)


def _start(verbose: bool, config: RunConfig) -> Path:
    output = Path(config.output_dir)
    output.mkdir(parents=True, exist_ok=True)
    setup_logging(
        level="DEBUG" if verbose else "INFO",
        log_file=output / RUN_LOG,
        log_to_console=verbose,
    )
    config.to_json(output / "config.json")
    console.print(f"[dim]config {config.config_hash()[:12]}, output {output}[/dim]")
    return output


@contextmanager
def _reporting_errors():
    """Turn library errors into a red message and the matching exit code."""
    try:
        yield
    except ZeroScatterError as exc:
        column = getattr(exc, "column", None)
        where = f" (column {column})" if column else ""
        console.print(f"[red]{type(exc).__name__}{where}: {exc}[/red]")
        logger.debug("Run aborted", exc_info=True)
        raise typer.Exit(code=exc.exit_code)


ConfigOption = typer.Option(None, "--config", "-c", help="Run configuration (JSON)")
SymbolOption = typer.Option(None, "--symbol", help='Symbol as JSON, e.g. \'{"family": "tao", "k": 5}\'')
OmegaOption = typer.Option(None, "--omega", help="Spectral parameter")
N1Option = typer.Option(None, "--n1", help="Grid points along x1")
N2Option = typer.Option(None, "--n2", help="Grid points along x2")
KsOption = typer.Option(None, "--ks", help="Section modes |k| <= Ks")
EpsilonsOption = typer.Option(None, "--epsilons", help="Comma-separated absorption ladder")
DeltasOption = typer.Option(None, "--deltas", help="Comma-separated symbol-reading ladder (read at frequencies ~ 1/delta)")
SeedsOption = typer.Option(None, "--seeds", help="Seed lattice size for the cycle search")
WorkersOption = typer.Option(None, "--workers", "-w", help="Worker threads")
OutputOption = typer.Option(None, "--output-dir", "-o", help="Output directory")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Enable verbose logging")


@app.command()
def cycles(
    config: Optional[Path] = ConfigOption,
    symbol: Optional[str] = SymbolOption,
    omega: Optional[float] = OmegaOption,
    seeds: Optional[int] = SeedsOption,
    output_dir: Optional[str] = OutputOption,
    verbose: bool = VerboseOption,
):
    """Find limit cycles and tabulate the scattering relation."""
    with _reporting_errors():
        run = _load_config(config, symbol=symbol, omega=omega, seeds=seeds, output_dir=output_dir)
        output = _start(verbose, run)
        spec = SymbolDescriptor.from_config(run.symbol).principal()
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console,
        ) as progress:
            task = progress.add_task("Searching for limit cycles...", total=None)
            found = find_cycles(spec, run.omega, seeds=run.seeds)
            progress.update(task, description=f"Found {len(found)} cycles")
            sources = [c for c in found if c.kind == SOURCE]
            sinks = [c for c in found if c.kind == SINK]
            task = progress.add_task("Following source sections...", total=None)
            relation = scattering_relation(spec, run.omega, sources, sinks, offset=run.offset)
            progress.update(task, description=f"Traced {len(relation.rows)} branches")

        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Cycle", style="cyan")
        table.add_column("x1", style="white")
        table.add_column("theta", style="white")
        table.add_column("Period", style="green")
        table.add_column("Lambda", style="yellow")
        for cycle in found:
            table.add_row(
                cycle.id,
                f"{cycle.anchor.x1:.6f}",
                f"{cycle.anchor.theta:.6f}",
                f"{cycle.period:.6f}",
                f"{cycle.lam:.8f}",
            )
        console.print(table)

        write_table(output / "cycles.csv", cycles_frame(found), run)
        write_table(output / "relation.csv", relation.to_frame(), run)
        console.print(f"[bold green]{len(sinks)} sinks, {len(sources)} sources[/bold green]")


@app.command()
def resolvent(
    config: Optional[Path] = ConfigOption,
    mode: Optional[str] = typer.Option(None, "--mode", help="Right-hand side e^{i(k1 x1 + k2 x2)}, given as k1,k2"),
    field_path: Optional[Path] = typer.Option(None, "--field", help="Right-hand side as a field dump"),
    outgoing: bool = typer.Option(False, "--outgoing", help="Use A - omega + i0 instead of A - omega - i0"),
    symbol: Optional[str] = SymbolOption,
    omega: Optional[float] = OmegaOption,
    n1: Optional[int] = N1Option,
    n2: Optional[int] = N2Option,
    epsilons: Optional[str] = EpsilonsOption,
    output_dir: Optional[str] = OutputOption,
    verbose: bool = VerboseOption,
):
    """Run the limiting absorption ladder for one right-hand side."""
    with _reporting_errors():
        run = _load_config(
            config, symbol=symbol, omega=omega, n1=n1, n2=n2, epsilons=epsilons, output_dir=output_dir
        )
        if (mode is None) == (field_path is None):
            raise InvalidArgumentError("give exactly one of --mode and --field")
        output = _start(verbose, run)
        grid = TorusGrid(run.n1, run.n2)
        if field_path is not None:
            f = read_field(field_path)
            if f.grid != grid:
                raise InvalidArgumentError(f"field grid {f.grid.n1}x{f.grid.n2} differs from {grid.n1}x{grid.n2}")
        else:
            parts = _floats(mode)
            if len(parts) != 2:
                raise InvalidArgumentError(f"--mode needs k1,k2, got {mode!r}")
            f = SpectralField.from_modes(grid, {(int(parts[0]), int(parts[1])): 1.0})

        operator = assemble(SymbolDescriptor.from_config(run.symbol), grid)
        try:
            solution = limiting_absorption(
                operator,
                run.omega,
                f,
                run.epsilons,
                s=run.sobolev,
                level_spacing=run.level_spacing,
                sign=-1 if outgoing else 1,
            )
        except NoConvergenceError as exc:
            if exc.report is not None and exc.report.increments:
                write_table(output / "convergence.csv", exc.report.to_frame(), run)
            raise

        write_field(output / "resolvent.zsf", solution.solution)
        write_table(output / "convergence.csv", solution.report.to_frame(), run)
        report = solution.report
        order = "n/a" if report.order is None else f"{report.order:.3f}"
        console.print(
            f"[bold green]{len(report.epsilons)} ladder entries, "
            f"monotone={report.monotone}, order {order}[/bold green]"
        )


def _problem(run: RunConfig) -> ScatteringProblem:
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    ) as progress:
        task = progress.add_task("Assembling operator and locating cycles...", total=None)
        problem = ScatteringProblem.build(run)
        progress.update(
            task,
            description=f"{len(problem.sources)} sources, {len(problem.sinks)} sinks",
        )
    return problem


@app.command()
def scatter(
    config: Optional[Path] = ConfigOption,
    symbol: Optional[str] = SymbolOption,
    omega: Optional[float] = OmegaOption,
    n1: Optional[int] = N1Option,
    n2: Optional[int] = N2Option,
    ks: Optional[int] = KsOption,
    epsilons: Optional[str] = EpsilonsOption,
    deltas: Optional[str] = DeltasOption,
    workers: Optional[int] = WorkersOption,
    output_dir: Optional[str] = OutputOption,
    verbose: bool = VerboseOption,
):
    """Build the scattering matrix and its unitarity report."""
    with _reporting_errors():
        run = _load_config(
            config,
            symbol=symbol,
            omega=omega,
            n1=n1,
            n2=n2,
            ks=ks,
            epsilons=epsilons,
            deltas=deltas,
            workers=workers,
            output_dir=output_dir,
        )
        output = _start(verbose, run)
        problem = _problem(run)
        s = scattering_matrix(problem, run.workers)
        s_rel = conjugate(s)
        write_table(output / "S.csv", s.to_frame(), run)
        write_table(output / "S_rel.csv", s_rel.to_frame(), run)
        write_report(output / "unitarity.json", s.to_report(), run)
        console.print(
            f"[bold green]S is {s.matrix.shape[0]}x{s.matrix.shape[1]}, "
            f"unitarity defect {s.unitarity_defect():.3e}[/bold green]"
        )


@app.command()
def fio(
    config: Optional[Path] = ConfigOption,
    eta0: Optional[int] = typer.Option(None, "--eta0", help="Packet frequency (default Ks/2)"),
    centers: int = typer.Option(8, "--centers", help="Packet centers per circle"),
    symbol: Optional[str] = SymbolOption,
    omega: Optional[float] = OmegaOption,
    n1: Optional[int] = N1Option,
    n2: Optional[int] = N2Option,
    ks: Optional[int] = KsOption,
    workers: Optional[int] = WorkersOption,
    output_dir: Optional[str] = OutputOption,
    verbose: bool = VerboseOption,
):
    """Transport coherent states through S_rel and compare with the flow."""
    with _reporting_errors():
        run = _load_config(
            config,
            symbol=symbol,
            omega=omega,
            n1=n1,
            n2=n2,
            ks=ks,
            workers=workers,
            output_dir=output_dir,
        )
        output = _start(verbose, run)
        problem = _problem(run)
        relation = scattering_relation(
            problem.spec.principal(), run.omega, problem.sources, problem.sinks, offset=run.offset
        )
        s = scattering_matrix(problem, run.workers)
        s_rel = conjugate(s)
        result = fio_check(s_rel, relation, eta0=eta0, centers=centers, width=run.packet_width)
        report = {
            "omega": run.omega,
            "n": [run.n1, run.n2],
            "Ks": run.ks,
            "defect": s_rel.unitarity_defect(),
            **result.to_dict(),
        }
        write_table(output / "relation.csv", relation.to_frame(), run)
        write_report(output / "fio.json", report, run)
        console.print(
            f"[bold green]position {result.position_fraction:.0%}, "
            f"branch {result.branch_fraction:.0%}[/bold green]"
        )


@app.command(name="eigencheck")
def eigencheck_cmd(
    config: Optional[Path] = ConfigOption,
    symbol: Optional[str] = SymbolOption,
    omega: Optional[float] = OmegaOption,
    n1: Optional[int] = N1Option,
    n2: Optional[int] = N2Option,
    output_dir: Optional[str] = OutputOption,
    verbose: bool = VerboseOption,
):
    """List eigenvalues of the truncated operator near omega."""
    with _reporting_errors():
        run = _load_config(config, symbol=symbol, omega=omega, n1=n1, n2=n2, output_dir=output_dir)
        output = _start(verbose, run)
        operator = assemble(SymbolDescriptor.from_config(run.symbol), TorusGrid(run.n1, run.n2))
        low, high = run.eigen_window
        pairs = eigencheck(operator, (run.omega + low, run.omega + high), run.eigen_count)
        tails = [high_frequency_fraction(p.field) for p in pairs]
        frame = pd.DataFrame(
            {
                "value": [p.value for p in pairs],
                "high_frequency": tails,
                "smooth": [t < 1e-6 for t in tails],
            }
        )
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Eigenvalue", style="cyan")
        table.add_column("High-frequency share", style="yellow")
        for p, t in zip(pairs, tails):
            table.add_row(f"{p.value:.12f}", f"{t:.3e}")
        console.print(table)
        for i, p in enumerate(pairs):
            if tails[i] < 1e-6:
                write_field(output / f"eigen_{i}.zsf", p.field)
        write_table(output / "eigen.csv", frame, run)
        console.print(f"[bold green]{int(np.sum(frame['smooth']))} smooth eigenvector(s)[/bold green]")


@app.command()
def render(
    field_path: Path = typer.Argument(..., help="Field dump to render"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Image path (default: next to the dump)"),
    quantity: str = typer.Option("abs", "--quantity", "-q", help=f"One of {', '.join(QUANTITIES)}"),
    scale: int = typer.Option(1, "--scale", help="Pixel replication factor"),
    verbose: bool = VerboseOption,
):
    """Render a field dump as a PPM heatmap."""
    setup_logging(level="DEBUG" if verbose else "INFO", log_to_console=verbose)
    with _reporting_errors():
        if not field_path.exists():
            raise InvalidArgumentError(f"no such field dump: {field_path}")
        field = read_field(field_path)
        target = output or field_path.with_suffix(".ppm")
        digest, (width, height) = write_heatmap(target, field, quantity, scale)
        console.print(f"[green]{width}x{height} heatmap saved to {target}[/green]")
        console.print(f"[dim]sha256 {digest}[/dim]")


@app.command()
def version():
    """Show zeroscatter version."""
    current_version = get_version()
    console.print(
        f"[bold blue]zeroscatter[/bold blue] version [green]{current_version}[/green]"
    )


if __name__ == "__main__":
    app()
