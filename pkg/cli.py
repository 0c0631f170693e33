import json
import sys
import time
from pathlib import Path
from typing import Callable, List, Optional

import click
from pydantic import ValidationError as PydanticValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from config import Config
from exceptions import ConfigurationError, SchemaMismatchError, SpecParseError, ValidationError
from experiments import FIGURE_THRESHOLDS, run
from models import AttackMethod, ExperimentKind, ExperimentSpec, FigureName, LoadRegime, NetworkParams, OutputFormat
from records import ComparisonReport, ResultTable, compare, write_table
from utils import format_duration, format_probability, parse_float_list, parse_int_list, setup_logging

console = Console()

EXIT_SPEC_ERROR = 2
EXIT_VALIDATION_ERROR = 3
EXIT_COMPARISON_FAILED = 4

PREVIEW_ROWS = 20

class CLI:
    def __init__(self, workers: int = 1):
        self.workers = workers

    def display_table(self, table: ResultTable):
        """Show the first rows of a result table"""
        frame = table.to_frame().dropna(axis=1, how="all")
        view = Table(title=f"{table.schema_name} ({table.experiment_id})")
        for column in frame.columns:
            if column in ("spec_hash", "experiment_id"):
                continue
            view.add_column(column, style="cyan" if column == "regime" else None)
        for _, row in frame.head(PREVIEW_ROWS).iterrows():
            view.add_row(*[self._cell(row[c]) for c in frame.columns if c not in ("spec_hash", "experiment_id")])
        console.print(view)
        if len(frame) > PREVIEW_ROWS:
            console.print(f"[dim]... {len(frame) - PREVIEW_ROWS} more rows[/dim]")

    @staticmethod
    def _cell(value) -> str:
        if value is None or (isinstance(value, float) and value != value):
            return ""
        if isinstance(value, float):
            return format_probability(value) if 0.0 <= value <= 1.0 else f"{value:.4g}"
        return str(value)

    def display_comparison(self, report: ComparisonReport):
        color = "green" if report.passed else "red"
        view = Table(title=f"{report.schema_name} comparison")
        view.add_column("Row", style="cyan")
        view.add_column("Column")
        view.add_column("Reference")
        view.add_column("Candidate")
        view.add_column("Rel. error")
        for row in report.failures or report.rows[:PREVIEW_ROWS]:
            style = None if row.passed else "red"
            view.add_row(row.key, row.column, f"{row.reference:.6g}", f"{row.candidate:.6g}",
                         f"{row.relative_error:.3%}", style=style)
        console.print(view)
        panel_content = f"""
[bold]Rows compared:[/bold] {len(report.rows)}
[bold]Max relative error:[/bold] {report.max_error:.3%}
[bold]Tolerance:[/bold] {report.tolerance:.3%}
[bold]Result:[/bold] [{color}]{"pass" if report.passed else f"fail ({len(report.failures)} rows)"}[/{color}]
"""
        console.print(Panel(panel_content, title="Comparison", border_style=color))

    def execute(self, spec: ExperimentSpec) -> Path:
        label = spec.figure.value if spec.figure else spec.kind.value
        started = time.monotonic()
        with console.status(f"Running {label}..."):
            table = run(spec, self.workers)
        elapsed = time.monotonic() - started
        default_path = Path(Config.OUTPUT_DIR) / f"{table.experiment_id}-s{spec.seed}.{spec.format.value}"
        path = Path(spec.output) if spec.output else default_path
        write_table(table, path, spec.format)
        self.display_table(table)
        console.print(f"\n[green]Wrote {len(table.records)} rows to {path} in {format_duration(elapsed)}[/green]")
        return path

def _fail(e: Exception, code: int):
    console.print(f"[red]Error: {str(e)}[/red]")
    sys.exit(code)

def _guarded(action: Callable):
    """Map domain errors onto exit codes"""
    try:
        return action()
    except (SpecParseError, SchemaMismatchError) as e:
        _fail(e, EXIT_SPEC_ERROR)
    except (ValidationError, ConfigurationError) as e:
        _fail(e, EXIT_VALIDATION_ERROR)
    except PydanticValidationError as e:
        _fail(SpecParseError(str(e)), EXIT_SPEC_ERROR)

def parse_regimes(text: str) -> List[LoadRegime]:
    try:
        return [LoadRegime(item.strip().lower()) for item in text.split(",") if item.strip()]
    except ValueError:
        raise SpecParseError(f"Unknown regime in {text!r}; expected hr, lr, h2lr or l2hr")

def network_options(func):
    """Flags shared by every experiment command"""
    options = [
        click.option('--lambda-high', type=float, default=Config.LAMBDA_HIGH, help='High-load arrival rate (tx/s)'),
        click.option('--lambda-low', type=float, default=Config.LAMBDA_LOW, help='Low-load arrival rate (tx/s)'),
        click.option('--reveal-delay', type=float, default=Config.REVEAL_DELAY, help='Reveal delay h_r (s)'),
        click.option('--regime', 'regimes', default='hr,lr,h2lr,l2hr', help='Comma separated load regimes'),
        click.option('--threshold', '-m', 'thresholds', default=None, help='Comma separated confirmation thresholds'),
        click.option('--seed', type=int, default=Config.SEED, help='Master random seed'),
        click.option('--out', default=None, help='Output file (default: <output dir>/<experiment id>-s<seed>.<format>)'),
        click.option('--format', 'fmt', type=click.Choice(['csv', 'json']), default='csv', help='Output format'),
    ]
    for option in reversed(options):
        func = option(func)
    return func

def build_spec(kind: ExperimentKind, lambda_high: float, lambda_low: float, reveal_delay: float, regimes: str,
               thresholds: Optional[str], seed: int, out: Optional[str], fmt: str,
               default_thresholds=Config.THRESHOLDS, **fields) -> ExperimentSpec:
    return ExperimentSpec(
        kind=kind,
        params=NetworkParams(lambda_high=lambda_high, lambda_low=lambda_low, reveal_delay=reveal_delay),
        regimes=parse_regimes(regimes),
        thresholds=parse_int_list(thresholds) if thresholds else list(default_thresholds),
        seed=seed,
        output=out,
        format=OutputFormat(fmt),
        **fields,
    )

@click.group()
@click.option('--workers', type=int, default=None, help='Worker processes for replications')
@click.option('--log-level', default=None, help='Logging level (DEBUG, INFO, WARNING, ...)')
@click.pass_context
def cli(ctx, workers: Optional[int], log_level: Optional[str]):
    """DAG ledger consensus: weight growth, confirmation delay and double-spend risk"""
    _guarded(Config.validate)
    setup_logging(log_level or Config.LOG_LEVEL)
    ctx.obj = CLI(workers=workers or Config.WORKERS)

@cli.command()
@network_options
@click.option('--kind', type=click.Choice(['weight_curve', 'tip_series', 'confirmation_delay']),
              default='confirmation_delay', help='What to simulate')
@click.option('--replications', type=int, default=Config.REPLICATIONS, help='Independent replications')
@click.option('--horizon', type=float, default=None, help='Simulated seconds after reveal (tip series: since genesis)')
@click.option('--times', default=None, help='Comma separated sample times (s)')
@click.pass_obj
def simulate(cli_instance: CLI, kind: str, replications: int, horizon: Optional[float], times: Optional[str], **common):
    """Run the discrete-event simulator next to the analytic model"""
    def action():
        if replications < 1:
            raise SpecParseError("--replications must be at least 1 for simulate")
        spec = build_spec(ExperimentKind(kind), replications=replications, horizon=horizon,
                          times=parse_float_list(times) if times else [], **common)
        cli_instance.execute(spec)
    _guarded(action)

@cli.command()
@network_options
@click.option('--kind', type=click.Choice(['weight_curve', 'tip_series', 'confirmation_delay']),
              default='confirmation_delay', help='Which closed form to tabulate')
@click.option('--times', default=None, help='Comma separated sample times (s)')
@click.pass_obj
def analytic(cli_instance: CLI, kind: str, times: Optional[str], **common):
    """Tabulate closed-form results only"""
    def action():
        spec = build_spec(ExperimentKind(kind), times=parse_float_list(times) if times else [], **common)
        cli_instance.execute(spec)
    _guarded(action)

def _attack(cli_instance: CLI, mu: Optional[str], mu_ratio: Optional[str], mc_replications: int,
            deficit_cutoff: int, h2lr_method: str, **common):
    def action():
        spec = build_spec(
            ExperimentKind.ATTACK_SWEEP,
            default_thresholds=(50, 100, 150),
            mu=parse_float_list(mu) if mu else [],
            mu_ratios=parse_float_list(mu_ratio) if mu_ratio else [],
            mc_replications=mc_replications,
            deficit_cutoff=deficit_cutoff,
            h2lr_method=AttackMethod(h2lr_method),
            **common,
        )
        cli_instance.execute(spec)
    _guarded(action)

def attack_options(func):
    options = [
        click.option('--mu', default=None, help='Comma separated attacker rates (tx/s)'),
        click.option('--mu-ratio', default=None, help='Comma separated attacker rates as fractions of the honest rate'),
        click.option('--mc-replications', type=int, default=Config.MC_REPLICATIONS,
                     help='Monte-Carlo race replications (0: formula only)'),
        click.option('--deficit-cutoff', type=int, default=Config.DEFICIT_CUTOFF,
                     help='Deficit at which a Monte-Carlo race is abandoned'),
        click.option('--h2lr-method', type=click.Choice(['distribution', 'expected']), default='distribution',
                     help='H2LR formula: full weight distribution or its expected value'),
    ]
    for option in reversed(options):
        func = option(func)
    return func

@cli.command()
@network_options
@attack_options
@click.pass_obj
def attack(cli_instance: CLI, **options):
    """Double-spend success probability against the attacker rate"""
    _attack(cli_instance, **options)

@cli.command(name='attack-sweep')
@network_options
@attack_options
@click.pass_obj
def attack_sweep(cli_instance: CLI, **options):
    """Same as attack"""
    _attack(cli_instance, **options)

@cli.command()
@click.argument('name', type=click.Choice([f.value for f in FigureName]))
@network_options
@click.option('--replications', type=int, default=None,
              help='Simulation replications (default: configured count for fig12, none otherwise)')
@click.option('--mc-replications', type=int, default=Config.MC_REPLICATIONS, help='Monte-Carlo race replications')
@click.option('--mu', default=None, help='Comma separated attacker rates (tx/s)')
@click.option('--mu-ratio', default=None, help='Comma separated attacker rates as fractions of the honest rate')
@click.pass_obj
def figure(cli_instance: CLI, name: str, replications: Optional[int], mc_replications: int,
           mu: Optional[str], mu_ratio: Optional[str], **common):
    """Produce the data table behind one result figure"""
    def action():
        figure_name = FigureName(name)
        if replications is None:
            count = Config.REPLICATIONS if figure_name == FigureName.FIG12 else 0
        else:
            count = replications
        spec = build_spec(
            ExperimentKind.FIGURE,
            figure=figure_name,
            default_thresholds=FIGURE_THRESHOLDS.get(figure_name, Config.THRESHOLDS),
            replications=count,
            mc_replications=mc_replications,
            mu=parse_float_list(mu) if mu else [],
            mu_ratios=parse_float_list(mu_ratio) if mu_ratio else [],
            deficit_cutoff=Config.DEFICIT_CUTOFF,
            **common,
        )
        cli_instance.execute(spec)
    _guarded(action)

@cli.command(name='compare')
@click.argument('analytic_file', type=click.Path())
@click.argument('simulation_file', type=click.Path())
@click.option('--tolerance', type=float, default=0.05, help='Largest allowed relative error per row')
@click.pass_obj
def compare_command(cli_instance: CLI, analytic_file: str, simulation_file: str, tolerance: float):
    """Check a result table against another one row by row"""
    def action():
        report = compare(Path(analytic_file), Path(simulation_file), tolerance)
        cli_instance.display_comparison(report)
        if not report.passed:
            sys.exit(EXIT_COMPARISON_FAILED)
    _guarded(action)

@cli.command(name='run')
@click.option('--spec', 'spec_file', required=True, type=click.Path(), help='Experiment spec (JSON)')
@click.pass_obj
def run_command(cli_instance: CLI, spec_file: str):
    """Run an experiment described by a JSON spec file"""
    def action():
        path = Path(spec_file)
        if not path.exists():
            raise SpecParseError(f"Spec file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SpecParseError(f"{path} is not valid JSON: {e}")
        cli_instance.execute(ExperimentSpec.model_validate(raw))
    _guarded(action)
