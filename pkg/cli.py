# Standard Library Imports
import json
import logging
from pathlib import Path
from typing import Callable, Optional

# Third-Party Imports
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

# Application-Specific Imports
from config import settings
from db.config_store import load_config, validate_config
from db.matrix_store import load_matrix, save_matrix
from db.results_store import write_curves, write_random_access, write_recovery
from models.errors import ChangeDetectionError, ConfigurationError
from models.schemas import ExperimentConfig, MatrixKind, MatrixSpec, RandomAccessConfig
from services.harness import detect, recovery_study, sweep
from services.matrix_factory import build_sensing_matrix
from services.random_access import random_access_experiment
from utils.serialization_utils import log_exception, serialize_for_json

logger = logging.getLogger("cli")
console = Console()

app = typer.Typer(help="Sparse change detection: sensing matrices, CUSUM detectors and Monte Carlo experiments.")
matrix_app = typer.Typer(help="Build and inspect sensing matrices.")
app.add_typer(matrix_app, name="matrix")

ConfigOption = typer.Option(..., "--config", "-c", exists=True, dir_okay=False, help="YAML or JSON config file")
SeedOption = typer.Option(None, "--seed", help="Master seed (overrides the config)")
TrialsOption = typer.Option(None, "--trials", help="Trials per point (overrides the config)")
OutOption = typer.Option(None, "--out", help="Output path (overrides the config)")
ThreadsOption = typer.Option(None, "--threads", help="Worker processes (overrides the config)")


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    logging.basicConfig(
        level="DEBUG" if verbose else settings.LOG_LEVEL,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)],
        force=True,
    )


def _run(action: Callable[[], None]) -> None:
    """Run a command body, mapping domain errors to exit codes."""
    try:
        action()
    except ChangeDetectionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(code=e.exit_code)
    except typer.Exit:
        raise
    except Exception as e:
        log_exception(logger, "Unexpected failure", e)
        raise typer.Exit(code=1)


def _default_out(name: str, suffix: str) -> Path:
    return Path(settings.RESULTS_DIR) / f"{name}_{suffix}.csv"


def _print_json(data) -> None:
    console.print_json(json.dumps(serialize_for_json(data)))


@matrix_app.command("build")
def matrix_build(
    kind: Optional[MatrixKind] = typer.Argument(None, help="Matrix kind (ignored with --config)"),
    M: Optional[int] = typer.Option(None, "--M", help="Rows, or the dimension d for sic_povm / mub / amub"),
    N: Optional[int] = typer.Option(None, "--N", help="Columns"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", exists=True, dir_okay=False),
    seed: Optional[int] = SeedOption,
    fiducial: Optional[Path] = typer.Option(None, "--fiducial", help="Fiducial file (\"re im\" per line)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the matrix (.txt: text format, otherwise binary)"),
):
    """Construct a sensing matrix and report its coherence."""
    def action():
        if config:
            spec = load_config(config, MatrixSpec, seed=seed)
        else:
            if kind is None:
                raise ConfigurationError("give a matrix kind or --config")
            spec = validate_config({"kind": kind, "M": M, "N": N, "seed": seed,
                                    "fiducial_path": str(fiducial) if fiducial else None}, MatrixSpec)
        matrix = build_sensing_matrix(spec)
        _print_json(matrix.info())
        if out:
            save_matrix(out, matrix)
    _run(action)


@matrix_app.command("info")
def matrix_info(path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Matrix file")):
    """Load a stored matrix and report shape, kind and coherence."""
    _run(lambda: _print_json(load_matrix(path).info()))


@app.command("detect")
def detect_command(
    config: Path = ConfigOption,
    detector: int = typer.Option(0, "--detector", help="Index into the configured detectors"),
    change_point: Optional[int] = typer.Option(None, "--change-point", help="Override the change point"),
    no_change: bool = typer.Option(False, "--no-change", help="Run without a change (false-alarm run)"),
    trial: int = typer.Option(0, "--trial", help="Trial index (selects the random stream)"),
    trace: bool = typer.Option(False, "--trace", help="Include the per-step metric trace"),
    seed: Optional[int] = SeedOption,
):
    """Single detector run; prints the stopping report."""
    def action():
        cfg = load_config(config, ExperimentConfig, seed=seed)
        report = detect(cfg, detector_index=detector, change_point=change_point, no_change=no_change,
                        trial_index=trial, record_trace=trace)
        _print_json(report)
    _run(action)


def _curve_table(curves) -> Table:
    table = Table(title="ARL / delay tradeoff")
    for column in ("detector", "threshold", "ARL", "delay", "false alarms", "censored"):
        table.add_column(column)
    for curve in curves:
        for p in curve.points:
            arl = f"{'>' if p.arl_lower_bound else ''}{p.arl:.1f} ± {p.arl_stderr:.1f}"
            table.add_row(curve.detector, f"{p.threshold:g}", arl, f"{p.delay:.2f} ± {p.delay_stderr:.2f}",
                          str(p.false_alarms), f"{p.arl_censored}/{p.delay_censored}")
    return table


@app.command("sweep")
def sweep_command(
    config: Path = ConfigOption,
    seed: Optional[int] = SeedOption,
    trials: Optional[int] = TrialsOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
):
    """Threshold sweep: one ARL / delay curve per detector, written as CSV plus a JSON sidecar."""
    def action():
        cfg = load_config(config, ExperimentConfig, seed=seed, trials=trials, threads=threads,
                          out=str(out) if out else None)
        curves = sweep(cfg)
        path = write_curves(cfg.out or _default_out(cfg.name, "sweep"), curves, cfg)
        console.print(_curve_table(curves))
        console.print(f"Results written to {path}")
    _run(action)


@app.command("recovery")
def recovery_command(
    config: Path = ConfigOption,
    seed: Optional[int] = SeedOption,
    trials: Optional[int] = TrialsOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
):
    """Support recovery at a calibrated average run length."""
    def action():
        cfg = load_config(config, ExperimentConfig, seed=seed, trials=trials, threads=threads,
                          out=str(out) if out else None)
        results = recovery_study(cfg)
        path = write_recovery(cfg.out or _default_out(cfg.name, "recovery"), results, cfg,
                              {"target_arl": cfg.target_arl, "seed": cfg.seed})
        table = Table(title=f"Support recovery at ARL ≈ {cfg.target_arl:g}")
        for column in ("detector", "threshold", "ARL", "recovery %"):
            table.add_column(column)
        for r in results:
            table.add_row(r.detector, f"{r.threshold:.4g}", f"{r.achieved_arl:.0f}",
                          f"{r.recovery_pct:.1f} ± {r.recovery_stderr:.1f}")
        console.print(table)
        console.print(f"Results written to {path}")
    _run(action)


@app.command("ra")
def random_access_command(
    config: Path = ConfigOption,
    seed: Optional[int] = SeedOption,
    trials: Optional[int] = TrialsOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
):
    """Massive random access: detection and identification of entering users."""
    def action():
        cfg = load_config(config, RandomAccessConfig, seed=seed, trials=trials, threads=threads,
                          out=str(out) if out else None)
        result = random_access_experiment(cfg)
        path = write_random_access(cfg.out or _default_out(cfg.name, "ra"), result, cfg)
        console.print(f"Augmented matrix {result.rows}x{result.columns}, coherence {result.coherence:.4f}, "
                      f"capacity {result.capacity}")
        console.print(_curve_table(result.curves))
        console.print(f"Results written to {path}")
    _run(action)


if __name__ == "__main__":
    app()
