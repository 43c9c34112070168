"""
Trial Emulation v1.0 - Command Line Interface

Commands:
- run       execute an estimand config on a cohort CSV and write the report
- simulate  write a synthetic cohort CSV plus its counterfactual truth sidecar

Everything that can change a number comes from flags or the config file.
Exit status: 0 success, 1 input/output failure, 2 configuration or
estimation failure (message reads "stage: message").
"""

import logging
import sys
from pathlib import Path
from typing import Callable, Optional, TypeVar

import click
from pandas.errors import ParserError
from rich.console import Console
from rich.table import Table

from trial_emulation import __version__
from trial_emulation.cohort.io import read_cohort_csv
from trial_emulation.cohort.model import Arm
from trial_emulation.config.logging import configure_logging
from trial_emulation.config.settings import get_settings
from trial_emulation.emulation.observations import read_observations_csv
from trial_emulation.errors import CohortValidationError, ConfigurationError, TrialEmulationError
from trial_emulation.plan.compiler import compile_plan
from trial_emulation.plan.runner import AnalysisResult, execute_plan
from trial_emulation.plan.schema import load_estimand_config, shipped_config
from trial_emulation.simulate.config import load_sim_config
from trial_emulation.simulate.generator import generate_cohort, write_simulation

from .report import write_artifacts

logger = logging.getLogger(__name__)

EXIT_IO = 1
EXIT_ANALYSIS = 2

COHORT_FILE = "cohort.csv"
TRUTH_FILE = "truth.csv"

T = TypeVar("T")


def resolve_config(value: str) -> Path:
    """A config path, or the name of a config shipped with the package."""
    path = Path(value)
    if path.exists():
        return path
    if path.parent == Path("."):
        try:
            return shipped_config(path.name)
        except ConfigurationError:
            pass
    raise FileNotFoundError(f"config file not found: {value}")


def _guarded(action: Callable[[], T], console: Console) -> T:
    """Run an action, mapping failures to the documented exit status."""
    try:
        return action()
    except (OSError, ParserError, UnicodeDecodeError, CohortValidationError) as exc:
        console.print(f"[red]error:[/red] {exc}")
        sys.exit(EXIT_IO)
    except TrialEmulationError as exc:
        console.print(f"[red]error:[/red] {exc}")
        sys.exit(EXIT_ANALYSIS)


def _fmt_ci(ci) -> str:
    if not ci or ci[0] is None or ci[1] is None:
        return "NR"
    return f"[{ci[0]:.3f}, {ci[1]:.3f}]"


def _fmt(value: Optional[float]) -> str:
    return "NR" if value is None else f"{value:.3f}"


def summary_table(result: AnalysisResult) -> Table:
    """HR, CIs, medians and log-rank p for the console."""
    table = Table(title=f"{result.plan.name.value} analysis ({result.plan.spec.name})")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")

    n_rct, n_oc = result.arm_counts
    table.add_row("Subjects (RCT / OC)", f"{n_rct} / {n_oc}")
    table.add_row("Hazard ratio", f"{result.hazard_ratio:.3f}")
    table.add_row("Robust Wald CI", _fmt_ci(result.wald_ci()))
    if result.bootstrap is not None:
        ci = result.bootstrap
        table.add_row(f"Bootstrap CI ({ci.replicates} replicates)", _fmt_ci((ci.lo, ci.hi)))
    for arm in (Arm.RCT, Arm.OC):
        curve = result.curves.get(arm)
        if curve is not None:
            table.add_row(f"Median OS {arm.value}", f"{_fmt(curve.median)} {_fmt_ci(curve.median_ci)}")
    if result.logrank is not None:
        table.add_row("Log-rank p", f"{result.logrank.p_value:.4f}")
    return table


@click.group(name="trial-emulation")
@click.version_option(__version__, prog_name="trial-emulation")
def cli():
    """Estimand-driven external-control survival analysis."""
    configure_logging(get_settings())


@cli.command()
@click.option("--config", "config_path", required=True, help="Estimand config (TOML/JSON) or shipped config name")
@click.option("--cohort", "cohort_path", required=True, type=click.Path(dir_okay=False), help="Cohort CSV")
@click.option("--observations", "observations_path", type=click.Path(dir_okay=False), default=None,
              help="Raw observations CSV for windowed eligibility rules")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.option("--seed", required=True, type=click.IntRange(0, 2 ** 64 - 1), help="Bootstrap seed")
@click.option("--bootstrap", "replicates", type=click.IntRange(min=0), default=None,
              help="Bootstrap replicates (overrides the config; 0 skips the CI)")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Bootstrap worker threads; results do not depend on it")
def run(config_path, cohort_path, observations_path, out_dir, seed, replicates, threads):
    """Run the analysis an estimand config describes."""
    console = Console()
    threads = threads or get_settings().MAX_WORKERS

    spec = _guarded(lambda: load_estimand_config(resolve_config(config_path)), console)
    plan = compile_plan(spec)
    cohort = _guarded(lambda: read_cohort_csv(cohort_path, spec.covariate_specs()), console)
    observations = ()
    if observations_path:
        observations = _guarded(lambda: read_observations_csv(observations_path), console)

    result = _guarded(
        lambda: execute_plan(plan, cohort, observations, seed=seed, bootstrap=replicates, threads=threads),
        console,
    )
    written = _guarded(lambda: write_artifacts(result, out_dir), console)

    console.print(summary_table(result))
    for warning in result.warnings:
        console.print(f"[yellow]warning:[/yellow] {warning}")
    console.print(f"Wrote {', '.join(sorted(written))} to {out_dir}")


@cli.command()
@click.option("--config", "config_path", default="default_simulation", show_default=True,
              help="Simulation config (TOML/JSON) or shipped config name")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Overrides the config seed")
def simulate(config_path, out_dir, seed):
    """Write a synthetic cohort and its counterfactual truth."""
    console = Console()
    config = _guarded(lambda: load_sim_config(resolve_config(config_path)), console)
    sim = _guarded(lambda: generate_cohort(config, seed=seed), console)

    out = Path(out_dir)

    def write():
        out.mkdir(parents=True, exist_ok=True)
        write_simulation(sim, out / COHORT_FILE, out / TRUTH_FILE)

    _guarded(write, console)
    n_rct, n_oc = sim.cohort.arm_counts()
    console.print(
        f"Simulated {n_rct} RCT + {n_oc} OC subjects "
        f"(switch fraction {sim.switch_fraction:.1%}) into {out / COHORT_FILE}"
    )


def main():
    cli(prog_name="trial-emulation")


if __name__ == "__main__":
    main()
