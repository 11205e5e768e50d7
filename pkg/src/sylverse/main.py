"""sylverse command-line entry point.

This module parses the command line, loads or generates problem instances,
dispatches to the numerical core and writes JSON or CSV reports. Diagnostics go
to stderr; stdout carries the report when ``--out -`` is given.

Exit codes: 0 success, 2 validation failure, 3 accuracy failure, 4 certificate
or gap-check failure.
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sylverse import __version__
from sylverse.core.costmodel import (
    COST_COLUMNS,
    Regime,
    cost_rows,
    evaluate_both_routes,
    preconditioned_queries,
    verify_lower_bound_gap,
)
from sylverse.core.errors import AccuracyError, SingularMatrixError, ValidationError
from sylverse.core.fermion import (
    TRAJECTORY_COLUMNS,
    chain_model,
    relax,
    stationary_residual,
    to_ode_problem,
    trajectory_rows,
)
from sylverse.core.histsolve import build_system, certify_condition, default_order, default_steps
from sylverse.core.krylov import BENCHMARK_COLUMNS, run_benchmark
from sylverse.core.oracle import solve_ode, solve_quadrature
from sylverse.core.overlap import Route, entry_report, estimate_entry
from sylverse.core.persistence import (
    STDOUT,
    Problem,
    encode_complex,
    load_problem,
    problem_to_dict,
    save_problem,
    write_csv,
    write_json,
)
from sylverse.core.problem import (
    LogNormSign,
    MatrixODEProblem,
    Side,
    TimeDepProblem,
    lower_bound_entry,
    make_envelope_instance,
    make_lower_bound_instance,
    make_random_instance,
)
from sylverse.core.settings import DEFAULT_SETTINGS
from sylverse.core.timedep import IntegrationRule, certify_condition_timedep, solve_timedep_entry

logger = logging.getLogger("sylverse")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ACCURACY = 3
EXIT_CERTIFICATE = 4

SOLVE_COLUMNS = ("entry_re", "entry_im", "reference_re", "reference_im", "abs_err", "tol", "M", "R", "K")
CERTIFICATE_COLUMNS = (
    "side",
    "M",
    "R",
    "K",
    "normA",
    "normAinv",
    "kappa",
    "rowSumBound",
    "colSumBound",
    "paperBound",
    "pass",
)
LOWERBOUND_COLUMNS = (
    "t",
    "delta",
    "L_delta",
    "L_2delta",
    "eps_delta",
    "gap",
    "holds",
    "feasible",
    "entry",
    "entry_error",
)
DEFAULT_DELTAS = (math.pi / 16, math.pi / 32, math.pi / 64)
DEFAULT_TIMES = (6.0, 12.0, 24.0)


class Command(Enum):
    """Subcommands of the command-line interface."""

    SOLVE = "solve"
    CERTIFY = "certify"
    COST = "cost"
    FERMION = "fermion"
    BENCH = "bench"
    LOWERBOUND = "lowerbound"
    MAKE = "make"


class OutputFormat(Enum):
    JSON = "json"
    CSV = "csv"


class InstanceKind(Enum):
    """Problem families written by ``make``."""

    RANDOM = "random"
    LOWERBOUND = "lowerbound"
    FERMION = "fermion"
    ENVELOPE = "envelope"


@dataclass
class RunConfig:
    """Validated run configuration.

    Attributes
    ----------
    command : Command
        Subcommand to run.
    problem_path : Path, optional
        Problem file for solve, certify and cost.
    out_path : str
        Report destination; ``-`` is stdout.
    output_format : OutputFormat
        JSON or CSV report.
    overrides : dict
        Optional M, R, K, tol, seed, route and regime overrides.
    """

    command: Command
    problem_path: Optional[Path] = None
    out_path: str = STDOUT
    output_format: OutputFormat = OutputFormat.JSON
    M: Optional[int] = None
    R: Optional[int] = None
    K: Optional[int] = None
    tol: Optional[float] = None
    seed: int = 0
    route: Route = Route.LINEAR_SYSTEMS
    regime: Optional[Regime] = None
    lattice: int = 1
    n: Optional[int] = None
    m: int = 24
    restart_r: Optional[float] = None
    beta: float = 1.0
    gamma: float = 0.1
    t: Optional[float] = None
    kind: InstanceKind = InstanceKind.RANDOM
    log_norm: LogNormSign = LogNormSign.NEGATIVE
    theta: float = math.pi / 16
    grid_j: int = 33
    t_grid: List[float] = field(default_factory=lambda: list(DEFAULT_TIMES))
    delta_grid: List[float] = field(default_factory=lambda: list(DEFAULT_DELTAS))

    @property
    def overrides(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "R": self.R,
            "K": self.K,
            "tol": self.tol,
            "seed": self.seed,
            "route": self.route.value,
            "regime": None if self.regime is None else self.regime.value,
        }

    def validate(self) -> None:
        """Check the overrides against the preconditions of the core modules.

        Raises
        ------
        ValidationError
            If an override is out of range or a required path is missing.
        """
        if self.M is not None and self.M < 1:
            raise ValidationError(f"--M must be at least 1, got {self.M}", field="M")
        if self.R is not None and self.R < 1:
            raise ValidationError(f"--R must be at least 1, got {self.R}", field="R")
        if self.K is not None and not 0 <= self.K <= 40:
            raise ValidationError(f"--K must lie in [0, 40], got {self.K}", field="K")
        if self.tol is not None and not (math.isfinite(self.tol) and self.tol > 0):
            raise ValidationError(f"--tol must be positive, got {self.tol}", field="tol")
        if self.n is not None and self.n < 1:
            raise ValidationError(f"--n must be positive, got {self.n}", field="n")
        if self.m < 1:
            raise ValidationError(f"--m must be positive, got {self.m}", field="m")
        if self.restart_r is not None and not self.restart_r > 0:
            raise ValidationError(f"--restart-r must be positive, got {self.restart_r}", field="restart_r")
        if self.t is not None and not self.t > 0:
            raise ValidationError(f"--t must be positive, got {self.t}", field="t")
        if self.beta < 0:
            raise ValidationError(f"--beta must be nonnegative, got {self.beta}", field="beta")
        if not self.gamma > 0:
            raise ValidationError(f"--gamma must be positive, got {self.gamma}", field="gamma")
        needs_problem = self.command in (Command.SOLVE, Command.CERTIFY, Command.COST)
        if needs_problem and self.problem_path is None:
            raise ValidationError(f"{self.command.value} needs --problem", field="problem")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        """Build a configuration from parsed arguments."""
        config = cls(
            command=Command(args.command),
            problem_path=None if args.problem is None else Path(args.problem),
            out_path=args.out,
            output_format=OutputFormat(args.format),
            M=args.M,
            R=args.R,
            K=args.K,
            tol=args.tol,
            seed=args.seed,
            route=Route(args.route),
            regime=None if args.regime is None else Regime(args.regime),
            lattice=int(args.lattice[0]),
            n=args.n,
            m=args.m,
            restart_r=args.restart_r,
            beta=args.beta,
            gamma=args.gamma,
            t=args.t,
            kind=InstanceKind(args.kind),
            log_norm=LogNormSign(args.log_norm),
            theta=args.theta,
            grid_j=args.grid_j,
        )
        if args.t_grid:
            config.t_grid = list(args.t_grid)
        if args.delta_grid:
            config.delta_grid = list(args.delta_grid)
        config.validate()
        return config


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser."""
    parser = argparse.ArgumentParser(
        prog="sylverse",
        description="Entries of linear matrix differential equations via history states.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=[command.value for command in Command])
    parser.add_argument("--problem", default=None, help="problem JSON file")
    parser.add_argument("--out", default=STDOUT, help="report path, '-' for stdout")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.JSON.value)
    parser.add_argument("--M", type=int, default=None, help="clock steps")
    parser.add_argument("--R", type=int, default=None, help="padding steps")
    parser.add_argument("--K", type=int, default=None, help="truncation order")
    parser.add_argument("--route", choices=[route.value for route in Route], default=Route.LINEAR_SYSTEMS.value)
    parser.add_argument("--regime", choices=[regime.value for regime in Regime], default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol", type=float, default=None, help="requested accuracy")
    parser.add_argument("--lattice", choices=["1d", "2d", "3d"], default="1d")
    parser.add_argument("--n", type=int, default=None, help="dimension, modes or lattice sites")
    parser.add_argument("--m", type=int, default=24, help="Krylov dimension")
    parser.add_argument("--restart-r", dest="restart_r", type=float, default=None, help="restart segment length")
    parser.add_argument("--beta", type=float, default=1.0, help="inverse temperature")
    parser.add_argument("--gamma", type=float, default=0.1, help="dissipation rate")
    parser.add_argument("--t", type=float, default=None, help="evolution time")
    parser.add_argument("--kind", choices=[kind.value for kind in InstanceKind], default=InstanceKind.RANDOM.value)
    parser.add_argument("--log-norm", dest="log_norm", choices=[s.value for s in LogNormSign], default="negative")
    parser.add_argument("--theta", type=float, default=math.pi / 16, help="angle of the lower-bound instance")
    parser.add_argument("--grid-j", dest="grid_j", type=int, default=33, help="time samples of envelope instances")
    parser.add_argument("--t-grid", dest="t_grid", type=float, nargs="+", default=None)
    parser.add_argument("--delta-grid", dest="delta_grid", type=float, nargs="+", default=None)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    return parser


def configure_logging(verbosity: int) -> None:
    """Send log records to stderr at WARNING, INFO (-v) or DEBUG (-vv)."""
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _write(config: RunConfig, payload: Dict[str, Any], rows: List[Dict[str, Any]], columns: Sequence[str]) -> None:
    if config.output_format is OutputFormat.CSV:
        write_csv(rows, columns, config.out_path)
    else:
        write_json(payload, config.out_path)


def _load(config: RunConfig) -> Problem:
    if config.problem_path is None:
        raise ValidationError("--problem is required", field="problem")
    return load_problem(config.problem_path)


def cmd_solve(config: RunConfig) -> int:
    """Reference solution and entry estimate with the error budget.

    Static problems are checked against the quadrature oracle, time-dependent
    ones against the RK45 oracle.
    """
    problem = _load(config)
    if config.tol is not None:
        problem = replace(problem, eps=config.tol)
    oracle_tol = 1e-11
    if isinstance(problem, MatrixODEProblem):
        requested = problem.eps
        reference = solve_quadrature(problem, oracle_tol)
        report = entry_report(problem, config.M, config.R, config.K, config.route)
        estimate = complex(*report["entry"])
        M, R, K = report["M"], report["R"], report["K"]
        payload: Dict[str, Any] = {
            "kind": "static",
            "oracle": {"quadrature": reference.to_dict(), "ode": solve_ode(problem, oracle_tol).to_dict()},
            "estimate": report,
        }
    else:
        requested = max(problem.eps, 1e-7) if config.tol is None else config.tol
        reference = solve_ode(problem, oracle_tol)
        M, R = _timedep_steps(problem, config)
        K = DEFAULT_SETTINGS.dyson_order if config.K is None else config.K
        estimate = solve_timedep_entry(problem, M, R, K, rule=IntegrationRule.GAUSS)
        payload = {
            "kind": "timedep",
            "oracle": {"ode": reference.to_dict()},
            "estimate": {"entry": encode_complex(estimate), "M": M, "R": R, "K": K, "rule": "gauss"},
        }
    error = abs(estimate - reference.entry)
    payload["achievedError"] = error
    payload["tol"] = requested
    row = {
        "entry_re": estimate.real,
        "entry_im": estimate.imag,
        "reference_re": reference.entry.real,
        "reference_im": reference.entry.imag,
        "abs_err": error,
        "tol": requested,
        "M": M,
        "R": R,
        "K": K,
    }
    _write(config, payload, [row], SOLVE_COLUMNS)
    if error > requested:
        logger.error("Achieved error %.3g exceeds requested %.3g", error, requested)
        return EXIT_ACCURACY
    return EXIT_OK


def _timedep_steps(problem: TimeDepProblem, config: RunConfig) -> Tuple[int, int]:
    M = max(1, math.ceil(problem.t * problem.mu)) if config.M is None else config.M
    if config.R is not None:
        R = config.R
    elif problem.c == 0:
        R = 1
    else:
        R = max(1, math.ceil(problem.mu * problem.d / problem.c))
    return M, R


def cmd_certify(config: RunConfig) -> int:
    """Condition certificates of both history systems."""
    problem = _load(config)
    certificates: Dict[str, Any] = {}
    rows = []
    for which in (Side.A, Side.B):
        if isinstance(problem, MatrixODEProblem):
            default_M, default_R = default_steps(problem)
            M = default_M if config.M is None else config.M
            R = default_R if config.R is None else config.R
            K = default_order(problem, M, R) if config.K is None else config.K
            if (M + R) * problem.n > DEFAULT_SETTINGS.dense_cap:
                logger.warning("Certificate for side %s skipped: (M+R)n exceeds the dense cap", which.value)
                certificates[which.value] = {"skipped": True}
                continue
            certificate = certify_condition(build_system(problem, which, M, R, K), problem, which)
        else:
            M, R = _timedep_steps(problem, config)
            K = DEFAULT_SETTINGS.dyson_order if config.K is None else config.K
            certificate = certify_condition_timedep(problem, M, R, K, which)
        certificates[which.value] = certificate.to_dict()
        rows.append({"side": which.value, **certificate.to_dict()})
    _write(config, {"certificates": certificates}, rows, CERTIFICATE_COLUMNS)
    failed = [side for side, data in certificates.items() if data.get("pass") is False]
    if failed:
        logger.error("Certificates failed for sides %s", ", ".join(failed))
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_cost(config: RunConfig) -> int:
    """Cost-model values of both routes."""
    problem = _load(config)
    reports = evaluate_both_routes(problem)
    if config.regime is not None and reports[0].regime is not config.regime:
        raise ValidationError(f"--regime {config.regime.value} does not match the problem", field="regime")
    payload: Dict[str, Any] = {"reports": [report.to_dict() for report in reports]}
    if isinstance(problem, MatrixODEProblem):
        payload["preconditionedQueries"] = preconditioned_queries(problem)
    _write(config, payload, cost_rows(reports), COST_COLUMNS)
    return EXIT_OK


def cmd_fermion(config: RunConfig) -> int:
    """Relax a dissipative chain and cross-check the entry pipeline."""
    modes = 4 if config.n is None else config.n
    tol = 1e-6 if config.tol is None else config.tol
    t = 8.0 / config.gamma if config.t is None else config.t
    model = chain_model(modes, gamma=config.gamma, beta=config.beta)
    samples = relax(model, np.linspace(0.0, t, 9), tol=1e-10)
    rows = trajectory_rows(model, samples)
    problem = to_ode_problem(model, t, eps=tol)
    estimate = estimate_entry(problem, config.M, config.R, config.K, config.route)
    error = abs(estimate - samples[-1].entry)
    payload = {
        "model": {
            "Ns": model.Ns,
            "beta": model.beta,
            "gamma": model.gamma,
            "stationaryResidual": stationary_residual(model),
        },
        "trajectory": rows,
        "entry": {
            "estimate": encode_complex(estimate),
            "trajectory": encode_complex(samples[-1].entry),
            "absErr": error,
        },
        "tol": tol,
    }
    _write(config, payload, rows, TRAJECTORY_COLUMNS)
    if error > tol:
        logger.error("Entry pipeline differs from the trajectory by %.3g", error)
        return EXIT_ACCURACY
    return EXIT_OK


def cmd_bench(config: RunConfig) -> int:
    """Krylov benchmark rows on a lattice instance."""
    sites = 128 if config.n is None else config.n
    t = 1.0 if config.t is None else config.t
    tol = 1e-10 if config.tol is None else config.tol
    rows = run_benchmark(config.lattice, sites, config.m, t, gamma=config.gamma, restart_r=config.restart_r, tol=tol)
    _write(config, {"rows": rows}, rows, BENCHMARK_COLUMNS)
    return EXIT_OK


def cmd_lowerbound(config: RunConfig) -> int:
    """Gap check and closed-form reproduction on the lower-bound family."""
    dimension = 2 if config.n is None else config.n
    tol = 1e-8 if config.tol is None else config.tol
    rows = []
    worst = 0.0
    for check in verify_lower_bound_gap(config.t_grid, config.delta_grid):
        problem = make_lower_bound_instance(dimension, check.delta, check.t, eps=tol)
        entry = estimate_entry(problem, config.M, config.R, config.K, config.route).real
        error = abs(entry - lower_bound_entry(check.delta, check.t))
        worst = max(worst, error)
        rows.append({**check.to_dict(), "entry": entry, "entry_error": error})
    _write(config, {"rows": rows, "tol": tol}, rows, LOWERBOUND_COLUMNS)
    if not all(row["holds"] for row in rows):
        logger.error("Gap inequality fails on part of the grid")
        return EXIT_CERTIFICATE
    if worst > tol:
        logger.error("Closed-form reproduction error %.3g exceeds %.3g", worst, tol)
        return EXIT_ACCURACY
    return EXIT_OK


def cmd_make(config: RunConfig) -> int:
    """Generate a problem file."""
    size = 4 if config.n is None else config.n
    t = 1.0 if config.t is None else config.t
    eps = 1e-8 if config.tol is None else config.tol
    problem: Problem
    if config.kind is InstanceKind.RANDOM:
        problem = make_random_instance(size, config.seed, config.log_norm, t, eps)
    elif config.kind is InstanceKind.LOWERBOUND:
        problem = make_lower_bound_instance(size, config.theta, 6.0 if config.t is None else config.t, eps)
    elif config.kind is InstanceKind.FERMION:
        model = chain_model(size, gamma=config.gamma, beta=config.beta)
        problem = to_ode_problem(model, 8.0 / config.gamma if config.t is None else config.t, eps)
    else:
        problem = make_envelope_instance(size, config.seed, config.grid_j, t, eps)
    if config.out_path == STDOUT:
        write_json(problem_to_dict(problem), STDOUT)
    else:
        save_problem(problem, Path(config.out_path))
    return EXIT_OK


COMMANDS: Dict[Command, Callable[[RunConfig], int]] = {
    Command.SOLVE: cmd_solve,
    Command.CERTIFY: cmd_certify,
    Command.COST: cmd_cost,
    Command.FERMION: cmd_fermion,
    Command.BENCH: cmd_bench,
    Command.LOWERBOUND: cmd_lowerbound,
    Command.MAKE: cmd_make,
}


def main(argv: Optional[list[str]] = None) -> int:
    """Command-line entry point.

    Parameters
    ----------
    argv : list[str], optional
        Arguments without the program name. If None, uses sys.argv[1:].

    Returns
    -------
    int
        Exit code (0 success, 2 validation, 3 accuracy, 4 certificate).

    Examples
    --------
    >>> # sylverse make --kind lowerbound --out lb.json
    >>> # sylverse solve --problem lb.json
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = RunConfig.from_args(args)
        logger.info("Running %s with overrides %s", config.command.value, config.overrides)
        code = COMMANDS[config.command](config)
    except ValidationError as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except (AccuracyError, SingularMatrixError) as exc:
        logger.error("%s", exc)
        return EXIT_ACCURACY
    logger.info("Finished %s with exit code %d", config.command.value, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
