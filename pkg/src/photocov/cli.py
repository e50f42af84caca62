"""
The ``photocov`` command.

Exit codes: 0 on success, 1 for invalid input (scenario, measurements, arguments), 2 for
errors during a simulation or evaluation, 3 when a verification suite finds a violation.
Every failure prints one line ``photocov: error: <ErrorClass>: <message>`` on standard
error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import sys
from pathlib import Path
from typing import Iterator, NoReturn, Sequence

from .cost import auxiliary_cost, bound_factors, photogrammetry_cost
from .density import fit_mixture_detailed, load_measurements
from .experiments import SUITES, compare_configurations, replay
from .geometry import order_two_voronoi, polygon_diameter
from .logging import log
from .plotting import coverage_figure, save_svg
from .printing import table
from .quadrature import QuadratureSpec
from .scenario import Scenario, load_scenario
from .simulator import grid_configuration, run
from .util import dump_json

__all__ = ["main", "build_parser"]

EXIT_INPUT = 1
EXIT_RUN = 2
EXIT_VIOLATION = 3

DEFAULT_OUT_DIR = "photocov-out"


class VerificationFailure(Exception):
    pass


class UsageError(ValueError):
    pass


class _Exit(Exception):
    def __init__(self, code: int, err: BaseException):
        super().__init__(str(err))
        self.code = code
        self.err = err


@contextlib.contextmanager
def _stage(code: int) -> Iterator[None]:
    """Maps library errors raised inside the block to exit `code`."""
    try:
        yield
    except _Exit:
        raise
    except (ValueError, TypeError, KeyError, OSError, ArithmeticError) as err:
        raise _Exit(code, err) from err


def _load(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def _out_dir(args: argparse.Namespace, scenario: Scenario) -> Path:
    if getattr(args, "out_dir", None) is not None:
        return Path(args.out_dir)
    if scenario.output_directory is not None:
        return scenario.output_directory
    return Path(DEFAULT_OUT_DIR) / scenario.name


def cmd_simulate(args: argparse.Namespace) -> int:
    with _stage(EXIT_INPUT):
        scenario = _load(args)
        initial = scenario.initial_configuration()
        out = _out_dir(args, scenario)

    with _stage(EXIT_RUN):
        Q = scenario.region
        config = scenario.simulation
        trace = run(initial, Q, scenario.density, config)
        grid_h = None
        if Q.is_rectangle():
            grid = grid_configuration(scenario.agent_count, Q)
            grid_h = photogrammetry_cost(
                grid, Q, scenario.density, scenario.fov_radius, config.cost_quadrature
            )

    with _stage(EXIT_INPUT):
        out.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out)
        first, last = trace.records[0], trace.records[-1]
        summary = {
            "scenario": scenario.name,
            "agents": scenario.agent_count,
            "seed": scenario.seed,
            "steps": trace.steps,
            "converged": trace.converged,
            "initial": {"H_g": first.cost_g, "H_h": first.cost_h},
            "final": {"H_g": last.cost_g, "H_h": last.cost_h, "max_u": last.max_u},
            "grid": {"H_h": grid_h} if grid_h is not None else None,
            "final_positions": trace.final.positions.tolist(),
        }
        with contextlib.suppress(ValueError):
            b = bound_factors(scenario.fov_radius, polygon_diameter(Q))
            summary["beta"] = b.beta
            summary["upper_factor"] = b.upper_factor
        dump_json(summary, out / "summary.json")
        fig = coverage_figure(
            trace, Q, scenario.density, scenario.fov_radius, grid_h, title=scenario.name
        )
        save_svg(fig, out / "figure.svg")

    rows = [
        ["initial", first.cost_h, first.cost_g],
        ["final", last.cost_h, last.cost_g],
    ]
    if grid_h is not None:
        rows.append(["grid", grid_h, math.nan])
    print(table(rows, ["configuration", "H_h", "H_g"]))
    print(
        f"{'converged' if trace.converged else 'not converged'} after {trace.steps} steps; "
        f"wrote {out}"
    )
    return 0


def cmd_fit_density(args: argparse.Namespace) -> int:
    with _stage(EXIT_INPUT):
        csv_path = Path(args.csv)
        if not csv_path.exists():
            raise FileNotFoundError(f"measurement file not found: {csv_path}")
        measurements = load_measurements(csv_path)
        fit = fit_mixture_detailed(measurements, args.k, args.seed, args.restarts)
        out = Path(args.out) if args.out is not None else csv_path.with_suffix(".density.json")
        out.parent.mkdir(parents=True, exist_ok=True)
        fit.density.save(out)
        report = {"source": str(csv_path), "k": args.k, "seed": args.seed, **fit.to_dict()}
        report_path = out.with_name(out.stem + ".fit.json")
        dump_json(report, report_path)

    rows = [
        [n, c.amplitude, c.center.x, c.center.y, c.sigma]
        for n, c in enumerate(fit.density.components)
    ]
    print(table(rows, ["component", "amplitude", "x", "y", "sigma"]))
    print(f"residual {fit.residual:.6g}; wrote {out} and {report_path}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    with _stage(EXIT_INPUT):
        scenario = _load(args)
        out = Path(args.out) if args.out is not None else _out_dir(args, scenario) / "comparison.json"
        bound_factors(scenario.fov_radius, polygon_diameter(scenario.region))

    with _stage(EXIT_RUN):
        report = compare_configurations(
            scenario.agent_count,
            scenario.region,
            scenario.density,
            scenario.fov_radius,
            scenario.simulation,
        )

    with _stage(EXIT_INPUT):
        out.parent.mkdir(parents=True, exist_ok=True)
        report.save(out)

    print(report.table())
    print(
        f"β = {report.beta:.6g}, 1/β² = {report.upper_factor:.6g}; bounds "
        f"{'hold' if report.bounds_passed else 'FAIL'}; wrote {out}"
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    if args.replay is not None:
        with _stage(EXIT_INPUT):
            instance, outcome = replay(args.replay)
        suite = instance.suite
        print(f"{suite}: {'pass' if outcome.passed else 'FAIL'} (margin {outcome.margin:.6g})")
        print(outcome.detail)
        if not outcome.passed:
            raise _Exit(
                EXIT_VIOLATION,
                VerificationFailure(f"{suite} replay failed: {outcome.detail}"),
            )
        return 0

    kwargs = {"seed": args.seed}
    if args.trials is not None:
        kwargs["trials"] = args.trials
    with _stage(EXIT_RUN):
        result = SUITES[args.suite](**kwargs)

    row = [result.suite, result.trials, result.passed, result.worst_margin]
    headers = ["suite", "trials", "passed", "worst margin"]
    if result.max_ratio is not None:
        row.append(result.max_ratio)
        headers.append("max H_h/H_g")
    print(table([row], headers))
    if result.worst_detail:
        print(f"worst: {result.worst_detail}")
    if not result.passed:
        with _stage(EXIT_INPUT):
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / f"verify-{result.suite}-violation.json"
            result.violations[0].save(path)
        raise _Exit(
            EXIT_VIOLATION,
            VerificationFailure(
                f"{result.suite}: {len(result.violations)} of {result.trials} trials failed "
                f"(worst margin {result.worst_margin:.6g}); instance written to {path}"
            ),
        )
    return 0


def cmd_eval_cost(args: argparse.Namespace) -> int:
    with _stage(EXIT_INPUT):
        scenario = _load(args)
        initial = scenario.initial_configuration()
        bound = bound_factors(scenario.fov_radius, polygon_diameter(scenario.region))

    with _stage(EXIT_RUN):
        Q = scenario.region
        spec: QuadratureSpec = scenario.simulation.cost_quadrature
        partition = order_two_voronoi(initial, Q)
        cost_g = auxiliary_cost(initial, Q, scenario.density, spec, partition)
        cost_h = photogrammetry_cost(initial, Q, scenario.density, scenario.fov_radius, spec, partition)

    print(
        table(
            [[cost_g, cost_h, bound.beta, bound.upper_factor, bound.upper_factor * cost_g]],
            ["H_g", "H_h", "β", "1/β²", "H_g/β²"],
        )
    )
    return 0


class _Parser(argparse.ArgumentParser):
    "Reports usage errors as a single error line with the input exit code."

    def error(self, message: str) -> NoReturn:
        raise _Exit(EXIT_INPUT, UsageError(f"{self.prog}: {message}"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="photocov",
        description="Second-order coverage control for multi-agent photogrammetry.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debugging."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Run the coverage controller on a scenario.")
    p.add_argument("scenario", help="Scenario JSON file, or the name of a bundled scenario.")
    p.add_argument("--seed", type=int, default=None, help="Override the scenario's seed.")
    p.add_argument("--out-dir", default=None, help="Output directory.")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-density", help="Fit a Gaussian mixture to feature counts.")
    p.add_argument("csv", help="CSV file with columns x,y,count.")
    p.add_argument("--k", type=int, default=1, help="Number of Gaussian components.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=4, help="Number of random restarts.")
    p.add_argument("--out", default=None, help="Density JSON to write.")
    p.set_defaults(func=cmd_fit_density)

    p = sub.add_parser("compare", help="Compare random, grid and coverage configurations.")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="Report JSON to write.")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="Numerically verify the coverage results.")
    p.add_argument("--suite", choices=sorted(SUITES), default="bounds")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replay", default=None, help="Re-check a saved violating instance.")
    p.add_argument("--out-dir", default=".", help="Where to write a violating instance.")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval-cost", help="Costs of a scenario's initial configuration.")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval_cost)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        log.setLevel(level)
        return args.func(args)
    except _Exit as e:
        msg = " ".join(str(e.err).split())
        print(f"photocov: error: {type(e.err).__name__}: {msg}", file=sys.stderr)
        return e.code
