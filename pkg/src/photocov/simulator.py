"""
Simulation of the coverage controller, plus baseline agent configurations.
"""

from __future__ import annotations

import math
from os import PathLike
from pathlib import Path
from typing import Any

import attrs
import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from .controller import ControllerParams, control_inputs
from .cost import auxiliary_cost, photogrammetry_cost
from .density import GaussianMixtureDensity
from .geometry import (
    DEGENERACY_FLOOR,
    ConvexPolygon,
    GeometryError,
    OrderTwoPartition,
    order_two_voronoi,
    positions_of,
    project_to_polygon,
    validate_configuration,
)
from .logging import log
from .quadrature import QuadratureSpec

__all__ = [
    "AgentConfiguration",
    "SimulationConfig",
    "SimulationError",
    "CostRecord",
    "SimulationTrace",
    "step",
    "run",
    "random_configuration",
    "grid_configuration",
]

CSV_FLOAT_FORMAT = "%.12g"


class SimulationError(ValueError):
    pass


@attrs.define(frozen=True)
class AgentConfiguration:
    """Positions of n agents, as an (n, 2) array in metres."""

    positions: NDArray[np.float64] = attrs.field(
        converter=positions_of, eq=attrs.cmp_using(eq=np.array_equal)
    )

    @property
    def n(self) -> int:
        return len(self.positions)

    def __len__(self) -> int:
        return len(self.positions)

    def min_separation(self) -> float:
        if self.n < 2:
            return math.inf
        d = np.linalg.norm(self.positions[:, None] - self.positions[None], axis=-1)
        d[np.diag_indices(self.n)] = np.inf
        return float(d.min())

    def with_position(self, i: int, q: ArrayLike) -> AgentConfiguration:
        p = self.positions.copy()
        p[i] = np.asarray(q, dtype=float).reshape(2)
        return AgentConfiguration(p)

    def validate(self, Q: ConvexPolygon) -> None:
        """Checks that there are at least two agents, all inside Q and pairwise apart."""
        validate_configuration(self.positions, Q)

    def _unstructure(self) -> list[list[float]]:
        return self.positions.tolist()


def _positive(instance: Any, attribute: Any, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{attribute.name} must be positive, not {value}.")


def _nonnegative(instance: Any, attribute: Any, value: float) -> None:
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{attribute.name} must be non-negative, not {value}.")


def _at_least_one(instance: Any, attribute: Any, value: int) -> None:
    if value < 1:
        raise ValueError(f"{attribute.name} must be at least 1, not {value}.")


@attrs.define(frozen=True)
class SimulationConfig:
    """Settings for :func:`run`.

    Parameters
    ----------

    dt
        Euler time step (s).  dt·gain must be below 1.

    gain
        Controller gain k (1/s).

    max_steps
        Maximum number of Euler steps.

    convergence_eps
        The run stops once every agent's input is below this (m/s).

    cost_record_stride
        H_g and H_h are recorded every this many steps, and at the final step.

    seed
        Seed for random initial configurations.

    fov_radius
        Field-of-view radius r (m) for H_h.

    cost_quadrature
        Quadrature settings for the recorded costs, which are held to a tighter
        tolerance than those used for control.
    """

    dt: float = attrs.field(default=0.05, converter=float, validator=_positive)
    gain: float = attrs.field(default=1.0, converter=float, validator=_positive)
    max_steps: int = attrs.field(default=5000, converter=int, validator=_nonnegative)
    convergence_eps: float = attrs.field(default=1e-4, converter=float, validator=_positive)
    cost_record_stride: int = attrs.field(default=1, converter=int, validator=_at_least_one)
    seed: int = attrs.field(default=0, converter=int)
    fov_radius: float = attrs.field(default=0.5, converter=float, validator=_nonnegative)
    cost_quadrature: QuadratureSpec = attrs.field(
        factory=lambda: QuadratureSpec(rel_tol=1e-10, max_subdivisions=8)
    )

    def __attrs_post_init__(self) -> None:
        if self.dt * self.gain >= 1:
            raise ValueError(
                f"unstable step: dt·k = {self.dt * self.gain:g} must be below 1 "
                f"(dt={self.dt:g}, k={self.gain:g})."
            )


@attrs.define(frozen=True)
class CostRecord:
    step: int
    time: float
    max_u: float
    cost_g: float
    cost_h: float


@attrs.define(eq=False)
class SimulationTrace:
    """The history of a run.

    `positions` is (steps + 1) × n × 2 and `u_norms` (steps + 1) × n, both including the
    initial state; `records` holds the costs at the recorded steps.
    """

    times: NDArray[np.float64]
    positions: NDArray[np.float64]
    u_norms: NDArray[np.float64]
    records: tuple[CostRecord, ...] = attrs.field(converter=tuple)
    converged: bool
    steps: int

    @property
    def initial(self) -> AgentConfiguration:
        return AgentConfiguration(self.positions[0])

    @property
    def final(self) -> AgentConfiguration:
        return AgentConfiguration(self.positions[-1])

    def costs_g(self) -> NDArray[np.float64]:
        return np.array([r.cost_g for r in self.records])

    def costs_h(self) -> NDArray[np.float64]:
        return np.array([r.cost_h for r in self.records])

    def to_frames(self) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Trace (step, time, agent, x, y, u_norm) and cost (step, time, H_g, H_h, max_u) tables."""
        steps, n = self.u_norms.shape
        trace = pd.DataFrame(
            {
                "step": np.repeat(np.arange(steps), n),
                "time": np.repeat(self.times, n),
                "agent": np.tile(np.arange(n), steps),
                "x": self.positions[:, :, 0].ravel(),
                "y": self.positions[:, :, 1].ravel(),
                "u_norm": self.u_norms.ravel(),
            }
        )
        costs = pd.DataFrame(
            {
                "step": [r.step for r in self.records],
                "time": [r.time for r in self.records],
                "H_g": [r.cost_g for r in self.records],
                "H_h": [r.cost_h for r in self.records],
                "max_u": [r.max_u for r in self.records],
            }
        )
        return trace, costs

    def write_csv(self, directory: str | PathLike) -> tuple[Path, Path]:
        """Writes trace.csv and costs.csv to `directory`."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        trace, costs = self.to_frames()
        trace_path = d / "trace.csv"
        costs_path = d / "costs.csv"
        trace.to_csv(trace_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        costs.to_csv(costs_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        return trace_path, costs_path


def _advance(
    p: NDArray, u: NDArray, Q: ConvexPolygon, config: SimulationConfig
) -> NDArray[np.float64]:
    new = p + config.dt * u
    outside = ~Q.contains(new)
    for k in np.flatnonzero(outside):
        log.warning("Clamping agent %d to the region boundary.", k)
        new[k] = project_to_polygon(new[k], Q)
    try:
        validate_configuration(new, Q)
    except GeometryError as err:
        raise SimulationError(f"degenerate step: {err} Reduce dt.") from err
    return new


def _inputs(
    p: NDArray,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    config: SimulationConfig,
    spec: QuadratureSpec,
    partition: OrderTwoPartition,
) -> NDArray[np.float64]:
    inputs = control_inputs(p, Q, density, ControllerParams(config.gain), spec, partition)
    return np.array([ci.u for ci in inputs])


def step(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    config: SimulationConfig = SimulationConfig(),
    spec: QuadratureSpec = QuadratureSpec(),
) -> AgentConfiguration:
    """One synchronous Euler step p ← p + dt·u, clamped to Q.

    Raises
    ------
    SimulationError
        if the step makes two agents coincide.
    """
    p = positions_of(P)
    partition = order_two_voronoi(p, Q)
    u = _inputs(p, Q, density, config, spec, partition)
    return AgentConfiguration(_advance(p, u, Q, config))


def _record(
    k: int,
    p: NDArray,
    max_u: float,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    config: SimulationConfig,
    partition: OrderTwoPartition,
) -> CostRecord:
    spec = config.cost_quadrature
    return CostRecord(
        k,
        k * config.dt,
        max_u,
        auxiliary_cost(p, Q, density, spec, partition),
        photogrammetry_cost(p, Q, density, config.fov_radius, spec, partition),
    )


def run(
    initial: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    config: SimulationConfig = SimulationConfig(),
    spec: QuadratureSpec = QuadratureSpec(),
) -> SimulationTrace:
    """Runs the controller until every input is below ``config.convergence_eps``.

    Costs are recorded every ``config.cost_record_stride`` steps and at the final state.
    With ``max_steps = 0`` only the initial state is evaluated and the run is not
    reported as converged.
    """
    p = positions_of(initial)
    validate_configuration(p, Q)

    positions = [p]
    u_norms = []
    records = []
    converged = False
    k = 0
    while True:
        partition = order_two_voronoi(p, Q)
        u = _inputs(p, Q, density, config, spec, partition)
        norms = np.hypot(u[:, 0], u[:, 1])
        u_norms.append(norms)
        max_u = float(norms.max())
        converged = config.max_steps > 0 and max_u < config.convergence_eps
        last = converged or k >= config.max_steps
        if k % config.cost_record_stride == 0 or last:
            rec = _record(k, p, max_u, Q, density, config, partition)
            records.append(rec)
            log.debug(
                "step %d: max |u| %.3g, H_g %.8g, H_h %.8g", k, max_u, rec.cost_g, rec.cost_h
            )
        if last:
            break
        p = _advance(p, u, Q, config)
        positions.append(p)
        k += 1

    if converged:
        log.info("Converged after %d steps (max |u| %.3g).", k, max_u)
    elif config.max_steps > 0:
        log.info("Stopped after %d steps without converging (max |u| %.3g).", k, max_u)

    return SimulationTrace(
        np.arange(k + 1) * config.dt,
        np.stack(positions),
        np.stack(u_norms),
        records,
        converged,
        k,
    )


def random_configuration(
    n: int,
    Q: ConvexPolygon,
    seed: int = 0,
    min_separation: float = DEGENERACY_FLOOR,
) -> AgentConfiguration:
    """n agents drawn uniformly from Q by rejection sampling from its bounding box.

    Candidates closer than `min_separation` to an accepted agent are redrawn.
    """
    if n < 1:
        raise ValueError(f"need at least one agent, not {n}.")
    x0, y0, x1, y1 = Q.bounding_box()
    rng = np.random.default_rng(seed)
    accepted: list[NDArray] = []
    draws = 0
    while len(accepted) < n:
        q = rng.uniform((x0, y0), (x1, y1))
        draws += 1
        if draws > 10000 * n:
            raise GeometryError(f"could not place {n} agents {min_separation:g} apart in region.")
        if not Q.contains(q):
            continue
        if any(np.hypot(*(q - a)) <= min_separation for a in accepted):
            continue
        accepted.append(q)
    return AgentConfiguration(np.array(accepted))


def grid_configuration(n: int, Q: ConvexPolygon) -> AgentConfiguration:
    """The lattice baseline: ⌈√n⌉ rows of ⌈n/rows⌉ cell centres over a rectangle.

    A partially filled last row is centred.
    """
    if not Q.is_rectangle():
        raise GeometryError("grid baseline requires rectangle region.")
    if n < 1:
        raise ValueError(f"need at least one agent, not {n}.")
    x0, y0, x1, y1 = Q.bounding_box()
    rows = math.ceil(math.sqrt(n))
    cols = math.ceil(n / rows)
    w = (x1 - x0) / cols
    h = (y1 - y0) / rows
    pts = []
    for r in range(rows):
        in_row = min(cols, n - r * cols)
        if in_row <= 0:
            break
        shift = (cols - in_row) * w / 2
        for c in range(in_row):
            pts.append((x0 + shift + (c + 0.5) * w, y0 + (r + 0.5) * h))
    return AgentConfiguration(np.array(pts))
