"""
Sensor models and second-order coverage costs.

A sensor model f(x, y) gives the cost of a point seen by two agents at distances x and
y.  The coverage cost of a partition assigns each pair cell's points to that pair:
H_f(P, W) = Σ_{(i, j)} ∫_{W_ij} f(‖q − p_i‖, ‖q − p_j‖) φ(q) dq.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from typing import Any, Callable, Mapping

import attrs
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .density import GaussianMixtureDensity
from .geometry import (
    ConvexPolygon,
    OrderTwoPartition,
    PairKey,
    order_two_voronoi,
    polygon_diameter,
    positions_of,
)
from .logging import log
from .quadrature import QuadratureSpec, cell_cost_integral, cell_mass, lens_deficit
from .util import parallel_map

__all__ = [
    "SensorKind",
    "SensorModel",
    "AuxiliarySensor",
    "PhotogrammetrySensor",
    "CallableSensor",
    "BoundFactors",
    "ConditionReport",
    "PartitionError",
    "BoundError",
    "sensor_g",
    "sensor_h",
    "coverage_cost",
    "photogrammetry_cost",
    "auxiliary_cost",
    "bound_factors",
    "check_sensor_conditions",
]

PARTITION_TOL = 1e-4


class PartitionError(ValueError):
    pass


class BoundError(ValueError):
    pass


class SensorKind(enum.Enum):
    AUXILIARY = "auxiliary"
    PHOTOGRAMMETRY = "photogrammetry"


def sensor_g(x: ArrayLike, y: ArrayLike) -> Any:
    "g(x, y) = x² + y²."
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = x * x + y * y
    return float(v) if v.ndim == 0 else v


def sensor_h(x: ArrayLike, y: ArrayLike, r: float, diam: float) -> Any:
    """The photogrammetry sensor: g(x, y) when both agents are within r, else 2·diam²."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.where(np.maximum(x, y) <= r, x * x + y * y, 2 * diam * diam)
    return float(v) if v.ndim == 0 else v


class SensorModel(ABC):
    """A symmetric, non-decreasing cost of being seen at distances (x, y)."""

    kind: SensorKind | None = None

    @abstractmethod
    def __call__(self, x: ArrayLike, y: ArrayLike) -> Any:  # pragma: no cover
        ...


@attrs.define(frozen=True)
class AuxiliarySensor(SensorModel):
    kind = SensorKind.AUXILIARY

    def __call__(self, x: ArrayLike, y: ArrayLike) -> Any:
        return sensor_g(x, y)


@attrs.define(frozen=True)
class PhotogrammetrySensor(SensorModel):
    """Quadratic cost inside both agents' fields of view, a constant penalty outside.

    Parameters
    ----------

    fov_radius
        Ground radius r seen by each agent, in metres.

    region_diameter
        Diameter of the coverage region; the penalty is twice its square, larger than
        any in-view cost.
    """

    kind = SensorKind.PHOTOGRAMMETRY

    fov_radius: float = attrs.field(converter=float)
    region_diameter: float = attrs.field(converter=float)

    @fov_radius.validator
    def _check_radius(self, attribute: Any, value: float) -> None:
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"fov_radius must be non-negative, not {value}.")

    @region_diameter.validator
    def _check_diameter(self, attribute: Any, value: float) -> None:
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"region_diameter must be positive, not {value}.")

    @classmethod
    def for_region(cls, fov_radius: float, Q: ConvexPolygon) -> PhotogrammetrySensor:
        return cls(fov_radius, polygon_diameter(Q))

    @property
    def penalty(self) -> float:
        return 2 * self.region_diameter**2

    def __call__(self, x: ArrayLike, y: ArrayLike) -> Any:
        return sensor_h(x, y, self.fov_radius, self.region_diameter)


@attrs.define(frozen=True)
class CallableSensor(SensorModel):
    """Wraps an arbitrary vectorized f(x, y)."""

    function: Callable[[NDArray, NDArray], NDArray]

    def __call__(self, x: ArrayLike, y: ArrayLike) -> Any:
        return self.function(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _partition_region(W: Any, region: ConvexPolygon | None) -> ConvexPolygon | None:
    if region is not None:
        return region
    return getattr(W, "region", None)


def coverage_cost(
    P: Any,
    W: OrderTwoPartition | Mapping[PairKey, ConvexPolygon],
    density: GaussianMixtureDensity,
    sensor: SensorModel | Callable,
    spec: QuadratureSpec = QuadratureSpec(),
    region: ConvexPolygon | None = None,
) -> float:
    """H_f(P, W) for an arbitrary assignment W of cells to pairs of agents.

    Raises
    ------
    PartitionError
        if the cells' areas do not add up to the region's (relative mismatch > 1e-4).
    """
    p = positions_of(P)
    cells = W.cells if isinstance(W, OrderTwoPartition) else W
    Q = _partition_region(W, region)
    if Q is not None:
        qa = Q.area
        total = math.fsum(c.area for c in cells.values())
        if abs(total - qa) > PARTITION_TOL * qa:
            raise PartitionError(
                f"invalid partition: cell areas sum to {total:.6g}, region area is {qa:.6g}."
            )
    items = [(k, c) for k, c in cells.items() if not c.is_empty]
    for k, _ in items:
        if k.j >= len(p):
            raise PartitionError(f"invalid partition: pair {k} refers to a missing agent.")

    values = parallel_map(
        lambda kc: cell_cost_integral(kc[1], density, sensor, p[kc[0].i], p[kc[0].j], spec),
        items,
    )
    return math.fsum(values)


def photogrammetry_cost(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    r: float,
    spec: QuadratureSpec = QuadratureSpec(),
    partition: OrderTwoPartition | None = None,
) -> float:
    """H_h over the second-order Voronoi partition of P.

    Unless ``spec.fov_boundary`` is ``"refine"``, this is evaluated as the penalty times
    the mass of Q, less each cell's :func:`~photocov.quadrature.lens_deficit`; an agent's
    position then affects the cost only through the fields of view it shares.
    """
    sensor = PhotogrammetrySensor.for_region(r, Q)
    if partition is None:
        partition = order_two_voronoi(P, Q)
    if spec.fov_boundary == "refine":
        return coverage_cost(P, partition, density, sensor, spec)

    p = partition.positions
    items = list(partition.nonempty().items())
    deficits = parallel_map(
        lambda kc: lens_deficit(
            kc[1], density, p[kc[0].i], p[kc[0].j], sensor.fov_radius, sensor.penalty, spec
        ),
        items,
    )
    return sensor.penalty * cell_mass(Q, density, spec) - math.fsum(deficits)


def auxiliary_cost(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    spec: QuadratureSpec = QuadratureSpec(),
    partition: OrderTwoPartition | None = None,
) -> float:
    "H_g over the second-order Voronoi partition of P."
    if partition is None:
        partition = order_two_voronoi(P, Q)
    return coverage_cost(P, partition, density, AuxiliarySensor(), spec)


@attrs.define(frozen=True)
class BoundFactors:
    """β and the factor 1/β² with H_g ≤ H_h ≤ (1/β²) H_g."""

    beta: float
    upper_factor: float


def bound_factors(r: float, diam: float) -> BoundFactors:
    """β = r / (√2 · diam).

    Raises
    ------
    BoundError
        unless 0 < r < diam.
    """
    if not (0 < r < diam):
        raise BoundError(f"bound undefined: need 0 < r < diam(Q), got r={r}, diam={diam}.")
    beta = r / (math.sqrt(2) * diam)
    return BoundFactors(beta, 1 / beta**2)


@attrs.define(frozen=True)
class ConditionReport:
    """Counts of sampled violations of each sensor condition.

    ``examples`` holds the first violating (x, y, k) triple for each condition.
    """

    samples: int
    violations: dict[str, int]
    examples: dict[str, tuple[float, float, float]] = attrs.field(factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())


def check_sensor_conditions(
    sensor: SensorModel | Callable,
    samples: int,
    seed: int = 0,
    extent: float | None = None,
) -> ConditionReport:
    """Randomized check that f is non-decreasing in each argument and symmetric.

    Triples (x, y, k) are drawn uniformly from [0, extent]³; extent defaults to the
    sensor's region diameter, or 1.
    """
    if extent is None:
        extent = getattr(sensor, "region_diameter", 1.0)
    rng = np.random.default_rng(seed)
    x, y, k = rng.uniform(0.0, extent, (3, samples))
    f = np.asarray(sensor(x, y), dtype=float)
    checks = {
        "monotone_x": np.asarray(sensor(x + k, y), dtype=float) >= f,
        "monotone_y": np.asarray(sensor(x, y + k), dtype=float) >= f,
        "symmetric": np.asarray(sensor(y, x), dtype=float) == f,
    }
    violations = {}
    examples = {}
    for name, ok in checks.items():
        bad = np.flatnonzero(~ok)
        violations[name] = int(len(bad))
        if len(bad):
            b = bad[0]
            examples[name] = (float(x[b]), float(y[b]), float(k[b]))
            log.info("Sensor condition %s violated at x=%g, y=%g, k=%g", name, *examples[name])
    return ConditionReport(samples, violations, examples)
