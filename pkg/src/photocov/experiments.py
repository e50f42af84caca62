"""
Grid oracles, configuration comparisons and numerical verification suites.

The oracles evaluate coverage costs by brute force on a fine grid of sample points,
independently of the exact partition and the adaptive quadrature.  The verification
suites draw random instances, check each one, and keep any violating instance so that it
can be saved and replayed.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from os import PathLike
from typing import IO, Any, Callable, ClassVar, Sequence

import attrs
import numpy as np
from numpy.typing import NDArray

from .controller import auxiliary_gradient, fd_gradient
from .cost import (
    AuxiliarySensor,
    PhotogrammetrySensor,
    SensorKind,
    auxiliary_cost,
    bound_factors,
    check_sensor_conditions,
    photogrammetry_cost,
)
from .density import GaussianMixtureDensity, phi2
from .dictstructure import _STRUCTURE_CLASSES, _structure, _unstructure
from .geometry import (
    ConvexPolygon,
    GeometryError,
    order_two_voronoi,
    polygon_diameter,
    positions_of,
    validate_configuration,
)
from .logging import log
from .printing import table
from .quadrature import QuadratureSpec
from .simulator import SimulationConfig, grid_configuration, random_configuration, run
from .util import dump_json, load_json, parallel_map

__all__ = [
    "GridOracleSpec",
    "oracle_cost",
    "oracle_perturbed_partition_cost",
    "oracle_cells",
    "ConfigurationResult",
    "ComparisonReport",
    "compare_configurations",
    "CheckOutcome",
    "VerificationInstance",
    "BoundsInstance",
    "OptimalityInstance",
    "GradientInstance",
    "ConditionsInstance",
    "VerificationResult",
    "verify_bounds",
    "verify_optimality",
    "verify_gradient",
    "verify_conditions",
    "SUITES",
    "replay",
    "default_region",
]

ORACLE_CHUNK = 65536
"Grid samples processed at once."

BOUND_SLACK = 1e-3
"Relative integration slack allowed when checking H_g ≤ H_h ≤ H_g / β²."


def default_region() -> ConvexPolygon:
    "The 1.5 m square."
    return ConvexPolygon.rectangle(0.0, 0.0, 1.5, 1.5)


def _check_resolution(instance: Any, attribute: Any, value: int) -> None:
    if value < 64:
        raise ValueError(f"oracle resolution must be at least 64, not {value}.")


@attrs.define(frozen=True)
class GridOracleSpec:
    """A resolution × resolution midpoint grid over the region's bounding box.

    `seed` drives the random reassignments of :func:`oracle_perturbed_partition_cost`.
    """

    resolution: int = attrs.field(default=1000, converter=int, validator=_check_resolution)
    seed: int = attrs.field(default=0, converter=int)


def _grid_chunks(Q: ConvexPolygon, spec: GridOracleSpec):
    """Yields (points inside Q, sample area) over the grid, a block of rows at a time."""
    x0, y0, x1, y1 = Q.bounding_box()
    res = spec.resolution
    xs = x0 + (np.arange(res) + 0.5) * (x1 - x0) / res
    ys = y0 + (np.arange(res) + 0.5) * (y1 - y0) / res
    dA = (x1 - x0) * (y1 - y0) / res**2
    rows = max(1, ORACLE_CHUNK // res)
    for start in range(0, res, rows):
        gx, gy = np.meshgrid(xs, ys[start : start + rows])
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        yield pts[Q.contains(pts)], dA


def _nearest_order(pts: NDArray, p: NDArray) -> tuple[NDArray, NDArray]:
    d = np.linalg.norm(pts[:, None, :] - p[None, :, :], axis=-1)
    # stable, so ties go to the lowest index
    return d, np.argsort(d, axis=1, kind="stable")


def _oracle_sum(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    sensor: Callable,
    spec: GridOracleSpec,
    swap_fraction: float = 0.0,
    adversarial: bool = False,
) -> float:
    p = positions_of(P)
    validate_configuration(p, Q)
    if not 0 <= swap_fraction <= 1:
        raise ValueError(f"swap_fraction must be in [0, 1], not {swap_fraction}.")
    n = len(p)
    pair_i, pair_j = np.triu_indices(n, k=1)
    pair_index = np.full((n, n), -1, dtype=int)
    pair_index[pair_i, pair_j] = np.arange(len(pair_i))
    rng = np.random.default_rng(spec.seed)

    total = 0.0
    for pts, dA in _grid_chunks(Q, spec):
        d, order = _nearest_order(pts, p)
        a = order[:, 0]
        b = order[:, 1]
        swap = rng.random(len(pts)) < swap_fraction
        if adversarial:
            a = np.where(swap, order[:, -1], a)
            b = np.where(swap, order[:, -2], b)
        elif len(pair_i) > 1:
            opt = pair_index[np.minimum(a, b), np.maximum(a, b)]
            r = rng.integers(0, len(pair_i) - 1, len(pts))
            r = r + (r >= opt)
            a = np.where(swap, pair_i[r], a)
            b = np.where(swap, pair_j[r], b)
        rows = np.arange(len(pts))
        f = np.asarray(sensor(d[rows, a], d[rows, b]), dtype=float)
        total += float(np.sum(f * density(pts))) * dA
    return total


def oracle_cost(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    sensor: Callable,
    spec: GridOracleSpec = GridOracleSpec(),
) -> float:
    """Midpoint-rule coverage cost, assigning each sample to its two nearest agents."""
    return _oracle_sum(P, Q, density, sensor, spec)


def oracle_perturbed_partition_cost(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    sensor: Callable,
    swap_fraction: float,
    spec: GridOracleSpec = GridOracleSpec(),
    adversarial: bool = False,
) -> float:
    """As :func:`oracle_cost`, but with a random `swap_fraction` of the samples assigned
    to some other pair of agents.

    Reassigned samples go to a uniformly random non-optimal pair, or, if `adversarial`,
    to the two agents farthest from the sample.  With a monotone, symmetric sensor the
    result is never below :func:`oracle_cost`.
    """
    return _oracle_sum(P, Q, density, sensor, spec, swap_fraction, adversarial)


def oracle_cells(
    P: Any, Q: ConvexPolygon, spec: GridOracleSpec = GridOracleSpec()
) -> tuple[NDArray[np.float64], NDArray[np.int_]]:
    """Grid samples inside Q and, for each, its two nearest agents (lower index first)."""
    p = positions_of(P)
    pts_all = []
    pairs = []
    for pts, _ in _grid_chunks(Q, spec):
        _, order = _nearest_order(pts, p)
        pts_all.append(pts)
        pairs.append(np.sort(order[:, :2], axis=1))
    return np.concatenate(pts_all), np.concatenate(pairs)


@attrs.define(frozen=True)
class ConfigurationResult:
    kind: str
    positions: NDArray[np.float64] = attrs.field(
        converter=positions_of, eq=attrs.cmp_using(eq=np.array_equal)
    )
    cost_h: float
    cost_g: float
    empty_cells: int


@attrs.define(frozen=True)
class ComparisonReport:
    """Costs of the random, grid and coverage-controller configurations."""

    results: tuple[ConfigurationResult, ...] = attrs.field(converter=tuple)
    beta: float
    upper_factor: float
    fov_radius: float
    region: ConvexPolygon
    seed: int
    bounds_passed: bool
    grid_layout: tuple[int, int] = attrs.field(converter=tuple)

    def __getitem__(self, kind: str) -> ConfigurationResult:
        for r in self.results:
            if r.kind == kind:
                return r
        raise KeyError(kind)

    def table(self, tablefmt: str = "simple") -> str:
        rows = [
            [r.kind, r.cost_h, r.cost_g, self.upper_factor * r.cost_g, r.empty_cells]
            for r in self.results
        ]
        return table(rows, ["configuration", "H_h", "H_g", "H_g/β²", "empty cells"], tablefmt)

    def to_dict(self) -> dict[str, Any]:
        return {
            "results": [
                {
                    "kind": r.kind,
                    "positions": r.positions.tolist(),
                    "H_h": r.cost_h,
                    "H_g": r.cost_g,
                    "empty_cells": r.empty_cells,
                }
                for r in self.results
            ],
            "beta": self.beta,
            "upper_factor": self.upper_factor,
            "fov_radius": self.fov_radius,
            "region": self.region.vertices.tolist(),
            "seed": self.seed,
            "bounds_passed": self.bounds_passed,
            "grid_layout": list(self.grid_layout),
        }

    def save(self, filename_or_stream: str | PathLike | IO[str]) -> None:
        dump_json(self.to_dict(), filename_or_stream)


def _sandwich_margin(cost_g: float, cost_h: float, upper: float, slack: float) -> float:
    """Smallest relative margin of H_g ≤ H_h ≤ upper·H_g; negative on violation."""
    scale = max(cost_g, 1e-300)
    lower = (cost_h - cost_g) / scale + slack
    upper_m = (upper * cost_g * (1 + 1e-9) - cost_h) / scale + slack
    return min(lower, upper_m)


def compare_configurations(
    n: int,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    r: float,
    sim_config: SimulationConfig = SimulationConfig(),
    spec: QuadratureSpec = QuadratureSpec(),
) -> ComparisonReport:
    """Costs of a random configuration, the grid baseline, and the controller's
    converged configuration started from the same random one.
    """
    if n < 2:
        raise GeometryError(f"second-order coverage requires n ≥ 2 agents, got {n}.")
    bound = bound_factors(r, polygon_diameter(Q))
    sim_config = attrs.evolve(sim_config, fov_radius=r)
    start = random_configuration(n, Q, sim_config.seed)
    grid = grid_configuration(n, Q)
    trace = run(start, Q, density, sim_config, spec)

    cost_spec = sim_config.cost_quadrature
    results = []
    for kind, conf in [("random", start), ("grid", grid), ("coverage", trace.final)]:
        partition = order_two_voronoi(conf, Q)
        results.append(
            ConfigurationResult(
                kind,
                conf.positions,
                photogrammetry_cost(conf, Q, density, r, cost_spec, partition),
                auxiliary_cost(conf, Q, density, cost_spec, partition),
                partition.empty_count(),
            )
        )
    passed = all(
        _sandwich_margin(x.cost_g, x.cost_h, bound.upper_factor, BOUND_SLACK) >= 0
        for x in results
    )
    rows = math.ceil(math.sqrt(n))
    log.info("Compared configurations of %d agents; bounds %s", n, "hold" if passed else "fail")
    return ComparisonReport(
        results,
        bound.beta,
        bound.upper_factor,
        r,
        Q,
        sim_config.seed,
        passed,
        (rows, math.ceil(n / rows)),
    )


@attrs.define(frozen=True)
class CheckOutcome:
    """Whether an instance passed, and by how much (negative margin on failure)."""

    passed: bool
    margin: float
    detail: str = ""
    ratio: float | None = None


def _to_polygon(x: Any) -> ConvexPolygon:
    return x if isinstance(x, ConvexPolygon) else ConvexPolygon(x)


def _to_density(x: Any) -> GaussianMixtureDensity:
    return x if isinstance(x, GaussianMixtureDensity) else GaussianMixtureDensity.from_dict(x)


class VerificationInstance(ABC):
    """One randomly drawn case of a verification suite.

    Instances serialize with a class tag, so a violating one can be saved and replayed.
    """

    suite: ClassVar[str]

    @abstractmethod
    def check(self, spec: QuadratureSpec = QuadratureSpec()) -> CheckOutcome:  # pragma: no cover
        ...

    def _unstructure(self) -> dict[str, Any]:
        d: dict[str, Any] = {"class": self.__class__.__name__}
        for att in attrs.fields(self.__class__):
            d[att.name] = _unstructure(getattr(self, att.name))
        return d

    def save(self, filename_or_stream: str | PathLike | IO[str]) -> None:
        dump_json(self._unstructure(), filename_or_stream)


@attrs.define(frozen=True)
class BoundsInstance(VerificationInstance):
    """H_g ≤ H_h ≤ H_g / β² for one configuration."""

    suite = "bounds"

    positions: NDArray[np.float64] = attrs.field(
        converter=positions_of, eq=attrs.cmp_using(eq=np.array_equal)
    )
    region: ConvexPolygon = attrs.field(converter=_to_polygon)
    density: GaussianMixtureDensity = attrs.field(converter=_to_density)
    fov_radius: float = 0.5
    slack: float = BOUND_SLACK

    def check(self, spec: QuadratureSpec = QuadratureSpec()) -> CheckOutcome:
        bound = bound_factors(self.fov_radius, polygon_diameter(self.region))
        partition = order_two_voronoi(self.positions, self.region)
        cost_g = auxiliary_cost(self.positions, self.region, self.density, spec, partition)
        cost_h = photogrammetry_cost(
            self.positions, self.region, self.density, self.fov_radius, spec, partition
        )
        margin = _sandwich_margin(cost_g, cost_h, bound.upper_factor, self.slack)
        return CheckOutcome(
            margin >= 0,
            margin,
            f"n={len(self.positions)} H_g={cost_g:.8g} H_h={cost_h:.8g} "
            f"H_g/β²={bound.upper_factor * cost_g:.8g}",
            cost_h / cost_g if cost_g > 0 else None,
        )


@attrs.define(frozen=True)
class OptimalityInstance(VerificationInstance):
    """No reassignment of grid samples beats the nearest-two assignment.

    Each of `perturbations` reassignments draws its own samples to move; when `adversarial`
    is set, the first one sends them to their farthest pair instead of a random one.
    """

    suite = "lemma1"

    positions: NDArray[np.float64] = attrs.field(
        converter=positions_of, eq=attrs.cmp_using(eq=np.array_equal)
    )
    region: ConvexPolygon = attrs.field(converter=_to_polygon)
    density: GaussianMixtureDensity = attrs.field(converter=_to_density)
    swap_fraction: float = 0.5
    adversarial: bool = False
    fov_radius: float = 0.5
    resolution: int = 500
    seed: int = 0
    perturbations: int = 10

    def check(self, spec: QuadratureSpec = QuadratureSpec()) -> CheckOutcome:
        grid = GridOracleSpec(self.resolution, self.seed)
        margins = []
        details = []
        sensors = {
            "g": AuxiliarySensor(),
            "h": PhotogrammetrySensor.for_region(self.fov_radius, self.region),
        }
        for name, sensor in sensors.items():
            opt = oracle_cost(self.positions, self.region, self.density, sensor, grid)
            perturbed = [
                oracle_perturbed_partition_cost(
                    self.positions,
                    self.region,
                    self.density,
                    sensor,
                    self.swap_fraction,
                    GridOracleSpec(self.resolution, self.seed + k),
                    self.adversarial and k == 0,
                )
                for k in range(self.perturbations)
            ]
            pert = min(perturbed)
            margins.append((pert - opt) / max(abs(opt), 1e-300))
            details.append(f"{name}: optimal {opt:.8g}, lowest perturbed {pert:.8g}")
        margin = min(margins)
        return CheckOutcome(margin >= 0, margin, "; ".join(details))


@attrs.define(frozen=True)
class GradientInstance(VerificationInstance):
    """2 M_i (p_i − C̄_i) matches central differences of H_g."""

    suite = "gradient"

    positions: NDArray[np.float64] = attrs.field(
        converter=positions_of, eq=attrs.cmp_using(eq=np.array_equal)
    )
    region: ConvexPolygon = attrs.field(converter=_to_polygon)
    density: GaussianMixtureDensity = attrs.field(converter=_to_density)
    agent: int = 0
    angle_tol: float = 1e-2
    magnitude_tol: float = 1e-3

    def check(self, spec: QuadratureSpec = QuadratureSpec()) -> CheckOutcome:
        spec = spec.tightened(rel_tol=1e-10, max_subdivisions=8)
        partition = order_two_voronoi(self.positions, self.region)
        exact = auxiliary_gradient(self.agent, partition, self.density, spec)
        numeric = fd_gradient(
            SensorKind.AUXILIARY, self.positions, self.region, self.density, self.agent, spec=spec
        )
        ne = float(np.hypot(*exact))
        nn = float(np.hypot(*numeric))
        cos = float(exact @ numeric) / max(ne * nn, 1e-300)
        angle = math.acos(min(1.0, max(-1.0, cos)))
        mag = abs(ne - nn) / max(ne, 1e-300)
        margin = min((self.angle_tol - angle) / self.angle_tol, (self.magnitude_tol - mag) / self.magnitude_tol)
        return CheckOutcome(
            margin >= 0,
            margin,
            f"agent {self.agent}: closed form {exact.tolist()}, differences {numeric.tolist()}, "
            f"angle {angle:.3g} rad, magnitude error {mag:.3g}",
        )


@attrs.define(frozen=True)
class ConditionsInstance(VerificationInstance):
    """Randomized check of monotonicity and symmetry of a sensor model."""

    suite = "conditions"

    sensor: SensorKind = attrs.field(converter=SensorKind)
    fov_radius: float = 0.5
    region_diameter: float = 1.5 * math.sqrt(2)
    samples: int = 100_000
    seed: int = 0

    def check(self, spec: QuadratureSpec = QuadratureSpec()) -> CheckOutcome:
        if self.sensor is SensorKind.PHOTOGRAMMETRY:
            model: Any = PhotogrammetrySensor(self.fov_radius, self.region_diameter)
        else:
            model = AuxiliarySensor()
        report = check_sensor_conditions(model, self.samples, self.seed, self.region_diameter)
        bad = sum(report.violations.values())
        return CheckOutcome(
            report.passed,
            -float(bad),
            ", ".join(f"{k}: {v} violations" for k, v in report.violations.items()),
        )


for _c in [BoundsInstance, OptimalityInstance, GradientInstance, ConditionsInstance]:
    _STRUCTURE_CLASSES[_c.__name__] = _c


@attrs.define(frozen=True)
class VerificationResult:
    """Outcome of a verification suite.

    `violations` holds every failing instance, worst first.
    """

    suite: str
    trials: int
    passed: bool
    worst_margin: float
    worst_detail: str = ""
    violations: tuple[VerificationInstance, ...] = attrs.field(converter=tuple, factory=tuple)
    max_ratio: float | None = None


def _run_suite(
    suite: str, instances: Sequence[VerificationInstance], spec: QuadratureSpec
) -> VerificationResult:
    outcomes = parallel_map(lambda inst: inst.check(spec), instances)
    failing = sorted(
        (k for k, o in enumerate(outcomes) if not o.passed), key=lambda k: outcomes[k].margin
    )
    worst = min(range(len(outcomes)), key=lambda k: outcomes[k].margin) if outcomes else None
    for k in failing:
        log.warning("%s trial %d failed: %s", suite, k, outcomes[k].detail)
    return VerificationResult(
        suite,
        len(instances),
        not failing,
        outcomes[worst].margin if worst is not None else math.inf,
        outcomes[worst].detail if worst is not None else "",
        [instances[k] for k in failing],
        max((o.ratio for o in outcomes if o.ratio is not None), default=None),
    )


def _interior_configuration(
    n: int, Q: ConvexPolygon, rng: np.random.Generator, margin: float
) -> NDArray[np.float64]:
    """A random configuration with every agent at least `margin` inside Q and apart."""
    hps = Q.halfplanes()
    while True:
        p = random_configuration(n, Q, int(rng.integers(2**31)), min_separation=margin).positions
        inside = np.all([hp.signed_distance(p) <= -margin for hp in hps], axis=0)
        if inside.all():
            return p


def verify_bounds(
    trials: int = 100,
    seed: int = 0,
    spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-3),
    Q: ConvexPolygon | None = None,
    density: GaussianMixtureDensity | None = None,
    fov_radius: float = 0.5,
) -> VerificationResult:
    """H_g ≤ H_h ≤ H_g/β² on random configurations of 3 to 12 agents."""
    Q = Q if Q is not None else default_region()
    density = density if density is not None else phi2().with_relative_floor()
    rng = np.random.default_rng(seed)
    instances = [
        BoundsInstance(
            _interior_configuration(int(rng.integers(3, 13)), Q, rng, 1e-3), Q, density, fov_radius
        )
        for _ in range(trials)
    ]
    return _run_suite("bounds", instances, spec)


def verify_optimality(
    trials: int = 50,
    seed: int = 0,
    spec: QuadratureSpec = QuadratureSpec(),
    Q: ConvexPolygon | None = None,
    density: GaussianMixtureDensity | None = None,
    fov_radius: float = 0.5,
    resolution: int = 500,
    perturbations: int = 10,
) -> VerificationResult:
    """Random and adversarial reassignments never lower the grid cost.

    Each of the `trials` configurations is checked against `perturbations` perturbed
    assignments.
    """
    Q = Q if Q is not None else default_region()
    density = density if density is not None else phi2().with_relative_floor()
    rng = np.random.default_rng(seed)
    instances = [
        OptimalityInstance(
            _interior_configuration(int(rng.integers(2, 9)), Q, rng, 1e-3),
            Q,
            density,
            float(rng.uniform(0.05, 1.0)),
            bool(t % 2),
            fov_radius,
            resolution,
            int(rng.integers(2**31)),
            perturbations,
        )
        for t in range(trials)
    ]
    return _run_suite("lemma1", instances, spec)


def verify_gradient(
    trials: int = 30,
    seed: int = 0,
    spec: QuadratureSpec = QuadratureSpec(),
    Q: ConvexPolygon | None = None,
    density: GaussianMixtureDensity | None = None,
) -> VerificationResult:
    """The closed-form gradient of H_g against central differences."""
    Q = Q if Q is not None else default_region()
    density = density if density is not None else phi2().with_relative_floor()
    rng = np.random.default_rng(seed)
    instances = []
    for _ in range(trials):
        n = int(rng.integers(3, 9))
        instances.append(
            GradientInstance(
                _interior_configuration(n, Q, rng, 1e-2), Q, density, int(rng.integers(n))
            )
        )
    return _run_suite("gradient", instances, spec)


def verify_conditions(
    trials: int = 2,
    seed: int = 0,
    spec: QuadratureSpec = QuadratureSpec(),
    samples: int = 100_000,
    fov_radius: float = 0.5,
    region_diameter: float = 1.5 * math.sqrt(2),
) -> VerificationResult:
    """Monotonicity and symmetry of h and g on random triples."""
    rng = np.random.default_rng(seed)
    kinds = [SensorKind.PHOTOGRAMMETRY, SensorKind.AUXILIARY]
    instances = [
        ConditionsInstance(
            kinds[t % 2], fov_radius, region_diameter, samples, int(rng.integers(2**31))
        )
        for t in range(trials)
    ]
    return _run_suite("conditions", instances, spec)


SUITES: dict[str, Callable[..., VerificationResult]] = {
    "bounds": verify_bounds,
    "lemma1": verify_optimality,
    "gradient": verify_gradient,
    "conditions": verify_conditions,
}


def load_instance(filename_or_stream: str | PathLike | IO[str]) -> VerificationInstance:
    inst = _structure(load_json(filename_or_stream))
    if not isinstance(inst, VerificationInstance):
        raise ValueError("file does not hold a verification instance.")
    return inst


def replay(
    instance_path: str | PathLike | IO[str], spec: QuadratureSpec = QuadratureSpec()
) -> tuple[VerificationInstance, CheckOutcome]:
    """Re-checks a saved instance."""
    inst = load_instance(instance_path)
    return inst, inst.check(spec)
