"""
The distributed additive-centroid controller.

Each agent i moves toward the mass-weighted average of the centroids of the pair cells
it belongs to, u_i = −k (p_i − C̄_i), which follows the negative gradient of the
auxiliary cost H_g.
"""

from __future__ import annotations

import math
from typing import Any, Mapping

import attrs
import numpy as np
from numpy.typing import NDArray

from .cost import SensorKind, auxiliary_cost, photogrammetry_cost
from .density import GaussianMixtureDensity
from .geometry import (
    ConvexPolygon,
    GeometryError,
    OrderTwoPartition,
    PairKey,
    order_two_cells_of,
    order_two_voronoi,
    polygon_diameter,
    positions_of,
)
from .logging import log
from .quadrature import QuadratureSpec, cell_moments
from .util import parallel_map

__all__ = [
    "ControllerParams",
    "ControlInput",
    "CellMoments",
    "MasslessAgentError",
    "StepExitsRegionError",
    "additive_centroid",
    "control_input",
    "control_inputs",
    "auxiliary_gradient",
    "fd_gradient",
]


class MasslessAgentError(ValueError):
    pass


class StepExitsRegionError(GeometryError):
    pass


def _positive(instance: Any, attribute: Any, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{attribute.name} must be positive, not {value}.")


def _nonnegative(instance: Any, attribute: Any, value: float) -> None:
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{attribute.name} must be non-negative, not {value}.")


@attrs.define(frozen=True)
class ControllerParams:
    gain: float = attrs.field(default=1.0, converter=float, validator=_positive)
    mass_floor: float = attrs.field(default=1e-12, converter=float, validator=_nonnegative)


def _as_input(u: Any) -> NDArray[np.float64]:
    arr = np.array(u, dtype=float).reshape(2)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"control input must be finite, not {arr}.")
    return arr


@attrs.define(frozen=True)
class ControlInput:
    u: NDArray[np.float64] = attrs.field(converter=_as_input, eq=attrs.cmp_using(eq=np.array_equal))

    @property
    def norm(self) -> float:
        return float(np.hypot(*self.u))

    @classmethod
    def zero(cls) -> ControlInput:
        return cls((0.0, 0.0))


@attrs.define(frozen=True)
class CellMoments:
    """Mass and first moment ∫ q φ of each non-empty cell of one partition."""

    mass: Mapping[PairKey, float]
    first_moment: Mapping[PairKey, NDArray[np.float64]]

    @classmethod
    def compute(
        cls,
        cells: Mapping[PairKey, ConvexPolygon],
        density: GaussianMixtureDensity,
        spec: QuadratureSpec = QuadratureSpec(),
    ) -> CellMoments:
        items = [(k, c) for k, c in cells.items() if not c.is_empty]
        results = parallel_map(lambda kc: cell_moments(kc[1], density, spec), items)
        mass = {}
        first = {}
        for (k, _), (m, c) in zip(items, results):
            mass[k] = m
            first[k] = c * m if c is not None else np.zeros(2)
        return cls(mass, first)

    def agent_mass(self, i: int) -> float:
        return math.fsum(m for k, m in self.mass.items() if k.contains(i))

    def agent_centroid(self, i: int, mass_floor: float = 1e-12) -> NDArray[np.float64]:
        """C̄_i = Σ C·M / Σ M over the cells containing i."""
        m = self.agent_mass(i)
        if m <= mass_floor:
            raise MasslessAgentError(f"massless agent: agent {i} has cell mass {m:.3g}.")
        keys = [k for k in self.first_moment if k.contains(i)]
        moment = np.array(
            [
                math.fsum(self.first_moment[k][0] for k in keys),
                math.fsum(self.first_moment[k][1] for k in keys),
            ]
        )
        return moment / m


def additive_centroid(
    i: int,
    partition: OrderTwoPartition,
    density: GaussianMixtureDensity,
    spec: QuadratureSpec = QuadratureSpec(),
    mass_floor: float = 1e-12,
) -> NDArray[np.float64]:
    """The mass-weighted mean of the centroids of the cells containing agent i.

    Raises
    ------
    MasslessAgentError
        if those cells have no mass.
    """
    return CellMoments.compute(partition.cells_of(i), density, spec).agent_centroid(i, mass_floor)


def _input_from(
    i: int, p: NDArray, moments: CellMoments, params: ControllerParams
) -> ControlInput:
    try:
        c = moments.agent_centroid(i, params.mass_floor)
    except MasslessAgentError as err:
        log.warning("Holding agent %d in place: %s", i, err)
        return ControlInput.zero()
    return ControlInput(-params.gain * (p[i] - c))


def control_input(
    i: int,
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    params: ControllerParams = ControllerParams(),
    spec: QuadratureSpec = QuadratureSpec(),
) -> ControlInput:
    """u_i = −k (p_i − C̄_i), computed from agent i's own cells only.

    A massless agent gets a zero input, with a warning.
    """
    p = positions_of(P)
    moments = CellMoments.compute(order_two_cells_of(i, p, Q), density, spec)
    return _input_from(i, p, moments, params)


def control_inputs(
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    params: ControllerParams = ControllerParams(),
    spec: QuadratureSpec = QuadratureSpec(),
    partition: OrderTwoPartition | None = None,
) -> list[ControlInput]:
    """Every agent's input from one shared partition, integrating each cell once."""
    if partition is None:
        partition = order_two_voronoi(P, Q)
    moments = CellMoments.compute(partition.cells, density, spec)
    return [_input_from(i, partition.positions, moments, params) for i in range(partition.n)]


def auxiliary_gradient(
    i: int,
    partition: OrderTwoPartition,
    density: GaussianMixtureDensity,
    spec: QuadratureSpec = QuadratureSpec(),
) -> NDArray[np.float64]:
    """∂H_g/∂p_i = 2 M_i (p_i − C̄_i); zero for a massless agent."""
    moments = CellMoments.compute(partition.cells_of(i), density, spec)
    m = moments.agent_mass(i)
    if m <= 0:
        return np.zeros(2)
    return 2 * m * (partition.positions[i] - moments.agent_centroid(i, mass_floor=0.0))


def fd_gradient(
    kind: SensorKind | str,
    P: Any,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    i: int,
    h_step: float | None = None,
    spec: QuadratureSpec = QuadratureSpec(),
    fov_radius: float = 0.5,
) -> NDArray[np.float64]:
    """Central-difference gradient of P ↦ H(P, V(P)²) with respect to p_i.

    The partition is rebuilt for every evaluation.  The default step is 1e-5·diam(Q).

    Raises
    ------
    ValueError
        if `h_step` is given and not positive.
    StepExitsRegionError
        if a perturbed position of agent i leaves Q.
    """
    kind = SensorKind(kind)
    p = positions_of(P)
    h = h_step if h_step is not None else 1e-5 * polygon_diameter(Q)
    if not h > 0:
        raise ValueError(f"h_step must be positive, not {h_step}.")

    def H(pp: NDArray) -> float:
        if kind is SensorKind.AUXILIARY:
            return auxiliary_cost(pp, Q, density, spec)
        return photogrammetry_cost(pp, Q, density, fov_radius, spec)

    grad = np.zeros(2)
    for axis in range(2):
        plus = p.copy()
        minus = p.copy()
        plus[i, axis] += h
        minus[i, axis] -= h
        if not (Q.contains(plus[i]) and Q.contains(minus[i])):
            raise StepExitsRegionError(
                f"step exits region: agent {i} at {tuple(p[i])} with step {h:.3g}."
            )
        grad[axis] = (H(plus) - H(minus)) / (2 * h)
    return grad
