import logging

import numpy as np
import pytest

from photocov.controller import (
    CellMoments,
    ControlInput,
    ControllerParams,
    MasslessAgentError,
    StepExitsRegionError,
    additive_centroid,
    auxiliary_gradient,
    control_input,
    control_inputs,
    fd_gradient,
)
from photocov.cost import SensorKind, auxiliary_cost
from photocov.density import GaussianMixtureDensity, phi1, phi2
from photocov.geometry import ConvexPolygon, cell_neighbors, order_two_voronoi, pair_cell
from photocov.quadrature import QuadratureSpec


@pytest.fixture
def square():
    return ConvexPolygon.rectangle(0.0, 0.0, 1.5, 1.5)


@pytest.fixture
def density():
    return phi2().with_relative_floor()


@pytest.fixture
def tight():
    return QuadratureSpec(rel_tol=1e-10, max_subdivisions=8)


@pytest.fixture
def positions():
    return np.array([[0.3, 0.4], [1.1, 0.5], [0.7, 1.2], [0.5, 0.9], [1.2, 1.1]])


def test_params_validation():
    with pytest.raises(ValueError):
        ControllerParams(gain=0.0)
    with pytest.raises(ValueError):
        ControlInput((np.nan, 0.0))
    assert ControlInput((3.0, 4.0)).norm == 5.0
    assert ControlInput.zero().norm == 0.0


def test_input_points_to_additive_centroid(square, density, positions):
    part = order_two_voronoi(positions, square)
    params = ControllerParams(gain=2.0)
    for i in range(len(positions)):
        c = additive_centroid(i, part, density)
        u = control_input(i, positions, square, density, params)
        np.testing.assert_allclose(u.u, 2.0 * (c - positions[i]), atol=1e-12)
        assert square.contains(c)


def test_own_cells_match_shared_partition(square, density, positions):
    shared = control_inputs(positions, square, density)
    for i, u in enumerate(shared):
        own = control_input(i, positions, square, density)
        np.testing.assert_allclose(own.u, u.u, rtol=1e-12, atol=1e-14)


def test_neighbors_suffice(square, density, positions):
    part = order_two_voronoi(positions, square)
    moments = CellMoments.compute(part.cells, density)
    for i in range(len(positions)):
        neighbors = cell_neighbors(i, part)
        local = {
            k: pair_cell(k.i, k.j, positions, square, competitors=neighbors)
            for k in part.cells_of(i)
        }
        local_moments = CellMoments.compute(local, density)
        np.testing.assert_allclose(
            local_moments.agent_centroid(i), moments.agent_centroid(i), rtol=1e-9
        )


def test_massless_agents_hold(square, positions, caplog):
    zero = GaussianMixtureDensity([], 0.0)
    with caplog.at_level(logging.WARNING, logger="photocov"):
        inputs = control_inputs(positions, square, zero)
    assert all(u.norm == 0.0 for u in inputs)
    assert "Holding agent" in caplog.text
    part = order_two_voronoi(positions, square)
    with pytest.raises(MasslessAgentError, match="massless agent"):
        additive_centroid(0, part, zero)


@pytest.mark.parametrize("agent", [0, 3])
def test_gradient_matches_differences(square, density, positions, tight, agent):
    part = order_two_voronoi(positions, square)
    exact = auxiliary_gradient(agent, part, density, tight)
    numeric = fd_gradient(SensorKind.AUXILIARY, positions, square, density, agent, spec=tight)
    cos = exact @ numeric / (np.linalg.norm(exact) * np.linalg.norm(numeric))
    assert np.arccos(min(cos, 1.0)) < 1e-2
    assert np.linalg.norm(numeric) == pytest.approx(np.linalg.norm(exact), rel=1e-3)


def test_input_is_a_descent_direction(square, density, positions, tight):
    inputs = control_inputs(positions, square, density)
    moved = positions + 0.01 * np.array([u.u for u in inputs])
    assert auxiliary_cost(moved, square, density, tight) < auxiliary_cost(
        positions, square, density, tight
    )


def test_isolated_agent_has_no_photogrammetry_gradient(square, tight):
    density = phi1().with_relative_floor()
    # agent 2 is more than 2r from both others, so it shares no field of view
    P = np.array([[0.4, 0.4], [0.7, 0.45], [1.35, 1.35]])
    grad_h = fd_gradient(SensorKind.PHOTOGRAMMETRY, P, square, density, 2, spec=tight)
    grad_g = fd_gradient(SensorKind.AUXILIARY, P, square, density, 2, spec=tight)
    assert np.linalg.norm(grad_h) < 1e-6
    assert np.linalg.norm(grad_g) > 1e-3


def test_step_exits_region(square, density):
    P = np.array([[0.0, 0.5], [1.0, 1.0], [0.5, 1.2]])
    with pytest.raises(StepExitsRegionError, match="step exits region"):
        fd_gradient("auxiliary", P, square, density, 0)


@pytest.mark.parametrize("h_step", [0.0, -1e-4, float("nan")])
def test_step_must_be_positive(square, density, positions, h_step):
    with pytest.raises(ValueError, match="h_step must be positive"):
        fd_gradient("auxiliary", positions, square, density, 0, h_step=h_step)


@pytest.mark.slow
def test_input_descends_over_random_configurations(square, density, tight):
    rng = np.random.default_rng(0)
    for _ in range(50):
        P = rng.uniform(0.05, 1.45, (5, 2))
        u = np.array([v.u for v in control_inputs(P, square, density)])
        largest = np.linalg.norm(u, axis=1).max()
        if largest == 0:
            continue
        moved = P + (1e-3 / largest) * u
        before = auxiliary_cost(P, square, density, tight)
        assert auxiliary_cost(moved, square, density, tight) <= before * (1 + 1e-8)
