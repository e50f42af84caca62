import numpy as np
import pandas as pd
import pytest

from photocov.density import GaussianMixtureDensity, phi1
from photocov.experiments import default_region
from photocov.geometry import ConvexPolygon, GeometryError
from photocov.simulator import (
    AgentConfiguration,
    SimulationConfig,
    SimulationError,
    grid_configuration,
    random_configuration,
    run,
    step,
)


@pytest.fixture
def square():
    return default_region()


@pytest.fixture
def density():
    return phi1().with_relative_floor()


@pytest.fixture
def short_config():
    return SimulationConfig(dt=0.2, max_steps=60, cost_record_stride=5)


def test_config_validation():
    with pytest.raises(ValueError, match="unstable step"):
        SimulationConfig(dt=0.5, gain=2.0)
    with pytest.raises(ValueError):
        SimulationConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(cost_record_stride=0)
    SimulationConfig(dt=0.05, gain=19.0)


def test_grid_configuration_16(square):
    g = grid_configuration(16, square)
    assert g.n == 16
    coords = {0.1875, 0.5625, 0.9375, 1.3125}
    assert {(round(x, 12), round(y, 12)) for x, y in g.positions} == {
        (x, y) for x in coords for y in coords
    }


def test_grid_configuration_partial_row(square):
    g = grid_configuration(5, square)
    assert g.n == 5
    np.testing.assert_allclose(g.positions[-1], [0.75, 1.25])
    np.testing.assert_allclose(g.positions[0], [0.375, 0.25])


def test_grid_configuration_needs_rectangle():
    tri = ConvexPolygon([[0, 0], [1, 0], [0, 1]])
    with pytest.raises(GeometryError, match="requires rectangle"):
        grid_configuration(4, tri)


def test_random_configuration(square):
    a = random_configuration(12, square, seed=4)
    assert a == random_configuration(12, square, seed=4)
    assert a != random_configuration(12, square, seed=5)
    assert a.n == 12
    assert square.contains(a.positions).all()
    assert a.min_separation() > 0
    a.validate(square)


def test_agent_configuration():
    a = AgentConfiguration([[0.1, 0.2], [0.4, 0.6]])
    assert len(a) == 2
    assert a.min_separation() == pytest.approx(0.5)
    b = a.with_position(1, (0.1, 0.3))
    assert b.min_separation() == pytest.approx(0.1)
    assert a.positions[1, 1] == 0.6


def test_step_moves_toward_centroids(square, density):
    start = random_configuration(4, square, seed=1)
    nxt = step(start, square, density, SimulationConfig(dt=0.2))
    assert nxt.n == 4
    assert square.contains(nxt.positions).all()
    assert not np.array_equal(nxt.positions, start.positions)


def test_zero_steps(square, density):
    start = random_configuration(3, square, seed=0)
    trace = run(start, square, density, SimulationConfig(max_steps=0))
    assert trace.steps == 0
    assert not trace.converged
    assert trace.positions.shape == (1, 3, 2)
    assert len(trace.records) == 1
    assert trace.records[0].step == 0


def test_run_decreases_auxiliary_cost(square, density, short_config):
    start = random_configuration(4, square, seed=2)
    trace = run(start, square, density, short_config)
    g = trace.costs_g()
    assert np.all(np.diff(g) <= 1e-8 * g[:-1])
    assert trace.records[-1].step == trace.steps
    assert [r.step for r in trace.records[:3]] == [0, 5, 10]
    assert trace.positions.shape == (trace.steps + 1, 4, 2)
    for p in trace.positions:
        assert square.contains(p).all()
    assert np.all(trace.costs_g() <= trace.costs_h())


def test_run_is_deterministic(square, density, short_config):
    start = random_configuration(3, square, seed=3)
    a = run(start, square, density, short_config)
    b = run(start, square, density, short_config)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.records == b.records


def test_trace_tables(tmp_path, square, density, short_config):
    trace = run(random_configuration(3, square, seed=0), square, density, short_config)
    trace_path, costs_path = trace.write_csv(tmp_path / "out")
    df = pd.read_csv(trace_path)
    assert list(df.columns) == ["step", "time", "agent", "x", "y", "u_norm"]
    assert len(df) == 3 * (trace.steps + 1)
    costs = pd.read_csv(costs_path)
    assert list(costs.columns) == ["step", "time", "H_g", "H_h", "max_u"]
    assert len(costs) == len(trace.records)
    assert costs["H_g"].iloc[0] == pytest.approx(trace.records[0].cost_g, rel=1e-11)


def test_collapsing_agents_raise(square, density):
    # with two agents there is one cell, so both chase the same centroid
    start = AgentConfiguration([[0.5, 0.5], [1.0, 1.0]])
    config = SimulationConfig(dt=0.99, max_steps=20, convergence_eps=1e-15, cost_record_stride=1000)
    with pytest.raises(SimulationError, match="degenerate step"):
        run(start, square, density, config)


def test_invalid_start(square, density):
    with pytest.raises(GeometryError, match="requires n ≥ 2"):
        run(AgentConfiguration([[0.5, 0.5]]), square, density)


@pytest.mark.slow
def test_phi1_scenario_beats_grid(square, density):
    from photocov.cost import photogrammetry_cost

    config = SimulationConfig(cost_record_stride=50)
    start = random_configuration(9, square, seed=0)
    trace = run(start, square, density, config)
    assert trace.converged
    grid_h = photogrammetry_cost(
        grid_configuration(9, square), square, density, 0.5, config.cost_quadrature
    )
    h = trace.costs_h()
    assert h[-1] < h[0]
    assert h[-1] < grid_h
    g = trace.costs_g()
    assert np.all(g <= h)
    assert np.all(h <= 36 * g * (1 + 1e-9))


@pytest.mark.slow
def test_phi2_scenario_beats_grid(square):
    from photocov.cost import photogrammetry_cost
    from photocov.density import phi2
    from photocov.geometry import polygon_diameter
    from photocov.quadrature import cell_mass

    density = phi2().with_relative_floor()
    config = SimulationConfig(cost_record_stride=50)
    trace = run(random_configuration(16, square, seed=0), square, density, config)
    assert trace.converged
    assert trace.steps <= 5000
    g = trace.costs_g()
    assert np.all(np.diff(g) <= 1e-8 * g[:-1])
    grid_h = photogrammetry_cost(
        grid_configuration(16, square), square, density, 0.5, config.cost_quadrature
    )
    worst = 2 * polygon_diameter(square) ** 2 * cell_mass(square, density)
    h = trace.costs_h()
    assert h[-1] < grid_h < worst
    assert h[0] > h[-1]


@pytest.mark.slow
def test_uniform_density_settles_alike_across_seeds(square):
    uniform = GaussianMixtureDensity([], 1.0)
    config = SimulationConfig(cost_record_stride=100)
    finals = []
    for seed in range(5):
        trace = run(random_configuration(4, square, seed=seed), square, uniform, config)
        assert trace.converged
        finals.append(trace.costs_g()[-1])
    assert max(finals) - min(finals) <= 1e-3 * min(finals)
