import json
import math

import numpy as np
import pytest

from photocov.density import GaussianMixtureDensity, phi1
from photocov.scenario import ScenarioError, bundled_scenarios, load_scenario, parse_scenario


@pytest.fixture
def base():
    return {
        "region": {"rectangle": [0, 0, 1.5, 1.5]},
        "density": {"preset": "phi2"},
        "agents": {"count": 5, "init": "random"},
        "sensor": {"fov_radius": "50 cm"},
        "simulation": {"dt": "0.05 s", "gain": "1 / s", "max_steps": 100, "seed": 3},
    }


def test_bundled_scenarios():
    assert bundled_scenarios() == ["phi1_n16.json", "phi1_n9.json", "phi2_n16.json", "phi2_n20.json"]
    sc = load_scenario("phi1_n9")
    assert sc.name == "phi1_n9"
    assert sc.agent_count == 9
    assert sc.fov_radius == pytest.approx(0.5)
    assert sc.simulation.dt == pytest.approx(0.05)
    assert sc.simulation.gain == pytest.approx(1.0)
    assert sc.simulation.convergence_eps == pytest.approx(1e-4)
    assert sc.simulation.cost_record_stride == 10
    assert sc.density.floor == pytest.approx(0.4)
    assert sc.region.area == pytest.approx(2.25)
    assert load_scenario("phi2_n20.json").agent_count == 20


def test_parse_with_units(base):
    sc = parse_scenario(base)
    assert sc.fov_radius == pytest.approx(0.5)
    assert sc.seed == 3
    assert sc.init == "random"
    assert sc.output_directory is None
    first = sc.initial_configuration()
    assert first.n == 5
    np.testing.assert_array_equal(first.positions, sc.initial_configuration().positions)
    assert sc.with_seed(4).seed == 4
    assert sc.with_seed(4).initial_configuration() != first
    # default relative floor
    assert sc.density.floor == pytest.approx(0.35)


def test_bare_numbers_are_si(base):
    base["sensor"]["fov_radius"] = 0.25
    base["simulation"]["dt"] = 0.1
    sc = parse_scenario(base)
    assert sc.fov_radius == 0.25
    assert sc.simulation.dt == 0.1


@pytest.mark.parametrize(
    ["path", "value", "message"],
    [
        (("sensor", "fov_radius"), "0.05 s", "not a valid quantity"),
        (("simulation", "dt"), "3 m", "not a valid quantity"),
        (("simulation", "dt"), 1.5, "unstable step"),
        (("simulation", "max_steps"), 2.5, "must be an integer"),
        (("agents", "count"), 1, "requires n ≥ 2"),
        (("agents", "init"), "spiral", "agents.init"),
        (("density", "preset"), "phi9", "unknown density preset"),
        (("sensor", "fov_radius"), -0.5, "non-negative"),
    ],
)
def test_invalid_values(base, path, value, message):
    base[path[0]][path[1]] = value
    with pytest.raises(ScenarioError, match=message):
        parse_scenario(base)


@pytest.mark.parametrize("section", ["scenario", "region", "density", "agents", "sensor", "simulation"])
def test_unknown_keys(base, section):
    if section == "scenario":
        base["extra"] = 1
    else:
        base[section]["extra"] = 1
    with pytest.raises(ScenarioError, match="unknown key"):
        parse_scenario(base)


def test_missing_sections(base):
    del base["agents"]
    with pytest.raises(ScenarioError, match="missing key"):
        parse_scenario(base)


def test_density_sources(base, tmp_path):
    base["density"] = {"preset": "phi1", "components": []}
    with pytest.raises(ScenarioError, match="exactly one"):
        parse_scenario(base)

    base["density"] = {"components": []}
    with pytest.raises(ScenarioError, match="needs a floor"):
        parse_scenario(base)

    base["density"] = {"components": [], "floor": 2.0}
    assert parse_scenario(base).density == GaussianMixtureDensity([], 2.0)

    base["density"] = {
        "components": [{"amplitude": 10, "center": [0.5, 0.5], "sigma": 0.2}],
        "relative_floor": 0.01,
    }
    assert parse_scenario(base).density.floor == pytest.approx(0.1)

    phi1().with_floor(1.0).save(tmp_path / "fitted.json")
    base["density"] = {"path": "fitted.json"}
    assert parse_scenario(base, tmp_path).density.floor == 1.0
    base["density"] = {"path": "missing.json"}
    with pytest.raises(ScenarioError, match="density file not found"):
        parse_scenario(base, tmp_path)


def test_explicit_positions(base):
    base["agents"] = {"init": "explicit", "positions": [[0.2, 0.2], ["80 cm", "0.9 m"]]}
    sc = parse_scenario(base)
    assert sc.agent_count == 2
    np.testing.assert_allclose(sc.initial_configuration().positions, [[0.2, 0.2], [0.8, 0.9]])

    base["agents"] = {"count": 3, "positions": [[0.2, 0.2], [0.8, 0.9]]}
    with pytest.raises(ScenarioError, match="2 positions"):
        parse_scenario(base)

    base["agents"] = {"positions": [[0.2, 0.2], [1.8, 0.9]]}
    with pytest.raises(ScenarioError, match="agent outside region"):
        parse_scenario(base)


def test_polygon_region(base):
    base["region"] = {"polygon": [[0, 0], [2, 0], [1, 1.5]]}
    sc = parse_scenario(base)
    assert sc.region.area == pytest.approx(1.5)
    assert sc.region.contains(sc.initial_configuration().positions).all()

    base["agents"]["init"] = "grid"
    with pytest.raises(ScenarioError, match="requires rectangle"):
        parse_scenario(base)

    base["region"] = {"polygon": [[0, 0], [1, 0], [2, 0]]}
    with pytest.raises(ScenarioError, match="convex polygon"):
        parse_scenario(base)


def test_grid_init(base):
    base["agents"] = {"count": 4, "init": "grid"}
    sc = parse_scenario(base)
    np.testing.assert_allclose(sc.initial_configuration().positions[0], [0.375, 0.375])


def test_scenario_files(base, tmp_path):
    base["output"] = {"directory": "runs/a", "stride": 5}
    (tmp_path / "mine.json").write_text(json.dumps(base))
    sc = load_scenario(tmp_path / "mine.json")
    assert sc.name == "mine"
    assert str(sc.output_directory) == "runs/a"
    assert sc.simulation.cost_record_stride == 5

    with pytest.raises(ScenarioError, match="scenario file not found"):
        load_scenario(tmp_path / "nothing.json")
    with pytest.raises(ScenarioError, match="scenario file not found"):
        load_scenario("no_such_scenario")

    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(tmp_path / "broken.json")
