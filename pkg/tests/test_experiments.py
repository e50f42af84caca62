import json

import numpy as np
import pytest

from photocov.cost import (
    AuxiliarySensor,
    PhotogrammetrySensor,
    SensorKind,
    auxiliary_cost,
    photogrammetry_cost,
)
from photocov.density import phi1, phi2
from photocov.experiments import (
    BoundsInstance,
    ConditionsInstance,
    GridOracleSpec,
    OptimalityInstance,
    compare_configurations,
    default_region,
    load_instance,
    oracle_cost,
    oracle_perturbed_partition_cost,
    replay,
    verify_bounds,
    verify_conditions,
    verify_gradient,
    verify_optimality,
)
from photocov.simulator import SimulationConfig, random_configuration


@pytest.fixture
def square():
    return default_region()


@pytest.fixture
def density():
    return phi2().with_relative_floor()


@pytest.fixture
def config6(square):
    return random_configuration(6, square, seed=11)


def test_oracle_resolution():
    with pytest.raises(ValueError, match="at least 64"):
        GridOracleSpec(resolution=10)
    assert GridOracleSpec().resolution == 1000


@pytest.mark.parametrize("kind", ["g", "h"])
def test_oracle_agrees_with_quadrature(square, density, config6, kind):
    if kind == "g":
        exact = auxiliary_cost(config6, square, density)
        sensor = AuxiliarySensor()
    else:
        exact = photogrammetry_cost(config6, square, density, 0.5)
        sensor = PhotogrammetrySensor.for_region(0.5, square)
    assert oracle_cost(config6, square, density, sensor) == pytest.approx(exact, rel=1e-2)


def test_unperturbed_oracle_is_identical(square, density, config6):
    spec = GridOracleSpec(resolution=128)
    sensor = AuxiliarySensor()
    assert oracle_perturbed_partition_cost(
        config6, square, density, sensor, 0.0, spec
    ) == oracle_cost(config6, square, density, sensor, spec)
    with pytest.raises(ValueError):
        oracle_perturbed_partition_cost(config6, square, density, sensor, 1.5, spec)


@pytest.mark.parametrize("adversarial", [False, True])
@pytest.mark.parametrize("fraction", [0.01, 0.3, 1.0])
def test_perturbed_partitions_never_cheaper(square, density, config6, adversarial, fraction):
    spec = GridOracleSpec(resolution=200, seed=5)
    for sensor in [AuxiliarySensor(), PhotogrammetrySensor.for_region(0.5, square)]:
        opt = oracle_cost(config6, square, density, sensor, spec)
        pert = oracle_perturbed_partition_cost(
            config6, square, density, sensor, fraction, spec, adversarial
        )
        assert pert >= opt
    g = AuxiliarySensor()
    assert oracle_perturbed_partition_cost(
        config6, square, density, g, fraction, spec, adversarial
    ) > oracle_cost(config6, square, density, g, spec)


def test_compare_configurations(square, tmp_path):
    density = phi1().with_relative_floor()
    sim = SimulationConfig(dt=0.2, max_steps=200, cost_record_stride=50)
    report = compare_configurations(4, square, density, 0.5, sim)
    assert [r.kind for r in report.results] == ["random", "grid", "coverage"]
    assert report.grid_layout == (2, 2)
    assert report.beta == pytest.approx(1 / 6)
    assert report.upper_factor == pytest.approx(36)
    assert report.bounds_passed
    assert report["coverage"].cost_g <= report["random"].cost_g * (1 + 1e-8)
    np.testing.assert_allclose(
        report["grid"].positions, [[0.375, 0.375], [1.125, 0.375], [0.375, 1.125], [1.125, 1.125]]
    )
    with pytest.raises(KeyError):
        report["lattice"]

    text = report.table()
    assert "coverage" in text
    assert "H_g/β²" in text

    report.save(tmp_path / "comparison.json")
    data = json.loads((tmp_path / "comparison.json").read_text())
    assert data["grid_layout"] == [2, 2]
    assert data["results"][1]["kind"] == "grid"
    assert set(data["results"][0]) == {"kind", "positions", "H_h", "H_g", "empty_cells"}


def test_verify_bounds():
    result = verify_bounds(trials=3, seed=1)
    assert result.passed
    assert 1 <= result.max_ratio <= 36
    assert result.trials == 3
    assert result.worst_margin >= 0
    assert result.violations == ()


def test_verify_optimality():
    result = verify_optimality(trials=2, resolution=100, perturbations=3)
    assert result.suite == "lemma1"
    assert result.passed
    assert result.worst_margin >= 0
    assert result.max_ratio is None


def test_optimality_checks_every_perturbation(square, density, config6):
    inst = OptimalityInstance(config6, square, density, 0.3, True, 0.5, 100, 4, perturbations=3)
    outcome = inst.check()
    assert outcome.passed
    assert "lowest perturbed" in outcome.detail
    spec = GridOracleSpec(100, 4)
    g = AuxiliarySensor()
    first = oracle_perturbed_partition_cost(config6, square, density, g, 0.3, spec, True)
    opt = oracle_cost(config6, square, density, g, spec)
    assert outcome.margin <= (first - opt) / opt


def test_verify_gradient():
    result = verify_gradient(trials=1)
    assert result.passed, result.worst_detail


def test_verify_conditions():
    result = verify_conditions(trials=2, samples=20_000)
    assert result.passed
    assert "violations" in result.worst_detail


def test_failing_instance_replays(square, density, tmp_path):
    bad = BoundsInstance(random_configuration(3, square, seed=0).positions, square, density, slack=-100.0)
    outcome = bad.check()
    assert not outcome.passed
    assert outcome.margin < 0

    bad.save(tmp_path / "violation.json")
    data = json.loads((tmp_path / "violation.json").read_text())
    assert data["class"] == "BoundsInstance"
    inst, again = replay(tmp_path / "violation.json")
    assert isinstance(inst, BoundsInstance)
    assert inst == bad
    assert not again.passed
    assert again.margin == pytest.approx(outcome.margin)


@pytest.mark.parametrize(
    "instance",
    [
        OptimalityInstance(
            [[0.2, 0.3], [1.0, 1.1], [0.7, 0.4]], default_region(), phi1(), 0.4, True, 0.5, 80, 3
        ),
        ConditionsInstance(SensorKind.PHOTOGRAMMETRY, samples=1000, seed=2),
    ],
)
def test_instances_round_trip(instance, tmp_path):
    instance.save(tmp_path / "inst.json")
    back = load_instance(tmp_path / "inst.json")
    assert back == instance
    assert back.suite == instance.suite
    assert back.check().passed


def test_load_instance_rejects_other_files(tmp_path):
    (tmp_path / "x.json").write_text('{"a": 1}')
    with pytest.raises(ValueError):
        load_instance(tmp_path / "x.json")
    (tmp_path / "y.json").write_text('{"class": "Nope"}')
    with pytest.raises(ValueError, match="Unknown class"):
        load_instance(tmp_path / "y.json")


@pytest.mark.slow
@pytest.mark.parametrize(
    ["suite", "trials"],
    [(verify_bounds, 100), (verify_optimality, 50), (verify_gradient, 30), (verify_conditions, 2)],
)
def test_suites_at_full_size(suite, trials):
    result = suite()
    assert result.trials == trials
    assert result.passed, result.worst_detail
    assert result.violations == ()


@pytest.mark.slow
def test_oracle_agrees_over_many_configurations(square, density):
    h = PhotogrammetrySensor.for_region(0.5, square)
    g = AuxiliarySensor()
    rng = np.random.default_rng(7)
    for _ in range(20):
        P = random_configuration(int(rng.integers(3, 13)), square, int(rng.integers(2**31)))
        assert oracle_cost(P, square, density, g) == pytest.approx(
            auxiliary_cost(P, square, density), rel=1e-2
        )
        assert oracle_cost(P, square, density, h) == pytest.approx(
            photogrammetry_cost(P, square, density, 0.5), rel=1e-2
        )


@pytest.mark.slow
def test_coverage_has_lowest_photogrammetry_cost():
    from photocov.scenario import load_scenario

    sc = load_scenario("phi1_n9")
    report = compare_configurations(
        sc.agent_count, sc.region, sc.density, sc.fov_radius, sc.simulation
    )
    coverage = report["coverage"].cost_h
    assert coverage < report["grid"].cost_h
    assert coverage < report["random"].cost_h
    assert report.bounds_passed
