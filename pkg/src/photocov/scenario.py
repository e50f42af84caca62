"""
JSON scenario files.

A scenario names the region, the feature density, the agents' starting configuration,
the sensor, and the simulation settings::

    {
      "region": {"rectangle": [0, 0, 1.5, 1.5]},
      "density": {"preset": "phi1"},
      "agents": {"count": 9, "init": "random"},
      "sensor": {"fov_radius": "50 cm"},
      "simulation": {"dt": 0.05, "gain": "1 / s", "max_steps": 5000,
                     "convergence_eps": 1e-4, "seed": 0},
      "output": {"directory": "out/phi1_n9", "stride": 1}
    }

Unknown keys are rejected.  Bare scenario names that are not existing files are looked
up among the scenarios bundled with the package.
"""

from __future__ import annotations

import json
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import Any, Mapping

import attrs

from .density import DEFAULT_RELATIVE_FLOOR, PRESETS, GaussianMixtureDensity
from .geometry import ConvexPolygon, GeometryError, validate_configuration
from .simulator import (
    AgentConfiguration,
    SimulationConfig,
    grid_configuration,
    random_configuration,
)
from .units import parse_length, parse_rate, parse_speed, parse_time

__all__ = ["ScenarioError", "Scenario", "load_scenario", "parse_scenario", "bundled_scenarios"]

INIT_KINDS = ("random", "grid", "explicit")


class ScenarioError(ValueError):
    pass


def _check_keys(d: Any, where: str, allowed: set[str], required: set[str] = set()) -> Mapping:
    if not isinstance(d, Mapping):
        raise ScenarioError(f"{where} must be an object, not {type(d).__name__}.")
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}.")
    missing = required - set(d)
    if missing:
        raise ScenarioError(f"missing key(s) in {where}: {', '.join(sorted(missing))}.")
    return d


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"{where} must be an integer, not {v!r}.")
    return v


def _list(v: Any, where: str) -> list:
    if not isinstance(v, list):
        raise ScenarioError(f"{where} must be a list, not {v!r}.")
    return v


def _quantity(parser: Any, v: Any, where: str) -> float:
    try:
        return parser(v)
    except (ValueError, TypeError) as err:
        raise ScenarioError(f"{where}: {err}") from err


def _point(v: Any, where: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ScenarioError(f"{where} must be an [x, y] pair, not {v!r}.")
    return (_quantity(parse_length, v[0], where), _quantity(parse_length, v[1], where))


def _parse_region(d: Any) -> ConvexPolygon:
    d = _check_keys(d, "region", {"rectangle", "polygon"})
    if len(d) != 1:
        raise ScenarioError("region needs exactly one of rectangle or polygon.")
    try:
        if "rectangle" in d:
            r = d["rectangle"]
            if not isinstance(r, list) or len(r) != 4:
                raise ScenarioError("region.rectangle must be [x0, y0, x1, y1].")
            return ConvexPolygon.rectangle(
                *(_quantity(parse_length, v, "region.rectangle") for v in r)
            )
        pts = [_point(v, "region.polygon vertex") for v in _list(d["polygon"], "region.polygon")]
        poly = ConvexPolygon(pts)
    except GeometryError as err:
        raise ScenarioError(f"region: {err}") from err
    if len(poly) < 3 or poly.area <= 0 or not poly.is_convex():
        raise ScenarioError("region.polygon must be a convex polygon with positive area.")
    return poly


def _parse_density(d: Any, base_dir: Path) -> GaussianMixtureDensity:
    d = _check_keys(
        d, "density", {"components", "floor", "relative_floor", "path", "preset"}
    )
    sources = [k for k in ("components", "path", "preset") if k in d]
    if len(sources) != 1:
        raise ScenarioError("density needs exactly one of components, path or preset.")
    if "floor" in d and "relative_floor" in d:
        raise ScenarioError("density may give floor or relative_floor, not both.")

    try:
        if "preset" in d:
            if d["preset"] not in PRESETS:
                raise ScenarioError(
                    f"unknown density preset {d['preset']!r} (known: {', '.join(PRESETS)})."
                )
            density = PRESETS[d["preset"]]()
        elif "path" in d:
            p = base_dir / d["path"]
            if not p.exists():
                raise ScenarioError(f"density file not found: {p}")
            density = GaussianMixtureDensity.load(p)
        else:
            density = GaussianMixtureDensity(d["components"], 0.0)

        if "floor" in d:
            return density.with_floor(_quantity(float, d["floor"], "density.floor"))
        if "relative_floor" in d:
            return density.with_relative_floor(float(d["relative_floor"]))
        if "path" in d and density.floor > 0:
            return density
        if not density.components:
            raise ScenarioError("density with no components needs a floor.")
        return density.with_relative_floor(DEFAULT_RELATIVE_FLOOR)
    except (ValueError, TypeError, json.JSONDecodeError) as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError(f"density: {err}") from err


@attrs.define(frozen=True)
class Scenario:
    """A parsed scenario file."""

    region: ConvexPolygon
    density: GaussianMixtureDensity
    agent_count: int
    init: str
    fov_radius: float
    simulation: SimulationConfig
    positions: AgentConfiguration | None = None
    output_directory: Path | None = None
    name: str = "scenario"

    @property
    def seed(self) -> int:
        return self.simulation.seed

    def with_seed(self, seed: int) -> Scenario:
        return attrs.evolve(self, simulation=attrs.evolve(self.simulation, seed=seed))

    def initial_configuration(self) -> AgentConfiguration:
        if self.init == "explicit":
            assert self.positions is not None
            return self.positions
        if self.init == "grid":
            return grid_configuration(self.agent_count, self.region)
        return random_configuration(self.agent_count, self.region, self.seed)


def parse_scenario(data: Any, base_dir: str | PathLike = ".", name: str = "scenario") -> Scenario:
    """Validates a decoded scenario object; relative paths resolve against `base_dir`."""
    data = _check_keys(
        data,
        "scenario",
        {"region", "density", "agents", "sensor", "simulation", "output"},
        {"region", "density", "agents"},
    )
    region = _parse_region(data["region"])
    density = _parse_density(data["density"], Path(base_dir))

    agents = _check_keys(data["agents"], "agents", {"count", "init", "positions"})
    init = agents.get("init", "explicit" if "positions" in agents else "random")
    if init not in INIT_KINDS:
        raise ScenarioError(f"agents.init must be one of {', '.join(INIT_KINDS)}, not {init!r}.")
    positions = None
    if init == "explicit":
        if "positions" not in agents:
            raise ScenarioError("agents.positions is required for explicit init.")
        positions = AgentConfiguration(
            [_point(v, "agents.positions") for v in _list(agents["positions"], "agents.positions")]
        )
        count = _int(agents.get("count", positions.n), "agents.count")
        if count != positions.n:
            raise ScenarioError(
                f"agents.count is {count} but {positions.n} positions are given."
            )
    else:
        if "positions" in agents:
            raise ScenarioError(f"agents.positions is only allowed for explicit init, not {init}.")
        if "count" not in agents:
            raise ScenarioError("missing key(s) in agents: count.")
        count = _int(agents["count"], "agents.count")
    if count < 2:
        raise ScenarioError(f"second-order coverage requires n ≥ 2 agents, got {count}.")
    if init == "grid" and not region.is_rectangle():
        raise ScenarioError("grid baseline requires rectangle region.")
    if positions is not None:
        try:
            validate_configuration(positions.positions, region)
        except GeometryError as err:
            raise ScenarioError(f"agents.positions: {err}") from err

    sensor = _check_keys(data.get("sensor", {}), "sensor", {"fov_radius"})
    fov_radius = _quantity(parse_length, sensor.get("fov_radius", 0.5), "sensor.fov_radius")
    if fov_radius < 0:
        raise ScenarioError(f"sensor.fov_radius must be non-negative, not {fov_radius}.")

    sim = _check_keys(
        data.get("simulation", {}),
        "simulation",
        {"dt", "gain", "max_steps", "convergence_eps", "seed"},
    )
    output = _check_keys(data.get("output", {}), "output", {"directory", "stride"})
    kwargs: dict[str, Any] = {"fov_radius": fov_radius}
    if "dt" in sim:
        kwargs["dt"] = _quantity(parse_time, sim["dt"], "simulation.dt")
    if "gain" in sim:
        kwargs["gain"] = _quantity(parse_rate, sim["gain"], "simulation.gain")
    if "convergence_eps" in sim:
        kwargs["convergence_eps"] = _quantity(
            parse_speed, sim["convergence_eps"], "simulation.convergence_eps"
        )
    if "max_steps" in sim:
        kwargs["max_steps"] = _int(sim["max_steps"], "simulation.max_steps")
    if "seed" in sim:
        kwargs["seed"] = _int(sim["seed"], "simulation.seed")
    if "stride" in output:
        kwargs["cost_record_stride"] = _int(output["stride"], "output.stride")
    try:
        simulation = SimulationConfig(**kwargs)
    except ValueError as err:
        raise ScenarioError(f"simulation: {err}") from err

    directory = output.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ScenarioError(f"output.directory must be a string, not {directory!r}.")

    return Scenario(
        region,
        density,
        count,
        init,
        fov_radius,
        simulation,
        positions,
        Path(directory) if directory is not None else None,
        name,
    )


def bundled_scenarios() -> list[str]:
    "Names of the scenarios shipped with the package."
    return sorted(
        p.name for p in resources.files("photocov").joinpath("scenarios").iterdir()
        if p.name.endswith(".json")
    )


def _resolve(path_or_name: str | PathLike) -> tuple[str, Any, Path]:
    p = Path(path_or_name)
    if p.exists():
        return p.stem, p.read_text(), p.parent
    if p.parent == Path("."):
        bundled = resources.files("photocov").joinpath("scenarios")
        for candidate in (p.name, p.name + ".json"):
            res = bundled.joinpath(candidate)
            if res.is_file():
                return Path(candidate).stem, res.read_text(), Path(".")
    raise ScenarioError(f"scenario file not found: {p}")


def load_scenario(path_or_name: str | PathLike) -> Scenario:
    """Loads a scenario file, or a bundled scenario by name (eg, ``phi1_n9``)."""
    name, text, base_dir = _resolve(path_or_name)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path_or_name}: invalid JSON: {err}") from err
    return parse_scenario(data, base_dir, name)
