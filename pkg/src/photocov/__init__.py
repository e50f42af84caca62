from .controller import (
    ControlInput,
    ControllerParams,
    additive_centroid,
    control_input,
    control_inputs,
)
from .cost import (
    AuxiliarySensor,
    PhotogrammetrySensor,
    SensorKind,
    auxiliary_cost,
    bound_factors,
    coverage_cost,
    photogrammetry_cost,
    sensor_g,
    sensor_h,
)
from .density import (
    FeatureMeasurement,
    GaussianComponent,
    GaussianMixtureDensity,
    fit_mixture,
    phi1,
    phi2,
)
from .experiments import compare_configurations, oracle_cost
from .geometry import (
    ConvexPolygon,
    GeometryError,
    PairKey,
    Point2,
    order_two_voronoi,
)
from .quadrature import QuadratureSpec, cell_centroid, cell_mass
from .scenario import Scenario, load_scenario
from .simulator import (
    AgentConfiguration,
    SimulationConfig,
    grid_configuration,
    random_configuration,
    run,
)
from .units import Q_, ureg

from . import printing

__all__ = [
    "Q_",
    "ureg",
    "Point2",
    "ConvexPolygon",
    "PairKey",
    "GeometryError",
    "order_two_voronoi",
    "GaussianComponent",
    "GaussianMixtureDensity",
    "FeatureMeasurement",
    "fit_mixture",
    "phi1",
    "phi2",
    "QuadratureSpec",
    "cell_mass",
    "cell_centroid",
    "SensorKind",
    "AuxiliarySensor",
    "PhotogrammetrySensor",
    "sensor_g",
    "sensor_h",
    "coverage_cost",
    "photogrammetry_cost",
    "auxiliary_cost",
    "bound_factors",
    "ControllerParams",
    "ControlInput",
    "additive_centroid",
    "control_input",
    "control_inputs",
    "AgentConfiguration",
    "SimulationConfig",
    "run",
    "random_configuration",
    "grid_configuration",
    "oracle_cost",
    "compare_configurations",
    "Scenario",
    "load_scenario",
    "printing",
]

try:
    from ._version import __version__
except ImportError:  # pragma: no cover
    __version__ = "unknown"
