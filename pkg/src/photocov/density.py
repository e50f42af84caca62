"""
Feature-density fields over the coverage region.

The density φ is a relative (unnormalized) count of image features per unit area,
modelled as a sum of isotropic Gaussians plus a constant floor.  Mixtures can be fit
to per-location feature counts by damped Gauss–Newton least squares.
"""

from __future__ import annotations

import math
from os import PathLike
from typing import IO, TYPE_CHECKING, Any, Iterable, Mapping, Sequence

import attrs
import numpy as np
import pandas as pd
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .geometry import ConvexPolygon, Point2
from .logging import log
from .util import dump_json, load_json

if TYPE_CHECKING:  # pragma: no cover
    from attrs import Attribute

__all__ = [
    "GaussianComponent",
    "GaussianMixtureDensity",
    "FeatureMeasurement",
    "MixtureFit",
    "FitError",
    "evaluate",
    "fit_mixture",
    "fit_mixture_detailed",
    "mixture_residual",
    "load_measurements",
    "save_measurements",
    "sample_measurements",
    "phi1",
    "phi2",
    "PRESETS",
    "DEFAULT_RELATIVE_FLOOR",
]

DEFAULT_RELATIVE_FLOOR = 1e-3
"Default floor for simulations, as a fraction of the largest amplitude."

MAX_ITERATIONS = 200
STEP_TOL = 1e-10


class FitError(ValueError):
    pass


def _positive(instance: Any, attribute: Attribute, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{attribute.name} must be positive and finite, not {value}.")


def _nonnegative(instance: Any, attribute: Attribute, value: float) -> None:
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{attribute.name} must be non-negative and finite, not {value}.")


@attrs.define(frozen=True)
class GaussianComponent:
    """An isotropic Gaussian bump, A exp(−‖q − μ‖² / (2σ²))."""

    amplitude: float = attrs.field(converter=float, validator=_positive)
    center: Point2 = attrs.field(converter=Point2.from_obj)
    sigma: float = attrs.field(converter=float, validator=_positive)

    def __call__(self, points: ArrayLike) -> Any:
        pts = np.asarray(points, dtype=float)
        r2 = np.sum((pts - self.center.as_array()) ** 2, axis=-1)
        return self.amplitude * np.exp(-r2 / (2 * self.sigma**2))

    def to_dict(self) -> dict[str, Any]:
        return {
            "amplitude": self.amplitude,
            "center": [self.center.x, self.center.y],
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GaussianComponent:
        extra = set(d) - {"amplitude", "center", "sigma"}
        if extra:
            raise ValueError(f"Unknown keys in Gaussian component: {sorted(extra)}.")
        try:
            return cls(d["amplitude"], d["center"], d["sigma"])
        except KeyError as err:
            raise ValueError(f"Gaussian component is missing {err.args[0]!r}.") from err


def _to_components(
    comps: Iterable[GaussianComponent | Mapping[str, Any]],
) -> tuple[GaussianComponent, ...]:
    return tuple(
        c if isinstance(c, GaussianComponent) else GaussianComponent.from_dict(c)
        for c in comps
    )


@attrs.define(frozen=True)
class GaussianMixtureDensity:
    """φ(q) = Σ A_i exp(−‖q − μ_i‖² / (2σ_i²)) + floor.

    With no components the density is uniform, equal to the floor.  Calling the density
    on an (..., 2) array of points returns an array of shape (...); calling it on a single
    point returns a float.
    """

    components: tuple[GaussianComponent, ...] = attrs.field(
        converter=_to_components, factory=tuple
    )
    floor: float = attrs.field(default=0.0, converter=float, validator=_nonnegative)

    def _params(self) -> tuple[NDArray, NDArray, NDArray]:
        amps = np.array([c.amplitude for c in self.components], dtype=float)
        centers = np.array([c.center.as_array() for c in self.components], dtype=float)
        sigmas = np.array([c.sigma for c in self.components], dtype=float)
        return amps, centers.reshape(-1, 2), sigmas

    def __call__(self, points: ArrayLike) -> Any:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1:] != (2,):
            raise ValueError(f"points must have shape (..., 2), not {pts.shape}.")
        amps, centers, sigmas = self._params()
        if len(amps) == 0:
            val = np.full(pts.shape[:-1], self.floor)
        else:
            r2 = np.sum((pts[..., None, :] - centers) ** 2, axis=-1)
            val = np.sum(amps * np.exp(-r2 / (2 * sigmas**2)), axis=-1) + self.floor
        if pts.ndim == 1:
            return float(val)
        return val

    def eval(self, q: Point2 | Sequence[float]) -> float:
        return float(self(np.asarray(tuple(Point2.from_obj(q)))))

    @property
    def max_amplitude(self) -> float:
        return max((c.amplitude for c in self.components), default=0.0)

    def scaled(self, c: float) -> GaussianMixtureDensity:
        """The density multiplied by `c` > 0."""
        if not c > 0:
            raise ValueError(f"scale factor must be positive, not {c}.")
        return GaussianMixtureDensity(
            [attrs.evolve(comp, amplitude=comp.amplitude * c) for comp in self.components],
            self.floor * c,
        )

    def translated(self, dx: float, dy: float) -> GaussianMixtureDensity:
        return GaussianMixtureDensity(
            [
                attrs.evolve(comp, center=Point2(comp.center.x + dx, comp.center.y + dy))
                for comp in self.components
            ],
            self.floor,
        )

    def with_floor(self, value: float) -> GaussianMixtureDensity:
        return attrs.evolve(self, floor=value)

    def with_relative_floor(
        self, fraction: float = DEFAULT_RELATIVE_FLOOR
    ) -> GaussianMixtureDensity:
        """Sets the floor to `fraction` times the largest amplitude.

        A mixture with no components is returned unchanged.
        """
        if not self.components:
            return self
        return self.with_floor(fraction * self.max_amplitude)

    def to_dict(self) -> dict[str, Any]:
        return {
            "components": [c.to_dict() for c in self.components],
            "floor": self.floor,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GaussianMixtureDensity:
        extra = set(d) - {"components", "floor"}
        if extra:
            raise ValueError(f"Unknown keys in density: {sorted(extra)}.")
        return cls(d.get("components", ()), d.get("floor", 0.0))

    def _unstructure(self) -> dict[str, Any]:
        return self.to_dict()

    @classmethod
    def _structure(cls, d: dict[str, Any]) -> GaussianMixtureDensity:
        return cls.from_dict(d)

    def save(self, filename_or_stream: str | PathLike | IO[str]) -> None:
        """Saves the density as JSON."""
        dump_json(self.to_dict(), filename_or_stream)

    @classmethod
    def load(cls, filename_or_stream: str | PathLike | IO[str]) -> GaussianMixtureDensity:
        return cls.from_dict(load_json(filename_or_stream))


def evaluate(density: GaussianMixtureDensity, q: Point2 | Sequence[float]) -> float:
    "φ(q) at a single point."
    return density.eval(q)


@attrs.define(frozen=True)
class FeatureMeasurement:
    """A count of image features observed around a location."""

    location: Point2 = attrs.field(converter=Point2.from_obj)
    feature_count: float = attrs.field(converter=float, validator=_nonnegative)


def _measurement_arrays(
    measurements: Sequence[FeatureMeasurement] | ArrayLike,
) -> tuple[NDArray, NDArray]:
    if len(measurements) > 0 and isinstance(measurements[0], FeatureMeasurement):  # type: ignore
        X = np.array([m.location.as_array() for m in measurements], dtype=float)  # type: ignore
        c = np.array([m.feature_count for m in measurements], dtype=float)  # type: ignore
        return X, c
    arr = np.asarray(measurements, dtype=float).reshape(-1, 3)
    return arr[:, :2], arr[:, 2]


def mixture_residual(
    density: GaussianMixtureDensity, measurements: Sequence[FeatureMeasurement] | ArrayLike
) -> float:
    """Σ (φ(q_m) − count_m)² over the measurements."""
    X, c = _measurement_arrays(measurements)
    r = density(X) - c
    return float(r @ r)


@attrs.define(frozen=True)
class MixtureFit:
    """The result of :func:`fit_mixture_detailed`."""

    density: GaussianMixtureDensity
    residual: float
    start_residuals: tuple[float, ...] = attrs.field(converter=tuple)
    iterations: int
    best_start: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "residual": self.residual,
            "start_residuals": list(self.start_residuals),
            "best_start": self.best_start,
            "iterations": self.iterations,
            "components": len(self.density.components),
        }


def _theta_to_density(theta: NDArray) -> GaussianMixtureDensity:
    return GaussianMixtureDensity(
        [GaussianComponent(a, (mx, my), s) for a, mx, my, s in theta], 0.0
    )


def _model_and_jacobian(theta: NDArray, X: NDArray) -> tuple[NDArray, NDArray]:
    """Model values at X and the Jacobian with respect to theta, flattened row-wise.

    theta is (k, 4): amplitude, centre x, centre y, sigma for each component.
    """
    amp, mx, my, s = theta.T
    dx = X[:, 0, None] - mx
    dy = X[:, 1, None] - my
    r2 = dx**2 + dy**2
    e = np.exp(-r2 / (2 * s**2))
    ae = amp * e
    f = ae.sum(axis=1)
    J = np.empty((len(X), len(theta), 4))
    J[..., 0] = e
    J[..., 1] = ae * dx / s**2
    J[..., 2] = ae * dy / s**2
    J[..., 3] = ae * r2 / s**3
    return f, J.reshape(len(X), -1)


def _levenberg_marquardt(
    theta: NDArray, X: NDArray, c: NDArray
) -> tuple[NDArray, float, int]:
    """Damped Gauss–Newton from theta; returns (theta, residual, iterations)."""
    k = len(theta)
    f, J = _model_and_jacobian(theta, X)
    res = f - c
    S = float(res @ res)
    lam = 1e-3
    it = 0
    for it in range(1, MAX_ITERATIONS + 1):
        diag = np.einsum("ij,ij->j", J, J)
        diag = np.maximum(diag, 1e-12 * max(float(diag.max()), 1e-300))
        A_aug = np.vstack([J, np.diag(np.sqrt(lam * diag))])
        b_aug = np.concatenate([-res, np.zeros(4 * k)])
        delta = scipy.linalg.lstsq(A_aug, b_aug)[0]
        step_norm = float(np.linalg.norm(delta))
        cand = theta + delta.reshape(k, 4)

        accepted = False
        if np.all(np.isfinite(cand)) and np.all(cand[:, 0] > 0) and np.all(cand[:, 3] > 0):
            f_new, J_new = _model_and_jacobian(cand, X)
            res_new = f_new - c
            S_new = float(res_new @ res_new)
            if S_new <= S:
                theta, f, J, res, S = cand, f_new, J_new, res_new, S_new
                lam = max(lam / 10, 1e-15)
                accepted = True
        if not accepted:
            lam *= 10
        log.debug("fit iteration %d: residual %.6g, step %.3g, damping %.3g", it, S, step_norm, lam)
        if step_norm < STEP_TOL or lam > 1e16:
            break
    return theta, S, it


def fit_mixture_detailed(
    measurements: Sequence[FeatureMeasurement] | ArrayLike,
    k: int,
    seed: int = 0,
    restarts: int = 4,
) -> MixtureFit:
    """Fits a k-component mixture to feature counts, returning the residual report.

    The first start centres the components on the k largest counts; `restarts` further
    starts are drawn from `numpy.random.default_rng(seed)`.  The best residual wins, ties
    going to the earliest start.
    """
    if k < 1:
        raise ValueError(f"number of components must be at least 1, not {k}.")
    X, c = _measurement_arrays(measurements)
    if len(c) < 4 * k:
        raise FitError(
            f"underdetermined fit: {len(c)} measurements for {k} components (need {4 * k})."
        )
    if np.ptp(c) == 0:
        raise FitError(f"degenerate measurements: every count is {c[0]}.")

    lo = X.min(axis=0)
    hi = X.max(axis=0)
    diag = float(np.hypot(*(hi - lo))) or 1.0
    cmax = float(c.max())

    starts = []
    top = np.argsort(-c, kind="stable")[:k]
    starts.append(
        np.column_stack([np.maximum(c[top], 1e-3 * cmax), X[top], np.full(k, 0.1 * diag)])
    )
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(
            np.column_stack(
                [
                    rng.uniform(0.5, 1.0, k) * cmax,
                    rng.uniform(lo, hi, (k, 2)),
                    rng.uniform(0.05, 0.3, k) * diag,
                ]
            )
        )

    start_residuals = []
    best: tuple[NDArray, float, int, int] | None = None
    for n, theta0 in enumerate(starts):
        try:
            theta, S, its = _levenberg_marquardt(theta0, X, c)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, FloatingPointError) as err:
            log.warning("Fit start %d failed (%s); skipping.", n, err)
            continue
        f0, _ = _model_and_jacobian(theta0, X)
        start_residuals.append(float((f0 - c) @ (f0 - c)))
        log.debug("fit start %d: residual %.6g after %d iterations", n, S, its)
        if best is None or S < best[1]:
            best = (theta, S, its, n)

    if best is None:
        raise FitError("every fit start failed.")
    theta, S, its, n = best
    log.info("Fitted %d components: residual %.6g (start %d)", k, S, n)
    return MixtureFit(_theta_to_density(theta), S, start_residuals, its, n)


def fit_mixture(
    measurements: Sequence[FeatureMeasurement] | ArrayLike,
    k: int,
    seed: int = 0,
    restarts: int = 4,
) -> GaussianMixtureDensity:
    """Least-squares fit of a k-component Gaussian mixture (floor 0) to feature counts.

    Raises
    ------
    FitError
        with fewer than 4k measurements, or when every count is equal.
    """
    return fit_mixture_detailed(measurements, k, seed, restarts).density


def load_measurements(path: str | PathLike) -> list[FeatureMeasurement]:
    """Reads a CSV file with header exactly ``x,y,count``."""
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as err:
        raise ValueError(f"{path}: no measurements.") from err
    if list(df.columns) != ["x", "y", "count"]:
        raise ValueError(
            f"{path}: header must be exactly x,y,count, not {','.join(map(str, df.columns))}."
        )
    if len(df) == 0:
        raise ValueError(f"{path}: no measurements.")
    try:
        arr = df.to_numpy(dtype=float)
    except ValueError as err:
        raise ValueError(f"{path}: non-numeric measurement.") from err
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: measurements must be finite.")
    return [FeatureMeasurement((x, y), n) for x, y, n in arr]


def save_measurements(path: str | PathLike, measurements: Sequence[FeatureMeasurement]) -> None:
    X, c = _measurement_arrays(measurements)
    pd.DataFrame({"x": X[:, 0], "y": X[:, 1], "count": c}).to_csv(
        path, index=False, float_format="%.10g"
    )


def sample_measurements(
    density: GaussianMixtureDensity, Q: ConvexPolygon, resolution: int = 10
) -> list[FeatureMeasurement]:
    """Noiseless feature counts at the midpoints of a resolution × resolution grid on Q."""
    x0, y0, x1, y1 = Q.bounding_box()
    xs = x0 + (np.arange(resolution) + 0.5) * (x1 - x0) / resolution
    ys = y0 + (np.arange(resolution) + 0.5) * (y1 - y0) / resolution
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[Q.contains(pts)]
    return [FeatureMeasurement(p, v) for p, v in zip(pts, density(pts))]


def phi1() -> GaussianMixtureDensity:
    "A single feature-rich region on the 1.5 m square."
    return GaussianMixtureDensity([GaussianComponent(400.0, (0.8, 0.7), 0.25)])


def phi2() -> GaussianMixtureDensity:
    "Three feature-rich regions on the 1.5 m square."
    return GaussianMixtureDensity(
        [
            GaussianComponent(300.0, (0.35, 0.4), 0.18),
            GaussianComponent(350.0, (1.1, 0.45), 0.2),
            GaussianComponent(250.0, (0.7, 1.15), 0.22),
        ]
    )


PRESETS = {"phi1": phi1, "phi2": phi2}
