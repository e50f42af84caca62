"""
Density-weighted integration over convex polygon cells.

Cells are fan-triangulated from their first vertex, and each triangle is integrated with
a symmetric triangle rule, refined adaptively by splitting into four congruent children.
"""

from __future__ import annotations

import math
from typing import Any, Callable

import attrs
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .density import GaussianMixtureDensity
from .geometry import ConvexPolygon, intersect, lens_polygon

__all__ = [
    "QuadratureSpec",
    "MasslessCellError",
    "TriangleRule",
    "triangle_rule",
    "integrate",
    "cell_mass",
    "cell_centroid",
    "cell_moments",
    "cell_cost_integral",
    "lens_integral",
    "lens_deficit",
    "circle_crossings",
]

Integrand = Callable[[NDArray[np.float64]], NDArray[np.float64]]
CrossingTest = Callable[[NDArray[np.float64]], NDArray[np.bool_]]


class MasslessCellError(ValueError):
    pass


@attrs.define(frozen=True)
class TriangleRule:
    """A quadrature rule on the reference triangle in barycentric coordinates.

    Weights sum to 1, so an integral is the triangle's area times the weighted sum.
    """

    degree: int
    barycentric: NDArray[np.float64] = attrs.field(eq=attrs.cmp_using(eq=np.array_equal))
    weights: NDArray[np.float64] = attrs.field(eq=attrs.cmp_using(eq=np.array_equal))


def _orbit3(a: float, w: float) -> list[tuple[tuple[float, float, float], float]]:
    b = 1 - 2 * a
    return [((a, a, b), w), ((a, b, a), w), ((b, a, a), w)]


def _orbit6(a: float, b: float, w: float) -> list[tuple[tuple[float, float, float], float]]:
    c = 1 - a - b
    return [
        ((a, b, c), w),
        ((a, c, b), w),
        ((b, a, c), w),
        ((b, c, a), w),
        ((c, a, b), w),
        ((c, b, a), w),
    ]


def _make_rule(degree: int, points: list[tuple[tuple[float, float, float], float]]) -> TriangleRule:
    bary = np.array([p for p, _ in points], dtype=float)
    w = np.array([w for _, w in points], dtype=float)
    return TriangleRule(degree, bary, w / w.sum())


_SQRT15 = math.sqrt(15)

_RULES: dict[int, TriangleRule] = {
    2: _make_rule(2, _orbit3(1 / 6, 1 / 3)),
    5: _make_rule(
        5,
        [((1 / 3, 1 / 3, 1 / 3), 9 / 40)]
        + _orbit3((6 - _SQRT15) / 21, (155 - _SQRT15) / 1200)
        + _orbit3((6 + _SQRT15) / 21, (155 + _SQRT15) / 1200),
    ),
    # Dunavant's 13-point rule; one negative weight
    7: _make_rule(
        7,
        [((1 / 3, 1 / 3, 1 / 3), -0.149570044467682)]
        + _orbit3(0.260345966079040, 0.175615257433208)
        + _orbit3(0.065130102902216, 0.053347235608838)
        + _orbit6(0.048690315425316, 0.312865496004874, 0.077113760890257),
    ),
}


def triangle_rule(degree: int) -> TriangleRule:
    """The lowest-order bundled rule that is exact to at least `degree`."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no bundled triangle rule of degree {degree} (maximum {max(_RULES)}).")


def _check_degree(instance: Any, attribute: Any, value: int) -> None:
    if value < 2:
        raise ValueError(f"base_rule_degree must be at least 2, not {value}.")
    triangle_rule(value)


def _check_positive(instance: Any, attribute: Any, value: float) -> None:
    if not value > 0:
        raise ValueError(f"{attribute.name} must be positive, not {value}.")


def _check_nonnegative(instance: Any, attribute: Any, value: float) -> None:
    if not value >= 0:
        raise ValueError(f"{attribute.name} must be non-negative, not {value}.")


FOV_BOUNDARIES = ("exact", "polygon", "refine")


def _check_segments(instance: Any, attribute: Any, value: int) -> None:
    if value < 3:
        raise ValueError(f"fov_segments must be at least 3, not {value}.")


def _check_boundary(instance: Any, attribute: Any, value: str) -> None:
    if value not in FOV_BOUNDARIES:
        raise ValueError(
            f"fov_boundary must be one of {', '.join(FOV_BOUNDARIES)}, not {value!r}."
        )


@attrs.define(frozen=True)
class QuadratureSpec:
    """Settings for cell integration.

    Parameters
    ----------

    base_rule_degree
        Polynomial degree the per-triangle rule must integrate exactly (2, 5 or 7 are
        bundled; other values round up).

    max_subdivisions
        Maximum depth of four-way triangle refinement.

    rel_tol
        Refinement stops when the children's sum agrees with the parent to this
        relative tolerance.

    mass_floor
        Masses at or below this are treated as zero.

    fov_boundary
        How the edge of two agents' joint field of view is handled.  ``"exact"``
        integrates up to the circular arcs themselves; ``"polygon"`` replaces the
        field of view by an inscribed polygon of `fov_segments` sides per full circle;
        ``"refine"`` integrates the discontinuous sensor directly and refines every
        triangle crossed by a field-of-view circle to the maximum depth.

    fov_segments
        Sides per full circle of the inscribed polygon in ``"polygon"`` mode.
    """

    base_rule_degree: int = attrs.field(default=7, converter=int, validator=_check_degree)
    max_subdivisions: int = attrs.field(default=6, converter=int, validator=_check_nonnegative)
    rel_tol: float = attrs.field(default=1e-6, converter=float, validator=_check_positive)
    mass_floor: float = attrs.field(default=1e-12, converter=float, validator=_check_nonnegative)
    fov_boundary: str = attrs.field(default="exact", validator=_check_boundary)
    fov_segments: int = attrs.field(default=256, converter=int, validator=_check_segments)

    @property
    def rule(self) -> TriangleRule:
        return triangle_rule(self.base_rule_degree)

    def tightened(
        self, rel_tol: float | None = None, max_subdivisions: int | None = None
    ) -> QuadratureSpec:
        """A copy that is at least as strict as this one."""
        return attrs.evolve(
            self,
            rel_tol=min(self.rel_tol, rel_tol if rel_tol is not None else self.rel_tol),
            max_subdivisions=max(
                self.max_subdivisions,
                max_subdivisions if max_subdivisions is not None else self.max_subdivisions,
            ),
        )


def _fan(cell: ConvexPolygon) -> NDArray[np.float64]:
    v = cell.vertices
    k = np.arange(1, len(v) - 1)
    return np.stack([np.broadcast_to(v[0], (len(k), 2)), v[k], v[k + 1]], axis=1)


def _tri_areas(tris: NDArray) -> NDArray:
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _subdivide(tris: NDArray) -> NDArray:
    """Splits each triangle into four at its edge midpoints; children of t are 4t..4t+3."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab = 0.5 * (a + b)
    bc = 0.5 * (b + c)
    ca = 0.5 * (c + a)
    children = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    )
    return children.reshape(-1, 3, 2)


def _apply_rule(tris: NDArray, integrand: Integrand, rule: TriangleRule) -> NDArray:
    nodes = np.einsum("pk,tkd->tpd", rule.barycentric, tris)
    vals = np.asarray(integrand(nodes.reshape(-1, 2)), dtype=float)
    vals = vals.reshape(len(tris), len(rule.weights), *vals.shape[1:])
    est = np.tensordot(rule.weights, vals, axes=([0], [1]))
    areas = _tri_areas(tris)
    return est * areas.reshape(-1, *([1] * (est.ndim - 1)))


def _magnitude(x: NDArray) -> NDArray:
    if x.ndim == 1:
        return np.abs(x)
    return np.abs(x).reshape(len(x), -1).max(axis=1)


def _zero_like(integrand: Integrand) -> Any:
    zero = np.asarray(integrand(np.zeros((0, 2))), dtype=float).sum(axis=0)
    return float(zero) if zero.ndim == 0 else zero


def _refine(
    elements: NDArray,
    estimate: Callable[[NDArray], NDArray],
    split: Callable[[NDArray], NDArray],
    size: Callable[[NDArray], NDArray],
    spec: QuadratureSpec,
    crossing: CrossingTest | None = None,
) -> Any:
    """Adaptive four-way refinement shared by the triangle and polar integrators.

    `split` must return the children of element t at positions 4t..4t+3.
    """
    est = estimate(elements)
    total = float(size(elements).sum())
    scale = float(np.max(np.abs(est.sum(axis=0))))

    accepted: list[NDArray] = []
    for level in range(spec.max_subdivisions):
        children = split(elements)
        child_est = estimate(children)
        sums = child_est.reshape(len(elements), 4, *est.shape[1:]).sum(axis=1)

        if level == spec.max_subdivisions - 1:
            accepted.append(sums)
            elements = elements[:0]
            break

        share = size(elements) / total
        tol = spec.rel_tol * np.maximum(_magnitude(sums), scale * share) + spec.mass_floor * share
        done = _magnitude(sums - est) <= tol
        if crossing is not None:
            done &= ~np.asarray(crossing(elements), dtype=bool)
        accepted.append(sums[done])

        keep = np.repeat(~done, 4)
        elements = children[keep]
        est = child_est[keep]
        if len(elements) == 0:
            break

    if len(elements):
        accepted.append(est)
    result = np.concatenate(accepted, axis=0).sum(axis=0)
    return float(result) if result.ndim == 0 else result


def integrate(
    cell: ConvexPolygon,
    integrand: Integrand,
    spec: QuadratureSpec = QuadratureSpec(),
    crossing: CrossingTest | None = None,
) -> Any:
    """Adaptive integral of `integrand` over a convex cell.

    Parameters
    ----------

    integrand
        Maps an (m, 2) array of points to an (m,) or (m, d) array.

    crossing
        Maps an (t, 3, 2) array of triangles to a boolean array; flagged triangles are
        refined to ``spec.max_subdivisions`` regardless of convergence.

    Returns
    -------
    A float for scalar integrands, otherwise a (d,) array.
    """
    if cell.is_empty or cell.area <= 0:
        return _zero_like(integrand)
    rule = spec.rule
    return _refine(
        _fan(cell),
        lambda tris: _apply_rule(tris, integrand, rule),
        _subdivide,
        _tri_areas,
        spec,
        crossing,
    )


def cell_mass(
    cell: ConvexPolygon, density: GaussianMixtureDensity, spec: QuadratureSpec = QuadratureSpec()
) -> float:
    """∫_cell φ; 0 for an empty cell."""
    return integrate(cell, density, spec)


def _moment_integrand(density: GaussianMixtureDensity) -> Integrand:
    def f(q: NDArray) -> NDArray:
        phi = density(q)
        return np.column_stack([phi, q[:, 0] * phi, q[:, 1] * phi])

    return f


def cell_moments(
    cell: ConvexPolygon, density: GaussianMixtureDensity, spec: QuadratureSpec = QuadratureSpec()
) -> tuple[float, NDArray[np.float64] | None]:
    """Mass and density-weighted centroid in one pass.

    The centroid is None when the mass is at or below ``spec.mass_floor``.
    """
    if cell.is_empty:
        return 0.0, None
    m, mx, my = integrate(cell, _moment_integrand(density), spec)
    if m <= spec.mass_floor:
        return float(m), None
    return float(m), np.array([mx / m, my / m])


def cell_centroid(
    cell: ConvexPolygon, density: GaussianMixtureDensity, spec: QuadratureSpec = QuadratureSpec()
) -> NDArray[np.float64]:
    """(1/M) ∫_cell q φ(q) dq."""
    m, c = cell_moments(cell, density, spec)
    if c is None:
        raise MasslessCellError(f"massless cell: mass {m:.3g} ≤ {spec.mass_floor:.3g}.")
    return c


def _point_triangle_distance(tris: NDArray, p: NDArray) -> NDArray:
    """Distance from p to each (filled) triangle."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]

    def side(u: NDArray, v: NDArray) -> NDArray:
        e = v - u
        return e[:, 0] * (p[1] - u[:, 1]) - e[:, 1] * (p[0] - u[:, 0])

    s1, s2, s3 = side(a, b), side(b, c), side(c, a)
    inside = ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))

    def seg(u: NDArray, v: NDArray) -> NDArray:
        e = v - u
        t = np.einsum("ij,ij->i", p - u, e) / np.maximum(np.einsum("ij,ij->i", e, e), 1e-300)
        t = np.clip(t, 0, 1)
        return np.linalg.norm(u + t[:, None] * e - p, axis=1)

    d = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, 0.0, d)


def circle_crossings(centers: ArrayLike, r: float) -> CrossingTest:
    """Flags triangles that a circle of radius r around any of `centers` passes through."""
    cs = np.asarray(centers, dtype=float).reshape(-1, 2)

    def crossing(tris: NDArray) -> NDArray:
        flag = np.zeros(len(tris), dtype=bool)
        for c in cs:
            dmax = np.linalg.norm(tris - c, axis=2).max(axis=1)
            dmin = _point_triangle_distance(tris, c)
            flag |= (dmin <= r) & (r < dmax)
        return flag

    return crossing


def _distances(q: NDArray, p_i: NDArray, p_j: NDArray) -> tuple[NDArray, NDArray]:
    return np.linalg.norm(q - p_i, axis=1), np.linalg.norm(q - p_j, axis=1)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_S = 0.5 * (_GL_NODES + 1)
_GL_W = 0.5 * _GL_WEIGHTS
_GL_W2 = np.outer(_GL_W, _GL_W).ravel()
_MAX_SECTOR = np.pi / 8
_CORNER_TOL = 1e-9


def _segment_circle_points(v: NDArray, c: NDArray, r: float) -> NDArray:
    """Points where the closed edges of a vertex loop meet a circle."""
    w = np.roll(v, -1, axis=0)
    e = w - v
    f = v - c
    a = np.einsum("ij,ij->i", e, e)
    b = 2 * np.einsum("ij,ij->i", f, e)
    disc = b * b - 4 * a * (np.einsum("ij,ij->i", f, f) - r * r)
    ok = (disc >= 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    den = np.where(ok, 2 * a, 1.0)
    out = []
    for t in ((-b - sq) / den, (-b + sq) / den):
        sel = ok & (t >= 0) & (t <= 1)
        out.append(v[sel] + t[sel, None] * e[sel])
    return np.vstack(out)


def _circle_circle_points(a: NDArray, b: NDArray, r: float) -> NDArray:
    d = float(np.hypot(*(b - a)))
    if not (0 < d < 2 * r):
        return np.zeros((0, 2))
    h = math.sqrt(r * r - 0.25 * d * d)
    perp = np.array([a[1] - b[1], b[0] - a[0]]) / d
    m = 0.5 * (a + b)
    return np.stack([m + h * perp, m - h * perp])


def _lens_corners(cell: ConvexPolygon, centers: NDArray, r: float) -> NDArray:
    """Corners of cell ∩ disk(c₀, r) ∩ disk(c₁, r)."""
    pts = [cell.vertices] + [_segment_circle_points(cell.vertices, c, r) for c in centers]
    pts.append(_circle_circle_points(centers[0], centers[1], r))
    cand = np.vstack(pts)
    keep = cell.contains(cand, tol=_CORNER_TOL)
    for c in centers:
        keep &= np.linalg.norm(cand - c, axis=1) <= r + _CORNER_TOL
    return cand[keep]


def _exit_radius(
    o: NDArray, cell: ConvexPolygon, centers: NDArray, r: float
) -> Callable[[NDArray], NDArray]:
    """Distance from `o` to the boundary of cell ∩ disks along each direction angle."""
    hps = cell.halfplanes()
    normals = np.array([hp.normal for hp in hps])
    slack = np.maximum(np.array([hp.offset for hp in hps]) - normals @ o, 0.0)
    offsets = o - centers
    inside = np.einsum("ij,ij->i", offsets, offsets) - r * r

    def radius(theta: NDArray) -> NDArray:
        u = np.column_stack([np.cos(theta), np.sin(theta)])
        den = u @ normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(den > 0, slack / den, np.inf).min(axis=1)
        for w, c in zip(offsets, inside):
            uw = u @ w
            rho = np.minimum(rho, -uw + np.sqrt(np.maximum(uw * uw - c, 0.0)))
        return np.maximum(rho, 0.0)

    return radius


def _split_rects(rects: NDArray) -> NDArray:
    """Splits each (θ₀, θ₁, s₀, s₁) rectangle into four; children of t are 4t..4t+3."""
    t0, t1, s0, s1 = rects.T
    tm = 0.5 * (t0 + t1)
    sm = 0.5 * (s0 + s1)
    children = np.stack(
        [
            np.column_stack([t0, tm, s0, sm]),
            np.column_stack([tm, t1, s0, sm]),
            np.column_stack([t0, tm, sm, s1]),
            np.column_stack([tm, t1, sm, s1]),
        ],
        axis=1,
    )
    return children.reshape(-1, 4)


def _rect_sizes(rects: NDArray) -> NDArray:
    return (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2])


def _apply_polar(
    rects: NDArray, integrand: Integrand, o: NDArray, radius: Callable[[NDArray], NDArray]
) -> NDArray:
    n = len(_GL_S)
    t0, t1, s0, s1 = rects.T
    theta = t0[:, None] + (t1 - t0)[:, None] * _GL_S
    s = s0[:, None] + (s1 - s0)[:, None] * _GL_S
    rho = radius(theta.ravel()).reshape(len(rects), n)
    dist = s[:, None, :] * rho[:, :, None]
    qx = o[0] + dist * np.cos(theta)[:, :, None]
    qy = o[1] + dist * np.sin(theta)[:, :, None]
    vals = np.asarray(integrand(np.column_stack([qx.ravel(), qy.ravel()])), dtype=float)
    vals = vals.reshape(len(rects), n * n, *vals.shape[1:])
    weight = _GL_W2 * (dist * rho[:, :, None]).reshape(len(rects), n * n)
    est = (weight.reshape(weight.shape + (1,) * (vals.ndim - 2)) * vals).sum(axis=1)
    return est * _rect_sizes(rects).reshape(-1, *([1] * (est.ndim - 1)))


def lens_integral(
    cell: ConvexPolygon,
    integrand: Integrand,
    p_i: ArrayLike,
    p_j: ArrayLike,
    fov_radius: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> Any:
    """Adaptive integral of `integrand` over the part of `cell` within `fov_radius` of both
    `p_i` and `p_j`, bounded by the circular arcs themselves.

    The region is convex, so it is swept in polar coordinates around an interior point.
    The sweep is cut at the angle of every corner, where the boundary switches between
    cell edges and arcs, and each sector is refined like a cell.
    """
    centers = np.array([p_i, p_j], dtype=float).reshape(2, 2)
    zero = _zero_like(integrand)
    if cell.is_empty or cell.area <= 0 or fov_radius <= 0:
        return zero
    if float(np.hypot(*(centers[1] - centers[0]))) >= 2 * fov_radius:
        return zero

    corners = _lens_corners(cell, centers, fov_radius)
    inner = intersect(lens_polygon(centers[0], centers[1], fov_radius, 64), cell)
    if not inner.is_empty and inner.area > 0:
        o = inner.centroid.as_array()
    elif len(corners) >= 3:
        o = corners.mean(axis=0)
    else:
        return zero

    off = corners - o
    off = off[np.hypot(off[:, 0], off[:, 1]) > _CORNER_TOL]
    angles = np.unique(np.arctan2(off[:, 1], off[:, 0]))
    if len(angles) == 0:
        angles = np.array([0.0])
    edges = np.append(angles, angles[0] + 2 * np.pi)
    sectors = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-14:
            continue
        k = max(1, math.ceil((b - a) / _MAX_SECTOR))
        cuts = np.linspace(a, b, k + 1)
        sectors.extend((c0, c1, 0.0, 1.0) for c0, c1 in zip(cuts[:-1], cuts[1:]))
    if not sectors:
        return zero

    radius = _exit_radius(o, cell, centers, fov_radius)
    return _refine(
        np.array(sectors, dtype=float),
        lambda rects: _apply_polar(rects, integrand, o, radius),
        _split_rects,
        _rect_sizes,
        spec,
    )


def lens_deficit(
    cell: ConvexPolygon,
    density: GaussianMixtureDensity,
    p_i: ArrayLike,
    p_j: ArrayLike,
    fov_radius: float,
    penalty: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """∫ (penalty − g) φ over the part of `cell` both agents see.

    With ``spec.fov_boundary == "polygon"`` the joint field of view is replaced by an
    inscribed polygon with ``spec.fov_segments`` sides per full circle; otherwise it is
    integrated up to its arcs by :func:`lens_integral`.
    """
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    if cell.is_empty:
        return 0.0

    def f(q: NDArray) -> NDArray:
        x, y = _distances(q, p_i, p_j)
        return (penalty - (x * x + y * y)) * density(q)

    if spec.fov_boundary != "polygon":
        return lens_integral(cell, f, p_i, p_j, fov_radius, spec)

    lens = lens_polygon(p_i, p_j, fov_radius, spec.fov_segments)
    if lens.is_empty:
        return 0.0
    seen = intersect(lens, cell)
    if seen.is_empty:
        return 0.0
    return integrate(seen, f, spec)


def cell_cost_integral(
    cell: ConvexPolygon,
    density: GaussianMixtureDensity,
    sensor: Any,
    p_i: ArrayLike,
    p_j: ArrayLike,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """∫_cell f(‖q − p_i‖, ‖q − p_j‖) φ(q) dq for a sensor model f.

    Photogrammetry sensors (those with ``fov_radius`` and ``penalty``) are integrated as
    the penalty times the cell mass, less the :func:`lens_deficit`, unless
    ``spec.fov_boundary`` is ``"refine"``, in which case the integrand is refined around
    the field-of-view circles instead.
    """
    if cell.is_empty:
        return 0.0
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    fov = getattr(sensor, "fov_radius", None)
    penalty = getattr(sensor, "penalty", None)

    if fov is not None and penalty is not None and spec.fov_boundary != "refine":
        mass = cell_mass(cell, density, spec)
        return penalty * mass - lens_deficit(cell, density, p_i, p_j, fov, penalty, spec)

    def f(q: NDArray) -> NDArray:
        x, y = _distances(q, p_i, p_j)
        return sensor(x, y) * density(q)

    crossing = circle_crossings([p_i, p_j], fov) if fov is not None else None
    return integrate(cell, f, spec, crossing)
