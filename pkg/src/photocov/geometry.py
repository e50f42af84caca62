"""
Convex regions, half-plane clipping, and second-order Voronoi partitions.

All polygons are convex and stored counterclockwise.  The second-order partition of a
region Q for agents at P assigns to every pair of agents (i, j) the set of points of Q
for which i and j are the two nearest agents; each such cell is the intersection of Q
with bisector half-planes, so it is built here by repeated clipping.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Any, Iterable, Iterator, Mapping, Sequence

import attrs
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import pdist

if TYPE_CHECKING:  # pragma: no cover
    from attrs import Attribute

__all__ = [
    "GeometryError",
    "Point2",
    "ConvexPolygon",
    "HalfPlane",
    "PairKey",
    "OrderTwoPartition",
    "polygon_area",
    "polygon_diameter",
    "bisector_halfplane",
    "clip",
    "intersect",
    "project_to_polygon",
    "lens_polygon",
    "pair_cell",
    "order_two_voronoi",
    "order_two_cells_of",
    "cell_neighbors",
    "positions_of",
    "validate_configuration",
    "VERTEX_MERGE_TOL",
    "DEGENERACY_FLOOR",
]

VERTEX_MERGE_TOL = 1e-12
"Consecutive polygon vertices closer than this are merged."

DEGENERACY_FLOOR = 1e-9
"Agents closer than this are considered coincident."

CLIP_TOL = 1e-12


class GeometryError(ValueError):
    pass


def _check_finite(instance: Any, attribute: Attribute, value: float) -> None:
    if not math.isfinite(value):
        raise GeometryError(f"{attribute.name} must be finite, not {value}.")


@attrs.define(frozen=True)
class Point2:
    """A point in the plane, in metres."""

    x: float = attrs.field(converter=float, validator=_check_finite)
    y: float = attrs.field(converter=float, validator=_check_finite)

    @classmethod
    def from_obj(cls, obj: Point2 | Sequence[float] | NDArray) -> Point2:
        if isinstance(obj, Point2):
            return obj
        x, y = obj
        return cls(x, y)

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y], dtype=float)

    def distance(self, other: Point2 | Sequence[float]) -> float:
        o = Point2.from_obj(other)
        return math.hypot(self.x - o.x, self.y - o.y)

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def _unstructure(self) -> list[float]:
        return [self.x, self.y]


def _signed_area(v: NDArray) -> float:
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _merge_close(v: NDArray, tol: float = VERTEX_MERGE_TOL) -> NDArray:
    if len(v) < 2:
        return v
    gaps = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    return v[gaps > tol]


def _as_vertices(vertices: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(vertices, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=float)
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise GeometryError("polygon vertices must be finite.")
    arr = _merge_close(arr)
    if _signed_area(arr) < 0:
        arr = arr[::-1].copy()
    return arr


@attrs.define(frozen=True)
class HalfPlane:
    """The closed half-plane {q : normal · q ≤ offset}."""

    normal: NDArray[np.float64] = attrs.field(
        converter=lambda n: np.array(n, dtype=float).reshape(2),
        eq=attrs.cmp_using(eq=np.array_equal),
    )
    offset: float = attrs.field(converter=float)

    @normal.validator
    def _check_normal(self, attribute: Attribute, value: NDArray) -> None:
        if not np.all(np.isfinite(value)) or not np.hypot(*value) > 0:
            raise GeometryError(f"half-plane normal must be finite and nonzero, not {value}.")

    def signed_distance(self, points: ArrayLike) -> NDArray[np.float64]:
        """Signed Euclidean distance of points from the boundary line; negative inside."""
        pts = np.asarray(points, dtype=float)
        return (pts @ self.normal - self.offset) / float(np.hypot(*self.normal))

    def contains(self, points: ArrayLike, tol: float = CLIP_TOL) -> NDArray[np.bool_]:
        return self.signed_distance(points) <= tol


@attrs.define(frozen=True)
class ConvexPolygon:
    """A convex polygon, vertices counterclockwise, possibly empty.

    Vertex order is normalized on construction: clockwise input is reversed, and
    consecutive vertices closer than :data:`VERTEX_MERGE_TOL` are merged.
    """

    vertices: NDArray[np.float64] = attrs.field(
        converter=_as_vertices, eq=attrs.cmp_using(eq=np.array_equal)
    )

    @classmethod
    def empty(cls) -> ConvexPolygon:
        return cls(np.zeros((0, 2)))

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> ConvexPolygon:
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(
                f"rectangle corners ({x0}, {y0}), ({x1}, {y1}) do not span a positive area."
            )
        return cls([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    @property
    def points(self) -> tuple[Point2, ...]:
        return tuple(Point2(x, y) for x, y in self.vertices)

    @property
    def area(self) -> float:
        return polygon_area(self)

    @property
    def diameter(self) -> float:
        return polygon_diameter(self)

    @property
    def centroid(self) -> Point2:
        """The area centroid; the vertex mean for degenerate polygons."""
        if self.is_empty:
            raise GeometryError("empty region has no centroid.")
        v = self.vertices
        a = _signed_area(v)
        if a <= 0:
            cx, cy = v.mean(axis=0)
            return Point2(cx, cy)
        vn = np.roll(v, -1, axis=0)
        cross = v[:, 0] * vn[:, 1] - vn[:, 0] * v[:, 1]
        cx = float(np.dot(v[:, 0] + vn[:, 0], cross)) / (6 * a)
        cy = float(np.dot(v[:, 1] + vn[:, 1], cross)) / (6 * a)
        return Point2(cx, cy)

    def halfplanes(self) -> list[HalfPlane]:
        """One half-plane per edge, with outward unit normals."""
        v = self.vertices
        if len(v) < 3:
            return []
        e = np.roll(v, -1, axis=0) - v
        normals = np.column_stack([e[:, 1], -e[:, 0]])
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        offsets = np.einsum("ij,ij->i", normals, v)
        return [HalfPlane(n, o) for n, o in zip(normals, offsets)]

    def contains(self, points: ArrayLike, tol: float = 1e-12) -> Any:
        """Whether points lie in the closed polygon, within `tol`.

        Returns a bool for a single point and a bool array for an (m, 2) array.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = pts.reshape(-1, 2)
        if len(self.vertices) < 3:
            res = np.zeros(len(pts), dtype=bool)
        else:
            res = np.ones(len(pts), dtype=bool)
            for hp in self.halfplanes():
                res &= hp.signed_distance(pts) <= tol
        return bool(res[0]) if single else res

    def bounding_box(self) -> tuple[float, float, float, float]:
        if self.is_empty:
            raise GeometryError("empty region has no bounding box.")
        x0, y0 = self.vertices.min(axis=0)
        x1, y1 = self.vertices.max(axis=0)
        return float(x0), float(y0), float(x1), float(y1)

    def is_convex(self, tol: float = 1e-12) -> bool:
        v = self.vertices
        if len(v) < 3:
            return True
        e = np.roll(v, -1, axis=0) - v
        en = np.roll(e, -1, axis=0)
        cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
        return bool(np.all(cross >= -tol * max(1.0, self.diameter**2)))

    def is_rectangle(self, rel_tol: float = 1e-12) -> bool:
        """Whether this is an axis-aligned rectangle."""
        if len(self.vertices) != 4:
            return False
        x0, y0, x1, y1 = self.bounding_box()
        box = (x1 - x0) * (y1 - y0)
        return box > 0 and abs(self.area - box) <= rel_tol * box

    def _unstructure(self) -> list[list[float]]:
        return self.vertices.tolist()


def polygon_area(poly: ConvexPolygon) -> float:
    """Shoelace area; 0 for empty or degenerate polygons."""
    return max(_signed_area(poly.vertices), 0.0)


def polygon_diameter(poly: ConvexPolygon) -> float:
    """Largest distance between two vertices."""
    if poly.is_empty:
        raise GeometryError("empty region has no diameter.")
    if len(poly.vertices) == 1:
        return 0.0
    return float(pdist(poly.vertices).max())


def bisector_halfplane(a: ArrayLike, b: ArrayLike) -> HalfPlane:
    """The points at least as close to `a` as to `b`, with a unit normal."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    length = float(np.hypot(*d))
    if length <= DEGENERACY_FLOOR:
        raise GeometryError(f"degenerate bisector: points {a} and {b} coincide.")
    normal = d / length
    return HalfPlane(normal, float(normal @ (0.5 * (a + b))))


def clip(poly: ConvexPolygon, hp: HalfPlane) -> ConvexPolygon:
    """Sutherland–Hodgman clip of a convex polygon by a half-plane."""
    v = poly.vertices
    if len(v) < 3:
        return ConvexPolygon.empty()
    d = hp.signed_distance(v)
    inside = d <= CLIP_TOL
    if inside.all():
        return poly
    if not inside.any():
        return ConvexPolygon.empty()

    vn = np.roll(v, -1, axis=0)
    dn = np.roll(d, -1)
    crossing = inside != np.roll(inside, -1)
    t = np.where(crossing, d / np.where(crossing, d - dn, 1.0), 0.0)
    x = v + t[:, None] * (vn - v)

    # vertex k (if kept) precedes the intersection on edge k -> k+1
    candidates = np.stack([v, x], axis=1)
    keep = np.column_stack([inside, crossing])
    out = _merge_close(candidates[keep])
    if len(out) < 3 or _signed_area(out) <= VERTEX_MERGE_TOL**2:
        return ConvexPolygon.empty()
    return ConvexPolygon(out)


def intersect(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon:
    """Intersection of two convex polygons, clipping `a` by the edges of `b`."""
    if b.is_empty:
        return ConvexPolygon.empty()
    for hp in b.halfplanes():
        a = clip(a, hp)
        if a.is_empty:
            break
    return a


def project_to_polygon(q: ArrayLike, poly: ConvexPolygon) -> NDArray[np.float64]:
    """Nearest point of a convex polygon to `q`."""
    q = np.asarray(q, dtype=float)
    if poly.is_empty:
        raise GeometryError("cannot project onto an empty region.")
    if poly.contains(q):
        return q.copy()
    v = poly.vertices
    e = np.roll(v, -1, axis=0) - v
    elen2 = np.einsum("ij,ij->i", e, e)
    t = np.clip(np.einsum("ij,ij->i", q - v, e) / np.where(elen2 > 0, elen2, 1.0), 0.0, 1.0)
    nearest = v + t[:, None] * e
    k = int(np.argmin(np.linalg.norm(nearest - q, axis=1)))
    return nearest[k]


def lens_polygon(a: ArrayLike, b: ArrayLike, r: float, segments: int) -> ConvexPolygon:
    """Inscribed polygon of the intersection of the disks of radius `r` around `a` and `b`.

    Each arc is subdivided so that a full circle would have about `segments` sides.
    """
    if segments < 3:
        raise ValueError(f"lens needs at least 3 segments per circle, not {segments}.")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = float(np.hypot(*(b - a)))
    if r <= 0 or d >= 2 * r:
        return ConvexPolygon.empty()
    if d <= DEGENERACY_FLOOR:
        theta = np.linspace(0, 2 * np.pi, segments, endpoint=False)
        return ConvexPolygon(a + r * np.column_stack([np.cos(theta), np.sin(theta)]))

    phi = math.atan2(b[1] - a[1], b[0] - a[0])
    alpha = math.acos(d / (2 * r))
    m = max(2, math.ceil(segments * alpha / np.pi))
    k = np.arange(m + 1)
    theta_a = phi - alpha + k * (2 * alpha / m)
    theta_b = phi + np.pi - alpha + k[1:-1] * (2 * alpha / m)
    arc_a = a + r * np.column_stack([np.cos(theta_a), np.sin(theta_a)])
    arc_b = b + r * np.column_stack([np.cos(theta_b), np.sin(theta_b)])
    return ConvexPolygon(np.vstack([arc_a, arc_b]))


@attrs.define(frozen=True, order=True)
class PairKey:
    """An unordered pair of agent indices, stored with i < j."""

    i: int = attrs.field(converter=int)
    j: int = attrs.field(converter=int)

    @j.validator
    def _check_order(self, attribute: Attribute, value: int) -> None:
        if not (0 <= self.i < value):
            raise ValueError(f"pair key needs 0 ≤ i < j, not ({self.i}, {value}).")

    @classmethod
    def of(cls, a: int, b: int) -> PairKey:
        return cls(min(a, b), max(a, b))

    @classmethod
    def parse(cls, s: str) -> PairKey:
        i, j = s.split(",")
        return cls.of(int(i), int(j))

    def contains(self, agent: int) -> bool:
        return agent == self.i or agent == self.j

    def other(self, agent: int) -> int:
        if agent == self.i:
            return self.j
        if agent == self.j:
            return self.i
        raise ValueError(f"agent {agent} is not in pair ({self.i}, {self.j}).")

    def __iter__(self) -> Iterator[int]:
        yield self.i
        yield self.j

    def __str__(self) -> str:
        return f"{self.i},{self.j}"


def positions_of(P: Any) -> NDArray[np.float64]:
    """Agent positions as an (n, 2) float array.

    Accepts an array-like of points, or anything with a `positions` attribute (an
    :class:`~photocov.simulator.AgentConfiguration` or :class:`OrderTwoPartition`).
    """
    arr = np.array(getattr(P, "positions", P), dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=float)
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise GeometryError("agent positions must be finite.")
    return arr


def validate_configuration(p: NDArray, Q: ConvexPolygon) -> None:
    if Q.is_empty or Q.area <= 0:
        raise GeometryError("empty region: coverage region has no area.")
    n = len(p)
    if n < 2:
        raise GeometryError(f"second-order coverage requires n ≥ 2 agents, got {n}.")
    dists = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    dists[np.diag_indices(n)] = np.inf
    if dists.min() <= DEGENERACY_FLOOR:
        i, j = np.unravel_index(int(np.argmin(dists)), dists.shape)
        raise GeometryError(
            f"degenerate configuration: agents {min(i, j)} and {max(i, j)} coincide."
        )
    inside = Q.contains(p, tol=DEGENERACY_FLOOR)
    if not inside.all():
        i = int(np.flatnonzero(~inside)[0])
        raise GeometryError(f"agent outside region: agent {i} at {tuple(p[i])}.")


def pair_cell(
    i: int,
    j: int,
    P: Any,
    Q: ConvexPolygon,
    competitors: Iterable[int] | None = None,
) -> ConvexPolygon:
    """The cell of Q whose two nearest agents are i and j.

    Only the agents in `competitors` are clipped against (default: every other agent).
    They are applied nearest-first to the pair's midpoint, so that empty cells
    are found early.  No validation is done here.
    """
    p = positions_of(P)
    if competitors is None:
        others = np.array([w for w in range(len(p)) if w != i and w != j], dtype=int)
    else:
        others = np.array([w for w in competitors if w != i and w != j], dtype=int)
    cell = Q
    if len(others) == 0:
        return cell
    mid = 0.5 * (p[i] + p[j])
    order = others[np.argsort(np.linalg.norm(p[others] - mid, axis=1), kind="stable")]
    for w in order:
        cell = clip(cell, bisector_halfplane(p[i], p[w]))
        if cell.is_empty:
            break
        cell = clip(cell, bisector_halfplane(p[j], p[w]))
        if cell.is_empty:
            break
    return cell


@attrs.define(frozen=True)
class OrderTwoPartition:
    """The second-order Voronoi partition of `region` for agents at `positions`.

    `cells` maps every pair i < j to its (possibly empty) cell.
    """

    cells: Mapping[PairKey, ConvexPolygon] = attrs.field(eq=False)
    region: ConvexPolygon
    positions: NDArray[np.float64] = attrs.field(
        converter=positions_of, eq=attrs.cmp_using(eq=np.array_equal)
    )

    @property
    def n(self) -> int:
        return len(self.positions)

    def __getitem__(self, key: PairKey | tuple[int, int]) -> ConvexPolygon:
        if not isinstance(key, PairKey):
            key = PairKey.of(*key)
        return self.cells[key]

    def __iter__(self) -> Iterator[PairKey]:
        return iter(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def items(self) -> Iterable[tuple[PairKey, ConvexPolygon]]:
        return self.cells.items()

    def nonempty(self) -> dict[PairKey, ConvexPolygon]:
        return {k: c for k, c in self.cells.items() if not c.is_empty}

    def cells_of(self, i: int) -> dict[PairKey, ConvexPolygon]:
        """All cells (including empty ones) whose pair contains agent i."""
        return {k: c for k, c in self.cells.items() if k.contains(i)}

    def empty_count(self) -> int:
        return sum(1 for c in self.cells.values() if c.is_empty)

    def total_area(self) -> float:
        return math.fsum(c.area for c in self.cells.values())

    def area_mismatch(self) -> float:
        """Relative difference between the summed cell areas and the region area."""
        qa = self.region.area
        return abs(self.total_area() - qa) / qa


def order_two_voronoi(P: Any, Q: ConvexPolygon) -> OrderTwoPartition:
    """Builds the complete second-order Voronoi partition of Q.

    Raises
    ------
    GeometryError
        if there are fewer than two agents, two agents coincide, an agent lies
        outside Q, or Q is empty.
    """
    p = positions_of(P)
    validate_configuration(p, Q)
    n = len(p)
    cells = {
        PairKey(i, j): pair_cell(i, j, p, Q) for i in range(n) for j in range(i + 1, n)
    }
    return OrderTwoPartition(cells, Q, p)


def order_two_cells_of(i: int, P: Any, Q: ConvexPolygon) -> dict[PairKey, ConvexPolygon]:
    """The n − 1 cells whose pairs contain agent i, computed without the others."""
    p = positions_of(P)
    validate_configuration(p, Q)
    if not 0 <= i < len(p):
        raise IndexError(f"agent {i} out of range for {len(p)} agents.")
    return {
        PairKey.of(i, j): pair_cell(min(i, j), max(i, j), p, Q)
        for j in range(len(p))
        if j != i
    }


def cell_neighbors(i: int, partition: OrderTwoPartition, rel_tol: float = 1e-9) -> list[int]:
    """Agents whose information agent i needs to compute its own cells.

    These are its partners in non-empty cells, plus every agent whose bisector
    with i or the partner supports an edge of one of those cells.
    """
    p = partition.positions
    tol = rel_tol * partition.region.diameter
    found: set[int] = set()
    for key, cell in partition.cells_of(i).items():
        if cell.is_empty:
            continue
        found.add(key.other(i))
        v = cell.vertices
        mids = 0.5 * (v + np.roll(v, -1, axis=0))
        dist = np.linalg.norm(mids[:, None, :] - p[None, :, :], axis=-1)
        for a in key:
            support = np.abs(dist - dist[:, [a]]) <= tol
            support[:, list(key)] = False
            found.update(int(w) for w in np.flatnonzero(support.any(axis=0)))
    found.discard(i)
    return sorted(found)
