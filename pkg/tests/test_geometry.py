import math

import numpy as np
import pytest

from photocov.experiments import GridOracleSpec, oracle_cells
from photocov.geometry import (
    ConvexPolygon,
    GeometryError,
    HalfPlane,
    PairKey,
    Point2,
    bisector_halfplane,
    cell_neighbors,
    clip,
    intersect,
    lens_polygon,
    order_two_cells_of,
    order_two_voronoi,
    pair_cell,
    polygon_area,
    polygon_diameter,
    project_to_polygon,
)
from photocov.simulator import random_configuration


@pytest.fixture
def square():
    return ConvexPolygon.rectangle(0.0, 0.0, 1.5, 1.5)


@pytest.mark.parametrize(
    ["poly", "area"],
    [
        (ConvexPolygon.rectangle(0, 0, 1, 1), 1.0),
        (ConvexPolygon.empty(), 0.0),
        (ConvexPolygon.rectangle(0, 0, 1.5, 1.5), 2.25),
        (ConvexPolygon([[0, 0], [1, 0], [0, 1]]), 0.5),
    ],
)
def test_polygon_area(poly, area):
    assert polygon_area(poly) == pytest.approx(area, abs=1e-15)


def test_polygon_diameter():
    assert polygon_diameter(ConvexPolygon.rectangle(0, 0, 1.5, 1.5)) == pytest.approx(
        1.5 * math.sqrt(2)
    )
    assert polygon_diameter(ConvexPolygon.rectangle(0, 0, 1, 1)) == pytest.approx(math.sqrt(2))
    assert polygon_diameter(ConvexPolygon([[0.5, 0.5]])) == 0.0
    with pytest.raises(GeometryError, match="empty region"):
        polygon_diameter(ConvexPolygon.empty())


def test_clockwise_input_is_normalized():
    cw = ConvexPolygon([[0, 0], [0, 1], [1, 1], [1, 0]])
    assert cw.area == pytest.approx(1.0)
    assert cw.is_convex()
    assert cw.contains([0.5, 0.5])
    assert cw.is_rectangle()


def test_duplicate_vertices_are_merged():
    poly = ConvexPolygon([[0, 0], [1, 0], [1, 1e-14], [1, 1], [0, 1]])
    assert len(poly) == 4


def test_centroid_and_bounding_box(square):
    c = square.centroid
    assert (c.x, c.y) == pytest.approx((0.75, 0.75))
    assert square.bounding_box() == (0.0, 0.0, 1.5, 1.5)
    tri = ConvexPolygon([[0, 0], [3, 0], [0, 3]])
    assert tuple(tri.centroid) == pytest.approx((1.0, 1.0))


def test_point2():
    p = Point2.from_obj([3, 4])
    assert p == Point2(3.0, 4.0)
    assert p.distance((0, 0)) == 5.0
    assert list(p) == [3.0, 4.0]
    with pytest.raises(GeometryError):
        Point2(math.nan, 0)


def test_bisector_halfplane():
    hp = bisector_halfplane([0, 0], [2, 0])
    assert np.linalg.norm(hp.normal) == pytest.approx(1.0)
    assert hp.contains([0.5, 3.0])
    assert hp.contains([1.0, -2.0])
    assert not hp.contains([1.5, 0.0])
    with pytest.raises(GeometryError, match="degenerate bisector"):
        bisector_halfplane([0.3, 0.3], [0.3, 0.3 + 1e-10])


def test_clip(square):
    left = clip(square, HalfPlane([1, 0], 0.5))
    assert left.area == pytest.approx(0.75)
    assert left.is_convex()
    assert clip(square, HalfPlane([1, 0], -1.0)).is_empty
    assert clip(square, HalfPlane([1, 0], 5.0)) is square
    assert clip(ConvexPolygon.empty(), HalfPlane([1, 0], 5.0)).is_empty


def test_clip_idempotent(square):
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.uniform(0, 1.5, (2, 2))
        hp = bisector_halfplane(a, b)
        once = clip(square, hp)
        twice = clip(once, hp)
        assert once.is_convex()
        assert len(once) == len(twice)
        np.testing.assert_allclose(once.vertices, twice.vertices, atol=1e-12)


def test_intersect():
    a = ConvexPolygon.rectangle(0, 0, 1, 1)
    b = ConvexPolygon.rectangle(0.5, 0.5, 2, 2)
    assert intersect(a, b).area == pytest.approx(0.25)
    assert intersect(a, ConvexPolygon.rectangle(3, 3, 4, 4)).is_empty


def test_project_to_polygon(square):
    np.testing.assert_allclose(project_to_polygon([2.0, 0.5], square), [1.5, 0.5])
    np.testing.assert_allclose(project_to_polygon([-1.0, -1.0], square), [0.0, 0.0])
    np.testing.assert_allclose(project_to_polygon([0.3, 0.4], square), [0.3, 0.4])


@pytest.mark.parametrize("d", [0.1, 0.5, 0.9])
def test_lens_polygon_area(d):
    r = 0.5
    lens = lens_polygon([0.0, 0.0], [d, 0.0], r, 256)
    exact = 2 * r**2 * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r**2 - d**2)
    assert lens.is_convex()
    assert lens.area == pytest.approx(exact, rel=1e-3)
    assert lens.area <= exact


def test_lens_polygon_empty():
    assert lens_polygon([0, 0], [1.0, 0], 0.5, 256).is_empty
    assert lens_polygon([0, 0], [0.2, 0], 0.0, 256).is_empty


def test_pair_key():
    assert PairKey.of(3, 1) == PairKey(1, 3)
    assert PairKey(1, 3).other(1) == 3
    assert PairKey(1, 3).contains(3)
    assert str(PairKey(1, 3)) == "1,3"
    assert PairKey.parse("4,2") == PairKey(2, 4)
    with pytest.raises(ValueError):
        PairKey(2, 1)
    with pytest.raises(ValueError):
        PairKey(1, 3).other(2)


def test_two_agents_single_cell(square):
    part = order_two_voronoi([[0.3, 0.3], [1.0, 1.2]], square)
    assert len(part) == 1
    assert part[0, 1].area == pytest.approx(square.area)


def test_collinear_agents(square):
    P = [[0.25, 0.75], [0.75, 0.75], [1.25, 0.75]]
    part = order_two_voronoi(P, square)
    assert part[0, 2].is_empty
    assert part.empty_count() == 1
    assert set(part.nonempty()) == {PairKey(0, 1), PairKey(1, 2)}
    assert part.total_area() == pytest.approx(2.25)

    pts, pairs = oracle_cells(P, square, GridOracleSpec(resolution=500))
    for key, cell in part.nonempty().items():
        mask = (pairs[:, 0] == key.i) & (pairs[:, 1] == key.j)
        assert mask.any()
        assert cell.contains(pts[mask], tol=1e-9).all()
    assert not ((pairs[:, 0] == 0) & (pairs[:, 1] == 2)).any()


@pytest.mark.parametrize("n", range(2, 13))
def test_partition_completeness(square, n):
    P = random_configuration(n, square, seed=100 + n)
    part = order_two_voronoi(P, square)
    assert len(part) == n * (n - 1) // 2
    assert part.total_area() == pytest.approx(square.area, rel=1e-6)
    for cell in part.nonempty().values():
        assert cell.is_convex()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_partition_membership(square, seed):
    P = random_configuration(7, square, seed=seed)
    part = order_two_voronoi(P, square)
    pts, pairs = oracle_cells(P, square, GridOracleSpec(resolution=64))
    for key, cell in part.items():
        mask = (pairs[:, 0] == key.i) & (pairs[:, 1] == key.j)
        if mask.any():
            assert cell.contains(pts[mask], tol=1e-9).all()


def test_configuration_errors(square):
    with pytest.raises(GeometryError, match="requires n ≥ 2"):
        order_two_voronoi([[0.5, 0.5]], square)
    with pytest.raises(GeometryError, match="degenerate configuration"):
        order_two_voronoi([[0.5, 0.5], [0.5, 0.5], [1.0, 1.0]], square)
    with pytest.raises(GeometryError, match="agent outside region"):
        order_two_voronoi([[0.5, 0.5], [1.6, 0.5]], square)
    with pytest.raises(GeometryError, match="empty region"):
        order_two_voronoi([[0.5, 0.5], [1.0, 0.5]], ConvexPolygon.empty())


def test_cells_of_agent_match_full_partition(square):
    P = random_configuration(6, square, seed=3)
    part = order_two_voronoi(P, square)
    own = order_two_cells_of(2, P, square)
    assert set(own) == set(part.cells_of(2))
    assert len(own) == 5
    for key, cell in own.items():
        assert cell == part[key]


def test_neighbors_determine_own_cells(square):
    P = random_configuration(10, square, seed=4)
    part = order_two_voronoi(P, square)
    for i in range(10):
        neighbors = cell_neighbors(i, part)
        assert i not in neighbors
        for key, cell in part.cells_of(i).items():
            if cell.is_empty:
                continue
            local = pair_cell(key.i, key.j, P, square, competitors=neighbors)
            assert local.area == pytest.approx(cell.area, rel=1e-9, abs=1e-15)
