import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spdewave.domain import (PolygonDomain, boundary_layers, cube_geometry, extension_policy, hexagon,
                             l_shape, load_domain)
from spdewave.grid import grid_coords
from spdewave.wavelet import dwt2, idwt2

from conftest import sample


def dense_boundary_distance(domain, x, y, per_edge=20001):
    """Brute-force oracle: minimum over densely sampled boundary points."""
    a, b = domain.edges
    t = np.linspace(0, 1, per_edge)[:, None]
    pts = np.concatenate([p + t * (q - p) for p, q in zip(a, b)])
    return float(np.min(np.hypot(pts[:, 0] - x, pts[:, 1] - y)))


def test_lshape_membership(lshape):
    assert lshape.contains(-0.5, -0.5)
    assert not lshape.contains(0.5, 0.5)
    assert not lshape.contains(0.0, 0.0)
    assert not lshape.contains(-1.0, 0.3)


def test_lshape_geometry(lshape):
    assert lshape.area == pytest.approx(3.0)
    assert lshape.largest_angle == pytest.approx(1.5 * np.pi)
    assert lshape.diameter == pytest.approx(2 * np.sqrt(2))
    assert lshape.bounding_square == ((-1.0, -1.0), 2.0)


def test_distance_examples(lshape):
    assert lshape.rho(-0.5, -0.5) == pytest.approx(0.5)
    assert lshape.rho(-1.0, 0.25) == 0.0
    assert lshape.rho(0.3, 0.0) == pytest.approx(0.0, abs=1e-15)
    # nearest boundary point of (-0.1, 0.1) is on the edge x = 0
    assert lshape.rho(-0.1, 0.1) == pytest.approx(0.1)
    assert lshape.rho(-0.1, -0.1) == pytest.approx(np.sqrt(0.02))


@given(x=st.floats(-0.999, 0.999), y=st.floats(-0.999, 0.999))
def test_distance_matches_dense_oracle(x, y):
    dom = l_shape()
    if not dom.contains(x, y):
        return
    assert dom.rho(x, y) == pytest.approx(dense_boundary_distance(dom, x, y, 2001), abs=2e-3)


def test_distance_oracle_frozen_points(lshape):
    for x, y in [(-0.1, 0.1), (-0.1, -0.1), (-0.7, 0.35), (0.4, -0.9)]:
        assert lshape.rho(x, y) == pytest.approx(dense_boundary_distance(lshape, x, y), abs=1e-6)


def test_polygon_orientation_and_validation():
    cw = PolygonDomain(np.array([[0, 0], [0, 1], [1, 1], [1, 0]]))
    assert cw.area == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PolygonDomain(np.array([[0, 0], [1, 1], [1, 0], [0, 1]]))  # bow tie
    with pytest.raises(ValueError):
        PolygonDomain(np.array([[0, 0], [1, 0]]))


def test_load_domain_variants(tmp_path, lshape):
    assert load_domain("l-shape").area == lshape.area
    p = tmp_path / "dom.json"
    p.write_text(lshape.to_json())
    assert np.array_equal(load_domain(str(p)).vertices, lshape.vertices)
    assert load_domain(json.loads(hexagon().to_json())).area == pytest.approx(hexagon().area)
    with pytest.raises(ValueError):
        load_domain("no-such-domain")


def test_mask_excludes_boundary_nodes(lshape):
    m = lshape.mask(4)
    X, Y = grid_coords(4, lshape.origin, lshape.side)
    assert not m[(X == 0) & (Y >= 0)].any()
    assert not m[0].any() and not m[-1].any()
    assert m.sum() == np.sum(lshape.contains(X, Y))


# --- boundary layers ------------------------------------------------------------

def test_square_boundary_layer_is_one_dimensional(square, b4):
    # the support radius is 9 cells, so doubling sets in once 2^j >> 18
    sizes = [len(boundary_layers(square, b4, j).layers[0]) for j in range(6, 10)]
    ratios = [sizes[i + 1] / sizes[i] for i in range(len(sizes) - 1)]
    assert all(1.9 < r < 2.3 for r in ratios)
    assert ratios[-1] < ratios[0]


def test_layers_vanish_beyond_inradius(square, b2):
    # inradius of the unit square is 1/2 (reference units: side 1)
    for j in range(2, 7):
        bl = boundary_layers(square, b2, j)
        assert all(m * 2.0**-j <= 0.5 for m in bl.layers)


def test_layers_partition_indices(lshape, b4):
    bl = boundary_layers(lshape, b4, 5)
    total = sum(len(v) for v in bl.layers.values())
    assert total == len(bl.indices)
    assert len({tuple(r) for r in bl.indices}) == total


def test_layer_distance_exact_for_box(square):
    # a box inside the unit square at distance 0.25 from the left edge
    meets, dist = cube_geometry(square, np.array([[0.25, 0.5, 0.4, 0.6]]))
    assert meets[0] and dist[0] == pytest.approx(0.25)
    meets, dist = cube_geometry(square, np.array([[1.5, 2.0, 0.4, 0.6]]))
    assert not meets[0]


def test_lshape_layers_bounded_per_boundary_length(lshape, b4):
    const = [max(boundary_layers(lshape, b4, j).sizes().values()) / 2**j for j in range(3, 9)]
    # coarse levels are dominated by wide supports; the sequence saturates
    assert np.all(np.diff(const) > 0)
    assert const[-1] / const[-2] < 1.05
    assert max(const) < 150


# --- extension policies ---------------------------------------------------------

def test_extension_policies_agree_inside(lshape, b4):
    f = sample(lshape, lambda x, y: np.sin(3 * x) * (1 + y), 6)
    for name in ("zero", "reflect", "smooth"):
        g = idwt2(dwt2(f, b4, extension=extension_policy(name, lshape)))
        assert np.allclose(g.values[f.mask], f.values[f.mask], atol=1e-10)


def test_reflect_extension_mirrors_across_edges(square):
    # a function odd about no edge: the extension equals the mirrored value
    fld = sample(square, lambda x, y: x * (1 - x) * y * (1 - y) + 0 * x, 5)
    ext = extension_policy("reflect", square)(fld)
    assert np.allclose(ext.values[fld.mask], fld.values[fld.mask])


def test_smooth_extension_is_c1_across_straight_edge():
    dom = PolygonDomain(np.array([[0.0, -1.0], [1.0, -1.0], [1.0, 1.0], [0.0, 1.0]]))
    # the bounding square [0,2]x[-1,1] leaves an outside strip x > 1
    J = 7
    fld = sample(dom, lambda x, y: (1 - x) * np.cos(y), J)
    ext = extension_policy("smooth", dom)(fld)
    X, Y = fld.coords()
    row = np.argmin(np.abs(Y[0] - 0.0))
    xs, vals = X[:, row], ext.values[:, row]
    h = fld.h
    i = np.argmin(np.abs(xs - 1.0))
    left = (vals[i] - vals[i - 1]) / h
    right = (vals[i + 1] - vals[i]) / h
    assert right == pytest.approx(left, abs=0.05)


def test_unknown_extension_rejected(lshape):
    with pytest.raises(ValueError):
        extension_policy("periodic", lshape)
