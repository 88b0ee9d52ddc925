"""Polygonal Lipschitz domains: membership, boundary distance, corner angles and
the boundary-layer index sets of wavelet support cubes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Field, grid_coords
from .wavelet import WaveletBasis, _detail_shapes, index_position


@dataclass(frozen=True)
class PolygonDomain:
    """Open polygon with counterclockwise ``vertices``; its boundary counts as outside."""

    vertices: np.ndarray
    name: str = "polygon"
    margin: float = 0.0
    _tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("need at least three 2-D vertices")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        if not _is_simple(v):
            raise ValueError(f"polygon {self.name!r} is not simple")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    # -- geometry ---------------------------------------------------------------

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    @property
    def angles(self) -> np.ndarray:
        """Interior angle at each vertex, in radians."""
        v = self.vertices
        prev, nxt = np.roll(v, 1, axis=0) - v, np.roll(v, -1, axis=0) - v
        # ccw polygon: interior angle measured from next edge to previous edge
        a = np.arctan2(prev[:, 1], prev[:, 0]) - np.arctan2(nxt[:, 1], nxt[:, 0])
        return np.mod(a, 2 * np.pi)

    @property
    def largest_angle(self) -> float:
        return float(self.angles.max())

    @property
    def bounding_square(self) -> tuple[tuple[float, float], float]:
        lo, hi = self.vertices.min(0), self.vertices.max(0)
        side = float((hi - lo).max()) + 2 * self.margin
        c = (lo + hi) / 2
        return (float(c[0] - side / 2), float(c[1] - side / 2)), side

    @property
    def origin(self) -> tuple[float, float]:
        return self.bounding_square[0]

    @property
    def side(self) -> float:
        return self.bounding_square[1]

    # -- queries ----------------------------------------------------------------

    def rho(self, x, y=None) -> np.ndarray:
        """Euclidean distance to the boundary (minimum over edge segments)."""
        px, py = _split(x, y)
        a, b = self.edges
        best = np.full(np.shape(px), np.inf)
        for (ax, ay), (bx, by) in zip(a, b):
            best = np.minimum(best, _point_segment_dist(px, py, ax, ay, bx, by))
        return best

    def contains(self, x, y=None) -> np.ndarray:
        """Strict membership; points on the boundary are outside."""
        px, py = _split(x, y)
        inside = np.zeros(np.shape(px), bool)
        a, b = self.edges
        for (ax, ay), (bx, by) in zip(a, b):
            crosses = (ay > py) != (by > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = ax + (py - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (px < xint)
        return inside & (self.rho(px, py) > self._tol * max(1.0, self.diameter))

    def mask(self, level: int) -> np.ndarray:
        X, Y = grid_coords(level, *self.bounding_square)
        return self.contains(X, Y)

    def field(self, func, level: int) -> Field:
        """Sample ``func`` on the level grid; values off the mask are zeroed."""
        origin, side = self.bounding_square
        X, Y = grid_coords(level, origin, side)
        m = self.contains(X, Y)
        vals = np.where(m, np.asarray(func(X, Y), float) * np.ones_like(X), 0.0)
        return Field(vals, level, origin, side, m)

    def zeros(self, level: int) -> Field:
        return self.field(lambda x, y: 0.0 * x, level)

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "vertices": self.vertices.tolist(), "margin": self.margin})


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        p1, p2 = v[i], v[(i + 1) % n]
        for k in range(i + 1, n):
            if k == i or (k + 1) % n == i or k == (i + 1) % n:
                continue
            q1, q2 = v[k], v[(k + 1) % n]
            if _segments_intersect(p1, p2, q1, q2):
                return False
    return True


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, q1), orient(p1, p2, q2), orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def _split(x, y):
    if y is None:
        pts = np.asarray(x, dtype=float)
        return pts[..., 0], pts[..., 1]
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def _point_segment_dist(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


# --- built-in domains ------------------------------------------------------------

def l_shape() -> PolygonDomain:
    """(-1,1)^2 minus [0,1)^2; reentrant corner at the origin with angle 3*pi/2."""
    return PolygonDomain(np.array([[-1, -1], [1, -1], [1, 0], [0, 0], [0, 1], [-1, 1]], float), "L-shape")


def unit_square() -> PolygonDomain:
    return PolygonDomain(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), "unit-square")


def hexagon() -> PolygonDomain:
    t = np.arange(6) * np.pi / 3
    return PolygonDomain(np.stack([np.cos(t), np.sin(t)], axis=1), "hexagon")


BUILTIN = {"L-shape": l_shape, "l-shape": l_shape, "unit-square": unit_square, "square": unit_square,
           "hexagon": hexagon}


def load_domain(spec) -> PolygonDomain:
    """Built-in name, path to a JSON file, or a ``{"name", "vertices"}`` mapping."""
    if isinstance(spec, PolygonDomain):
        return spec
    if isinstance(spec, dict):
        return PolygonDomain(np.asarray(spec["vertices"], float), spec.get("name", "polygon"),
                             float(spec.get("margin", 0.0)))
    if spec in BUILTIN:
        return BUILTIN[spec]()
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"unknown domain {spec!r}: not a built-in name or a file")
    return load_domain(json.loads(path.read_text()))


# --- extension off the domain ------------------------------------------------------

def reflect_extension(domain: PolygonDomain):
    """Extension policy: even reflection across the nearest edge, zero elsewhere.

    A non-mask node whose foot point lies in the relative interior of its
    nearest edge takes the bilinearly interpolated value at its mirror image,
    provided the mirror image falls inside the domain.
    """

    def extend(fld: Field) -> Field:
        base = fld.masked()
        X, Y = fld.coords()
        out = base.values.copy()
        off = ~fld.inside()
        px, py = X[off], Y[off]
        a, b = domain.edges
        best = np.full(px.shape, np.inf)
        mx, my = np.zeros_like(px), np.zeros_like(py)
        ok = np.zeros(px.shape, bool)
        for (ax, ay), (bx, by) in zip(a, b):
            dx, dy = bx - ax, by - ay
            L2 = dx * dx + dy * dy
            t = ((px - ax) * dx + (py - ay) * dy) / L2
            fx, fy = ax + np.clip(t, 0, 1) * dx, ay + np.clip(t, 0, 1) * dy
            d = np.hypot(px - fx, py - fy)
            better = d < best
            best = np.where(better, d, best)
            mx = np.where(better, 2 * fx - px, mx)
            my = np.where(better, 2 * fy - py, my)
            ok = np.where(better, (t > 0) & (t < 1), ok)
        ok &= domain.contains(mx, my)
        out[off] = np.where(ok, _bilinear(base, mx, my), 0.0)
        return fld.with_values(out)

    return extend


def smooth_extension(domain: PolygonDomain, band: float | None = None, power: int = 8):
    """Extension policy: first-order reflection ``3 f(x + 2d n) - 2 f(x + 3d n)``.

    ``d`` is the distance of an outside node to an edge line and ``n`` the
    inward normal, so value and normal derivative match across the edge. The
    per-edge reflections are blended with weights ``dist_e^-power`` (normalised)
    and faded out by a smooth cutoff at distance ``band`` from the edge. For a
    function vanishing on the boundary this keeps the extension C^1 away from
    corners, where zero-fill or even reflection would leave a kink.
    """
    from scipy.ndimage import map_coordinates

    from .functions import cutoff

    def extend(fld: Field) -> Field:
        base = fld.masked().values
        X, Y = fld.coords()
        off = ~fld.inside()
        px, py = X[off], Y[off]
        width = band if band is not None else 0.2 * fld.side
        a, b = domain.edges
        dists, refl = [], []
        for (ax, ay), (bx, by) in zip(a, b):
            ex, ey = bx - ax, by - ay
            L = math.hypot(ex, ey)
            nx, ny = -ey / L, ex / L  # inward for a counterclockwise polygon
            d = np.maximum(-((px - ax) * nx + (py - ay) * ny), 0.0)
            vals = []
            for shift in (2.0, 3.0):
                qx, qy = px + shift * d * nx, py + shift * d * ny
                coords = np.vstack([(qx - fld.origin[0]) / fld.h, (qy - fld.origin[1]) / fld.h])
                vals.append(map_coordinates(base, coords, order=3, mode="constant", cval=0.0))
            dists.append(_point_segment_dist(px, py, ax, ay, bx, by))
            refl.append((3 * vals[0] - 2 * vals[1]) * cutoff(d, 0.5 * width, width))
        dists = np.maximum(np.array(dists), 1e-300)
        w = (dists.min(axis=0) / dists) ** power
        w /= w.sum(axis=0)
        out = base.copy()
        out[off] = np.sum(w * np.array(refl), axis=0)
        return fld.with_values(out)

    return extend


EXTENSIONS = {"zero": lambda domain: "zero", "reflect": reflect_extension, "smooth": smooth_extension}


def extension_policy(name: str, domain: PolygonDomain):
    """Resolve an extension name into the argument ``dwt2`` expects."""
    if name not in EXTENSIONS:
        raise ValueError(f"unknown extension policy {name!r}; choose from {sorted(EXTENSIONS)}")
    return EXTENSIONS[name](domain)


def _bilinear(fld: Field, x, y):
    n = fld.n
    u = (x - fld.origin[0]) / fld.h
    v = (y - fld.origin[1]) / fld.h
    i = np.clip(np.floor(u).astype(int), 0, n - 2)
    j = np.clip(np.floor(v).astype(int), 0, n - 2)
    s, t = u - i, v - j
    F = fld.values
    return ((1 - s) * (1 - t) * F[i, j] + s * (1 - t) * F[i + 1, j]
            + (1 - s) * t * F[i, j + 1] + s * t * F[i + 1, j + 1])


# --- support cubes versus the domain ------------------------------------------------

def _clip(box, ax, ay, bx, by):
    """Closed Liang-Barsky clip of one segment against many boxes: (hit, t0, t1)."""
    xmin, xmax, ymin, ymax = box.T
    dx, dy = bx - ax, by - ay
    t0 = np.zeros(len(box))
    t1 = np.ones(len(box))
    hit = np.ones(len(box), bool)
    for p, q in ((-dx, ax - xmin), (dx, xmax - ax), (-dy, ay - ymin), (dy, ymax - ay)):
        if p == 0:
            hit &= q >= 0
            continue
        r = q / p
        if p < 0:
            t0 = np.maximum(t0, r)
        else:
            t1 = np.minimum(t1, r)
    hit &= t0 <= t1
    return hit, t0, t1


def _box_point_dist(box, px, py):
    xmin, xmax, ymin, ymax = box.T
    ddx = np.maximum(np.maximum(xmin - px, 0.0), px - xmax)
    ddy = np.maximum(np.maximum(ymin - py, 0.0), py - ymax)
    return np.hypot(ddx, ddy)


def cube_geometry(domain: PolygonDomain, boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For boxes ``(xmin, xmax, ymin, ymax)``: whether each meets the open domain,
    and its exact distance to the boundary (0 if it touches the boundary)."""
    boxes = np.asarray(boxes, float).reshape(-1, 4)
    xmin, xmax, ymin, ymax = boxes.T
    meets = domain.contains((xmin + xmax) / 2, (ymin + ymax) / 2)
    touches = np.zeros(len(boxes), bool)
    dist = np.full(len(boxes), np.inf)
    a, b = domain.edges
    for (ax, ay), (bx, by) in zip(a, b):
        # a polygon vertex strictly inside the box
        meets |= (xmin < ax) & (ax < xmax) & (ymin < ay) & (ay < ymax)
        hit, t0, t1 = _clip(boxes, ax, ay, bx, by)
        tm = (t0 + t1) / 2
        mx, my = ax + tm * (bx - ax), ay + tm * (by - ay)
        meets |= hit & (xmin < mx) & (mx < xmax) & (ymin < my) & (my < ymax)
        touches |= hit
        d = np.minimum(_box_point_dist(boxes, ax, ay), _box_point_dist(boxes, bx, by))
        for cx, cy in ((xmin, ymin), (xmin, ymax), (xmax, ymin), (xmax, ymax)):
            d = np.minimum(d, _point_segment_dist(cx, cy, ax, ay, bx, by))
        dist = np.minimum(dist, d)
    return meets, np.where(touches, 0.0, dist)


@dataclass
class BoundaryLayerSets:
    """Wavelet indices of one level grouped by the boundary distance of their cubes.

    ``layers[m]`` lists the rows of ``indices`` (columns: type, k1, k2) with
    ``m 2^-j <= rho_jk < (m+1) 2^-j``; distances are in reference units of the
    bounding square (physical distance divided by its side).
    """

    level: int
    indices: np.ndarray
    rho: np.ndarray
    layer: np.ndarray
    layers: dict[int, np.ndarray]

    @property
    def all(self) -> np.ndarray:
        return self.indices

    @property
    def interior(self) -> np.ndarray:
        """Lambda_j^0: indices whose cube keeps a positive distance from the boundary."""
        return self.indices[self.layer > 0]

    def sizes(self) -> dict[int, int]:
        return {m: len(v) for m, v in sorted(self.layers.items())}


def boundary_layers(domain: PolygonDomain, basis: WaveletBasis | float, j: int, j0: int = 0) -> BoundaryLayerSets:
    if j < j0:
        raise ValueError("boundary layers are defined for wavelet levels j >= j0")
    N = basis if isinstance(basis, (int, float)) else basis.support_radius
    origin, side = domain.bounding_square
    rows = []
    for t, (n1, n2) in enumerate(_detail_shapes(j), start=1):
        a, b = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
        rows.append(np.stack([np.full(a.size, t), a.ravel(), b.ravel()], axis=1))
    idx = np.concatenate(rows)
    cx, cy, s = index_position(idx[:, 0], np.full(len(idx), j), idx[:, 1], idx[:, 2], j0)
    boxes = np.stack([origin[0] + side * (cx - N * s), origin[0] + side * (cx + N * s),
                      origin[1] + side * (cy - N * s), origin[1] + side * (cy + N * s)], axis=1)
    meets, dist = cube_geometry(domain, boxes)
    idx, dist = idx[meets], dist[meets] / side
    layer = np.floor(dist * 2**j + 1e-12).astype(int)
    layers = {int(m): idx[layer == m] for m in np.unique(layer)}
    return BoundaryLayerSets(j, idx, dist, layer, layers)
