"""2D geometry kernel: polygons, signed distance, Chamfer, exact EDT, poses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


def norm_angle(theta):
    """Normalize an angle to (-pi, pi]."""
    t = (theta + np.pi) % (2.0 * np.pi) - np.pi
    if t <= -np.pi:
        t += 2.0 * np.pi
    return t


@dataclass(frozen=True)
class Pose2:
    """Rigid planar transform: rotate by theta, then translate by (x, y)."""
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", norm_angle(self.theta))

    def rot(self):
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def apply(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = pts @ self.rot().T + np.array([self.x, self.y])
        return out if np.asarray(points).ndim == 2 else out[0]

    def compose(self, other: "Pose2") -> "Pose2":
        """Pose equivalent to applying `other` first, then `self`."""
        t = self.apply([other.x, other.y])
        return Pose2(t[0], t[1], self.theta + other.theta)

    def inverse(self) -> "Pose2":
        c, s = np.cos(self.theta), np.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)


def transform_points(points, pose: Pose2):
    return pose.apply(points)


class Polygon:
    """Simple CCW polygon. Vertices are (x, y) in meters."""

    def __init__(self, verts, validate=True):
        self.verts = np.ascontiguousarray(verts, dtype=np.float64)
        if validate:
            self.validate()
        self._cum = None

    def validate(self):
        v = self.verts
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValueError(f"polygon needs >=3 2D vertices, got shape {v.shape}")
        if self.area() <= 0:
            raise ValueError("polygon must be counter-clockwise with positive area")
        if self_intersects(v):
            raise ValueError("polygon is self-intersecting")

    def area(self):
        x, y = self.verts[:, 0], self.verts[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def centroid(self):
        """Uniform-density area centroid (shoelace moments)."""
        v = self.verts
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = cross.sum() / 2.0
        cx = float(((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a))
        cy = float(((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a))
        return np.array([cx, cy])

    def edge_lengths(self):
        return np.linalg.norm(np.roll(self.verts, -1, axis=0) - self.verts, axis=1)

    def perimeter(self):
        return float(self.edge_lengths().sum())

    def _cumlens(self):
        if self._cum is None:
            self._cum = np.concatenate([[0.0], np.cumsum(self.edge_lengths())])
        return self._cum

    def point_at(self, s):
        """Boundary point at arc-length s from vertex 0 (CCW)."""
        cum = self._cumlens()
        perim = cum[-1]
        s = float(s) % perim
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(self.verts) - 1)
        a = self.verts[i]
        b = self.verts[(i + 1) % len(self.verts)]
        seg = cum[i + 1] - cum[i]
        t = 0.0 if seg <= 0 else (s - cum[i]) / seg
        return a + t * (b - a)

    def sample_boundary(self, n):
        """n boundary points evenly spaced by arc length; returns (points, s)."""
        perim = self.perimeter()
        s = (np.arange(n) + 0.5) * perim / n
        pts = np.array([self.point_at(si) for si in s])
        return pts, s

    def signed_distance(self, points):
        """(sd, closest, outward normal) per query point; sd < 0 inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        sd, closest, normal = kernels.polygon_sdf(np.ascontiguousarray(pts), self.verts)
        if np.asarray(points).ndim == 1:
            return float(sd[0]), closest[0], normal[0]
        return sd, closest, normal

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        sd, _, _ = kernels.polygon_sdf(np.ascontiguousarray(pts), self.verts)
        return sd < 0

    def transformed(self, pose: Pose2) -> "Polygon":
        return Polygon(pose.apply(self.verts), validate=False)

    def arc_param_of(self, point):
        """Arc-length parameter of the boundary point closest to `point`."""
        v = self.verts
        w = np.roll(v, -1, axis=0)
        e = w - v
        el2 = np.maximum((e * e).sum(axis=1), 1e-30)
        p = np.asarray(point, dtype=np.float64)
        t = np.clip(((p - v) * e).sum(axis=1) / el2, 0.0, 1.0)
        proj = v + t[:, None] * e
        d2 = ((p - proj) ** 2).sum(axis=1)
        i = int(d2.argmin())
        cum = self._cumlens()
        return float(cum[i] + t[i] * np.sqrt(el2[i]))


def segments_intersect(p1, p2, p3, p4):
    """Proper or improper intersection of segments p1p2 and p3p4."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
                and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12)

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    for d, a, b, c in ((d1, p3, p4, p1), (d2, p3, p4, p2), (d3, p1, p2, p3), (d4, p1, p2, p4)):
        if abs(d) < 1e-15 and on_seg(a, b, c):
            return True
    return False


def self_intersects(verts):
    n = len(verts)
    for i in range(n):
        a1, a2 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_intersect(a1, a2, verts[j], verts[(j + 1) % n]):
                return True
    return False


def chamfer(a, b):
    """Symmetric mean nearest-neighbour distance between two point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance of an empty point set is undefined")
    return kernels.chamfer_dist(np.ascontiguousarray(a), np.ascontiguousarray(b))


def distance_transform(mask):
    """Exact Euclidean distance (in cells) to the nearest set cell.

    An all-empty mask maps every cell to the sentinel H+W.
    """
    m = np.ascontiguousarray(np.asarray(mask) != 0, dtype=np.uint8)
    h, w = m.shape
    if not m.any():
        return np.full((h, w), float(h + w), dtype=np.float64)
    sq = kernels.edt_sqdist(m)
    return np.sqrt(sq)


# --- boundary-arc intervals -------------------------------------------------
# Arcs are (s0, s1) arc-length intervals along the boundary, CCW, with
# s0 <= s1 <= s0 + perimeter; membership is evaluated modulo the perimeter,
# so an arc may wrap past vertex 0 and (0, perimeter) covers everything.

def arc_contains(arcs, s, perim, tol=0.0):
    for s0, s1 in arcs:
        span = s1 - s0
        if span >= perim - 1e-12:
            return True
        d = (s - s0) % perim
        if d <= span + tol or d >= perim - tol:
            return True
    return False


def arc_total_length(arcs, perim):
    return float(sum(min(s1 - s0, perim) for s0, s1 in arcs))


def arc_distance(s, arcs, perim):
    """Shortest circular arc-length distance from s to any arc."""
    best = np.inf
    for s0, s1 in arcs:
        span = min(s1 - s0, perim)
        d = (s - s0) % perim
        if d <= span:
            return 0.0
        best = min(best, min(d - span, perim - d))
    return best


def arc_sample(arcs, perim, n):
    """n parameters evenly spread over the arcs (proportional to length)."""
    total = arc_total_length(arcs, perim)
    ts = (np.arange(n) + 0.5) * total / n
    out = np.empty(n)
    for i, t in enumerate(ts):
        rem = t
        for s0, s1 in arcs:
            ln = min(s1 - s0, perim)
            if rem <= ln:
                out[i] = (s0 + rem) % perim
                break
            rem -= ln
        else:
            out[i] = arcs[-1][1] % perim
    return out
