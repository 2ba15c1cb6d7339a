"""Planar curve numerics: arc-length resampling, curvature, crossings.

All curvature-based measures run on a fixed-size arc-length resampling of the
input polyline, so estimates are invariant to the input's sampling pattern
and to rigid motions. Derivatives use direct finite-difference stencils
(central interior, one-sided 3-point at the endpoints); nested first
differences were too noisy for the curvature-rate term.
"""

from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


@dataclass(frozen=True)
class Path:
    """Polyline with cached cumulative arc length."""

    points: np.ndarray  # (N, 2)
    arclength: np.ndarray  # (N,), arclength[0] == 0

    @staticmethod
    def from_points(points) -> "Path":
        pts = dedupe_points(np.asarray(points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"path points must be (N, 2), got {pts.shape}")
        return Path(pts, cumulative_arclength(pts))

    @property
    def length(self) -> float:
        return float(self.arclength[-1]) if len(self.arclength) else 0.0


@dataclass(frozen=True)
class CurvatureProfile:
    """Signed curvature and its arc-length derivative at resampled stations."""

    arclength: np.ndarray  # (K,)
    kappa: np.ndarray  # (K,), positive for left turns
    kappa_dot: np.ndarray  # (K,)


def dedupe_points(points: np.ndarray) -> np.ndarray:
    """Drop exactly-repeated consecutive points."""
    pts = np.asarray(points, dtype=float)
    if len(pts) <= 1:
        return pts
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    return pts[keep]


def cumulative_arclength(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return np.zeros(0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _as_path(path_or_points) -> Path:
    if isinstance(path_or_points, Path):
        return path_or_points
    return Path.from_points(path_or_points)


def resample_arclength(path_or_points, K: int) -> Path:
    """Resample a polyline at K stations uniformly spaced in arc length.

    Interpolation is piecewise linear, so resampled points lie on the input
    chords: for a circle sampled every 1 degree the radial error is bounded
    by the chord sagitta, about 3.8e-4 of the radius times r.
    """
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    path = _as_path(path_or_points)
    if len(path.points) < 2 or path.length <= 0.0:
        raise ValueError("resampling needs a polyline with positive length")
    t = np.linspace(0.0, path.length, K)
    x = np.interp(t, path.arclength, path.points[:, 0])
    y = np.interp(t, path.arclength, path.points[:, 1])
    return Path(np.column_stack([x, y]), t)


def _first_derivative(f: np.ndarray, s: np.ndarray) -> np.ndarray:
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (s[2:] - s[:-2])
    out[0] = (f[1] - f[0]) / (s[1] - s[0])
    out[-1] = (f[-1] - f[-2]) / (s[-1] - s[-2])
    return out


def _second_derivative(f: np.ndarray, s: np.ndarray) -> np.ndarray:
    # Non-uniform 3-point stencil; at the ends the nearest interior stencil
    # is exactly the one-sided 3-point estimate. The difference form keeps
    # constant inputs at exactly zero instead of leaving cancellation noise.
    out = np.empty_like(f)
    h1 = s[1:-1] - s[:-2]
    h2 = s[2:] - s[1:-1]
    out[1:-1] = 2.0 * (h1 * (f[2:] - f[1:-1]) - h2 * (f[1:-1] - f[:-2])) / (h1 * h2 * (h1 + h2))
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def curvature_profile(path_or_points, K: int = 100) -> CurvatureProfile:
    """Signed curvature kappa(s) and kappa_dot(s) on a K-point resampling.

    kappa = (x' y'' - y' x'') / (x'^2 + y'^2)^(3/2) with derivatives taken
    against arc length; left turns are positive. Stations where the local
    speed degenerates report zero curvature.
    """
    if K < 3:
        raise ValueError(f"K must be >= 3 for curvature, got {K}")
    rs = resample_arclength(path_or_points, K)
    s = rs.arclength
    dx = _first_derivative(rs.points[:, 0], s)
    dy = _first_derivative(rs.points[:, 1], s)
    ddx = _second_derivative(rs.points[:, 0], s)
    ddy = _second_derivative(rs.points[:, 1], s)
    speed2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(speed2 > _EPS, (dx * ddy - dy * ddx) / np.power(speed2, 1.5), 0.0)
    return CurvatureProfile(s, kappa, _first_derivative(kappa, s))


def curve_complexity(path_or_points, K: int = 100) -> float:
    """Mean absolute curvature plus mean absolute curvature rate.

    Degenerate inputs (fewer than two distinct points, zero length) score 0;
    an exactly straight polyline scores exactly 0.0.
    """
    path = _as_path(path_or_points)
    if len(path.points) < 2 or path.length <= 0.0:
        return 0.0
    pts = path.points
    # positive length guarantees some point differs from the first; exactly
    # collinear input scores zero with no stencil noise
    first_distinct = int(np.flatnonzero(np.any(pts != pts[0], axis=1))[0])
    d = pts[first_distinct] - pts[0]
    cross = (pts[:, 0] - pts[0, 0]) * d[1] - (pts[:, 1] - pts[0, 1]) * d[0]
    if not np.any(cross):
        return 0.0
    prof = curvature_profile(path, K)
    return float(np.mean(np.abs(prof.kappa)) + np.mean(np.abs(prof.kappa_dot)))


def _segment_arrays(points: np.ndarray):
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return pts[:0], pts[:0]
    return pts[:-1], pts[1:]


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (
        a[..., 1] - o[..., 1]
    ) * (b[..., 0] - o[..., 0])


def count_polyline_crossings(a_points: np.ndarray, b_points: np.ndarray) -> int:
    """Number of proper (transversal) crossings between two polylines.

    Shared endpoints and tangential touches do not count: both segments must
    strictly straddle each other.
    """
    a0, a1 = _segment_arrays(a_points)
    b0, b1 = _segment_arrays(b_points)
    if len(a0) == 0 or len(b0) == 0:
        return 0
    a0e = a0[:, None, :]
    a1e = a1[:, None, :]
    b0e = b0[None, :, :]
    b1e = b1[None, :, :]
    d1 = _cross(a0e, a1e, b0e)
    d2 = _cross(a0e, a1e, b1e)
    d3 = _cross(b0e, b1e, a0e)
    d4 = _cross(b0e, b1e, a1e)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    return int(np.count_nonzero(proper))


def _on_segment(p, q, r) -> bool:
    """q collinear with p-r assumed; True when q lies within the bounding box."""
    return (
        min(p[0], r[0]) - _EPS <= q[0] <= max(p[0], r[0]) + _EPS
        and min(p[1], r[1]) - _EPS <= q[1] <= max(p[1], r[1]) + _EPS
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test, touches and collinear overlap included."""
    d1 = _cross(np.asarray(q1), np.asarray(q2), np.asarray(p1))
    d2 = _cross(np.asarray(q1), np.asarray(q2), np.asarray(p2))
    d3 = _cross(np.asarray(p1), np.asarray(p2), np.asarray(q1))
    d4 = _cross(np.asarray(p1), np.asarray(p2), np.asarray(q2))
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if abs(d1) <= _EPS and _on_segment(q1, p1, q2):
        return True
    if abs(d2) <= _EPS and _on_segment(q1, p2, q2):
        return True
    if abs(d3) <= _EPS and _on_segment(p1, q1, p2):
        return True
    if abs(d4) <= _EPS and _on_segment(p1, q2, p2):
        return True
    return False


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Ray-casting containment for a batch of points; boundary counts as inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    px, py = pts[:, 0], pts[:, 1]
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        straddles = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = np.where(straddles, (x2 - x1) * (py - y1) / (y2 - y1) + x1, 0.0)
        inside ^= straddles & (px < xs)
        seg = np.array([x2 - x1, y2 - y1])
        len2 = seg @ seg
        if len2 <= _EPS:
            d2 = (px - x1) ** 2 + (py - y1) ** 2
        else:
            t = np.clip(((px - x1) * seg[0] + (py - y1) * seg[1]) / len2, 0.0, 1.0)
            d2 = (px - (x1 + t * seg[0])) ** 2 + (py - (y1 + t * seg[1])) ** 2
        on_edge |= d2 <= 1e-18
    return inside | on_edge


def polygon_polyline_intersects(polygon: np.ndarray, polyline: np.ndarray) -> bool:
    """True when the polyline touches or enters the polygon region."""
    poly = np.asarray(polygon, dtype=float)
    line = np.asarray(polyline, dtype=float)
    if len(line) == 0 or len(poly) < 3:
        return False
    if bool(np.any(points_in_polygon(line, poly))):
        return True
    closed = np.vstack([poly, poly[:1]])
    for i in range(len(line) - 1):
        for j in range(len(poly)):
            if segments_intersect(line[i], line[i + 1], closed[j], closed[j + 1]):
                return True
    return False


def polygon_is_simple(polygon: np.ndarray) -> bool:
    """No two non-adjacent edges may intersect (closed ring)."""
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    if n < 3:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return False
    return True


def project_points_to_polyline(points: np.ndarray, poly_points: np.ndarray, cumlen=None):
    """Distance from each point to a polyline plus the foot's arc position.

    Returns (dist, arc) arrays of shape (N,). A single-point polyline acts as
    a degenerate path: plain point distances, arc position 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(poly_points, dtype=float)
    if len(poly) == 0:
        raise ValueError("cannot project onto an empty polyline")
    if len(poly) == 1:
        dist = np.linalg.norm(pts - poly[0], axis=1)
        return dist, np.zeros(len(pts))
    if cumlen is None:
        cumlen = cumulative_arclength(poly)
    p0 = poly[:-1]
    d = poly[1:] - poly[:-1]
    len2 = np.einsum("ij,ij->i", d, d)
    len2 = np.where(len2 <= _EPS, 1.0, len2)
    rel = pts[:, None, :] - p0[None, :, :]
    t = np.clip(np.einsum("nsj,sj->ns", rel, d) / len2[None, :], 0.0, 1.0)
    proj = p0[None, :, :] + t[:, :, None] * d[None, :, :]
    dist2 = np.einsum("nsj,nsj->ns", pts[:, None, :] - proj, pts[:, None, :] - proj)
    j = np.argmin(dist2, axis=1)
    rows = np.arange(len(pts))
    seg_len = np.sqrt(np.einsum("ij,ij->i", d, d))
    dist = np.sqrt(dist2[rows, j])
    arc = cumlen[j] + t[rows, j] * seg_len[j]
    return dist, arc


def point_polyline_distance(point, poly_points: np.ndarray) -> float:
    dist, _ = project_points_to_polyline(np.asarray(point, dtype=float)[None, :], poly_points)
    return float(dist[0])


def min_distance_to_polyline(points: np.ndarray, poly_points: np.ndarray) -> float:
    dist, _ = project_points_to_polyline(points, poly_points)
    return float(np.min(dist))
