"""Polyline utilities: arc-length resampling, crossings, junction clusters."""

import numpy as np

from ..errors import GeometryError


def arc_lengths(points):
    """Cumulative arc length at every vertex, starting at 0."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points, k):
    """Resample a polyline to ``k`` points at equal arc-length spacing.

    Endpoints are preserved exactly. Raises GeometryError for degenerate
    (zero total length) input or k < 2.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise GeometryError("polyline needs at least 2 points")
    if k < 2:
        raise GeometryError("k must be at least 2")
    s = arc_lengths(pts)
    total = s[-1]
    if total <= 0.0:
        raise GeometryError("zero-length polyline cannot be resampled")
    targets = np.linspace(0.0, total, k)
    out = np.empty((k, pts.shape[1]), dtype=np.float64)
    for d in range(pts.shape[1]):
        out[:, d] = np.interp(targets, s, pts[:, d])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def polyline_crossings(a, b):
    """All intersection points between two polylines (each (m, 2)).

    Vectorized over the segments of ``b``; collinear overlaps yield no
    crossing point (coincident roads are a proximity matter, not a
    crossing).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    q = b[:-1]
    s = b[1:] - q
    b_lo = np.minimum(b[:-1], b[1:])
    b_hi = np.maximum(b[:-1], b[1:])
    hits = []
    tol = 1e-12
    for i in range(len(a) - 1):
        p = a[i]
        r = a[i + 1] - p
        lo = np.minimum(a[i], a[i + 1])
        hi = np.maximum(a[i], a[i + 1])
        near = ~np.any((b_lo > hi) | (b_hi < lo), axis=1)
        if not near.any():
            continue
        qn = q[near]
        sn = s[near]
        denom = r[0] * sn[:, 1] - r[1] * sn[:, 0]
        ok = denom != 0.0
        if not ok.any():
            continue
        qp = qn[ok] - p
        d = denom[ok]
        t = (qp[:, 0] * sn[ok][:, 1] - qp[:, 1] * sn[ok][:, 0]) / d
        u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / d
        valid = (t >= -tol) & (t <= 1.0 + tol) & (u >= -tol) & (u <= 1.0 + tol)
        for tv in t[valid]:
            hits.append(p + tv * r)
    return hits


def self_crossings(a):
    """Intersection points of a polyline with itself (non-adjacent segments)."""
    a = np.asarray(a, dtype=np.float64)
    nseg = len(a) - 1
    if nseg < 3:
        return []
    q = a[:-1]
    s = a[1:] - q
    hits = []
    tol = 1e-12
    for i in range(nseg - 2):
        p = a[i]
        r = a[i + 1] - p
        qn = q[i + 2:]
        sn = s[i + 2:]
        denom = r[0] * sn[:, 1] - r[1] * sn[:, 0]
        ok = denom != 0.0
        if not ok.any():
            continue
        qp = qn[ok] - p
        d = denom[ok]
        t = (qp[:, 0] * sn[ok][:, 1] - qp[:, 1] * sn[ok][:, 0]) / d
        u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / d
        valid = (t >= -tol) & (t <= 1.0 + tol) & (u >= -tol) & (u <= 1.0 + tol)
        for tv in t[valid]:
            hits.append(p + tv * r)
    return hits


def point_to_polyline_distance(points, poly):
    """Distance from each query point to the nearest location on ``poly``.

    points: (m, 2); poly: (n, 2). Returns (m,) distances using exact
    point-to-segment projection.
    """
    pts = np.asarray(points, dtype=np.float64)
    pl = np.asarray(poly, dtype=np.float64)
    a = pl[:-1]
    v = pl[1:] - a
    vv = (v * v).sum(axis=1)
    vv[vv == 0.0] = 1.0
    # (m, nseg) parametric position of each point on each segment
    w = pts[:, None, :] - a[None, :, :]
    t = np.clip((w * v[None, :, :]).sum(axis=2) / vv[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * v[None, :, :]
    d = np.linalg.norm(pts[:, None, :] - closest, axis=2)
    return d.min(axis=1)


def cluster_points(points, radius):
    """Single-linkage clusters of 2D points with linkage distance ``radius``.

    Returns a list of (center, member_count) tuples.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    n = len(pts)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pts[i] - pts[j]) <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = []
    for members in groups.values():
        arr = np.stack([pts[i] for i in members])
        out.append((arr.mean(axis=0), len(members)))
    return out


def detect_junctions(roads, radius=10.0, min_degree=3):
    """Junction points of a set of metric roads.

    A junction is a cluster (single linkage, ``radius`` meters) of road
    endpoints and inter-road crossing points containing at least
    ``min_degree`` members. Returns a list of cluster-center points.
    """
    nodes = []
    for r in roads:
        r = np.asarray(r, dtype=np.float64)
        nodes.append(r[0])
        nodes.append(r[-1])
    for i in range(len(roads)):
        for j in range(i + 1, len(roads)):
            nodes.extend(polyline_crossings(roads[i], roads[j]))
    centers = []
    for center, count in cluster_points(nodes, radius):
        if count >= min_degree:
            centers.append(center)
    return centers
