"""Local metric projection of WGS84 shape points.

Scenarios are at most a few hundred meters across, so an equirectangular
projection about the scenario origin is accurate to well under 0.1% and
keeps the forward/inverse pair exactly invertible.
"""

import math

import numpy as np

from ..errors import GeometryError

EARTH_RADIUS_M = 6_371_000.0
DEG = math.pi / 180.0


def project_to_local(points, origin):
    """Project (lat, lng) pairs to local (x, y) meters about ``origin``.

    points: array-like of shape (m, 2) in (lat, lng) order.
    origin: (lat, lng) tuple.
    Raises GeometryError if any point is more than 1 degree from origin.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"expected (m, 2) lat/lng array, got shape {pts.shape}")
    lat0, lng0 = float(origin[0]), float(origin[1])
    dlat = pts[:, 0] - lat0
    dlng = pts[:, 1] - lng0
    if np.any(np.abs(dlat) > 1.0) or np.any(np.abs(dlng) > 1.0):
        bad = int(np.argmax(np.maximum(np.abs(dlat), np.abs(dlng))))
        raise GeometryError(
            f"point {bad} is more than 1 degree from the projection origin"
        )
    x = dlng * math.cos(lat0 * DEG) * DEG * EARTH_RADIUS_M
    y = dlat * DEG * EARTH_RADIUS_M
    return np.stack([x, y], axis=1)


def unproject_from_local(xy, origin):
    """Inverse of :func:`project_to_local` (exact up to float rounding)."""
    pts = np.asarray(xy, dtype=np.float64)
    lat0, lng0 = float(origin[0]), float(origin[1])
    lat = pts[:, 1] / (DEG * EARTH_RADIUS_M) + lat0
    lng = pts[:, 0] / (DEG * EARTH_RADIUS_M * math.cos(lat0 * DEG)) + lng0
    return np.stack([lat, lng], axis=1)


def haversine_m(p, q):
    """Great-circle distance in meters between (lat, lng) points."""
    lat1, lng1 = float(p[0]) * DEG, float(p[1]) * DEG
    lat2, lng2 = float(q[0]) * DEG, float(q[1]) * DEG
    dlat = lat2 - lat1
    dlng = lng2 - lng1
    a = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlng / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))
