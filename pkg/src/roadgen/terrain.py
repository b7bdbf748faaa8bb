"""Lift planar roads to 3D: curvature-limited gradients and elevation.

The permissible longitudinal gradient at a point follows from the lateral
force budget on a curve of radius r at the design speed: the gradient
angle is the one whose cosine saturates the force bound, converted to a
slope and capped by the regulatory maximum (5% at 80 km/h). Straight
segments carry zero gradient. Flyover-tagged roads get a rise/hold/descend
ramp toward a clearance height, clipped by the same gradient bound.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError

GRAVITY = 9.81


@dataclass
class TerrainConfig:
    v: float = 22.22          # design speed, m/s (80 km/h)
    m: float = 1500.0         # vehicle mass, kg
    fc_max: float | None = None  # max lateral force, N; default 0.3 * m * g
    rho_max: float = 0.05     # max gradient (slope) at the design speed
    smooth_window: int = 5
    flyover_clearance_m: float = 5.5

    def __post_init__(self):
        if self.fc_max is None:
            self.fc_max = 0.3 * self.m * GRAVITY
        if self.v <= 0 or self.m <= 0 or self.fc_max <= 0:
            raise ConfigError("speed, mass, and force limit must be positive")
        if not (0.0 < self.rho_max <= 0.15):
            raise ConfigError("rho_max must lie in (0, 0.15]")


def menger_curvature(polyline):
    """Curvature magnitude at each point from circumscribed circles.

    kappa_i = 4 * Area(p_{i-1}, p_i, p_{i+1}) / (|a| |b| |c|) over interior
    points; collinear triples give 0; endpoints copy the nearest interior
    value. Duplicate consecutive points are rejected.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise GeometryError("need at least 3 points for curvature")
    seg = np.diff(pts, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    if np.any(seglen == 0.0):
        raise GeometryError("duplicate consecutive points")
    a = seglen[:-1]
    b = seglen[1:]
    chord = np.linalg.norm(pts[2:] - pts[:-2], axis=1)
    cross = seg[:-1, 0] * seg[1:, 1] - seg[:-1, 1] * seg[1:, 0]
    area2 = np.abs(cross)  # 2 * triangle area
    kappa = np.zeros(len(pts), dtype=np.float64)
    interior = np.where(chord > 0.0, 2.0 * area2 / (a * b * np.where(chord == 0, 1.0, chord)), 0.0)
    kappa[1:-1] = interior
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    return kappa


def _moving_average(values, window):
    if window <= 1:
        return values
    kernel = np.ones(window) / window
    pad = window // 2
    padded = np.pad(values, pad, mode="edge")
    out = np.convolve(padded, kernel, mode="valid")
    return out[: len(values)]


def slope_profile(polyline, cfg):
    """Permissible gradient (slope, dimensionless) at each point."""
    kappa = menger_curvature(polyline)
    pts = np.asarray(polyline, dtype=np.float64)
    # cos(rho_angle) budget: Fc_max * r / (m v^2), saturated at 1 (straight)
    with np.errstate(divide="ignore"):
        r = np.where(kappa > 0.0, 1.0 / np.where(kappa == 0, 1.0, kappa), np.inf)
    c = np.clip(cfg.fc_max * r / (cfg.m * cfg.v ** 2), 0.0, 1.0)
    rho_c = np.tan(np.arccos(c))
    rho = np.minimum(rho_c, cfg.rho_max)
    rho = _moving_average(rho, cfg.smooth_window)
    return np.minimum(rho, cfg.rho_max)


def _ramp_slopes(seg_len, clearance, rho_max):
    """Per-segment slopes of a rise/hold/descend ramp along the road."""
    s = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s[-1]
    ramp_len = min(clearance / rho_max, total / 2.0)
    height = min(clearance, ramp_len * rho_max)
    mid = (s[:-1] + s[1:]) / 2.0
    slopes = np.zeros_like(seg_len)
    up = mid < ramp_len
    down = mid > total - ramp_len
    slopes[up] = height / ramp_len if ramp_len > 0 else 0.0
    slopes[down] = -height / ramp_len if ramp_len > 0 else 0.0
    return slopes


def elevation_profile(rho, polyline, cfg=None, flyover=False):
    """Integrate per-point gradients into z along arc length.

    Slopes are applied per segment (the leading point's rho); flyover roads
    add a ramp template whose combined gradient is clipped to rho_max.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    slopes = rho[:-1].copy()
    if flyover:
        if cfg is None:
            raise ConfigError("flyover ramps need a TerrainConfig")
        slopes = slopes + _ramp_slopes(seg_len, cfg.flyover_clearance_m, cfg.rho_max)
    rho_cap = cfg.rho_max if cfg is not None else np.inf
    slopes = np.clip(slopes, -rho_cap, rho_cap)
    z = np.concatenate([[0.0], np.cumsum(slopes * seg_len)])
    return z


def lift_scenario(roads, cfg, flyover_road=None):
    """Assign z profiles to every road of a metric scenario.

    roads: list of (k, 2) arrays. ``flyover_road`` optionally names the
    index of the road that receives the ramp template. Returns a list of
    (k,) elevation arrays aligned with the inputs.

    Unlike the strict per-road operations, this tolerates generated roads
    with repeated consecutive points: slopes are computed on the
    deduplicated polyline and zero-length segments add no elevation. Roads
    that collapse to fewer than 3 distinct points stay flat.
    """
    out = []
    for i, road in enumerate(roads):
        road = np.asarray(road, dtype=np.float64)
        seg = np.linalg.norm(np.diff(road, axis=0), axis=1)
        keep = np.concatenate([[True], seg > 0.0])
        dedup = road[keep]
        if len(dedup) < 3:
            out.append(np.zeros(len(road)))
            continue
        rho_dedup = slope_profile(dedup, cfg)
        rho = np.zeros(len(road))
        rho[keep] = rho_dedup
        # duplicates sit at the same location as their predecessor: forward-fill
        last_kept = np.maximum.accumulate(np.where(keep, np.arange(len(road)), -1))
        rho = rho[last_kept]
        out.append(elevation_profile(rho, road, cfg, flyover=(i == flyover_road)))
    return out
