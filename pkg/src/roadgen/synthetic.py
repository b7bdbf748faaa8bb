"""Synthetic road layouts for the four scenario types.

Used by the demo scripts and the test suite: geometry is built in local
meters, lifted to WGS84 around a base point, and can be emitted either as
RawScenarios or as a GeoJSON FeatureCollection plus scenario seed list for
exercising the ingestion path end to end.
"""

import numpy as np

from .geo.projection import unproject_from_local
from .geo.scenario import RawRoad, RawScenario, ShapePoint

BASE_LAT = 1.30
BASE_LNG = 103.80
GRID_SPACING_DEG = 0.02  # about 2.2 km; keeps scenarios spatially disjoint


def _arc(center, radius, a0, a1, n=48):
    t = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)


def _line(p0, p1, n=32):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return np.asarray(p0) + t * (np.asarray(p1) - np.asarray(p0))


def _join(*parts):
    """Concatenate polyline pieces, dropping duplicated joint points."""
    out = [np.asarray(parts[0], dtype=np.float64)]
    for p in parts[1:]:
        p = np.asarray(p, dtype=np.float64)
        if np.allclose(p[0], out[-1][-1]):
            p = p[1:]
        out.append(p)
    return np.concatenate(out)


def _wiggle(points, rng, amp=2.0):
    """Gentle low-frequency lateral jitter so instances differ."""
    pts = np.asarray(points, dtype=np.float64).copy()
    n = len(pts)
    phase = rng.uniform(0, 2 * np.pi)
    freq = rng.uniform(1.0, 2.0)
    t = np.linspace(0, 1, n)
    offs = amp * np.sin(2 * np.pi * freq * t + phase)
    d = np.gradient(pts, axis=0)
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    perp = np.stack([-d[:, 1], d[:, 0]], axis=1) / norm
    return pts + perp * offs[:, None]


def _intersection_roads(rng):
    # ways split at junction nodes, as map exports do: a 4-way at the
    # origin and a 3-way where the east arm meets a side street
    ext = 150.0
    roads = [
        _wiggle(_line((0, 0), (0, ext)), rng, amp=1.5),
        _wiggle(_line((0, 0), (0, -ext)), rng, amp=1.5),
        _wiggle(_line((0, 0), (-ext, 0)), rng, amp=1.5),
        _line((0, 0), (80, 0)),
        _line((80, 0), (ext, 0)),
        _wiggle(_line((80, 0), (80, -ext)), rng, amp=1.5),
        _wiggle(_line((-ext, 90), (ext, 90)), rng, amp=2.0),
        _line((-ext, -90), (ext, -90)),
    ]
    return roads


def _pudo_roads(rng):
    ext = 150.0
    bay = _join(
        _line((-70, 0), (-55, 14), n=10),
        _line((-55, 14), (55, 14), n=24),
        _line((55, 14), (70, 0), n=10),
    )
    roads = [
        _line((-ext, 0), (-70, 0), n=12),
        _wiggle(_line((-70, 0), (70, 0)), rng, amp=1.0),
        _line((70, 0), (ext, 0), n=12),
        bay,
        _wiggle(_line((-ext, 70), (ext, 70)), rng, amp=1.5),
        _line((-120, -ext), (-120, 70)),
    ]
    return roads


def _roundabout_roads(rng):
    r = 35.0 + rng.uniform(-5, 5)
    ext = 150.0
    angles = (0, np.pi / 2, np.pi, 3 * np.pi / 2)
    ring = [_arc((0, 0), r, a, a + np.pi / 2, n=20) for a in angles]
    spokes = [
        _line((r * np.cos(a), r * np.sin(a)), (ext * np.cos(a), ext * np.sin(a)), n=20)
        for a in angles
    ]
    return ring + spokes + [_wiggle(_line((-ext, 110), (ext, 110)), rng, amp=1.5)]


def _flyover_roads(rng):
    ext = 160.0
    through1 = _wiggle(_line((-ext, 0), (ext, 0)), rng, amp=1.0)
    through2 = _wiggle(_line((0, -ext), (0, ext)), rng, amp=1.0)
    ramp1 = _arc((60, 60), 60.0, np.pi, 1.5 * np.pi, n=36)
    ramp2 = _arc((-60, -60), 60.0, 0, 0.5 * np.pi, n=36)
    return [through1, through2, ramp1, ramp2,
            _wiggle(_line((-ext, 100), (ext, 100)), rng, amp=1.5)]


_BUILDERS = {
    "intersection": _intersection_roads,
    "pudo": _pudo_roads,
    "roundabout": _roundabout_roads,
    "flyover": _flyover_roads,
}


def synthetic_raw_scenario(scenario_type, seed=0, center=None):
    """One RawScenario of the requested type."""
    rng = np.random.default_rng([seed, hash(scenario_type) & 0xFFFF])
    if center is None:
        center = ShapePoint(BASE_LAT, BASE_LNG)
    metric_roads = _BUILDERS[scenario_type](rng)
    roads = []
    for i, m in enumerate(metric_roads):
        latlng = unproject_from_local(m, center.as_tuple())
        roads.append(RawRoad(id=f"{scenario_type}-{seed}-{i}", points=latlng,
                             highway_class="primary"))
    return RawScenario(center=center, roads=roads, scenario_type=scenario_type)


def synthetic_dataset_raw(per_type=2, seed=0):
    """A grid of RawScenarios: ``per_type`` instances of each type."""
    out = []
    idx = 0
    for t in ("intersection", "pudo", "roundabout", "flyover"):
        for j in range(per_type):
            lat = BASE_LAT + (idx % 4) * GRID_SPACING_DEG
            lng = BASE_LNG + (idx // 4) * GRID_SPACING_DEG
            out.append(synthetic_raw_scenario(t, seed=seed + j, center=ShapePoint(lat, lng)))
            idx += 1
    return out


def synthetic_geojson(per_type=2, seed=0):
    """GeoJSON FeatureCollection plus scenario seeds for the ingest stage.

    Returns (geojson dict, seeds) where seeds is a list of
    {"center": [lat, lng], "type": type} entries.
    """
    features = []
    seeds = []
    for raw in synthetic_dataset_raw(per_type=per_type, seed=seed):
        seeds.append({"center": [raw.center.lat, raw.center.lng], "type": raw.scenario_type})
        for road in raw.roads:
            features.append({
                "type": "Feature",
                "id": road.id,
                "properties": {"highway": road.highway_class, "id": road.id},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[float(lng), float(lat)] for lat, lng in road.points],
                },
            })
    return {"type": "FeatureCollection", "features": features}, seeds
