"""Scenario assembly: road selection, projection, resampling, normalization."""

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError
from .polyline import detect_junctions, resample_polyline
from .projection import haversine_m, project_to_local

SCENARIO_TYPES = ("intersection", "pudo", "roundabout", "flyover")

DEFAULT_ROADS_PER_SCENARIO = 12
DEFAULT_POINTS_PER_ROAD = 64
DEFAULT_HALF_EXTENT_M = 200.0

# condition scaling: half extent saturates at 500 m, junction count at 8
SCALE_REFERENCE_M = 500.0
JUNCTION_REFERENCE = 8.0


@dataclass(frozen=True)
class ShapePoint:
    lat: float
    lng: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise GeometryError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lng <= 180.0):
            raise GeometryError(f"longitude {self.lng} outside [-180, 180]")

    def as_tuple(self):
        return (self.lat, self.lng)


@dataclass
class RawRoad:
    id: str
    points: np.ndarray  # (m, 2) lat/lng
    highway_class: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise GeometryError(f"road {self.id!r} needs at least 2 lat/lng points")
        if np.any(np.all(np.diff(self.points, axis=0) == 0.0, axis=1)):
            raise GeometryError(f"road {self.id!r} has duplicate consecutive points")


@dataclass
class RawScenario:
    center: ShapePoint
    roads: list
    scenario_type: str

    def __post_init__(self):
        if self.scenario_type not in SCENARIO_TYPES:
            raise GeometryError(
                f"unknown scenario type {self.scenario_type!r}; expected one of {SCENARIO_TYPES}"
            )
        if not self.roads:
            raise GeometryError("scenario needs at least one road")


@dataclass
class ConditionVector:
    """Road attributes steering generation: type one-hot, scale, junction count."""

    type_onehot: np.ndarray  # (4,)
    scale: float
    junction_count: float

    def __post_init__(self):
        self.type_onehot = np.asarray(self.type_onehot, dtype=np.float64)
        if self.type_onehot.shape != (4,) or np.count_nonzero(self.type_onehot) != 1:
            raise GeometryError("type_onehot must have exactly one nonzero entry of four")
        self.scale = float(min(max(self.scale, 0.0), 1.0))
        self.junction_count = float(min(max(self.junction_count, 0.0), 1.0))

    @classmethod
    def make(cls, scenario_type, half_extent_m, junction_count):
        onehot = np.zeros(4)
        onehot[SCENARIO_TYPES.index(scenario_type)] = 1.0
        return cls(onehot, half_extent_m / SCALE_REFERENCE_M, junction_count / JUNCTION_REFERENCE)

    @property
    def scenario_type(self):
        return SCENARIO_TYPES[int(np.argmax(self.type_onehot))]

    def as_array(self):
        return np.concatenate([self.type_onehot, [self.scale, self.junction_count]])

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr[:4], float(arr[4]), float(arr[5]))


CONDITION_DIM = 6


@dataclass
class RoadScenario:
    """Fixed-size normalized scenario tensor plus denormalization metadata."""

    points: np.ndarray        # (n, k, 2) in [-1, 1]
    mask: np.ndarray          # (n,) bool, False for zero-padded roads
    origin: ShapePoint
    half_extent_m: float
    condition: ConditionVector
    id: str = ""
    seed: int | None = None
    score: dict | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.points.ndim != 3 or self.points.shape[2] != 2:
            raise GeometryError(f"expected (n, k, 2) points, got {self.points.shape}")
        if self.mask.shape != (self.points.shape[0],):
            raise GeometryError("mask length must equal road count")
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("scenario contains non-finite coordinates")
        if np.abs(self.points).max(initial=0.0) > 1.0 + 1e-12:
            raise GeometryError("normalized coordinates must lie in [-1, 1]")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def k(self):
        return self.points.shape[1]

    def metric_roads(self):
        """Unpadded roads in meters about the origin (mask applied)."""
        return [self.points[i] * self.half_extent_m for i in range(self.n) if self.mask[i]]


def extract_scenario(roads, center, n):
    """Pick the ``n`` roads nearest to ``center``.

    Distance is the minimum over a road's shape points (great circle).
    Roads are returned ordered by that distance; exact ties fall back to
    lexicographic id. Fewer than ``n`` candidates returns all of them.
    """
    if n < 1:
        raise GeometryError("n must be at least 1")
    if not roads:
        raise GeometryError("no roads to extract a scenario from")
    c = center.as_tuple() if isinstance(center, ShapePoint) else (float(center[0]), float(center[1]))
    ranked = sorted(
        roads,
        key=lambda r: (min(haversine_m(p, c) for p in r.points), r.id),
    )
    return ranked[:n]


def normalize_scenario(raw, n=DEFAULT_ROADS_PER_SCENARIO, k=DEFAULT_POINTS_PER_ROAD,
                       half_extent_m=DEFAULT_HALF_EXTENT_M, scenario_id=""):
    """Project, resample, and normalize a RawScenario into a RoadScenario.

    Coordinates are divided by ``half_extent_m`` and clamped to [-1, 1].
    Roads beyond ``n`` are truncated; missing roads are zero-padded and
    masked out. The condition vector is populated from the scenario type,
    the half extent, and the detected junction count.
    """
    if half_extent_m <= 0:
        raise GeometryError("half_extent_m must be positive")
    origin = raw.center
    kept = raw.roads[:n]
    metric = []
    for road in kept:
        local = project_to_local(road.points, origin.as_tuple())
        metric.append(resample_polyline(local, k))

    junction_count = len(detect_junctions(metric))

    points = np.zeros((n, k, 2), dtype=np.float64)
    mask = np.zeros(n, dtype=bool)
    for i, m in enumerate(metric):
        points[i] = np.clip(m / half_extent_m, -1.0, 1.0)
        mask[i] = True

    condition = ConditionVector.make(raw.scenario_type, half_extent_m, junction_count)
    return RoadScenario(points=points, mask=mask, origin=origin,
                        half_extent_m=half_extent_m, condition=condition,
                        id=scenario_id)


def denormalize(scenario):
    """Metric (meters) roads of a RoadScenario, dropping padded roads.

    Returns (roads, origin) where roads is a list of (k, 2) arrays.
    Raises GeometryError when denormalization metadata is missing.
    """
    if scenario.half_extent_m is None or scenario.origin is None:
        raise GeometryError("scenario lacks half_extent_m/origin metadata")
    if scenario.half_extent_m <= 0:
        raise GeometryError("half_extent_m must be positive")
    return scenario.metric_roads(), scenario.origin
