"""Line-delimited scenario container used by every pipeline stage.

One JSON record per line. An optional first record ``{"meta": {...}}``
stamps the file with the producing config hash and seed; readers skip it.
Dataset records carry {points, type, half_extent_m, origin, mask}; library
records add {seed, condition, score}. 3D stages store (n, k, 3) points in
the same field.
"""

import json

import numpy as np

from ..errors import ConfigError
from .scenario import ConditionVector, RoadScenario, ShapePoint


def scenario_to_record(sc, elevations=None):
    """JSON-serializable record for a RoadScenario.

    ``elevations``: optional (n, k) z array appended as a third coordinate.
    """
    pts = sc.points
    if elevations is not None:
        z = np.asarray(elevations, dtype=np.float64)
        pts = np.concatenate([pts, z[:, :, None]], axis=2)
    rec = {
        "id": sc.id,
        "points": pts.tolist(),
        "mask": [bool(v) for v in sc.mask],
        "type": sc.condition.scenario_type,
        "half_extent_m": float(sc.half_extent_m),
        "origin": [sc.origin.lat, sc.origin.lng],
        "condition": [float(v) for v in sc.condition.as_array()],
    }
    if sc.seed is not None:
        rec["seed"] = int(sc.seed)
    if sc.score is not None:
        rec["score"] = sc.score
    return rec


def scenario_from_record(rec):
    """Rebuild a RoadScenario (plus optional z) from a JSON record.

    Returns (scenario, elevations) where elevations is an (n, k) array or
    None when the record is 2D.
    """
    pts = np.asarray(rec["points"], dtype=np.float64)
    elev = None
    if pts.ndim == 3 and pts.shape[2] == 3:
        elev = pts[:, :, 2].copy()
        pts = pts[:, :, :2]
    condition = ConditionVector.from_array(rec["condition"])
    sc = RoadScenario(
        points=pts,
        mask=np.asarray(rec["mask"], dtype=bool),
        origin=ShapePoint(*rec["origin"]),
        half_extent_m=float(rec["half_extent_m"]),
        condition=condition,
        id=str(rec.get("id", "")),
        seed=rec.get("seed"),
        score=rec.get("score"),
    )
    return sc, elev


def write_library(path, scenarios, meta=None, elevations=None):
    """Write scenarios (and optional per-scenario z arrays) to a JSONL file."""
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for i, sc in enumerate(scenarios):
            z = elevations[i] if elevations is not None else None
            fh.write(json.dumps(scenario_to_record(sc, z), sort_keys=True) + "\n")


def read_library(path):
    """Read a JSONL scenario file.

    Returns (scenarios, elevations, meta); elevations entries are None for
    2D records.
    """
    scenarios, elevs, meta = [], [], None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: bad JSON record: {exc}") from exc
            if "meta" in rec and "points" not in rec:
                meta = rec["meta"]
                continue
            sc, z = scenario_from_record(rec)
            scenarios.append(sc)
            elevs.append(z)
    return scenarios, elevs, meta
