"""Offline road ingestion from GeoJSON FeatureCollections of LineStrings."""

import json

import numpy as np

from ..errors import ServiceResponseError
from .scenario import RawRoad


def load_geojson_roads(path, classes=None):
    """Read roads from a GeoJSON file.

    Expects a FeatureCollection whose features are LineStrings carrying a
    ``highway`` property. GeoJSON coordinates are (lng, lat); RawRoad points
    are stored (lat, lng). ``classes`` optionally filters by highway tag.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ServiceResponseError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise ServiceResponseError(f"{path}: expected a FeatureCollection")
    roads = []
    for idx, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        coords = geom.get("coordinates")
        if not isinstance(coords, list) or len(coords) < 2:
            raise ServiceResponseError(f"{path}: feature {idx} has a degenerate LineString")
        props = feat.get("properties") or {}
        highway = str(props.get("highway", ""))
        if classes is not None and highway not in classes:
            continue
        road_id = str(props.get("id", feat.get("id", idx)))
        latlng = np.asarray(coords, dtype=np.float64)[:, ::-1]
        roads.append(RawRoad(id=road_id, points=latlng, highway_class=highway))
    return roads
