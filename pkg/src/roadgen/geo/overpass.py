"""Overpass API client for road polylines, with a disk cache.

Queries are POSTed as Overpass-QL; JSON responses are cached under a
directory keyed by the query hash so runs are reproducible and the
``offline`` mode can forbid network access entirely. The cache directory
defaults to the DIFFROAD_CACHE environment variable.
"""

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from ..errors import IngestionError, ServiceResponseError
from .scenario import RawRoad

DEFAULT_ENDPOINT = "https://overpass-api.de/api/interpreter"
CACHE_ENV_VAR = "DIFFROAD_CACHE"


def build_query(bbox, classes, timeout_s=60):
    """Overpass-QL for highway ways of the given classes inside bbox.

    bbox is (south, west, north, east) in degrees.
    """
    south, west, north, east = (float(v) for v in bbox)
    pattern = "|".join(sorted(classes))
    return (
        f"[out:json][timeout:{int(timeout_s)}];\n"
        f'way["highway"~"^({pattern})$"]({south},{west},{north},{east});\n'
        "out geom;\n"
    )


def _cache_path(cache_dir, query):
    key = hashlib.sha256(query.encode("utf-8")).hexdigest()
    return Path(cache_dir) / f"{key}.json"


def _parse_overpass(doc, bbox, classes):
    if not isinstance(doc, dict) or "elements" not in doc:
        raise ServiceResponseError("response has no 'elements' array")
    south, west, north, east = (float(v) for v in bbox)
    roads = []
    for el in doc["elements"]:
        if el.get("type") != "way":
            continue
        tags = el.get("tags") or {}
        highway = tags.get("highway", "")
        if highway not in classes:
            continue
        geom = el.get("geometry")
        ident = el.get("id")
        if not isinstance(geom, list) or len(geom) < 2:
            raise ServiceResponseError(f"way {ident!r} carries no usable geometry")
        try:
            pts = np.array([[g["lat"], g["lon"]] for g in geom], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise ServiceResponseError(f"way {ident!r} has a malformed geometry node") from exc
        inside = (
            (pts[:, 0] >= south) & (pts[:, 0] <= north)
            & (pts[:, 1] >= west) & (pts[:, 1] <= east)
        )
        if not inside.any():
            continue
        # drop exact consecutive duplicates so RawRoad invariants hold
        keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0.0, axis=1)])
        pts = pts[keep]
        if len(pts) < 2:
            continue
        roads.append(RawRoad(id=str(ident), points=pts, highway_class=highway))
    return roads


def fetch_osm_roads(bbox, classes, cache_dir=None, offline=False,
                    endpoint=DEFAULT_ENDPOINT, timeout_s=60.0):
    """Fetch road polylines inside ``bbox`` matching the given highway classes.

    bbox: (south, west, north, east). A degenerate (zero-area) box returns
    an empty list without touching the network. Responses are cached to
    ``cache_dir`` (default $DIFFROAD_CACHE); with ``offline=True`` only the
    cache is consulted and a miss raises a non-retryable IngestionError.
    """
    south, west, north, east = (float(v) for v in bbox)
    if south > north or west > east:
        raise IngestionError(f"malformed bbox {bbox}: expected south<north, west<east")
    if south == north or west == east:
        return []
    classes = set(classes)
    if not classes:
        return []

    query = build_query(bbox, classes, timeout_s=timeout_s)
    cache_dir = cache_dir or os.environ.get(CACHE_ENV_VAR)
    cache_file = _cache_path(cache_dir, query) if cache_dir else None

    if cache_file is not None and cache_file.exists():
        with open(cache_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return _parse_overpass(doc, bbox, classes)

    if offline:
        raise IngestionError(
            f"offline mode and no cached response for this query (cache: {cache_file})",
            retryable=False,
        )

    import requests

    try:
        resp = requests.post(endpoint, data={"data": query}, timeout=timeout_s)
        resp.raise_for_status()
    except requests.RequestException as exc:
        raise IngestionError(f"Overpass request failed: {exc}", retryable=True) from exc
    try:
        doc = resp.json()
    except ValueError as exc:
        raise ServiceResponseError(f"Overpass returned non-JSON payload: {exc}") from exc

    roads = _parse_overpass(doc, bbox, classes)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        with open(cache_file, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    return roads
