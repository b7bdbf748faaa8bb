from .projection import project_to_local, unproject_from_local, haversine_m
from .polyline import (
    arc_lengths,
    resample_polyline,
    polyline_crossings,
    self_crossings,
    point_to_polyline_distance,
    detect_junctions,
)
from .scenario import (
    SCENARIO_TYPES,
    CONDITION_DIM,
    ShapePoint,
    RawRoad,
    RawScenario,
    ConditionVector,
    RoadScenario,
    extract_scenario,
    normalize_scenario,
    denormalize,
)
from .geojson import load_geojson_roads
from .overpass import fetch_osm_roads, build_query, CACHE_ENV_VAR
from .dataset import read_library, write_library, scenario_to_record, scenario_from_record
