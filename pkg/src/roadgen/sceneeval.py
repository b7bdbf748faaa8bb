"""Scene scoring: continuity and reasonableness penalties on a 100-point scale.

Continuity compares a scenario's mean curvature change rate against a
reference computed from real data; reasonableness counts roads that run on
top of another road outside junction areas. Scores drive library filtering.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geo.polyline import point_to_polyline_distance, polyline_crossings, self_crossings
from .terrain import menger_curvature

# overlap detection: sustained proximity within one lane width, outside
# junction discs, across at least this many consecutive samples
OVERLAP_DISTANCE_M = 3.5
OVERLAP_RUN_LENGTH = 5
JUNCTION_RADIUS_M = 15.0


@dataclass
class ScenarioScore:
    w1: float
    w2: float
    S: float
    lam: float
    accepted: bool | None = None

    def to_dict(self):
        d = {"w1": self.w1, "w2": self.w2, "S": self.S, "lambda": self.lam}
        if self.accepted is not None:
            d["accepted"] = self.accepted
        return d


def curvature_change_rate(roads):
    """Mean over roads of mean |d kappa / d s| (1/m^2).

    Roads with fewer than 4 points or degenerate spacing are excluded with
    a warning; if every road is degenerate this is an error.
    """
    rates = []
    for i, road in enumerate(roads):
        pts = np.asarray(road, dtype=np.float64)
        if pts.shape[0] < 4:
            warnings.warn(f"road {i} has fewer than 4 points; excluded from ccr")
            continue
        try:
            kappa = menger_curvature(pts)
        except GeometryError:
            warnings.warn(f"road {i} is degenerate; excluded from ccr")
            continue
        ds = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        rates.append(float(np.mean(np.abs(np.diff(kappa))[: len(ds)] / ds[: len(kappa) - 1])))
    if not rates:
        raise GeometryError("every road was degenerate; cannot compute curvature change rate")
    return float(np.mean(rates))


def continuity_metric(roads, ref_ccr):
    """w1: clamped percent deviation of the scenario ccr from the reference."""
    if ref_ccr <= 0:
        raise GeometryError("reference curvature change rate must be positive")
    ccr = curvature_change_rate(roads)
    return float(np.clip(100.0 * abs(ccr - ref_ccr) / ref_ccr, 0.0, 100.0))


def _junction_discs(roads):
    centers = []
    for i in range(len(roads)):
        for j in range(i + 1, len(roads)):
            centers.extend(polyline_crossings(roads[i], roads[j]))
    return centers


def _has_run(flags, run):
    count = 0
    for f in flags:
        count = count + 1 if f else 0
        if count >= run:
            return True
    return False


def overlap_metric(roads, d_min=OVERLAP_DISTANCE_M, run=OVERLAP_RUN_LENGTH,
                   junction_radius=JUNCTION_RADIUS_M):
    """w2: percentage of roads overlapping another road.

    A road overlaps when at least ``run`` consecutive samples lie within
    ``d_min`` of some other road while outside every junction disc
    (crossing points get a pass within ``junction_radius``). Roads that
    cross themselves are also flagged.
    """
    if not roads:
        raise GeometryError("no roads to evaluate")
    roads = [np.asarray(r, dtype=np.float64) for r in roads]
    centers = _junction_discs(roads)
    overlapping = 0
    for i, road in enumerate(roads):
        outside = np.ones(len(road), dtype=bool)
        for c in centers:
            outside &= np.linalg.norm(road - c, axis=1) > junction_radius
        flagged = False
        for j, other in enumerate(roads):
            if i == j:
                continue
            near = point_to_polyline_distance(road, other) <= d_min
            if _has_run(near & outside, run):
                flagged = True
                break
        if not flagged and self_crossings(road):
            flagged = True
        if flagged:
            overlapping += 1
    return 100.0 * overlapping / len(roads)


def score_scenario(roads, ref_ccr, lam=1.0):
    """Total score S = clamp(100 - (w1 + lambda * w2), 0, 100).

    A scenario whose roads are all degenerate (nothing to measure) takes
    the worst score; screening exists exactly to discard such output.
    """
    try:
        w1 = continuity_metric(roads, ref_ccr)
        w2 = overlap_metric(roads)
    except GeometryError:
        return ScenarioScore(w1=100.0, w2=100.0, S=0.0, lam=lam)
    s = float(np.clip(100.0 - (w1 + lam * w2), 0.0, 100.0))
    return ScenarioScore(w1=w1, w2=w2, S=s, lam=lam)


def score_and_filter(library, ref_ccr, lam=1.0, s_min=80.0, jobs=1):
    """Annotate every scenario with a ScenarioScore; accept S >= s_min.

    library: list of RoadScenario. Returns (scored, accepted) where scored
    is the input list with ``score`` fields filled and accepted is the
    passing subset (same objects, input order preserved).
    """
    if not (0.0 <= s_min <= 100.0):
        raise GeometryError("s_min must lie in [0, 100]")

    def score_one(sc):
        roads = sc.metric_roads()
        return score_scenario(roads, ref_ccr, lam)

    if jobs <= 1:
        scores = [score_one(sc) for sc in library]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(score_one, library))
    accepted = []
    for sc, score in zip(library, scores):
        score.accepted = bool(score.S >= s_min)
        sc.score = score.to_dict()
        if score.accepted:
            accepted.append(sc)
    return library, accepted


def summary_table(library):
    """Plain-text score table for a scored library."""
    lines = [f"{'id':<14} {'type':<12} {'w1':>8} {'w2':>8} {'S':>8}  accepted"]
    for sc in library:
        s = sc.score or {}
        lines.append(
            f"{sc.id:<14} {sc.condition.scenario_type:<12} "
            f"{s.get('w1', float('nan')):>8.2f} {s.get('w2', float('nan')):>8.2f} "
            f"{s.get('S', float('nan')):>8.2f}  {s.get('accepted', '-')}"
        )
    return "\n".join(lines)
