"""Evaluation metrics: Hausdorff distance, Jensen-Shannon divergences over
road-length and control-point-distance histograms, and second-derivative
smoothness, plus a per-type report generator.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geo.polyline import arc_lengths

HIST_BINS = 50
HIST_SMOOTHING = 1e-10


def hausdorff(a, b):
    """Symmetric Hausdorff distance between two 2D point sets (meters).

    Vectorized exact evaluation of max(sup-inf) in both directions.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise GeometryError("hausdorff needs non-empty point sets")
    d = np.sqrt(
        (a[:, 0][:, None] - b[:, 0][None, :]) ** 2
        + (a[:, 1][:, None] - b[:, 1][None, :]) ** 2
    )
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if np.any(self.probs < 0):
            raise GeometryError("histogram probabilities must be non-negative")
        if abs(float(self.probs.sum()) - 1.0) > 1e-12:
            raise GeometryError("histogram probabilities must sum to 1")

    @classmethod
    def from_samples(cls, values, edges=None, bins=HIST_BINS):
        """Build a smoothed probability histogram from raw samples."""
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise GeometryError("cannot build a histogram from no samples")
        if edges is None:
            lo, hi = float(values.min()), float(values.max())
            if hi <= lo:
                hi = lo + 1.0
            edges = np.linspace(lo, hi, bins + 1)
        counts, _ = np.histogram(values, bins=edges)
        probs = counts.astype(np.float64) + HIST_SMOOTHING
        probs /= probs.sum()
        return cls(edges=np.asarray(edges, dtype=np.float64), probs=probs)


def _kl(p, q):
    """KL divergence in nats with the 0 * log(0/q) = 0 convention."""
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def jsd(p, q):
    """Jensen-Shannon divergence (natural log, bounded by ln 2)."""
    if p.edges.shape != q.edges.shape or not np.allclose(p.edges, q.edges):
        raise GeometryError("histograms use different binnings")
    m = (p.probs + q.probs) / 2.0
    return 0.5 * _kl(p.probs, m) + 0.5 * _kl(q.probs, m)


def _shared_histograms(a_values, b_values, bins=HIST_BINS):
    a = np.asarray(a_values, dtype=np.float64)
    b = np.asarray(b_values, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise GeometryError("need samples on both sides")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    return Histogram.from_samples(a, edges), Histogram.from_samples(b, edges)


def road_lengths(roads):
    return np.array([arc_lengths(r)[-1] for r in roads], dtype=np.float64)


def point_spacings(roads):
    out = []
    for r in roads:
        out.append(np.linalg.norm(np.diff(np.asarray(r, dtype=np.float64), axis=0), axis=1))
    return np.concatenate(out) if out else np.array([])


def jsd_road_length(real_roads, gen_roads):
    """Distribution distance between pooled road lengths (nats)."""
    p, q = _shared_histograms(road_lengths(real_roads), road_lengths(gen_roads))
    return jsd(p, q)


def jsd_cpd(real_roads, gen_roads):
    """Distribution distance between consecutive point spacings (nats)."""
    p, q = _shared_histograms(point_spacings(real_roads), point_spacings(gen_roads))
    return jsd(p, q)


def sisd(points):
    """Discrete square integral of the second derivative of a sampled curve.

    points: (k, d) samples at near-uniform spacing (any d >= 1). Uses
    central second differences over interior points with h = mean
    consecutive spacing; endpoints are excluded.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 3:
        raise GeometryError("need at least 3 points")
    h = float(np.mean(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    if h <= 0:
        raise GeometryError("degenerate spacing")
    d2 = pts[2:] - 2.0 * pts[1:-1] + pts[:-2]
    return float(np.sum(d2 ** 2) / h ** 4 * h)


def scenario_sisd(roads):
    """Scenario-level smoothness: mean SISD over its roads."""
    return float(np.mean([sisd(r) for r in roads]))


def _scenario_points(roads):
    return np.concatenate([np.asarray(r, dtype=np.float64) for r in roads], axis=0)


def report(real_scenarios, gen_scenarios, ref_ccr=None):
    """Per-condition-type metric table.

    Each input is a list of (type, roads) pairs where roads is a list of
    metric (k, 2) arrays. HD is the mean over generated scenarios of the
    nearest real scenario's Hausdorff distance. Returns a dict keyed by
    type with keys hd, jsd_rl, jsd_cpd, sisd (and w1 when ref_ccr is
    given as a per-type dict).
    """
    if not real_scenarios or not gen_scenarios:
        raise GeometryError("need non-empty real and generated sets")
    types = sorted({t for t, _ in real_scenarios} | {t for t, _ in gen_scenarios})
    out = {}
    for typ in types:
        real = [roads for t, roads in real_scenarios if t == typ]
        gen = [roads for t, roads in gen_scenarios if t == typ]
        if not real or not gen:
            continue
        real_pts = [_scenario_points(r) for r in real]
        hds = []
        for g in gen:
            gp = _scenario_points(g)
            hds.append(min(hausdorff(gp, rp) for rp in real_pts))
        row = {
            "count_real": len(real),
            "count_gen": len(gen),
            "hd": float(np.mean(hds)),
            "jsd_rl": jsd_road_length(sum(real, []), sum(gen, [])),
            "jsd_cpd": jsd_cpd(sum(real, []), sum(gen, [])),
            "sisd": float(np.mean([scenario_sisd(g) for g in gen])),
        }
        if isinstance(ref_ccr, dict) and typ in ref_ccr:
            from .sceneeval import continuity_metric

            row["w1"] = float(np.mean([continuity_metric(g, ref_ccr[typ]) for g in gen]))
        out[typ] = row
    return out


def format_report(rows):
    """Plain-text table for a report dict (underscore keys are metadata)."""
    cols = ["type", "HD", "JSD-RL", "JSD-CPD", "SISD"]
    lines = [f"{cols[0]:<14} {cols[1]:>12} {cols[2]:>12} {cols[3]:>12} {cols[4]:>12}"]
    for typ in sorted(k for k in rows if not k.startswith("_")):
        r = rows[typ]
        lines.append(
            f"{typ:<14} {r['hd']:>12.4f} {r['jsd_rl']:>12.4e} "
            f"{r['jsd_cpd']:>12.4e} {r['sisd']:>12.4f}"
        )
    return "\n".join(lines)


def write_report(rows, text_path, json_path):
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(format_report(rows) + "\n")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, sort_keys=True, indent=2)


def plot_histograms(real_roads, gen_roads, out_prefix):
    """Optional PNG histograms of road lengths and point spacings."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pairs = [
        ("road_length", road_lengths(real_roads), road_lengths(gen_roads)),
        ("point_spacing", point_spacings(real_roads), point_spacings(gen_roads)),
    ]
    paths = []
    for name, real_v, gen_v in pairs:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(real_v, bins=HIST_BINS, alpha=0.6, label="real", density=True)
        ax.hist(gen_v, bins=HIST_BINS, alpha=0.6, label="generated", density=True)
        ax.set_xlabel(name.replace("_", " ") + " (m)")
        ax.set_ylabel("density")
        ax.legend()
        path = f"{out_prefix}_{name}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths
