"""Stage orchestration: ingest -> train -> sample -> terrain -> evaluate ->
metrics -> export. Every artifact is stamped with the config hash and seed;
no stage mutates another stage's inputs, so identical config and seed give
byte-identical outputs.

Library records store z normalized by half_extent_m, like x and y, so one
scale factor recovers meters for all three coordinates.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import config_hash, resolve_paths
from .errors import ConfigError
from .geo.dataset import read_library, write_library
from .geo.geojson import load_geojson_roads
from .geo.overpass import fetch_osm_roads
from .geo.scenario import (
    SCENARIO_TYPES,
    ConditionVector,
    ShapePoint,
    extract_scenario,
    normalize_scenario,
)
from .metrics import plot_histograms, report, write_report
from .nn.freeu import FreeUConfig
from .nn.unet import ArchitectureDescriptor
from .sampling import SamplerConfig, generate_library
from .sceneeval import curvature_change_rate, score_and_filter, summary_table
from .terrain import TerrainConfig, lift_scenario
from .training import TrainingConfig, dataset_tensors, train
from .xodr import export_opendrive, serialize


def log_event(stage, event, **fields):
    rec = {"stage": stage, "event": event, "wall_time": round(time.time(), 3)}
    rec.update(fields)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr, flush=True)


def _require_input(path, stage):
    if not Path(path).exists():
        raise ConfigError(f"stage '{stage}' needs input {path}, which does not exist")


def _meta(cfg, stage):
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"], "stage": stage}


def stage_ingest(cfg, paths):
    icfg = cfg["ingest"]
    geojson_path = icfg.get("geojson") or paths.get("geojson")
    if geojson_path:
        _require_input(geojson_path, "ingest")
        roads = load_geojson_roads(geojson_path, classes=set(icfg["classes"]))
        log_event("ingest", "loaded_geojson", path=str(geojson_path), roads=len(roads))
    elif icfg.get("overpass"):
        op = icfg["overpass"]
        roads = fetch_osm_roads(
            tuple(op["bbox"]), set(op.get("classes", icfg["classes"])),
            offline=bool(op.get("offline", False)),
        )
        log_event("ingest", "fetched_overpass", roads=len(roads))
    else:
        raise ConfigError("ingest needs either a geojson path or an overpass block")
    if not icfg["scenarios"]:
        raise ConfigError("ingest.scenarios lists no scenario seeds")

    scenarios = []
    for i, seed in enumerate(icfg["scenarios"]):
        center = ShapePoint(*seed["center"])
        stype = seed["type"]
        if stype not in SCENARIO_TYPES:
            raise ConfigError(f"scenario {i}: unknown type {stype!r}")
        half_extent = float(seed.get("half_extent_m", icfg["half_extent_m"]))
        nearby = [
            r for r in roads
            if np.any(np.all(np.abs(r.points - np.asarray(center.as_tuple())) < 0.5, axis=1))
        ]
        picked = extract_scenario(nearby or roads, center, icfg["n"])
        from .geo.scenario import RawScenario

        raw = RawScenario(center=center, roads=picked, scenario_type=stype)
        sc = normalize_scenario(raw, n=icfg["n"], k=icfg["k"], half_extent_m=half_extent,
                                scenario_id=f"real-{i:04d}")
        scenarios.append(sc)
    write_library(paths["dataset"], scenarios, meta=_meta(cfg, "ingest"))
    log_event("ingest", "wrote_dataset", path=paths["dataset"], scenarios=len(scenarios))


def _descriptor_from_cfg(cfg, n, k):
    m = cfg["model"]
    return ArchitectureDescriptor(
        n_roads=n,
        points_per_road=k,
        base_channels=m["base_channels"],
        channel_mults=tuple(m["channel_mults"]),
        blocks_per_stage=m["blocks_per_stage"],
        norm_groups=m["norm_groups"],
        emb_dim=m["emb_dim"],
        cond_hidden=m["cond_hidden"],
        dtype=m["dtype"],
    )


def _training_config(cfg, paths):
    t = cfg["training"]
    return TrainingConfig(
        learning_rate=t["learning_rate"],
        batch_size=t["batch_size"],
        omega=t["omega"],
        T=t["T"],
        beta_min=t["beta_min"],
        beta_max=t["beta_max"],
        max_steps=t["max_steps"],
        seed=cfg["seed"],
        condition_dropout=t["condition_dropout"],
        checkpoint_interval=t["checkpoint_interval"],
        grad_clip=t["grad_clip"],
        stop_loss_ratio=t.get("stop_loss_ratio", 0.0),
        trace_path=paths["trace"],
    )


def stage_train(cfg, paths):
    from .checkpoint import save_checkpoint

    _require_input(paths["dataset"], "train")
    scenarios, _, _ = read_library(paths["dataset"])
    if not scenarios:
        raise ConfigError("dataset is empty")
    data = dataset_tensors(scenarios)
    desc = _descriptor_from_cfg(cfg, data["meta"]["n"], data["meta"]["k"])
    tcfg = _training_config(cfg, paths)
    Path(paths["checkpoint_dir"]).mkdir(parents=True, exist_ok=True)
    trace = Path(paths["trace"])
    if trace.exists():
        trace.unlink()

    last = None
    for ck in train(data, tcfg, desc, log=lambda **kw: log_event("train", "progress", **kw)):
        out = Path(paths["checkpoint_dir"]) / f"ckpt_{ck.step:07d}.drck"
        save_checkpoint(ck, out)
        last = ck
    save_checkpoint(last, paths["checkpoint"])
    log_event("train", "wrote_checkpoint", path=str(paths["checkpoint"]), step=last.step)


def _conditions_from_cfg(cfg, paths):
    scfg = cfg["sampler"]
    if scfg.get("conditions"):
        conds = []
        for ent in scfg["conditions"]:
            conds.append(ConditionVector.make(
                ent["type"], float(ent.get("half_extent_m", 200.0)),
                float(ent.get("junctions", 0.0)),
            ))
        return conds
    # per-type counts with attribute values averaged from the dataset
    _require_input(paths["dataset"], "sample")
    scenarios, _, _ = read_library(paths["dataset"])
    by_type = {}
    for sc in scenarios:
        by_type.setdefault(sc.condition.scenario_type, []).append(sc.condition)
    conds = []
    for stype in SCENARIO_TYPES:
        count = int(scfg["count_per_type"].get(stype, 0))
        if count == 0:
            continue
        if stype in by_type:
            scale = float(np.mean([c.scale for c in by_type[stype]]))
            junc = float(np.mean([c.junction_count for c in by_type[stype]]))
        else:
            scale, junc = 0.4, 0.0
        onehot = np.zeros(4)
        onehot[SCENARIO_TYPES.index(stype)] = 1.0
        conds.extend(ConditionVector(onehot.copy(), scale, junc) for _ in range(count))
    return conds


def stage_sample(cfg, paths):
    from .checkpoint import load_checkpoint

    _require_input(paths["checkpoint"], "sample")
    ck = load_checkpoint(paths["checkpoint"])
    scfg = cfg["sampler"]
    freeu = None
    if scfg.get("freeu"):
        f = scfg["freeu"]
        freeu = FreeUConfig(b=tuple(f["b"]), s=tuple(f["s"]), r_thresh=f["r_thresh"])
    sampler = SamplerConfig(
        stride=scfg["stride"],
        freeu=freeu,
        seed=cfg["seed"],
        unconditional=bool(scfg.get("unconditional", False)),
        origin=tuple(scfg.get("origin", (0.0, 0.0))),
    )
    conditions = _conditions_from_cfg(cfg, paths)
    if not conditions:
        raise ConfigError("sampler requests zero scenarios")
    library = generate_library(conditions, ck, sampler, jobs=cfg["jobs"])
    write_library(paths["library"], library, meta=_meta(cfg, "sample"))
    log_event("sample", "wrote_library", path=paths["library"], scenarios=len(library))


def stage_terrain(cfg, paths):
    _require_input(paths["library"], "terrain")
    scenarios, _, _ = read_library(paths["library"])
    t = cfg["terrain"]
    tcfg = TerrainConfig(v=t["v"], m=t["m"], fc_max=t["fc_max"], rho_max=t["rho_max"],
                         flyover_clearance_m=t["flyover_clearance_m"])
    elevations = []
    for sc in scenarios:
        roads = sc.metric_roads()
        flyover_road = None
        if sc.condition.scenario_type == "flyover" and roads:
            lengths = [np.linalg.norm(np.diff(r, axis=0), axis=1).sum() for r in roads]
            flyover_road = int(np.argmax(lengths))
        zs = lift_scenario(roads, tcfg, flyover_road=flyover_road)
        # store z on the same normalized scale as x and y
        znorm = np.zeros((sc.n, sc.k))
        j = 0
        for i in range(sc.n):
            if sc.mask[i]:
                znorm[i] = zs[j] / sc.half_extent_m
                j += 1
        elevations.append(znorm)
    write_library(paths["library3d"], scenarios, meta=_meta(cfg, "terrain"),
                  elevations=elevations)
    log_event("terrain", "wrote_library3d", path=paths["library3d"], scenarios=len(scenarios))


def ref_ccr_by_type(scenarios):
    by_type = {}
    for sc in scenarios:
        by_type.setdefault(sc.condition.scenario_type, []).append(sc)
    return {
        t: float(np.mean([curvature_change_rate(sc.metric_roads()) for sc in group]))
        for t, group in by_type.items()
    }


def stage_evaluate(cfg, paths):
    src = paths["library3d"] if Path(paths["library3d"]).exists() else paths["library"]
    _require_input(src, "evaluate")
    scenarios, elevs, _ = read_library(src)
    ecfg = cfg["evaluate"]
    ref = ecfg.get("ref_ccr")
    if ref is None:
        _require_input(paths["dataset"], "evaluate")
        real, _, _ = read_library(paths["dataset"])
        ref = ref_ccr_by_type(real)
    accepted_total = 0
    for stype in sorted({sc.condition.scenario_type for sc in scenarios}):
        group = [sc for sc in scenarios if sc.condition.scenario_type == stype]
        ref_val = ref[stype] if isinstance(ref, dict) else float(ref)
        _, accepted = score_and_filter(group, ref_val, lam=ecfg["lambda"],
                                       s_min=ecfg["s_min"], jobs=cfg["jobs"])
        accepted_total += len(accepted)
    scored = scenarios
    write_library(paths["scored"], scored, meta=_meta(cfg, "evaluate"), elevations=elevs)
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        fh.write(f"config={config_hash(cfg)} seed={cfg['seed']}\n")
        fh.write(summary_table(scored) + "\n")
        fh.write(f"accepted {accepted_total} of {len(scored)}\n")
    log_event("evaluate", "scored", total=len(scored), accepted=accepted_total)


def stage_metrics(cfg, paths):
    _require_input(paths["dataset"], "metrics")
    lib_path = paths["scored"] if Path(paths["scored"]).exists() else paths["library"]
    _require_input(lib_path, "metrics")
    real, _, _ = read_library(paths["dataset"])
    gen, _, _ = read_library(lib_path)
    real_pairs = [(sc.condition.scenario_type, sc.metric_roads()) for sc in real]
    gen_pairs = [(sc.condition.scenario_type, sc.metric_roads()) for sc in gen]
    rows = report(real_pairs, gen_pairs)
    rows["_meta"] = {"config_hash": config_hash(cfg), "seed": cfg["seed"]}
    write_report(rows, str(paths["report"]) + ".txt", str(paths["report"]) + ".json")
    if cfg["metrics"].get("plots"):
        real_roads = [r for _, roads in real_pairs for r in roads]
        gen_roads = [r for _, roads in gen_pairs for r in roads]
        plot_histograms(real_roads, gen_roads, str(paths["report"]))
    log_event("metrics", "wrote_report", path=str(paths["report"]) + ".txt")


def stage_export(cfg, paths):
    src = paths["scored"] if Path(paths["scored"]).exists() else paths["library3d"]
    _require_input(src, "export")
    scenarios, elevs, _ = read_library(src)
    out_dir = Path(paths["xodr_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = f"roadgen config={config_hash(cfg)} seed={cfg['seed']}"
    written = 0
    for sc, znorm in zip(scenarios, elevs):
        if sc.score is not None and not sc.score.get("accepted", True):
            continue
        roads = sc.metric_roads()
        if znorm is None:
            zs = [np.zeros(len(r)) for r in roads]
        else:
            zs = [znorm[i] * sc.half_extent_m for i in range(sc.n) if sc.mask[i]]
        roads3d = [np.concatenate([r, z[:, None]], axis=1) for r, z in zip(roads, zs)]
        geo_ref = f"+proj=eqc +lat_0={sc.origin.lat} +lon_0={sc.origin.lng}"
        doc = export_opendrive(roads3d, name=sc.id or "scenario",
                               geo_reference=geo_ref, vendor=stamp)
        path = out_dir / f"{sc.id or 'scenario'}_{sc.condition.scenario_type}.xodr"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(serialize(doc))
        written += 1
    log_event("export", "wrote_xodr", dir=str(out_dir), files=written)


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "train": stage_train,
    "sample": stage_sample,
    "terrain": stage_terrain,
    "evaluate": stage_evaluate,
    "metrics": stage_metrics,
    "export": stage_export,
}


def run_pipeline(cfg, stages=None):
    """Execute the configured stages in order. Raises on the first failure."""
    paths = resolve_paths(cfg)
    Path(paths["workdir"]).mkdir(parents=True, exist_ok=True)
    for stage in stages or cfg["stages"]:
        start = time.time()
        log_event(stage, "start", config_hash=config_hash(cfg))
        STAGE_FUNCS[stage](cfg, paths)
        log_event(stage, "done", seconds=round(time.time() - start, 3))
