"""Pipeline configuration: one JSON file with explicit keys.

There are no hidden runtime defaults: the file is merged over the defaults
below, CLI flags are merged over the file, and the resulting effective
config is printed before any stage runs. The config hash stamped into
artifacts is the SHA-256 of the canonical dump.
"""

import copy
import hashlib
import json

from .errors import ConfigError

STAGE_ORDER = ("ingest", "train", "sample", "terrain", "evaluate", "metrics", "export")

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "stages": list(STAGE_ORDER),
    "paths": {
        "workdir": "runs/out",
        "geojson": None,
        "dataset": None,       # default: <workdir>/dataset.jsonl
        "checkpoint": None,    # default: <workdir>/model.drck
        "checkpoint_dir": None,
        "trace": None,
        "library": None,
        "library3d": None,
        "scored": None,
        "summary": None,
        "report": None,        # prefix; .txt/.json appended
        "xodr_dir": None,
    },
    "ingest": {
        "geojson": None,
        "overpass": None,      # {"bbox": [s, w, n, e], "classes": [...], "offline": false}
        "scenarios": [],       # [{"center": [lat, lng], "type": ...}]
        "classes": ["motorway", "trunk", "primary", "secondary", "tertiary", "residential"],
        "n": 12,
        "k": 64,
        "half_extent_m": 200.0,
    },
    "model": {
        "base_channels": 64,
        "channel_mults": [1, 2, 4, 8],
        "blocks_per_stage": 2,
        "norm_groups": 8,
        "emb_dim": 64,
        "cond_hidden": 64,
        "dtype": "float32",
    },
    "training": {
        "learning_rate": 0.0002,
        "batch_size": 32,
        "omega": 1.0,
        "T": 500,
        "beta_min": 0.0001,
        "beta_max": 0.05,
        "max_steps": 20000,
        "condition_dropout": 0.1,
        "checkpoint_interval": 1000,
        "grad_clip": 1.0,
        "stop_loss_ratio": 0.0,
    },
    "sampler": {
        "stride": 5,
        "count_per_type": {"intersection": 4, "pudo": 4, "roundabout": 4, "flyover": 4},
        "conditions": None,    # explicit [{"type": ..., "scale": ..., "junctions": ...}]
        "freeu": {"b": [1.3, 1.2], "s": [0.9, 0.95], "r_thresh": 0.25},
        "unconditional": False,
        "origin": [0.0, 0.0],
    },
    "terrain": {
        "v": 22.22,
        "m": 1500.0,
        "fc_max": None,
        "rho_max": 0.05,
        "flyover_clearance_m": 5.5,
    },
    "evaluate": {
        "lambda": 1.0,
        "s_min": 80.0,
        "ref_ccr": None,       # per-type dict; null = compute from the dataset
    },
    "metrics": {
        "plots": False,
    },
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides=None):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
        cfg = _merge(cfg, file_cfg)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    stages = cfg.get("stages", [])
    if tuple(stages) != STAGE_ORDER[: len(stages)]:
        raise ConfigError(
            f"stages {stages} must be a prefix of the pipeline order {list(STAGE_ORDER)}"
        )
    if cfg["evaluate"]["lambda"] < 0:
        raise ConfigError("evaluate.lambda must be non-negative")
    if not (0 <= cfg["evaluate"]["s_min"] <= 100):
        raise ConfigError("evaluate.s_min must lie in [0, 100]")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    if cfg["sampler"]["stride"] < 1:
        raise ConfigError("sampler.stride must be at least 1")
    return cfg


def print_config(cfg):
    return json.dumps(cfg, sort_keys=True, indent=2)


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")
    ).hexdigest()[:12]


def resolve_paths(cfg):
    """Fill unset artifact paths from the workdir."""
    from pathlib import Path

    paths = dict(cfg["paths"])
    wd = Path(paths.get("workdir") or "runs/out")
    defaults = {
        "dataset": wd / "dataset.jsonl",
        "checkpoint": wd / "model.drck",
        "checkpoint_dir": wd / "checkpoints",
        "trace": wd / "trace.csv",
        "library": wd / "library.jsonl",
        "library3d": wd / "library3d.jsonl",
        "scored": wd / "library_scored.jsonl",
        "summary": wd / "summary.txt",
        "report": wd / "report",
        "xodr_dir": wd / "xodr",
    }
    for key, val in defaults.items():
        if not paths.get(key):
            paths[key] = str(val)
    paths["workdir"] = str(wd)
    return paths
