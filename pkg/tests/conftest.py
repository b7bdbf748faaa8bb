"""Shared fixtures: the synthetic toy dataset and session-scoped trained
checkpoints used by the sampler, overfit, and ablation tests.

Setting ROADGEN_TEST_CACHE=1 caches trained checkpoints under /tmp keyed by
the full training setup, which speeds up repeated local runs; the default
is to retrain within the session.
"""

import hashlib
import json
import os
from pathlib import Path

import pytest

from roadgen.checkpoint import load_checkpoint, save_checkpoint
from roadgen.geo import normalize_scenario
from roadgen.nn.unet import ArchitectureDescriptor
from roadgen.synthetic import synthetic_dataset_raw
from roadgen.training import TrainingConfig, dataset_tensors, train

TOY_MODEL = dict(
    n_roads=12, points_per_road=64, base_channels=16, channel_mults=(1, 2),
    blocks_per_stage=2, norm_groups=8, emb_dim=32, cond_hidden=64, dtype="float32",
)


@pytest.fixture(scope="session")
def toy_scenarios():
    raws = synthetic_dataset_raw(per_type=2)
    return [normalize_scenario(r, scenario_id=f"real-{i:02d}") for i, r in enumerate(raws)]


@pytest.fixture(scope="session")
def toy_dataset(toy_scenarios):
    return dataset_tensors(toy_scenarios)


def _train_toy(dataset, omega, max_steps, stop_ratio, tmp_root):
    desc = ArchitectureDescriptor(**TOY_MODEL)
    cfg = TrainingConfig(
        learning_rate=1e-3, batch_size=16, omega=omega, T=500,
        max_steps=max_steps, seed=7, condition_dropout=0.1,
        checkpoint_interval=max_steps, grad_clip=1.0, stop_loss_ratio=stop_ratio,
        trace_path=str(tmp_root / f"trace_omega{omega}.csv"),
    )
    key = hashlib.sha256(json.dumps(
        {"cfg": cfg.to_dict(), "desc": desc.to_dict(), "v": 3}, sort_keys=True
    ).encode()).hexdigest()[:16]
    cache_dir = Path("/tmp/roadgen_test_cache")
    cache = cache_dir / f"toy_{key}.drck"
    if os.environ.get("ROADGEN_TEST_CACHE") == "1" and cache.exists():
        return load_checkpoint(cache), cfg
    last = None
    for ck in train(dataset, cfg, desc):
        last = ck
    if os.environ.get("ROADGEN_TEST_CACHE") == "1":
        cache_dir.mkdir(exist_ok=True)
        save_checkpoint(last, cache)
    return last, cfg


@pytest.fixture(scope="session")
def toy_run(toy_dataset, tmp_path_factory):
    """Overfit training run with the smoothness term on."""
    root = tmp_path_factory.mktemp("toy_train")
    ck, cfg = _train_toy(toy_dataset, omega=1.0, max_steps=20000, stop_ratio=0.05,
                         tmp_root=root)
    return {"checkpoint": ck, "config": cfg, "trace": cfg.trace_path}


@pytest.fixture(scope="session")
def toy_run_nosmooth(toy_dataset, toy_run, tmp_path_factory):
    """Paired run without the smoothness term, same step budget."""
    root = tmp_path_factory.mktemp("toy_train_nosmooth")
    steps = toy_run["checkpoint"].step
    ck, cfg = _train_toy(toy_dataset, omega=0.0, max_steps=steps, stop_ratio=0.0,
                         tmp_root=root)
    return {"checkpoint": ck, "config": cfg, "trace": cfg.trace_path}
