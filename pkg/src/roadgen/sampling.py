"""Conditional ancestral sampling with optional skip-step striding.

The strided sampler jumps along a descending subsequence of diffusion
steps, re-deriving per-jump coefficients from ratios of the cumulative
signal coefficients; at stride 1 this reduces exactly to the step-by-step
reverse process, which the tests exploit. Each scenario owns an RNG stream
keyed by (seed, scenario index) so results never depend on how a batch is
partitioned or parallelized.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diffusion import build_schedule
from .errors import ConfigError, SamplingDivergedError
from .geo.scenario import (
    SCALE_REFERENCE_M,
    RoadScenario,
    ShapePoint,
    denormalize,
)
from .nn.freeu import FreeUConfig
from .nn.unet import channels_to_scenario

# a generated road whose coordinates all sit this close to zero is treated
# as reproduced padding and masked out
PADDING_RMS_THRESHOLD = 0.02


@dataclass
class SamplerConfig:
    stride: int = 5
    freeu: FreeUConfig | None = None
    seed: int = 0
    unconditional: bool = False
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")


def build_timestep_subsequence(T, stride):
    """Descending steps (T, T-stride, ...) always terminating at 1."""
    if not (1 <= stride <= T):
        raise ConfigError(f"stride {stride} outside [1, {T}]")
    steps = list(range(T, 0, -stride))
    if steps[-1] != 1:
        steps.append(1)
    return steps


def _sample_rng(seed, index):
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x53414D, int(index)])


def strided_reverse(x, model, cond_vec, sched, steps, freeu, rng, cond_keep=None):
    """Run the reverse chain over the given descending step list."""
    targets = list(steps[1:]) + [0]
    for t_hi, t_lo in zip(steps, targets):
        ab_hi = sched.alpha_bar[t_hi - 1]
        ab_lo = 1.0 if t_lo == 0 else sched.alpha_bar[t_lo - 1]
        alpha = ab_hi / ab_lo
        beta = 1.0 - alpha
        eps_hat = model.forward(x, t_hi, cond_vec, freeu=freeu, cond_keep=cond_keep)
        mu = (x - beta / np.sqrt(1.0 - ab_hi) * eps_hat.astype(np.float64)) / np.sqrt(alpha)
        if t_lo >= 1:
            sigma2 = (1.0 - ab_lo) / (1.0 - ab_hi) * beta
            z = rng.standard_normal(x.shape)
            x = mu + np.sqrt(sigma2) * z
        else:
            x = mu
        if not np.all(np.isfinite(x)):
            raise SamplingDivergedError(t_hi)
    return x


def generate_scenario(condition, checkpoint, cfg, index=0, model=None):
    """Generate one normalized RoadScenario for the given condition.

    Deterministic in (cfg.seed, index). ``model`` may be passed in to reuse
    weights across calls; forward evaluation does not mutate it.
    """
    if model is None:
        model = checkpoint.build_model()
    sched = build_schedule(**checkpoint.schedule)
    steps = build_timestep_subsequence(sched.T, cfg.stride)
    rng = _sample_rng(cfg.seed, index)

    d = model.descriptor
    x = rng.standard_normal((d.in_channels, d.points_per_road))
    cond_vec = condition.as_array()
    cond_keep = np.zeros(1) if cfg.unconditional else None
    x = strided_reverse(x[None], model, cond_vec[None], sched, steps, cfg.freeu, rng,
                        cond_keep=cond_keep)[0]
    x = np.clip(x, -1.0, 1.0)

    points = channels_to_scenario(x)
    rms = np.sqrt((points ** 2).mean(axis=(1, 2)))
    mask = rms >= PADDING_RMS_THRESHOLD
    if not mask.any():
        mask[int(np.argmax(rms))] = True
    return RoadScenario(
        points=points,
        mask=mask,
        origin=ShapePoint(*cfg.origin),
        half_extent_m=condition.scale * SCALE_REFERENCE_M,
        condition=condition,
        id=f"gen-{index:06d}",
        seed=int(cfg.seed),
    )


def generate_library(conditions, checkpoint, cfg, jobs=1):
    """Generate one scenario per condition; output order follows input order.

    Scenario ``index`` is the position in ``conditions``, so splitting the
    list across calls or threads cannot change any individual result.
    """
    model = checkpoint.build_model()

    def make(i):
        return generate_scenario(conditions[i], checkpoint, cfg, index=i, model=model)

    if jobs <= 1:
        return [make(i) for i in range(len(conditions))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(make, range(len(conditions))))


__all__ = [
    "SamplerConfig",
    "build_timestep_subsequence",
    "generate_scenario",
    "generate_library",
    "denormalize",
    "strided_reverse",
]
