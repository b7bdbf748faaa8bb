"""Hybrid-loss training loop: noise MSE plus first-difference smoothness.

The smoothness term compares adjacent-point differences of the true and
predicted noise within each road, never across road boundaries, so the
scenario tensor is reshaped back to (B, n, 2, k) before differencing.
Padded roads are excluded from both terms through the road mask.
"""

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .diffusion import build_schedule
from .errors import ConfigError, TrainingDivergedError
from .nn.unet import ArchitectureDescriptor, RoadUNet, mask_to_channels


def _to_roads(arr, mask=None):
    """(B, 2n, k) channels -> (B, n, 2, k), plus (B, n, 1, 1) float mask."""
    b, c2, k = arr.shape
    roads = arr.reshape(b, c2 // 2, 2, k)
    if mask is None:
        m = np.ones((b, c2 // 2), dtype=arr.dtype)
    else:
        m = np.asarray(mask, dtype=arr.dtype)
        if m.ndim == 1:
            m = np.broadcast_to(m, (b, m.shape[0])).copy()
    return roads, m[:, :, None, None]


def loss_mse(eps, eps_hat, mask=None):
    """Mean squared elementwise error over unmasked entries."""
    eps = np.asarray(eps)
    eps_hat = np.asarray(eps_hat)
    if eps.shape != eps_hat.shape:
        raise ConfigError(f"shape mismatch {eps.shape} vs {eps_hat.shape}")
    d, m = _to_roads(eps - eps_hat, mask)
    n_entries = float(m.sum() * d.shape[2] * d.shape[3])
    if n_entries == 0:
        raise ConfigError("all roads masked; nothing to train on")
    return float(((d * m) ** 2).sum() / n_entries)


def loss_mse_grad(eps, eps_hat, mask=None):
    """d loss_mse / d eps_hat, same shape as eps_hat."""
    d, m = _to_roads(np.asarray(eps) - np.asarray(eps_hat), mask)
    n_entries = float(m.sum() * d.shape[2] * d.shape[3])
    g = -2.0 * d * m / n_entries
    return g.reshape(np.asarray(eps_hat).shape)


def loss_smooth(eps, eps_hat, mask=None):
    """Mean over adjacent point pairs of the squared 2D difference mismatch.

    Differences run along the point index within each road only.
    """
    eps = np.asarray(eps)
    eps_hat = np.asarray(eps_hat)
    if eps.shape != eps_hat.shape:
        raise ConfigError(f"shape mismatch {eps.shape} vs {eps_hat.shape}")
    if eps.shape[-1] < 2:
        raise ConfigError("need at least 2 points per road for the smoothness term")
    r, m = _to_roads(eps, mask)
    rh, _ = _to_roads(eps_hat, mask)
    dd = np.diff(r, axis=3) - np.diff(rh, axis=3)  # (B, n, 2, k-1)
    n_pairs = float(m.sum() * dd.shape[3])
    if n_pairs == 0:
        raise ConfigError("all roads masked; nothing to train on")
    return float(((dd ** 2).sum(axis=2, keepdims=True) * m).sum() / n_pairs)


def loss_smooth_grad(eps, eps_hat, mask=None):
    r, m = _to_roads(np.asarray(eps), mask)
    rh, _ = _to_roads(np.asarray(eps_hat), mask)
    dd = (np.diff(r, axis=3) - np.diff(rh, axis=3)) * m
    n_pairs = float(m.sum() * dd.shape[3])
    g = np.zeros_like(rh)
    # D_p depends on eps_hat[p] with +1 and eps_hat[p+1] with -1
    g[:, :, :, :-1] += 2.0 * dd / n_pairs
    g[:, :, :, 1:] -= 2.0 * dd / n_pairs
    return g.reshape(np.asarray(eps_hat).shape)


def loss_total(eps, eps_hat, omega, mask=None):
    """L = L_mse + omega * L_smooth."""
    if omega < 0:
        raise ConfigError("omega must be non-negative")
    l_mse = loss_mse(eps, eps_hat, mask)
    l_s = loss_smooth(eps, eps_hat, mask)
    return l_mse + omega * l_s, l_mse, l_s


def loss_total_grad(eps, eps_hat, omega, mask=None):
    g = loss_mse_grad(eps, eps_hat, mask)
    if omega != 0.0:
        g = g + omega * loss_smooth_grad(eps, eps_hat, mask)
    return g


@dataclass
class TrainingConfig:
    learning_rate: float = 0.0002
    batch_size: int = 32
    omega: float = 1.0
    T: int = 500
    beta_min: float = 0.0001
    beta_max: float = 0.05
    max_steps: int = 20000
    seed: int = 0
    condition_dropout: float = 0.1
    checkpoint_interval: int = 1000
    grad_clip: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    stop_loss_ratio: float = 0.0  # early stop when smoothed loss <= ratio * initial; 0 disables
    trace_path: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.omega < 0:
            raise ConfigError("omega must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, params, cfg):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        b1c = 1.0 - c.adam_beta1 ** self.t
        b2c = 1.0 - c.adam_beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = c.adam_beta1 * self.m[k] + (1 - c.adam_beta1) * g
            self.v[k] = c.adam_beta2 * self.v[k] + (1 - c.adam_beta2) * g * g
            mh = self.m[k] / b1c
            vh = self.v[k] / b2c
            p -= (c.learning_rate * mh / (np.sqrt(vh) + c.adam_eps)).astype(p.dtype)

    def state_arrays(self):
        out = {}
        for k, v in self.m.items():
            out["adam.m." + k] = v
        for k, v in self.v.items():
            out["adam.v." + k] = v
        return out

    def load_state_arrays(self, arrays):
        for k in self.m:
            self.m[k] = np.array(arrays["adam.m." + k], dtype=self.m[k].dtype)
            self.v[k] = np.array(arrays["adam.v." + k], dtype=self.v[k].dtype)


def clip_global_norm(grads, max_norm):
    total = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class Checkpoint:
    """Everything needed to resume training or sample deterministically."""

    params: dict
    descriptor: ArchitectureDescriptor
    optimizer_state: dict
    optimizer_step: int
    schedule: dict           # {"T", "beta_min", "beta_max"}
    step: int
    config: dict
    normalization: dict      # dataset metadata: n, k, half_extent_m

    def build_model(self, seed=0):
        model = RoadUNet(self.descriptor, seed=seed)
        model.load_param_dict(self.params)
        return model


def _step_rng(seed, step):
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x5452, int(step)])


def _assemble_batch(dataset, cfg, step):
    """Deterministic batch: indices, steps, noise, condition dropout.

    Draw order is fixed (indices, t, eps, dropout) so the stream is a pure
    function of (seed, step).
    """
    rng = _step_rng(cfg.seed, step)
    idx = rng.integers(0, len(dataset["x"]), size=cfg.batch_size)
    t = rng.integers(1, cfg.T + 1, size=cfg.batch_size)
    x0 = dataset["x"][idx]
    eps = rng.standard_normal(x0.shape)
    keep = (rng.random(cfg.batch_size) >= cfg.condition_dropout).astype(np.float64)
    return idx, t, x0, eps, keep


def dataset_tensors(scenarios):
    """Stack scenarios into training tensors.

    Returns {"x": (N, 2n, k), "c": (N, 6), "mask": (N, n), "meta": dict}.
    """
    from .nn.unet import scenario_to_channels

    xs = np.stack([scenario_to_channels(s.points) for s in scenarios])
    cs = np.stack([s.condition.as_array() for s in scenarios])
    masks = np.stack([s.mask for s in scenarios])
    meta = {
        "n": int(scenarios[0].n),
        "k": int(scenarios[0].k),
        "half_extent_m": float(scenarios[0].half_extent_m),
    }
    return {"x": xs, "c": cs, "mask": masks, "meta": meta}


def train(dataset, config, descriptor, log=None):
    """Run Algorithm-style training; yields a Checkpoint at every
    ``checkpoint_interval`` steps and at termination.

    dataset: output of :func:`dataset_tensors`. Fully deterministic for a
    fixed config seed. Raises TrainingDivergedError on non-finite loss.
    """
    if len(dataset["x"]) == 0:
        raise ConfigError("empty dataset")
    cfg = config
    sched = build_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    model = RoadUNet(descriptor, seed=cfg.seed)
    params = model.param_dict()
    opt = Adam(params, cfg)

    trace_rows = []
    initial_loss = None
    ema = None

    def make_ckpt(step):
        return Checkpoint(
            params={k: v.copy() for k, v in params.items()},
            descriptor=descriptor,
            optimizer_state={k: v.copy() for k, v in opt.state_arrays().items()},
            optimizer_step=opt.t,
            schedule={"T": cfg.T, "beta_min": cfg.beta_min, "beta_max": cfg.beta_max},
            step=step,
            config=cfg.to_dict(),
            normalization=dict(dataset["meta"]),
        )

    step = 0
    while step < cfg.max_steps:
        step += 1
        idx, t, x0, eps, keep = _assemble_batch(dataset, cfg, step)
        mask = dataset["mask"][idx]
        cond = dataset["c"][idx]
        chan_mask = np.stack([mask_to_channels(m) for m in mask])

        # forward diffusion is applied per sample at its own step
        ab = sched.alpha_bar[t - 1][:, None, None]
        x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
        x_t = x_t * chan_mask[:, :, None]

        ctx = {}
        eps_hat = model.forward(x_t.astype(model.dtype), t, cond, ctx=ctx, cond_keep=keep)
        l, l_mse, l_s = loss_total(eps, eps_hat.astype(np.float64), cfg.omega, mask)
        if not np.isfinite(l):
            norms = {k: float(np.linalg.norm(v)) for k, v in params.items()}
            raise TrainingDivergedError(step, norms)

        g = loss_total_grad(eps, eps_hat.astype(np.float64), cfg.omega, mask)
        grads = model.backward(g.astype(model.dtype), ctx)
        clip_global_norm(grads, cfg.grad_clip)
        opt.step(params, grads)

        trace_rows.append((step, l_mse, l_s, l))
        if initial_loss is None:
            initial_loss = l
            ema = l
        else:
            ema = 0.98 * ema + 0.02 * l
        if log is not None and (step % 100 == 0 or step == 1):
            log(step=step, loss=l, loss_mse=l_mse, loss_smooth=l_s)

        done = step == cfg.max_steps
        if cfg.stop_loss_ratio > 0 and ema <= cfg.stop_loss_ratio * initial_loss:
            done = True
        if step % cfg.checkpoint_interval == 0 or done:
            if cfg.trace_path:
                _append_trace(cfg.trace_path, trace_rows)
                trace_rows = []
            yield make_ckpt(step)
        if done:
            return


def _append_trace(path, rows):
    import os

    new = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["step", "loss_mse", "loss_smooth", "loss"])
        for r in rows:
            w.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3])])
