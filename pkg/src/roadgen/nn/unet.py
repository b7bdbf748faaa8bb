"""The noise-prediction network: a 1D encoder/decoder over road channels.

A scenario enters as 2n channels (road-major interleaving: road i occupies
channels 2i and 2i+1 for x and y series) by k positions. Residual blocks
with stride-2 down-sampling and nearest-neighbor up-sampling form the
spine; self-attention sits on the two deepest encoder stages and the
bottleneck. The diffusion step embedding and the road-attribute embedding
are summed and pushed through two fully connected layers shared by every
residual block; each block then projects that vector onto its own channel
width. Decoder stages concatenate the (optionally FreeU-rebalanced)
backbone feature with the matching encoder skip.

Forward and backward passes are written out explicitly so gradients can be
validated against finite differences end to end.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from .layers import (
    Conv1d,
    GroupNorm,
    Linear,
    SelfAttention1d,
    silu,
    silu_grad,
    upsample_nearest,
    upsample_nearest_grad,
)
from .freeu import backbone_scale, skip_modulate

COND_DIM = 6


def sinusoidal_time_embedding(t, dim):
    """Interleaved (sin, cos) pairs at frequencies 10000^(-2j/dim).

    t: scalar or (B,) steps. Returns (B, dim). dim must be even.
    """
    if dim < 2 or dim % 2 != 0:
        raise ConfigError("embedding dimension must be even and >= 2")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    j = np.arange(dim // 2, dtype=np.float64)
    omega = 10000.0 ** (-2.0 * j / dim)
    ang = t[:, None] * omega[None, :]
    emb = np.empty((t.shape[0], dim), dtype=np.float64)
    emb[:, 0::2] = np.sin(ang)
    emb[:, 1::2] = np.cos(ang)
    return emb


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """Shapes and wiring of the network; serialized into checkpoints."""

    n_roads: int = 12
    points_per_road: int = 64
    base_channels: int = 64
    channel_mults: tuple = (1, 2, 4, 8)
    blocks_per_stage: int = 2
    norm_groups: int = 8
    emb_dim: int = 64
    cond_hidden: int = 64
    dtype: str = "float32"

    def __post_init__(self):
        if self.emb_dim % 2 != 0:
            raise ConfigError("emb_dim must be even")
        if self.points_per_road % (1 << (len(self.channel_mults) - 1)) != 0:
            raise ConfigError("points_per_road must be divisible by 2^(stages-1)")
        for m in self.channel_mults:
            if (self.base_channels * m) % self.norm_groups != 0:
                raise ConfigError("stage channels must be divisible by norm_groups")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def in_channels(self):
        return 2 * self.n_roads

    @property
    def stages(self):
        return len(self.channel_mults)

    @property
    def stage_channels(self):
        return tuple(self.base_channels * m for m in self.channel_mults)

    def to_dict(self):
        d = asdict(self)
        d["channel_mults"] = list(self.channel_mults)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        return cls(**d)


def reduced_descriptor(n_roads=2, points_per_road=16, dtype="float64"):
    """Small configuration used by gradient checks and fast tests."""
    return ArchitectureDescriptor(
        n_roads=n_roads,
        points_per_road=points_per_road,
        base_channels=4,
        channel_mults=(1, 2),
        blocks_per_stage=2,
        norm_groups=2,
        emb_dim=8,
        cond_hidden=8,
        dtype=dtype,
    )


class ConditionEncoder:
    """Wide (linear) plus deep (two-layer perceptron) attribute embedding."""

    def __init__(self, name, emb_dim, hidden, rng, dtype):
        self.name = name
        self.wide = Linear(name + ".wide", COND_DIM, emb_dim, rng, dtype, bias=False)
        self.deep1 = Linear(name + ".deep1", COND_DIM, hidden, rng, dtype)
        self.deep2 = Linear(name + ".deep2", hidden, emb_dim, rng, dtype)

    def params(self):
        yield from self.wide.params()
        yield from self.deep1.params()
        yield from self.deep2.params()

    def forward(self, c, ctx=None):
        w = self.wide.forward(c, ctx)
        h1 = self.deep1.forward(c, ctx)
        a1 = silu(h1)
        d = self.deep2.forward(a1, ctx)
        if ctx is not None:
            ctx[self.name + ".h1"] = h1
        return w + d

    def backward(self, g, ctx, grads):
        gc = self.wide.backward(g, ctx, grads)
        ga1 = self.deep2.backward(g, ctx, grads)
        gh1 = ga1 * silu_grad(ctx[self.name + ".h1"])
        gc = gc + self.deep1.backward(gh1, ctx, grads)
        return gc


class ResBlock:
    def __init__(self, name, c_in, c_out, emb_dim, groups, rng, dtype):
        self.name = name
        self.gn1 = GroupNorm(name + ".gn1", c_in, groups, dtype)
        self.conv1 = Conv1d(name + ".conv1", c_in, c_out, rng, dtype)
        self.proj = Linear(name + ".proj", emb_dim, c_out, rng, dtype)
        self.gn2 = GroupNorm(name + ".gn2", c_out, groups, dtype)
        self.conv2 = Conv1d(name + ".conv2", c_out, c_out, rng, dtype)
        self.shortcut = None
        if c_in != c_out:
            self.shortcut = Conv1d(name + ".shortcut", c_in, c_out, rng, dtype, kernel=1, pad=0)

    def params(self):
        yield from self.gn1.params()
        yield from self.conv1.params()
        yield from self.proj.params()
        yield from self.gn2.params()
        yield from self.conv2.params()
        if self.shortcut is not None:
            yield from self.shortcut.params()

    def forward(self, x, u, ctx=None):
        a1 = self.gn1.forward(x, ctx)
        h = self.conv1.forward(silu(a1), ctx)
        h = h + self.proj.forward(u, ctx)[:, :, None]
        a2 = self.gn2.forward(h, ctx)
        h2 = self.conv2.forward(silu(a2), ctx)
        res = self.shortcut.forward(x, ctx) if self.shortcut is not None else x
        if ctx is not None:
            ctx[self.name + ".acts"] = (a1, a2)
        return h2 + res

    def backward(self, g, ctx, grads):
        a1, a2 = ctx[self.name + ".acts"]
        gs2 = self.conv2.backward(g, ctx, grads)
        gh = self.gn2.backward(gs2 * silu_grad(a2), ctx, grads)
        gu = self.proj.backward(gh.sum(axis=2), ctx, grads)
        gs1 = self.conv1.backward(gh, ctx, grads)
        gx = self.gn1.backward(gs1 * silu_grad(a1), ctx, grads)
        if self.shortcut is not None:
            gx = gx + self.shortcut.backward(g, ctx, grads)
        else:
            gx = gx + g
        return gx, gu


class RoadUNet:
    def __init__(self, descriptor, seed=0):
        self.descriptor = descriptor
        d = descriptor
        dtype = np.float32 if d.dtype == "float32" else np.float64
        self.dtype = dtype
        rng = np.random.default_rng([int(seed), 0x52554E])
        ch = d.stage_channels
        S = d.stages
        g = d.norm_groups
        e = d.emb_dim

        self.cond = ConditionEncoder("cond", e, d.cond_hidden, rng, dtype)
        self.shared_fc1 = Linear("emb.fc1", e, e, rng, dtype)
        self.shared_fc2 = Linear("emb.fc2", e, e, rng, dtype)

        self.in_conv = Conv1d("in_conv", d.in_channels, ch[0], rng, dtype)

        self.enc_blocks = []
        self.enc_attn = []
        self.downs = []
        attn_stages = {S - 2, S - 1} if S >= 2 else {S - 1}
        prev = ch[0]
        for i in range(S):
            blocks = []
            for bidx in range(d.blocks_per_stage):
                c_in = prev if bidx == 0 else ch[i]
                blocks.append(ResBlock(f"enc{i}.block{bidx}", c_in, ch[i], e, g, rng, dtype))
            self.enc_blocks.append(blocks)
            self.enc_attn.append(
                SelfAttention1d(f"enc{i}.attn", ch[i], g, rng, dtype) if i in attn_stages else None
            )
            self.downs.append(
                Conv1d(f"down{i}", ch[i], ch[i], rng, dtype, stride=2) if i < S - 1 else None
            )
            prev = ch[i]

        self.mid1 = ResBlock("mid.block0", ch[-1], ch[-1], e, g, rng, dtype)
        self.mid_attn = SelfAttention1d("mid.attn", ch[-1], g, rng, dtype)
        self.mid2 = ResBlock("mid.block1", ch[-1], ch[-1], e, g, rng, dtype)

        self.dec_blocks = []
        self.ups = []
        for i in range(S - 1, -1, -1):
            blocks = []
            for bidx in range(d.blocks_per_stage):
                c_in = 2 * ch[i] if bidx == 0 else ch[i]
                blocks.append(ResBlock(f"dec{i}.block{bidx}", c_in, ch[i], e, g, rng, dtype))
            self.dec_blocks.append(blocks)
            self.ups.append(
                Conv1d(f"up{i}", ch[i], ch[i - 1], rng, dtype) if i > 0 else None
            )

        self.out_norm = GroupNorm("out.norm", ch[0], g, dtype)
        self.out_conv = Conv1d("out.conv", ch[0], d.in_channels, rng, dtype, zero_init=True)

    def _modules(self):
        yield self.cond
        yield self.shared_fc1
        yield self.shared_fc2
        yield self.in_conv
        for i, blocks in enumerate(self.enc_blocks):
            yield from blocks
            if self.enc_attn[i] is not None:
                yield self.enc_attn[i]
            if self.downs[i] is not None:
                yield self.downs[i]
        yield self.mid1
        yield self.mid_attn
        yield self.mid2
        for j, blocks in enumerate(self.dec_blocks):
            yield from blocks
            if self.ups[j] is not None:
                yield self.ups[j]
        yield self.out_norm
        yield self.out_conv

    def params(self):
        for m in self._modules():
            yield from m.params()

    def param_dict(self):
        return dict(self.params())

    def param_count(self):
        return sum(int(np.prod(a.shape)) for _, a in self.params())

    def load_param_dict(self, d):
        own = self.param_dict()
        if set(own) != set(d):
            missing = set(own) ^ set(d)
            raise ConfigError(f"parameter names do not match architecture: {sorted(missing)[:5]}")
        for name, arr in own.items():
            src = np.asarray(d[name], dtype=arr.dtype)
            if src.shape != arr.shape:
                raise ConfigError(f"parameter {name}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    def zero_grads(self):
        return {name: np.zeros_like(arr) for name, arr in self.params()}

    def _normalize_inputs(self, x, t, c):
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        d = self.descriptor
        if x.shape[1] != d.in_channels or x.shape[2] != d.points_per_road:
            raise ConfigError(
                f"input shape {x.shape[1:]} does not match ({d.in_channels}, {d.points_per_road})"
            )
        t = np.atleast_1d(np.asarray(t))
        if t.shape[0] == 1 and x.shape[0] > 1:
            t = np.repeat(t, x.shape[0])
        c = np.asarray(c, dtype=self.dtype)
        if c.ndim == 1:
            c = np.broadcast_to(c, (x.shape[0], c.shape[0])).copy()
        if c.shape != (x.shape[0], COND_DIM):
            raise ConfigError(f"condition shape {c.shape} != ({x.shape[0]}, {COND_DIM})")
        return x, t, c, single

    def forward(self, x, t, c, freeu=None, ctx=None, cond_keep=None):
        """Predict the injected noise for state x at step t under condition c.

        x: (B, 2n, k) or (2n, k); t: int or (B,); c: (B, 6) or (6,).
        ``freeu`` optionally rebalances decoder features (generation only;
        no backward support). ``cond_keep`` is a (B,) 0/1 mask implementing
        condition dropout.
        """
        x, t, c, single = self._normalize_inputs(x, t, c)
        d = self.descriptor

        t_emb = sinusoidal_time_embedding(t, d.emb_dim).astype(self.dtype)
        c_emb = self.cond.forward(c, ctx)
        if cond_keep is not None:
            keep = np.asarray(cond_keep, dtype=self.dtype).reshape(-1, 1)
            c_emb = c_emb * keep
            if ctx is not None:
                ctx["cond_keep"] = keep
        e0 = t_emb + c_emb
        e1 = self.shared_fc1.forward(e0, ctx)
        a1 = silu(e1)
        e2 = self.shared_fc2.forward(a1, ctx)
        u = silu(e2)
        if ctx is not None:
            ctx["emb.acts"] = (e1, e2)

        h = self.in_conv.forward(x, ctx)
        skips = []
        for i, blocks in enumerate(self.enc_blocks):
            for blk in blocks:
                h = blk.forward(h, u, ctx)
            if self.enc_attn[i] is not None:
                h = self.enc_attn[i].forward(h, ctx)
            skips.append(h)
            if self.downs[i] is not None:
                h = self.downs[i].forward(h, ctx)

        h = self.mid1.forward(h, u, ctx)
        h = self.mid_attn.forward(h, ctx)
        h = self.mid2.forward(h, u, ctx)

        S = d.stages
        freeu_used = False
        for j, blocks in enumerate(self.dec_blocks):
            stage = S - 1 - j  # encoder stage index this decoder stage mirrors
            skip = skips[stage]
            z = j  # 0 = deepest decoder stage
            if freeu is not None and z < len(freeu.b):
                h = backbone_scale(h, freeu.b[z])
                skip = skip_modulate(skip, freeu.s[z], freeu.r_thresh)
                freeu_used = True
            h = np.concatenate([h, skip], axis=1)
            for blk in blocks:
                h = blk.forward(h, u, ctx)
            if self.ups[j] is not None:
                h = upsample_nearest(h)
                h = self.ups[j].forward(h, ctx)

        a_out = self.out_norm.forward(h, ctx)
        y = self.out_conv.forward(silu(a_out), ctx)
        if ctx is not None:
            ctx["out.act"] = a_out
            ctx["freeu_used"] = freeu_used
            ctx["skip_channels"] = [skips[S - 1 - j].shape[1] for j in range(S)]
        return y[0] if single else y

    def backward(self, g, ctx, grads=None):
        """Accumulate parameter gradients for a forward pass recorded in ctx.

        Returns the grads dict. Gradients flow to every parameter including
        the shared embedding layers and the condition encoder; gradients
        w.r.t. x, t, c themselves are discarded.
        """
        if ctx.get("freeu_used"):
            raise ConfigError("backward through FreeU-modulated decoding is unsupported")
        if grads is None:
            grads = self.zero_grads()
        g = np.asarray(g, dtype=self.dtype)
        if g.ndim == 2:
            g = g[None]

        a_out = ctx["out.act"]
        gs = self.out_conv.backward(g, ctx, grads)
        gh = self.out_norm.backward(gs * silu_grad(a_out), ctx, grads)

        S = self.descriptor.stages
        gu_total = 0.0
        gskips = [None] * S
        for j in range(S - 1, -1, -1):
            stage = S - 1 - j
            if self.ups[j] is not None:
                gh = self.ups[j].backward(gh, ctx, grads)
                gh = upsample_nearest_grad(gh)
            for blk in reversed(self.dec_blocks[j]):
                gh, gu = blk.backward(gh, ctx, grads)
                gu_total = gu_total + gu
            c_skip = ctx["skip_channels"][j]
            gskips[stage] = gh[:, gh.shape[1] - c_skip:]
            gh = gh[:, :gh.shape[1] - c_skip]

        gh, gu = self.mid2.backward(gh, ctx, grads)
        gu_total = gu_total + gu
        gh = self.mid_attn.backward(gh, ctx, grads)
        gh, gu = self.mid1.backward(gh, ctx, grads)
        gu_total = gu_total + gu

        for i in range(S - 1, -1, -1):
            if self.downs[i] is not None:
                gh = self.downs[i].backward(gh, ctx, grads)
            gh = gh + gskips[i]
            if self.enc_attn[i] is not None:
                gh = self.enc_attn[i].backward(gh, ctx, grads)
            for blk in reversed(self.enc_blocks[i]):
                gh, gu = blk.backward(gh, ctx, grads)
                gu_total = gu_total + gu
        self.in_conv.backward(gh, ctx, grads)

        e1, e2 = ctx["emb.acts"]
        ge2 = gu_total * silu_grad(e2)
        ga1 = self.shared_fc2.backward(ge2, ctx, grads)
        ge1 = ga1 * silu_grad(e1)
        ge0 = self.shared_fc1.backward(ge1, ctx, grads)
        gc_emb = ge0
        if "cond_keep" in ctx:
            gc_emb = gc_emb * ctx["cond_keep"]
        self.cond.backward(gc_emb, ctx, grads)
        return grads


def predict_noise(model, x_t, t, c, freeu=None):
    """Deterministic noise prediction; see RoadUNet.forward."""
    return model.forward(x_t, t, c, freeu=freeu)


def scenario_to_channels(points):
    """(n, k, 2) scenario points -> (2n, k) road-major interleaved channels."""
    pts = np.asarray(points)
    n, k, _ = pts.shape
    return pts.transpose(0, 2, 1).reshape(2 * n, k)


def channels_to_scenario(channels):
    """(2n, k) channels -> (n, k, 2) scenario points."""
    ch = np.asarray(channels)
    n2, k = ch.shape
    return ch.reshape(n2 // 2, 2, k).transpose(0, 2, 1)


def mask_to_channels(mask):
    """(n,) road mask -> (2n,) channel mask."""
    return np.repeat(np.asarray(mask, dtype=bool), 2)
