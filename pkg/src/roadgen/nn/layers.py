"""Minimal numpy layers with explicit forward/backward passes.

Every layer keeps its parameters as plain arrays and writes whatever the
backward pass needs into a caller-supplied ``ctx`` dict keyed by the layer
name, so forward evaluation on shared read-only parameters is safe from
multiple threads (each call brings its own ctx). Gradients accumulate into
a ``grads`` dict keyed by parameter name.
"""

import numpy as np


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


class Layer:
    def __init__(self, name):
        self.name = name

    def params(self):
        return iter(())

    def param_count(self):
        return sum(int(np.prod(a.shape)) for _, a in self.params())


class Linear(Layer):
    def __init__(self, name, d_in, d_out, rng, dtype, scale=None, bias=True, zero_init=False):
        super().__init__(name)
        if scale is None:
            scale = 1.0 / np.sqrt(d_in)
        if zero_init:
            self.w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            self.w = (rng.standard_normal((d_in, d_out)) * scale).astype(dtype)
        self.b = np.zeros(d_out, dtype=dtype) if bias else None

    def params(self):
        yield self.name + ".w", self.w
        if self.b is not None:
            yield self.name + ".b", self.b

    def forward(self, x, ctx=None):
        y = x @ self.w
        if self.b is not None:
            y = y + self.b
        if ctx is not None:
            ctx[self.name] = x
        return y

    def backward(self, g, ctx, grads):
        x = ctx[self.name]
        grads[self.name + ".w"] += x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        if self.b is not None:
            grads[self.name + ".b"] += g.reshape(-1, g.shape[-1]).sum(axis=0)
        return g @ self.w.T


class Conv1d(Layer):
    """1D convolution over (B, C, L) with kernel size k, padding, stride."""

    def __init__(self, name, c_in, c_out, rng, dtype, kernel=3, stride=1, pad=1, zero_init=False):
        super().__init__(name)
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        scale = 1.0 / np.sqrt(c_in * kernel)
        if zero_init:
            self.w = np.zeros((c_out, c_in, kernel), dtype=dtype)
        else:
            self.w = (rng.standard_normal((c_out, c_in, kernel)) * scale).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)

    def params(self):
        yield self.name + ".w", self.w
        yield self.name + ".b", self.b

    def _l_out(self, l_in):
        return (l_in + 2 * self.pad - self.kernel) // self.stride + 1

    def _w2(self):
        o, c, k = self.w.shape
        return self.w.transpose(0, 2, 1).reshape(o, k * c)

    def forward(self, x, ctx=None):
        # one GEMM per call: gather the k taps into a (K*C, B*L_out) matrix
        b, c, l = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad))) if self.pad else x
        l_out = self._l_out(l)
        span = self.stride * (l_out - 1) + 1
        cols = np.concatenate(
            [xp[:, :, k:k + span:self.stride] for k in range(self.kernel)], axis=1
        )
        xt = cols.transpose(1, 0, 2).reshape(self.kernel * c, b * l_out)
        o = self.w.shape[0]
        y = (self._w2() @ xt).reshape(o, b, l_out).transpose(1, 0, 2)
        y += self.b[None, :, None]
        if ctx is not None:
            ctx[self.name] = (xt, (b, c, l, xp.shape[2]))
        return y

    def backward(self, g, ctx, grads):
        xt, (b, c, l, lp) = ctx[self.name]
        o = self.w.shape[0]
        l_out = g.shape[2]
        span = self.stride * (l_out - 1) + 1
        gt = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(o, b * l_out)
        gw2 = gt @ xt.T
        grads[self.name + ".w"] += gw2.reshape(o, self.kernel, c).transpose(0, 2, 1)
        grads[self.name + ".b"] += g.sum(axis=(0, 2))
        gcols = (self._w2().T @ gt).reshape(self.kernel * c, b, l_out).transpose(1, 0, 2)
        dxp = np.zeros((b, c, lp), dtype=g.dtype)
        for k in range(self.kernel):
            dxp[:, :, k:k + span:self.stride] += gcols[:, k * c:(k + 1) * c]
        if self.pad:
            return dxp[:, :, self.pad:self.pad + l]
        return dxp


class GroupNorm(Layer):
    def __init__(self, name, channels, groups, dtype, eps=1e-5):
        super().__init__(name)
        if channels % groups != 0:
            raise ValueError(f"{name}: channels {channels} not divisible by groups {groups}")
        self.groups = groups
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)

    def params(self):
        yield self.name + ".gamma", self.gamma
        yield self.name + ".beta", self.beta

    def forward(self, x, ctx=None):
        b, c, l = x.shape
        g = self.groups
        xg = x.reshape(b, g, c // g * l)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = ((xg - mu) * inv).reshape(b, c, l)
        y = self.gamma[None, :, None] * xhat + self.beta[None, :, None]
        if ctx is not None:
            ctx[self.name] = (xhat, inv)
        return y

    def backward(self, gout, ctx, grads):
        xhat, inv = ctx[self.name]
        b, c, l = gout.shape
        g = self.groups
        grads[self.name + ".gamma"] += (gout * xhat).sum(axis=(0, 2))
        grads[self.name + ".beta"] += gout.sum(axis=(0, 2))
        dxhat = (gout * self.gamma[None, :, None]).reshape(b, g, c // g * l)
        xh = xhat.reshape(b, g, c // g * l)
        m1 = dxhat.mean(axis=2, keepdims=True)
        m2 = (dxhat * xh).mean(axis=2, keepdims=True)
        dx = inv * (dxhat - m1 - xh * m2)
        return dx.reshape(b, c, l)


class SelfAttention1d(Layer):
    """Single-head self-attention along the sequence axis with residual add."""

    def __init__(self, name, channels, groups, rng, dtype):
        super().__init__(name)
        self.norm = GroupNorm(name + ".norm", channels, groups, dtype)
        scale = 1.0 / np.sqrt(channels)
        self.wq = (rng.standard_normal((channels, channels)) * scale).astype(dtype)
        self.wk = (rng.standard_normal((channels, channels)) * scale).astype(dtype)
        self.wv = (rng.standard_normal((channels, channels)) * scale).astype(dtype)
        self.wo = np.zeros((channels, channels), dtype=dtype)
        self.bo = np.zeros(channels, dtype=dtype)

    def params(self):
        yield from self.norm.params()
        yield self.name + ".wq", self.wq
        yield self.name + ".wk", self.wk
        yield self.name + ".wv", self.wv
        yield self.name + ".wo", self.wo
        yield self.name + ".bo", self.bo

    def forward(self, x, ctx=None):
        xn = self.norm.forward(x, ctx)
        q = np.matmul(self.wq, xn)
        k = np.matmul(self.wk, xn)
        v = np.matmul(self.wv, xn)
        scale = 1.0 / np.sqrt(q.shape[1])
        scores = np.matmul(q.transpose(0, 2, 1), k) * scale  # (B, i, j)
        scores -= scores.max(axis=2, keepdims=True)
        e = np.exp(scores)
        att = e / e.sum(axis=2, keepdims=True)
        o = np.matmul(v, att.transpose(0, 2, 1))  # (B, c, i)
        y = np.matmul(self.wo, o) + self.bo[None, :, None]
        if ctx is not None:
            ctx[self.name] = (xn, q, k, v, att, o, scale)
        return x + y

    def backward(self, g, ctx, grads):
        xn, q, k, v, att, o, scale = ctx[self.name]
        grads[self.name + ".wo"] += np.tensordot(g, o, axes=((0, 2), (0, 2)))
        grads[self.name + ".bo"] += g.sum(axis=(0, 2))
        go = np.matmul(self.wo.T, g)
        gatt = np.matmul(go.transpose(0, 2, 1), v)  # (B, i, j)
        gv = np.matmul(go, att)  # (B, c, j)
        gscores = att * (gatt - (gatt * att).sum(axis=2, keepdims=True))
        gq = np.matmul(k, gscores.transpose(0, 2, 1)) * scale  # (B, c, i)
        gk = np.matmul(q, gscores) * scale  # (B, c, j)
        grads[self.name + ".wq"] += np.tensordot(gq, xn, axes=((0, 2), (0, 2)))
        grads[self.name + ".wk"] += np.tensordot(gk, xn, axes=((0, 2), (0, 2)))
        grads[self.name + ".wv"] += np.tensordot(gv, xn, axes=((0, 2), (0, 2)))
        gxn = (
            np.matmul(self.wq.T, gq)
            + np.matmul(self.wk.T, gk)
            + np.matmul(self.wv.T, gv)
        )
        return g + self.norm.backward(gxn, ctx, grads)


def upsample_nearest(x):
    """(B, C, L) -> (B, C, 2L) by repeating each position."""
    return np.repeat(x, 2, axis=2)


def upsample_nearest_grad(g):
    b, c, l2 = g.shape
    return g.reshape(b, c, l2 // 2, 2).sum(axis=3)
