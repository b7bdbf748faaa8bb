"""Generation-time rebalancing of decoder backbone and skip features.

Backbone features get a position-adaptive gain derived from the channel
mean map; skip features get their low-frequency spectral content
attenuated. Both operations are identity at (b, s) = (1, 1), which the
sampler relies on: the neutral configuration must reproduce the plain
decoder path exactly (up to FFT round-trip error for the skip branch).
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class FreeUConfig:
    """Per-decoder-stage factors, index 0 = deepest decoder stage."""

    b: tuple = (1.3, 1.2)
    s: tuple = (0.9, 0.95)
    r_thresh: float = 0.25  # fraction of Nyquist below which skips are scaled

    def __post_init__(self):
        if len(self.b) != len(self.s):
            raise ConfigError("b and s must list the same number of stages")
        for v in self.b:
            if not (1.0 <= v <= 1.6):
                raise ConfigError(f"backbone factor {v} outside [1, 1.6]")
        for v in self.s:
            if not (0.6 <= v <= 1.0):
                raise ConfigError(f"skip factor {v} outside [0.6, 1]")
        if not (0.0 < self.r_thresh <= 1.0):
            raise ConfigError("r_thresh must be in (0, 1]")

    @classmethod
    def neutral(cls, stages=2):
        return cls(b=(1.0,) * stages, s=(1.0,) * stages)


def backbone_scale(x, b_z):
    """Scale the lower half of the channels by a position-adaptive gain.

    x: (B, C, L). The gain runs from 1 to b_z across positions, ordered by
    the channel-mean map; a structureless (constant) map leaves x unchanged.
    Channels at index >= C/2 pass through bit-exactly.
    """
    if not (1.0 <= b_z <= 1.6):
        raise ConfigError(f"backbone factor {b_z} outside [1, 1.6]")
    x = np.asarray(x)
    mean_map = x.mean(axis=1, keepdims=True)  # (B, 1, L)
    lo = mean_map.min(axis=2, keepdims=True)
    hi = mean_map.max(axis=2, keepdims=True)
    span = hi - lo
    alpha = np.ones_like(mean_map)
    nz = span[:, 0, 0] > 0
    if np.any(nz):
        alpha[nz] = (b_z - 1.0) * (mean_map[nz] - lo[nz]) / span[nz] + 1.0
    out = x.copy()
    half = x.shape[1] // 2
    out[:, :half] = x[:, :half] * alpha
    return out


def skip_modulate(h, s_z, r_thresh=0.25):
    """Attenuate spectral bins below r_thresh (fraction of Nyquist) by s_z.

    h: (B, C, L). The mask is symmetric in frequency (the negative mirror
    is scaled too), shared across channels; bins at or above the threshold
    pass through within FFT round-trip error.
    """
    if not (0.6 <= s_z <= 1.0):
        raise ConfigError(f"skip factor {s_z} outside [0.6, 1]")
    h = np.asarray(h)
    l = h.shape[2]
    freqs = np.fft.fftfreq(l)  # cycles/sample in [-0.5, 0.5)
    r = np.abs(freqs) / 0.5
    mask = np.where(r < r_thresh, s_z, 1.0)
    spec = np.fft.fft(h, axis=2) * mask
    return np.fft.ifft(spec, axis=2).real
