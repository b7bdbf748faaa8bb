import numpy as np
import pytest

from roadgen.errors import ConfigError
from roadgen.nn import FreeUConfig, RoadUNet, backbone_scale, reduced_descriptor, skip_modulate

RNG = np.random.default_rng(99)


class TestBackboneScale:
    def test_neutral_factor_is_identity(self):
        x = RNG.standard_normal((2, 6, 10))
        assert np.array_equal(backbone_scale(x, 1.0), x)

    def test_gain_from_normalized_mean_map(self):
        # mean map (0, 0.5, 1) with b = 1.6 gives gains (1, 1.3, 1.6)
        x = np.zeros((1, 2, 3))
        x[0, :, 0] = 0.0
        x[0, :, 1] = 0.5
        x[0, :, 2] = 1.0
        out = backbone_scale(x, 1.6)
        # lower half = channel 0 scaled; channel 1 untouched
        assert np.allclose(out[0, 0], [0.0 * 1.0, 0.5 * 1.3, 1.0 * 1.6])
        assert np.array_equal(out[0, 1], x[0, 1])

    def test_constant_map_degenerates_to_identity(self):
        x = np.full((1, 4, 5), 2.5)
        assert np.array_equal(backbone_scale(x, 1.5), x)

    def test_upper_half_channels_bit_exact(self):
        x = RNG.standard_normal((3, 8, 16))
        out = backbone_scale(x, 1.4)
        assert np.array_equal(out[:, 4:], x[:, 4:])
        assert not np.array_equal(out[:, :4], x[:, :4])

    def test_factor_range_enforced(self):
        x = RNG.standard_normal((1, 2, 4))
        with pytest.raises(ConfigError):
            backbone_scale(x, 1.7)
        with pytest.raises(ConfigError):
            backbone_scale(x, 0.9)


class TestSkipModulate:
    def test_neutral_round_trip(self):
        h = RNG.standard_normal((2, 4, 32))
        out = skip_modulate(h, 1.0)
        assert np.max(np.abs(out - h)) <= 1e-9

    def test_constant_signal_scaled_by_s(self):
        # all energy at DC, which sits below any positive threshold
        h = np.full((1, 3, 16), 1.25)
        out = skip_modulate(h, 0.6, 0.25)
        assert np.allclose(out, 0.6 * h, atol=1e-12)

    def test_tone_above_threshold_unchanged(self):
        l = 64
        tone_bin = 24  # normalized frequency 24/32 = 0.75 of Nyquist
        t = np.arange(l)
        h = np.cos(2 * np.pi * tone_bin * t / l)[None, None, :]
        out = skip_modulate(h, 0.6, 0.25)
        assert np.max(np.abs(out - h)) <= 1e-9

    def test_tone_below_threshold_scaled(self):
        l = 64
        tone_bin = 4  # normalized frequency 4/32 = 0.125 of Nyquist
        t = np.arange(l)
        h = np.cos(2 * np.pi * tone_bin * t / l)[None, None, :]
        out = skip_modulate(h, 0.7, 0.25)
        assert np.allclose(out, 0.7 * h, atol=1e-9)

    def test_bins_at_or_above_threshold_preserved(self):
        h = RNG.standard_normal((2, 3, 64))
        out = skip_modulate(h, 0.6, 0.25)
        spec_in = np.fft.fft(h, axis=2)
        spec_out = np.fft.fft(out, axis=2)
        r = np.abs(np.fft.fftfreq(64)) / 0.5
        keep = r >= 0.25
        assert np.max(np.abs(spec_out[:, :, keep] - spec_in[:, :, keep])) <= 1e-9
        low = (r < 0.25)
        assert np.allclose(spec_out[:, :, low], 0.6 * spec_in[:, :, low], atol=1e-9)

    def test_factor_range_enforced(self):
        with pytest.raises(ConfigError):
            skip_modulate(RNG.standard_normal((1, 1, 8)), 0.5)


class TestFreeUConfig:
    def test_range_validation(self):
        with pytest.raises(ConfigError):
            FreeUConfig(b=(1.7, 1.2), s=(0.9, 0.9))
        with pytest.raises(ConfigError):
            FreeUConfig(b=(1.2, 1.2), s=(0.5, 0.9))
        with pytest.raises(ConfigError):
            FreeUConfig(b=(1.2,), s=(0.9, 0.9))

    def test_neutral(self):
        cfg = FreeUConfig.neutral(2)
        assert cfg.b == (1.0, 1.0) and cfg.s == (1.0, 1.0)


class TestFreeUInsideDecoder:
    def test_neutral_config_matches_plain_path(self):
        desc = reduced_descriptor(dtype="float64")
        model = RoadUNet(desc, seed=1)
        x = RNG.standard_normal((2, desc.in_channels, desc.points_per_road))
        c = RNG.random((2, 6))
        plain = model.forward(x, 44, c, freeu=None)
        neutral = model.forward(x, 44, c, freeu=FreeUConfig.neutral(2))
        assert np.max(np.abs(plain - neutral)) < 1e-6

    def test_active_config_changes_output(self):
        desc = reduced_descriptor(dtype="float64")
        model = RoadUNet(desc, seed=1)
        model.out_conv.w[:] = RNG.standard_normal(model.out_conv.w.shape) * 0.1
        x = RNG.standard_normal((1, desc.in_channels, desc.points_per_road))
        c = RNG.random((1, 6))
        plain = model.forward(x, 44, c)
        shaped = model.forward(x, 44, c, freeu=FreeUConfig(b=(1.5, 1.3), s=(0.7, 0.8)))
        assert not np.allclose(plain, shaped)
