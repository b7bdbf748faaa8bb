import numpy as np
import pytest

from roadgen.errors import ConfigError
from roadgen.nn import FreeUConfig, RoadUNet, predict_noise, reduced_descriptor
from roadgen.nn.unet import (
    ArchitectureDescriptor,
    ConditionEncoder,
    channels_to_scenario,
    mask_to_channels,
    scenario_to_channels,
    sinusoidal_time_embedding,
)

RNG = np.random.default_rng(7)


class TestTimeEmbedding:
    def test_t_zero(self):
        emb = sinusoidal_time_embedding(0, 8)[0]
        assert np.all(emb[0::2] == 0.0)
        assert np.all(emb[1::2] == 1.0)

    def test_bounded(self):
        for t in (1, 17, 499, 10000):
            emb = sinusoidal_time_embedding(t, 32)
            assert np.all(np.abs(emb) <= 1.0)

    def test_distinct_steps_differ_in_every_sin_slot(self):
        a = sinusoidal_time_embedding(1, 16)[0]
        b = sinusoidal_time_embedding(2, 16)[0]
        assert np.all(a[0::2] != b[0::2])

    def test_odd_dim_rejected(self):
        with pytest.raises(ConfigError):
            sinusoidal_time_embedding(1, 7)


class TestConditionEncoder:
    def _enc(self):
        return ConditionEncoder("c", 8, 16, np.random.default_rng(0), np.float64)

    def test_zero_weights_zero_embedding(self):
        enc = self._enc()
        enc.wide.w[:] = 0
        enc.deep1.w[:] = 0
        enc.deep1.b[:] = 0
        enc.deep2.w[:] = 0
        enc.deep2.b[:] = 0
        out = enc.forward(RNG.random((3, 6)))
        assert np.all(out == 0.0)

    def test_distinct_conditions_distinct_embeddings(self):
        enc = self._enc()
        a = enc.forward(np.array([[1, 0, 0, 0, 0.4, 0.25]], dtype=float))
        b = enc.forward(np.array([[0, 1, 0, 0, 0.4, 0.25]], dtype=float))
        assert not np.allclose(a, b)

    def test_linear_when_deep_zero(self):
        enc = self._enc()
        enc.deep1.w[:] = 0
        enc.deep1.b[:] = 0
        enc.deep2.w[:] = 0
        enc.deep2.b[:] = 0
        c1 = RNG.random((1, 6))
        c2 = RNG.random((1, 6))
        lhs = enc.forward(c1 + c2)
        rhs = enc.forward(c1) + enc.forward(c2)
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestLayout:
    def test_channel_round_trip(self):
        pts = RNG.standard_normal((5, 16, 2))
        assert np.array_equal(channels_to_scenario(scenario_to_channels(pts)), pts)

    def test_road_major_interleaving(self):
        pts = RNG.standard_normal((3, 4, 2))
        ch = scenario_to_channels(pts)
        assert np.array_equal(ch[0], pts[0, :, 0])
        assert np.array_equal(ch[1], pts[0, :, 1])
        assert np.array_equal(ch[4], pts[2, :, 0])

    def test_mask_expansion(self):
        m = np.array([True, False, True])
        assert np.array_equal(mask_to_channels(m), [True, True, False, False, True, True])


class TestRoadUNet:
    def test_output_shape_matches_input(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        for batch in (1, 3):
            x = RNG.standard_normal((batch, desc.in_channels, desc.points_per_road))
            y = model.forward(x, 5, RNG.random((batch, 6)))
            assert y.shape == x.shape
        y1 = model.forward(RNG.standard_normal((desc.in_channels, desc.points_per_road)),
                           1, RNG.random(6))
        assert y1.shape == (desc.in_channels, desc.points_per_road)

    def test_deterministic(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=3)
        x = RNG.standard_normal((2, desc.in_channels, desc.points_per_road))
        c = RNG.random((2, 6))
        a = model.forward(x, 9, c)
        b = model.forward(x, 9, c)
        assert np.array_equal(a, b)

    def test_zero_weights_constant_output(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        for _, arr in model.params():
            arr[...] = 0.0
        bias = 0.37
        model.out_conv.b[:] = bias
        x = RNG.standard_normal((1, desc.in_channels, desc.points_per_road))
        y = model.forward(x, 3, RNG.random((1, 6)))
        assert np.allclose(y, bias, atol=1e-12)

    def test_param_count_deterministic(self):
        desc = reduced_descriptor()
        assert RoadUNet(desc, seed=0).param_count() == RoadUNet(desc, seed=1).param_count()

    def test_same_seed_same_params(self):
        desc = reduced_descriptor()
        a = dict(RoadUNet(desc, seed=5).params())
        b = dict(RoadUNet(desc, seed=5).params())
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_condition_changes_output(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        # the output conv is zero-initialized; give it weight so input
        # perturbations reach the output
        model.out_conv.w[:] = RNG.standard_normal(model.out_conv.w.shape) * 0.1
        x = RNG.standard_normal((1, desc.in_channels, desc.points_per_road))
        y1 = model.forward(x, 10, np.array([1, 0, 0, 0, 0.4, 0.2], dtype=float))
        y2 = model.forward(x, 10, np.array([0, 0, 1, 0, 0.4, 0.2], dtype=float))
        assert not np.allclose(y1, y2)

    def test_cond_keep_zero_matches_zero_embedding(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        x = RNG.standard_normal((1, desc.in_channels, desc.points_per_road))
        c = RNG.random((1, 6))
        dropped = model.forward(x, 4, c, cond_keep=np.zeros(1))
        other_c = model.forward(x, 4, RNG.random((1, 6)), cond_keep=np.zeros(1))
        assert np.allclose(dropped, other_c)

    def test_shape_mismatch_rejected(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        with pytest.raises(ConfigError):
            model.forward(RNG.standard_normal((1, 3, desc.points_per_road)), 1, RNG.random(6))

    def test_descriptor_round_trip(self):
        desc = ArchitectureDescriptor(n_roads=4, points_per_road=32, base_channels=8,
                                      channel_mults=(1, 2, 4), blocks_per_stage=1,
                                      norm_groups=4, emb_dim=16, cond_hidden=8,
                                      dtype="float64")
        back = ArchitectureDescriptor.from_dict(desc.to_dict())
        assert back == desc

    def test_load_param_dict_round_trip(self):
        desc = reduced_descriptor()
        src = RoadUNet(desc, seed=1)
        dst = RoadUNet(desc, seed=2)
        dst.load_param_dict(src.param_dict())
        x = RNG.standard_normal((1, desc.in_channels, desc.points_per_road))
        c = RNG.random((1, 6))
        assert np.array_equal(src.forward(x, 7, c), dst.forward(x, 7, c))

    def test_predict_noise_wrapper(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        x = RNG.standard_normal((desc.in_channels, desc.points_per_road))
        c = RNG.random(6)
        assert np.array_equal(predict_noise(model, x, 3, c), model.forward(x, 3, c))

    def test_backward_through_freeu_rejected(self):
        desc = reduced_descriptor()
        model = RoadUNet(desc, seed=0)
        x = RNG.standard_normal((1, desc.in_channels, desc.points_per_road))
        ctx = {}
        y = model.forward(x, 2, RNG.random((1, 6)), freeu=FreeUConfig(), ctx=ctx)
        with pytest.raises(ConfigError):
            model.backward(np.ones_like(y), ctx)
