import numpy as np
import pytest

from roadgen.errors import ConfigError, TrainingDivergedError
from roadgen.nn.unet import reduced_descriptor
from roadgen.training import (
    Adam,
    TrainingConfig,
    clip_global_norm,
    dataset_tensors,
    loss_mse,
    loss_mse_grad,
    loss_smooth,
    loss_smooth_grad,
    loss_total,
    loss_total_grad,
    train,
)

RNG = np.random.default_rng(31)


def naive_mse(eps, eps_hat, mask):
    """Brute-force accumulation over every unmasked scalar entry."""
    b, c2, k = eps.shape
    n = c2 // 2
    total, count = 0.0, 0
    for bi in range(b):
        for r in range(n):
            if not mask[bi, r]:
                continue
            for d in range(2):
                for p in range(k):
                    diff = eps[bi, 2 * r + d, p] - eps_hat[bi, 2 * r + d, p]
                    total += diff * diff
                    count += 1
    return total / count


def naive_smooth(eps, eps_hat, mask):
    """Double loop over adjacent point pairs within each road."""
    b, c2, k = eps.shape
    n = c2 // 2
    total, pairs = 0.0, 0
    for bi in range(b):
        for r in range(n):
            if not mask[bi, r]:
                continue
            for p in range(k - 1):
                acc = 0.0
                for d in range(2):
                    de = eps[bi, 2 * r + d, p + 1] - eps[bi, 2 * r + d, p]
                    dh = eps_hat[bi, 2 * r + d, p + 1] - eps_hat[bi, 2 * r + d, p]
                    acc += (de - dh) ** 2
                total += acc
                pairs += 1
    return total / pairs


class TestLosses:
    def test_perfect_prediction_zero(self):
        eps = RNG.standard_normal((2, 6, 8))
        assert loss_mse(eps, eps) == 0.0
        assert loss_smooth(eps, eps) == 0.0
        assert loss_total(eps, eps, omega=3.0)[0] == 0.0

    def test_constant_error(self):
        eps = np.zeros((1, 4, 5))
        eps_hat = np.full_like(eps, 2.0)
        assert loss_mse(eps, eps_hat) == pytest.approx(4.0)
        # constant offsets cancel in first differences
        assert loss_smooth(eps, eps_hat) == 0.0

    def test_translation_invariance_of_smooth_only(self):
        eps = RNG.standard_normal((2, 6, 10))
        eps_hat = RNG.standard_normal((2, 6, 10))
        # a per-road constant offset on the prediction
        offset = np.repeat(RNG.standard_normal((2, 3)), 2, axis=1)[:, :, None]
        shifted = eps_hat + offset
        assert loss_smooth(eps, shifted) == pytest.approx(loss_smooth(eps, eps_hat), rel=1e-12)
        assert loss_mse(eps, shifted) != pytest.approx(loss_mse(eps, eps_hat), rel=1e-6)

    def test_matches_naive_loops(self):
        eps = RNG.standard_normal((3, 8, 7))
        eps_hat = RNG.standard_normal((3, 8, 7))
        mask = RNG.random((3, 4)) > 0.3
        mask[:, 0] = True
        assert loss_mse(eps, eps_hat, mask) == pytest.approx(
            naive_mse(eps, eps_hat, mask), abs=1e-12)
        assert loss_smooth(eps, eps_hat, mask) == pytest.approx(
            naive_smooth(eps, eps_hat, mask), abs=1e-12)

    def test_total_arithmetic(self):
        # L_mse = 0.5, L_s = 0.25, omega = 1 -> 0.75; construct via scaling
        eps = np.zeros((1, 2, 3))
        eps_hat = np.array([[[0.0, 0.5, 1.0], [0.0, 0.5, 1.0]]])
        l_mse = loss_mse(eps, eps_hat)
        l_s = loss_smooth(eps, eps_hat)
        total, m, s = loss_total(eps, eps_hat, omega=1.0)
        assert total == pytest.approx(l_mse + l_s)
        assert (m, s) == (l_mse, l_s)
        total0, _, _ = loss_total(eps, eps_hat, omega=0.0)
        assert total0 == l_mse
        assert 0.5 + 1.0 * 0.25 == 0.75  # the quoted figure combination

    def test_nonnegative_and_zero_iff_equal(self):
        eps = RNG.standard_normal((2, 4, 6))
        for _ in range(20):
            eps_hat = eps + RNG.standard_normal(eps.shape) * RNG.uniform(0, 0.1)
            l, _, _ = loss_total(eps, eps_hat, 1.0)
            assert l >= 0.0
            if not np.array_equal(eps_hat, eps):
                assert l > 0.0

    def test_masked_entries_excluded(self):
        eps = RNG.standard_normal((1, 4, 5))
        eps_hat = eps.copy()
        eps_hat[0, 2:] += 100.0  # road 1 only
        mask = np.array([[True, False]])
        assert loss_mse(eps, eps_hat, mask) == 0.0
        assert loss_smooth(eps, eps_hat, mask) == 0.0

    def test_all_masked_rejected(self):
        eps = np.zeros((1, 4, 5))
        with pytest.raises(ConfigError):
            loss_mse(eps, eps, np.array([[False, False]]))

    def test_negative_omega_rejected(self):
        with pytest.raises(ConfigError):
            loss_total(np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), omega=-1.0)


class TestLossGradients:
    def test_grads_match_finite_differences(self):
        eps = RNG.standard_normal((2, 6, 9))
        eps_hat = RNG.standard_normal((2, 6, 9))
        mask = np.array([[True, True, False], [True, False, True]])
        for fn, gfn in ((loss_mse, loss_mse_grad), (loss_smooth, loss_smooth_grad)):
            g = gfn(eps, eps_hat, mask)
            for _ in range(25):
                bi = RNG.integers(2)
                ci = RNG.integers(6)
                pi = RNG.integers(9)
                h = 1e-6
                up = eps_hat.copy()
                up[bi, ci, pi] += h
                dn = eps_hat.copy()
                dn[bi, ci, pi] -= h
                fd = (fn(eps, up, mask) - fn(eps, dn, mask)) / (2 * h)
                assert g[bi, ci, pi] == pytest.approx(fd, abs=1e-7)
        g = loss_total_grad(eps, eps_hat, 1.0, mask)
        assert np.allclose(
            g, loss_mse_grad(eps, eps_hat, mask) + loss_smooth_grad(eps, eps_hat, mask))


class TestOptimizer:
    def test_first_adam_step_hand_computed(self):
        # single parameter, gradient g: step 1 moves by -lr * g / (|g| + eps)
        cfg = TrainingConfig(learning_rate=0.01, batch_size=1)
        p = {"w": np.array([2.0])}
        opt = Adam(p, cfg)
        g = {"w": np.array([0.5])}
        opt.step(p, g)
        expected = 2.0 - 0.01 * 0.5 / (np.sqrt(0.5 ** 2) + cfg.adam_eps)
        assert p["w"][0] == pytest.approx(expected, abs=1e-10)

    def test_clip_global_norm(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        total = clip_global_norm(g, 1.0)
        assert total == pytest.approx(5.0)
        assert np.sqrt(g["a"][0] ** 2 + g["b"] [0] ** 2) == pytest.approx(1.0)
        g2 = {"a": np.array([0.3])}
        clip_global_norm(g2, 1.0)
        assert g2["a"][0] == 0.3  # under the bound: untouched


def _tiny_dataset(n_scen=4, n=2, k=16, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-0.8, 0.8, size=(n_scen, 2 * n, k))
    cs = np.zeros((n_scen, 6))
    cs[:, 0] = 1.0
    cs[:, 4] = 0.4
    masks = np.ones((n_scen, n), dtype=bool)
    return {"x": xs, "c": cs, "mask": masks,
            "meta": {"n": n, "k": k, "half_extent_m": 200.0}}


class TestTrainLoop:
    def _cfg(self, **kw):
        base = dict(learning_rate=1e-3, batch_size=4, omega=1.0, T=50,
                    beta_min=0.0001, beta_max=0.05, max_steps=30, seed=5,
                    condition_dropout=0.1, checkpoint_interval=10)
        base.update(kw)
        return TrainingConfig(**base)

    def test_deterministic_checkpoints(self):
        data = _tiny_dataset()
        desc = reduced_descriptor(n_roads=2, points_per_road=16, dtype="float64")
        cks1 = list(train(data, self._cfg(), desc))
        cks2 = list(train(data, self._cfg(), desc))
        assert len(cks1) == len(cks2) == 3
        for a, b in zip(cks1, cks2):
            assert a.step == b.step
            for k in a.params:
                assert np.array_equal(a.params[k], b.params[k])

    def test_loss_decreases_on_tiny_problem(self):
        data = _tiny_dataset()
        desc = reduced_descriptor(n_roads=2, points_per_road=16, dtype="float64")
        losses = []
        cfg = self._cfg(max_steps=200, learning_rate=3e-3, checkpoint_interval=200)
        for _ in train(data, cfg, desc, log=lambda **kw: losses.append(kw["loss"])):
            pass
        assert losses[-1] < losses[0]

    def test_divergence_aborts_with_diagnostics(self):
        data = _tiny_dataset()
        data["x"][0, 0, 0] = np.nan
        desc = reduced_descriptor(n_roads=2, points_per_road=16, dtype="float64")
        with pytest.raises(TrainingDivergedError) as exc:
            list(train(data, self._cfg(batch_size=8), desc))
        assert exc.value.step >= 1
        assert exc.value.param_norms

    def test_empty_dataset_rejected(self):
        desc = reduced_descriptor(n_roads=2, points_per_road=16)
        with pytest.raises(ConfigError):
            list(train({"x": np.zeros((0, 4, 16)), "c": np.zeros((0, 6)),
                        "mask": np.zeros((0, 2), dtype=bool),
                        "meta": {"n": 2, "k": 16, "half_extent_m": 200.0}},
                       self._cfg(), desc))

    def test_trace_written(self, tmp_path):
        data = _tiny_dataset()
        desc = reduced_descriptor(n_roads=2, points_per_road=16, dtype="float64")
        trace = tmp_path / "trace.csv"
        cfg = self._cfg(trace_path=str(trace))
        list(train(data, cfg, desc))
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "step,loss_mse,loss_smooth,loss"
        assert len(lines) == 31  # header + 30 steps

    def test_dataset_tensors_shapes(self, toy_scenarios):
        data = dataset_tensors(toy_scenarios[:3])
        assert data["x"].shape == (3, 24, 64)
        assert data["c"].shape == (3, 6)
        assert data["mask"].shape == (3, 12)
        assert data["meta"]["n"] == 12
