import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relsar.errors import ConfigError
from relsar.optim import SGD, AdamW, cosine_lr, warmup_step_drop_lr
from relsar.tensor import Tensor


class TestCosine:
    def test_initial(self):
        assert cosine_lr(0, 1e-2, 1000) == pytest.approx(1e-2)

    def test_midpoint(self):
        assert cosine_lr(500, 1e-2, 1000) == pytest.approx(5e-3)

    def test_clamped_after_decay(self):
        assert cosine_lr(1000, 1e-2, 1000) == pytest.approx(0.0, abs=1e-15)
        assert cosine_lr(5000, 1e-2, 1000) == cosine_lr(1000, 1e-2, 1000)

    @given(st.integers(0, 2000))
    def test_monotone_non_increasing(self, step):
        assert cosine_lr(step + 1, 0.1, 1000) <= cosine_lr(step, 0.1, 1000) + 1e-15

    def test_negative_lr_rejected(self):
        with pytest.raises(ConfigError):
            cosine_lr(0, -1e-2, 1000)


class TestWarmupStepDrop:
    def test_shape(self):
        lrs = [warmup_step_drop_lr(s, 100, 1e-3, 1e-4) for s in range(100)]
        assert lrs[0] == pytest.approx(1e-3 / 40)
        assert lrs[39] == pytest.approx(1e-3)
        assert all(v == pytest.approx(1e-3) for v in lrs[40:80])
        assert all(v == pytest.approx(1e-4) for v in lrs[80:])
        assert all(a <= b for a, b in zip(lrs[:40], lrs[1:40]))


class TestSGD:
    def test_plain_step(self):
        p = {"w": Tensor(np.array([1.0]))}
        SGD(momentum=0.0).step(p, {"w": np.array([0.25])}, lr=1.0)
        assert p["w"].data[0] == pytest.approx(0.75)

    def test_momentum_accumulates(self, f64):
        p = {"w": Tensor(np.array([0.0]))}
        opt = SGD(momentum=0.9)
        for _ in range(3):
            opt.step(p, {"w": np.array([1.0])}, lr=1.0)
        # velocities 1, 1.9, 2.71
        assert p["w"].data[0] == pytest.approx(-(1 + 1.9 + 2.71))

    def test_weight_decay_coupled(self, f64):
        p = {"w": Tensor(np.array([2.0]))}
        SGD(momentum=0.0, weight_decay=0.5).step(p, {"w": np.array([0.0])}, lr=0.1)
        assert p["w"].data[0] == pytest.approx(2.0 - 0.1 * 1.0)

    def test_negative_lr_and_bad_momentum(self):
        with pytest.raises(ConfigError):
            SGD().step({"w": Tensor([1.0])}, {"w": np.array([1.0])}, lr=-0.1)
        with pytest.raises(ConfigError):
            SGD(momentum=1.0)

    def test_state_round_trip(self):
        p = {"w": Tensor(np.array([1.0, 2.0]))}
        a = SGD(0.9)
        a.step(p, {"w": np.array([0.1, 0.2])}, 0.1)
        b = SGD(0.9)
        b.load_state_dict(a.state_dict())
        np.testing.assert_array_equal(b.velocity["w"], a.velocity["w"])
        assert b.steps == 1


class TestAdamW:
    def test_first_step_is_sign_times_lr(self, f64):
        p = {"w": Tensor(np.array([1.0, -1.0]))}
        AdamW().step(p, {"w": np.array([3.0, -0.5])}, lr=0.01)
        np.testing.assert_allclose(p["w"].data, [0.99, -0.99], rtol=1e-6)

    def test_decoupled_decay_with_zero_grad(self, f64):
        p = {"w": Tensor(np.array([2.0]))}
        AdamW(weight_decay=0.1).step(p, {"w": np.array([0.0])}, lr=0.5)
        assert p["w"].data[0] == pytest.approx(2.0 - 0.5 * 0.1 * 2.0)

    def test_converges_on_quadratic(self, f64):
        p = {"w": Tensor(np.array([5.0, -3.0]))}
        opt = AdamW()
        for _ in range(2000):
            opt.step(p, {"w": 2 * p["w"].data}, lr=0.05)
        assert np.abs(p["w"].data).max() < 1e-2

    def test_state_round_trip(self):
        p = {"w": Tensor(np.array([1.0]))}
        a = AdamW()
        a.step(p, {"w": np.array([0.3])}, 0.1)
        b = AdamW()
        b.load_state_dict(a.state_dict())
        assert b.steps == 1 and math.isclose(b.m["w"][0], a.m["w"][0])
