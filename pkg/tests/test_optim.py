"""Optimizer semantics: heavy-ball SGD, AdamW decoupling, Langevin noise,
and the warmup-cosine schedule."""

import numpy as np
import pytest

from predcode.optim import AdamW, NoisySgd, SgdMomentum, WarmupCosine, clip_grads
from predcode.tensor import ParameterError, make_rng


class TestSgdMomentum:
    def test_vanilla_step(self):
        p = np.array([1.0, -2.0])
        SgdMomentum(lr=0.1).step([p], [np.array([1.0, 1.0])])
        assert np.allclose(p, [0.9, -2.1])

    def test_zero_grad_no_move(self):
        p = np.array([3.0])
        SgdMomentum(lr=0.5, momentum=0.9).step([p], [np.zeros(1)])
        assert p[0] == 3.0

    def test_two_steps_unrolled(self):
        # constant gradient g with m=0.9: total move = -lr*g*(1 + 1.9)
        p = np.zeros(1)
        g = np.array([2.0])
        opt = SgdMomentum(lr=0.1, momentum=0.9)
        opt.step([p], [g])
        opt.step([p], [g])
        assert p[0] == pytest.approx(-0.1 * 2.0 * (1 + 1.9))

    def test_momentum_range_checked(self):
        with pytest.raises(ParameterError):
            SgdMomentum(lr=0.1, momentum=1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            SgdMomentum(lr=0.1).step([np.zeros(2)], [np.zeros(3)])


class TestAdamW:
    def test_zero_grad_zero_decay_freezes(self):
        p = np.array([1.0, 2.0])
        opt = AdamW(lr=0.1, weight_decay=0.0)
        for _ in range(3):
            opt.step([p], [np.zeros(2)])
        assert np.array_equal(p, [1.0, 2.0])

    def test_decoupled_decay_is_geometric(self):
        p = np.array([4.0])
        opt = AdamW(lr=0.1, weight_decay=0.5)
        opt.step([p], [np.zeros(1)])
        assert p[0] == pytest.approx(4.0 * (1 - 0.1 * 0.5))
        opt.step([p], [np.zeros(1)])
        assert p[0] == pytest.approx(4.0 * (1 - 0.1 * 0.5) ** 2)

    def test_first_step_magnitude(self):
        # bias corrections cancel at t=1: step = lr * g/(|g| + eps')
        p = np.zeros(1)
        AdamW(lr=0.01, weight_decay=0.0).step([p], [np.ones(1)])
        assert p[0] == pytest.approx(-0.01, rel=1e-6)

    def test_matches_plain_adam_when_no_decay(self):
        rng = make_rng(0)
        p1 = rng.standard_normal(5)
        p2 = p1.copy()
        a = AdamW(lr=0.05, weight_decay=0.0)
        b = AdamW(lr=0.05, weight_decay=0.0)
        for _ in range(4):
            g = rng.standard_normal(5)
            a.step([p1], [g])
            b.step([p2], [g.copy()])
        assert np.array_equal(p1, p2)


class TestNoisySgd:
    def test_zero_sigma_bit_identical_to_sgd(self):
        rng = make_rng(3)
        p1 = rng.standard_normal(6)
        p2 = p1.copy()
        a = NoisySgd(lr=0.1, momentum=0.7, sigma2=0.0, rng=make_rng(0))
        b = SgdMomentum(lr=0.1, momentum=0.7)
        for _ in range(5):
            g = rng.standard_normal(6)
            a.step([p1], [g.copy()])
            b.step([p2], [g.copy()])
        assert np.array_equal(p1, p2)

    def test_lr_to_zero_freezes(self):
        p = np.array([[1.0, 2.0]])
        NoisySgd(lr=1e-12, momentum=0.0, sigma2=1.0, rng=make_rng(0)).step(
            [p], [np.zeros((1, 2))])
        # update magnitude is O(sqrt(2*lr*sigma2))
        assert np.max(np.abs(p - [[1.0, 2.0]])) < 1e-4

    def test_mask_blocks_noise(self):
        p = np.zeros((3, 4))
        mask = np.array([True, False, True, False])
        NoisySgd(lr=0.1, momentum=0.0, sigma2=1.0, rng=make_rng(1)).step(
            [p], [np.zeros((3, 4))], [mask])
        assert np.array_equal(p[:, mask], np.zeros((3, 2)))
        assert np.all(p[:, ~mask] != 0)

    def test_stationary_variance_of_quadratic_well(self):
        # energy h^2/2, gradient h: the 1e6-step chain should hover at
        # spread sigma2/(1 - lr/2), within 5% of sigma2 for lr = 0.01.
        lr, sigma2, steps = 0.01, 1.0, 1_000_000
        opt = NoisySgd(lr=lr, momentum=0.0, sigma2=sigma2, rng=make_rng(42))
        h = np.zeros((1, 1))
        burn = 10_000
        acc = 0.0
        count = 0
        for t in range(steps):
            opt.step([h], [h.copy()])
            if t >= burn:
                acc += h[0, 0] ** 2
                count += 1
        var = acc / count
        assert abs(var - sigma2) < 0.05 * sigma2

    def test_negative_sigma2_rejected(self):
        with pytest.raises(ParameterError):
            NoisySgd(lr=0.1, sigma2=-1.0)


class TestWarmupCosine:
    def test_endpoints(self):
        sched = WarmupCosine(peak_lr=1.0, warmup_steps=10, total_steps=100,
                             min_lr=0.02)
        assert sched.lr_at(0) == pytest.approx(0.02)
        assert sched.lr_at(10) == pytest.approx(1.0)
        assert sched.lr_at(100) == pytest.approx(0.02)

    def test_monotone_warmup_then_decay(self):
        sched = WarmupCosine(peak_lr=1.0, warmup_steps=5, total_steps=50)
        values = [sched.lr_at(s) for s in range(51)]
        assert all(b >= a for a, b in zip(values[:5], values[1:6]))
        assert all(b <= a for a, b in zip(values[5:-1], values[6:]))

    def test_out_of_range_clamps(self):
        sched = WarmupCosine(peak_lr=1.0, warmup_steps=5, total_steps=50)
        assert sched.lr_at(-3) == sched.lr_at(0)
        assert sched.lr_at(999) == sched.lr_at(50)

    def test_invalid_construction(self):
        with pytest.raises(ParameterError):
            WarmupCosine(1.0, warmup_steps=60, total_steps=50)


def test_clip_grads_scales_global_norm():
    g = [np.array([3.0, 0.0]), np.array([4.0])]
    clip_grads(g, 2.5)
    norm = np.sqrt(sum(float(np.sum(x * x)) for x in g))
    assert norm == pytest.approx(2.5)
    # below the threshold nothing changes
    g2 = [np.array([0.3])]
    clip_grads(g2, 2.5)
    assert g2[0][0] == 0.3
