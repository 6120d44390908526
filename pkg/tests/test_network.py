"""Network construction, forward chains, state init, clamping, energies."""

import numpy as np
import pytest

from predcode.network import (
    CROSS_ENTROPY,
    DISCRIMINATIVE,
    GENERATIVE,
    INIT_FORWARD,
    INIT_GAUSSIAN,
    INIT_ZEROS,
    PCNetwork,
)
from predcode.tensor import ShapeError, StaleCacheError, make_rng


def chain_111(w1=2.0, w2=3.0):
    """1-1-1 identity-activation chain with zero biases."""
    net = PCNetwork([1, 1, 1], activations="identity", rng=0)
    net.layers[0].W[:] = w1
    net.layers[0].b[:] = 0.0
    net.layers[1].W[:] = w2
    net.layers[1].b[:] = 0.0
    return net


class TestForward:
    def test_hand_chain(self):
        net = chain_111()
        out = net.forward(np.array([[1.0]]))
        assert out[0, 0] == 6.0

    def test_zero_weights_give_activation_of_zero(self):
        net = PCNetwork([3, 4, 2], activations="tanh", rng=0)
        for layer in net.layers:
            layer.W[:] = 0.0
            layer.b[:] = 0.0
        out = net.forward(make_rng(0).standard_normal((5, 3)))
        assert np.array_equal(out, np.zeros((5, 2)))

    def test_forward_matches_forward_init_cache(self):
        net = PCNetwork([4, 6, 3], activations="gelu", rng=1)
        x = make_rng(2).standard_normal((7, 4))
        out = net.forward(x)
        net.init_states(x, method=INIT_FORWARD)
        assert np.max(np.abs(out - net.vodes[-1].u)) <= 1e-15

    def test_forward_is_state_independent(self):
        net = PCNetwork([4, 6, 3], activations="relu", rng=1)
        x = make_rng(3).standard_normal((2, 4))
        before = net.forward(x)
        net.init_states(x, method=INIT_ZEROS)
        net.set_state(2, np.ones((2, 3)))
        net.refresh_cache()
        assert np.array_equal(net.forward(x), before)

    def test_dimension_mismatch(self):
        net = PCNetwork([4, 6, 3], rng=0)
        with pytest.raises(ShapeError):
            net.forward(np.zeros((2, 5)))


class TestInitStates:
    def test_forward_init_zeroes_internal_energies(self):
        net = PCNetwork([5, 8, 8, 4], activations="leaky_relu", rng=0)
        x = make_rng(1).standard_normal((6, 5))
        net.init_states(x, method=INIT_FORWARD)
        assert np.array_equal(net.layer_energies(), np.zeros(3))

    def test_zeros_init_with_bias_has_energy(self):
        net = PCNetwork([3, 4, 2], activations="tanh", rng=0)
        net.layers[0].b[:] = 0.7
        x = make_rng(1).standard_normal((2, 3))
        net.init_states(x, method=INIT_ZEROS)
        assert net.layer_energies()[0] > 0

    def test_gaussian_std0_equals_zeros(self):
        net = PCNetwork([3, 4, 2], activations="tanh", rng=0)
        x = make_rng(1).standard_normal((2, 3))
        net.init_states(x, method=INIT_GAUSSIAN, std=0.0, rng=make_rng(5))
        gauss = [v.h.copy() for v in net.vodes]
        net.init_states(x, method=INIT_ZEROS)
        for g, v in zip(gauss, net.vodes):
            assert np.array_equal(g, v.h)


class TestClamp:
    def test_clamped_level_never_moves(self):
        net = PCNetwork([3, 4, 2], activations="tanh", rng=0)
        x = make_rng(1).standard_normal((2, 3))
        net.init_states(x, method=INIT_FORWARD)
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        net.clamp(2, y)
        assert net.vodes[-1].clamped
        assert np.array_equal(net.vodes[-1].h, y)

    def test_full_true_mask_equals_clamp(self):
        net = PCNetwork([3, 4, 2], activations="tanh", rng=0)
        x = make_rng(1).standard_normal((2, 3))
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        net.init_states(x, method=INIT_FORWARD)
        net.clamp(2, y, mask=np.ones(2, dtype=bool))
        assert net.vodes[-1].clamped
        assert np.array_equal(net.vodes[-1].h, y)

    def test_partial_mask_freezes_only_masked(self):
        net = PCNetwork([3, 4, 4], activations="tanh", rng=0)
        x = make_rng(1).standard_normal((2, 3))
        net.init_states(x, method=INIT_FORWARD)
        before = net.vodes[-1].h.copy()
        value = np.full((2, 4), 9.0)
        mask = np.array([True, True, False, False])
        net.clamp(2, value, mask=mask)
        h = net.vodes[-1].h
        assert np.array_equal(h[:, :2], value[:, :2])
        assert np.array_equal(h[:, 2:], before[:, 2:])
        assert not net.vodes[-1].clamped

    def test_bad_level_and_shape(self):
        net = PCNetwork([3, 4, 2], rng=0)
        net.init_states(np.zeros((1, 3)), method=INIT_FORWARD)
        with pytest.raises(IndexError):
            net.clamp(5, np.zeros((1, 2)))
        with pytest.raises(IndexError):
            net.vode_at(0)  # no latent vode in discriminative mode
        with pytest.raises(ShapeError):
            net.clamp(2, np.zeros((1, 3)))


class TestEnergies:
    def test_hand_energy_111(self):
        # chain 2x then 3x on input 1; states set to 1 and 5.
        net = chain_111()
        net.init_states(np.array([[1.0]]), method=INIT_FORWARD)
        net.set_state(1, np.array([[1.0]]))
        net.set_state(2, np.array([[5.0]]))
        net.refresh_cache()
        # errors: level1 = 1 - 2 = -1, level2 = 5 - 3 = 2
        assert net.free_energy() == pytest.approx(0.5 * (1 + 4))
        assert net.layer_energies() == pytest.approx([0.5, 2.0])

    def test_forward_init_plus_label_clamp(self):
        net = PCNetwork([4, 8, 3], activations="gelu", rng=3)
        x = make_rng(4).standard_normal((16, 4))
        y = np.zeros((16, 3))
        y[np.arange(16), make_rng(5).integers(0, 3, 16)] = 1.0
        net.init_states(x, method=INIT_FORWARD)
        mu = net.vodes[-1].u.copy()
        net.clamp(2, y)
        net.refresh_cache()
        want = 0.5 * np.sum((y - mu) ** 2) / 16
        assert net.free_energy() == pytest.approx(want, rel=1e-12)

    def test_states_equal_predictions_give_zero(self):
        net = PCNetwork([3, 5, 2], activations="silu", rng=0)
        net.init_states(make_rng(0).standard_normal((4, 3)), method=INIT_FORWARD)
        assert net.free_energy() == 0.0

    def test_free_energy_equals_sum_of_layer_energies(self):
        net = PCNetwork([3, 5, 4, 2], activations="tanh", rng=0)
        net.init_states(make_rng(1).standard_normal((4, 3)),
                        method=INIT_GAUSSIAN, std=0.5, rng=make_rng(2))
        energies = net.layer_energies()
        assert net.free_energy() == pytest.approx(np.sum(energies), rel=1e-12)
        assert np.all(energies >= 0)

    def test_sample_energies_mean_matches_free_energy(self):
        net = PCNetwork([3, 5, 2], activations="tanh", rng=0)
        net.init_states(make_rng(1).standard_normal((8, 3)),
                        method=INIT_GAUSSIAN, std=0.3, rng=make_rng(2))
        assert net.sample_energies().mean() == pytest.approx(
            net.free_energy(), rel=1e-12)

    def test_stale_cache_raises(self):
        net = PCNetwork([3, 4, 2], rng=0)
        net.init_states(np.zeros((1, 3)), method=INIT_FORWARD)
        net.set_state(1, np.ones((1, 4)))
        with pytest.raises(StaleCacheError):
            net.free_energy()

    def test_cross_entropy_output_energy(self):
        net = PCNetwork([3, 4, 2], activations=["tanh", "identity"],
                        output_energy=CROSS_ENTROPY, rng=0)
        x = make_rng(1).standard_normal((5, 3))
        y = np.zeros((5, 2))
        y[:, 0] = 1.0
        net.init_states(x, method=INIT_FORWARD)
        net.set_ce_target(y)
        logits = net.vodes[-1].u
        want = -np.mean(
            logits[:, 0] - np.log(np.exp(logits[:, 0]) + np.exp(logits[:, 1])))
        assert net.free_energy() == pytest.approx(want, rel=1e-12)


class TestGenerativeMode:
    def test_latent_vode_and_prior(self):
        net = PCNetwork([2, 6, 4], activations="tanh", mode=GENERATIVE,
                        latent_prior=True, rng=0)
        net.prior.theta0[:] = [0.5, -0.5]
        net.init_states(batch_size=3, method=INIT_FORWARD)
        assert np.allclose(net.latent.h, [0.5, -0.5])
        assert net.free_energy() == 0.0  # forward chain from the prior mean
        net.set_state(0, np.zeros((3, 2)))
        net.refresh_cache()
        assert net.prior_energy() == pytest.approx(0.5 * 0.5)

    def test_output_sigma2_scales_energy(self):
        x = make_rng(0).standard_normal((4, 3))
        nets = [
            PCNetwork([2, 5, 3], "tanh", mode=GENERATIVE, sigma2_output=s, rng=1)
            for s in (1.0, 0.25)
        ]
        for net in nets:
            net.init_states(x=x, method=INIT_FORWARD)
            net.clamp(net.n_levels, x)
            net.refresh_cache()
        assert nets[1].free_energy() == pytest.approx(
            4.0 * nets[0].free_energy(), rel=1e-12)

    def test_discriminative_rejects_prior(self):
        with pytest.raises(ValueError):
            PCNetwork([2, 3], mode=DISCRIMINATIVE, latent_prior=True, rng=0)
