"""Analytic gradients against hand derivations and central differences."""

import numpy as np
import pytest

from predcode import gradients
from predcode.network import (
    CROSS_ENTROPY,
    GENERATIVE,
    INIT_FORWARD,
    INIT_GAUSSIAN,
    PCNetwork,
)
from predcode.optim import SgdMomentum
from predcode.tensor import ACTIVATIONS, make_rng

from test_network import chain_111

SMOOTH = ["identity", "gelu", "tanh", "silu"]
ALL_KINDS = sorted(ACTIVATIONS)


def random_net(rng, output_energy="squared_error", mode="discriminative",
               activation=None, max_width=16, max_depth=4):
    depth = int(rng.integers(1, max_depth + 1))
    dims = [int(rng.integers(2, max_width + 1)) for _ in range(depth + 1)]
    act = activation or SMOOTH[int(rng.integers(0, len(SMOOTH)))]
    acts = [act] * (depth - 1) + ["identity"] if depth > 1 else ["identity"]
    return PCNetwork(dims, acts, mode=mode, output_energy=output_energy,
                     latent_prior=(mode == GENERATIVE and bool(rng.integers(2))),
                     rng=int(rng.integers(1 << 30)))


def randomize_states(net, rng, clamp_output_to=None):
    if net.mode == "discriminative":
        x = rng.standard_normal((int(rng.integers(1, 4)), net.input_dim))
        net.init_states(x, method=INIT_GAUSSIAN, std=0.8, rng=rng)
    else:
        net.init_states(batch_size=int(rng.integers(1, 4)),
                        method=INIT_GAUSSIAN, std=0.8, rng=rng)
    if clamp_output_to is not None:
        net.clamp(net.n_levels, clamp_output_to(net))
    net.refresh_cache()


def assert_grad_lists_close(analytic, oracle, rtol, skip_masks=None):
    """Entrywise relative comparison with a per-slot floor.

    Central differences carry an absolute noise floor of roughly
    machine_eps * |F| / (2 * eps); entries far below the slot's dominant
    gradient cannot beat it in relative terms, so the denominator is
    floored at 1e-3 of the slot maximum (any real analytic-gradient bug
    shows up at the dominant scale).
    """
    assert len(analytic) == len(oracle)
    for i, (a, o) in enumerate(zip(analytic, oracle)):
        keep = np.ones(a.shape, dtype=bool)
        if skip_masks is not None and skip_masks[i] is not None:
            keep = ~np.broadcast_to(skip_masks[i], a.shape)
        if not keep.any():
            continue
        floor = max(1e-3 * np.max(np.abs(o[keep])), 1e-8)
        scale = np.maximum(np.abs(o[keep]), floor)
        err = np.abs(a[keep] - o[keep]) / scale
        assert err.max() < rtol, f"slot {i}: rel err {err.max()}"


class TestHandExamples:
    def setup_method(self):
        self.net = chain_111()
        self.net.init_states(np.array([[1.0]]), method=INIT_FORWARD)
        self.net.set_state(1, np.array([[1.0]]))
        self.net.set_state(2, np.array([[5.0]]))
        self.net.refresh_cache()

    def test_state_gradient_chain_rule(self):
        # own error -1 plus successor pull -W2*eps2 = -1 - 3*2 = -7
        g = gradients.state_grads(self.net)
        assert g[0][0, 0] == pytest.approx(-7.0)
        assert g[1][0, 0] == pytest.approx(2.0)

    def test_weight_gradient_descends(self):
        wg = gradients.weight_grads(self.net)
        # layer 2: dF/dW2 = -eps2 * h1 = -2; descent adds +2*lr
        assert wg.dW[1][0, 0] == pytest.approx(-2.0)
        lr = 0.25
        w_before = self.net.layers[1].W.copy()
        SgdMomentum(lr).step([self.net.layers[1].W], [wg.dW[1]])
        assert self.net.layers[1].W[0, 0] == pytest.approx(w_before[0, 0] + 2 * lr)

    def test_zero_errors_zero_grads(self):
        net = chain_111()
        net.init_states(np.array([[1.0]]), method=INIT_FORWARD)
        for g in gradients.state_grads(net):
            assert np.array_equal(g, np.zeros_like(g))
        wg = gradients.weight_grads(net)
        for arr in wg.as_list():
            assert np.array_equal(arr, np.zeros_like(arr))


class TestFiniteDifferenceOracle:
    def test_quadratic_network_matches_to_1e9(self):
        # identity activations make the energy exactly quadratic, where
        # central differences are exact up to roundoff.
        rng = make_rng(11)
        net = PCNetwork([3, 5, 4], activations="identity", rng=1)
        randomize_states(net, rng)
        # truncation vanishes on a quadratic, so a wide eps leaves pure
        # roundoff, well under 1e-9 relative error
        assert_grad_lists_close(gradients.state_grads(net),
                                gradients.fd_state_grads(net, eps=1e-2), 1e-9)
        assert_grad_lists_close(gradients.weight_grads(net).as_list(),
                                gradients.fd_weight_grads(net, eps=1e-2).as_list(),
                                1e-9)

    def test_fd_error_shrinks_quadratically(self):
        rng = make_rng(12)
        net = PCNetwork([3, 6, 3], activations="tanh", rng=2)
        randomize_states(net, rng)
        exact = gradients.state_grads(net)[0]

        def err(eps):
            fd = gradients.fd_state_grads(net, eps=eps)[0]
            return np.max(np.abs(fd - exact))

        e1, e2 = err(1e-2), err(5e-3)
        assert e2 < e1 / 3.0  # ~4x for an O(eps^2) method

    def test_clamped_entries_compared_on_free_only(self):
        rng = make_rng(13)
        net = PCNetwork([3, 4, 2], activations="gelu", rng=3)
        randomize_states(net, rng,
                         clamp_output_to=lambda n: np.ones((n.batch_size(), 2)))
        analytic = gradients.state_grads(net)
        assert np.array_equal(analytic[-1], np.zeros_like(analytic[-1]))
        oracle = gradients.fd_state_grads(net)
        # the oracle still measures a true slope at the clamped level
        assert np.max(np.abs(oracle[-1])) > 0
        masks = [None, np.ones(2, dtype=bool)]  # one slot per hidden/output level
        assert_grad_lists_close(analytic, oracle, 1e-5, skip_masks=masks)


class TestRandomNetworkProperty:
    @pytest.mark.parametrize("output_energy", ["squared_error", "cross_entropy"])
    def test_grads_match_fd_over_random_draws(self, output_energy):
        rng = make_rng(100 if output_energy == "squared_error" else 200)
        for trial in range(30):
            net = random_net(rng, output_energy=output_energy)
            randomize_states(net, rng)
            if output_energy == "cross_entropy":
                y = np.zeros((net.batch_size(), net.output_dim))
                y[np.arange(len(y)),
                  rng.integers(0, net.output_dim, len(y))] = 1.0
                net.set_ce_target(y)
            assert_grad_lists_close(gradients.state_grads(net),
                                    gradients.fd_state_grads(net), 1e-5)
            assert_grad_lists_close(gradients.weight_grads(net).as_list(),
                                    gradients.fd_weight_grads(net).as_list(),
                                    1e-5)

    def test_generative_nets_with_prior(self):
        rng = make_rng(300)
        for trial in range(10):
            net = random_net(rng, mode=GENERATIVE)
            randomize_states(net, rng)
            assert_grad_lists_close(gradients.state_grads(net),
                                    gradients.fd_state_grads(net), 1e-5)
            assert_grad_lists_close(gradients.weight_grads(net).as_list(),
                                    gradients.fd_weight_grads(net).as_list(),
                                    1e-5)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_every_activation_kind(self, kind):
        # kink-prone kinds get states drawn away from their kinks by the
        # gaussian randomization with overwhelming probability; reroll on
        # the rare draw that lands within 1e-3 of a kink.
        rng = make_rng(hash(kind) % (1 << 31))
        for trial in range(5):
            net = PCNetwork([4, 8, 8, 3], [kind, kind, "identity"],
                            rng=int(rng.integers(1 << 30)))
            while True:
                randomize_states(net, rng)
                pres = np.concatenate([v.pre.ravel() for v in net.vodes])
                near_kink = min(np.min(np.abs(pres)),
                                np.min(np.abs(np.abs(pres) - 1.0)))
                if near_kink > 1e-3:
                    break
            assert_grad_lists_close(gradients.state_grads(net),
                                    gradients.fd_state_grads(net), 1e-5)
            assert_grad_lists_close(gradients.weight_grads(net).as_list(),
                                    gradients.fd_weight_grads(net).as_list(),
                                    1e-5)


class TestDescentAndLocality:
    def test_small_state_step_strictly_decreases_energy(self):
        rng = make_rng(77)
        for gamma in (1e-3, 1e-4):
            net = random_net(rng)
            randomize_states(net, rng)
            before = net.free_energy()
            grads = gradients.state_grads(net)
            norm = sum(float(np.sum(g * g)) for g in grads)
            if norm == 0:
                continue
            SgdMomentum(gamma).step([s.vode.h for s in net.state_slots()], grads)
            net.refresh_cache()
            assert net.free_energy() < before

    def test_locality_of_weight_gradients(self):
        # with states held fixed, perturbing one layer's weights changes
        # only that layer's energy term
        rng = make_rng(88)
        net = PCNetwork([3, 5, 4, 2], activations="tanh", rng=4)
        randomize_states(net, rng)
        base = net.layer_energies().copy()
        net.layers[1].W[0, 0] += 0.1
        net.refresh_cache()
        after = net.layer_energies()
        assert after[1] != pytest.approx(base[1])
        assert after[0] == pytest.approx(base[0])
        assert after[2] == pytest.approx(base[2])
