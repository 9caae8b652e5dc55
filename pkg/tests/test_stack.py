import numpy as np
import pytest

from dpsim.channel import correlation_for_config, draw_channel
from dpsim.config import SystemConfig
from dpsim.propagation import build_propagation
from dpsim.stack import (PhaseStack, StackShapeError, assemble_rx, assemble_tx,
                         blockdiag2, end_to_end, simulate_reception)

from conftest import random_stack


def zero_stack(sys_cfg):
    theta = np.zeros((sys_cfg.tx_layers, 2, sys_cfg.tx_units_per_layer))
    xi = np.zeros((sys_cfg.rx_layers, 2, sys_cfg.rx_units_per_layer))
    return PhaseStack(theta, xi)


def test_single_layer_zero_phase_is_plain_diffraction():
    sys_cfg = SystemConfig(tx_layers=1, rx_layers=1,
                           tx_units_per_layer=9, rx_units_per_layer=9,
                           streams_per_pol=2)
    prop = build_propagation(sys_cfg)
    stack = zero_stack(sys_cfg)
    v1, u1 = prop.tx_matrices[0], prop.rx_matrices[0]
    assert np.array_equal(assemble_tx(stack, prop), blockdiag2(v1, v1))
    assert np.array_equal(assemble_rx(stack, prop), blockdiag2(u1, u1))


def test_transfer_matrices_shapes_and_zero_cross_blocks(desk_system, desk_prop):
    stack = random_stack(desk_system, 4)
    t = assemble_tx(stack, desk_prop)
    r = assemble_rx(stack, desk_prop)
    m, n, s = 16, 16, 2
    assert t.shape == (2 * m, 2 * s)
    assert r.shape == (2 * s, 2 * n)
    assert np.all(t[:m, s:] == 0) and np.all(t[m:, :s] == 0)
    assert np.all(r[:s, n:] == 0) and np.all(r[s:, :n] == 0)


def test_tied_mode_gives_identical_polarization_blocks():
    sys_cfg = SystemConfig(streams_per_pol=2, tx_layers=2, rx_layers=2,
                           tx_units_per_layer=16, rx_units_per_layer=16,
                           stack_mode="tied_sim_baseline")
    prop = build_propagation(sys_cfg)
    stack = PhaseStack.random(np.random.default_rng(0), sys_cfg)
    assert stack.tied
    t = assemble_tx(stack, prop)
    r = assemble_rx(stack, prop)
    assert np.array_equal(t[:16, :2], t[16:, 2:])
    assert np.array_equal(r[:2, :16], r[2:, 16:])


def test_end_to_end_matches_naive_triple_loop(desk_system, desk_prop, desk_corr):
    stack = random_stack(desk_system, 7)
    chan = draw_channel(np.random.default_rng(7), desk_system, desk_corr, 1.0)
    t = assemble_tx(stack, desk_prop)
    r = assemble_rx(stack, desk_prop)
    h = end_to_end(t, chan.g, r)
    assert h.shape == (4, 4)

    rg = np.zeros((4, 32), dtype=complex)
    for i in range(4):
        for j in range(32):
            rg[i, j] = sum(r[i, k] * chan.g[k, j] for k in range(32))
    naive = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            naive[i, j] = sum(rg[i, k] * t[k, j] for k in range(32))
    assert np.allclose(h, naive, rtol=1e-12)


def test_end_to_end_cross_blocks_zero_without_conversion():
    sys_cfg = SystemConfig(streams_per_pol=2, tx_layers=2, rx_layers=2,
                           tx_units_per_layer=16, rx_units_per_layer=16,
                           pol_conversion_ratio=0.0)
    prop = build_propagation(sys_cfg)
    corr = correlation_for_config(sys_cfg)
    chan = draw_channel(np.random.default_rng(1), sys_cfg, corr, 1.0)
    stack = PhaseStack.random(np.random.default_rng(2), sys_cfg)
    h = end_to_end(assemble_tx(stack, prop), chan.g, assemble_rx(stack, prop))
    assert np.all(h[:2, 2:] == 0)
    assert np.all(h[2:, :2] == 0)


def test_end_to_end_linear_in_channel(desk_system, desk_prop, desk_corr):
    stack = random_stack(desk_system, 9)
    chan = draw_channel(np.random.default_rng(9), desk_system, desk_corr, 1.0)
    t = assemble_tx(stack, desk_prop)
    r = assemble_rx(stack, desk_prop)
    h1 = end_to_end(t, chan.g, r)
    h2 = end_to_end(t, 2.5 * chan.g, r)
    assert np.allclose(h2, 2.5 * h1)


def test_end_to_end_shape_mismatch():
    with pytest.raises(StackShapeError, match="non-conformable"):
        end_to_end(np.ones((4, 2)), np.ones((3, 3)), np.ones((2, 3)))


def test_phase_vectors_unit_modulus(desk_system):
    stack = random_stack(desk_system, 13)
    for layer in range(2):
        assert np.max(np.abs(np.abs(stack.tx_phase_vector(layer)) - 1.0)) < 3e-16
        assert np.max(np.abs(np.abs(stack.rx_phase_vector(layer)) - 1.0)) < 3e-16
    assert np.all(stack.theta >= 0) and np.all(stack.theta < 2 * np.pi)


def test_unit_permutation_leaves_end_to_end_unchanged(desk_system, desk_prop, desk_corr):
    stack = random_stack(desk_system, 17)
    chan = draw_channel(np.random.default_rng(17), desk_system, desk_corr, 1.0)
    h = end_to_end(assemble_tx(stack, desk_prop), chan.g, assemble_rx(stack, desk_prop))

    rng = np.random.default_rng(18)
    perm = rng.permutation(16)
    # permute units of tx layer 2 together with V2 rows and G's tx-side columns
    prop2 = type(desk_prop)(
        tx_matrices=[desk_prop.tx_matrices[0], desk_prop.tx_matrices[1][perm, :]],
        rx_matrices=list(desk_prop.rx_matrices))
    g2 = chan.g.copy()
    g2[:, :16] = g2[:, :16][:, perm]
    g2[:, 16:] = g2[:, 16:][:, perm]
    stack2 = stack.copy()
    stack2.theta[1] = stack2.theta[1][:, perm]
    h2 = end_to_end(assemble_tx(stack2, prop2), g2, assemble_rx(stack2, desk_prop))
    assert np.allclose(h, h2, rtol=1e-12)


def test_reception_noise_free_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4) + 1j * rng.normal(size=4)
    y = simulate_reception(rng, np.eye(4), np.ones(4), x, 0.0)
    assert np.allclose(y, x)


def test_reception_transmit_power():
    rng = np.random.default_rng(1)
    p = np.array([0.4, 0.1, 0.3, 0.2])
    total = 0.0
    trials = 100_000
    for _ in range(trials):
        x = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / np.sqrt(2)
        total += np.sum(np.abs(np.sqrt(p) * x) ** 2)
    assert total / trials == pytest.approx(p.sum(), rel=0.02)


def test_reception_noise_variance():
    rng = np.random.default_rng(2)
    noise_power = 0.7
    samples = np.stack([
        simulate_reception(rng, np.zeros((4, 4)), np.ones(4),
                           np.ones(4, dtype=complex), noise_power)
        for _ in range(50_000)])
    assert samples.var(axis=0).mean() == pytest.approx(noise_power, rel=0.02)


def test_reception_rejects_negative_power():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError, match="nonnegative"):
        simulate_reception(rng, np.eye(2), np.array([1.0, -0.1]),
                           np.ones(2, dtype=complex), 0.0)


def test_reception_alpha_scaling():
    rng = np.random.default_rng(4)
    x = np.ones(2, dtype=complex)
    y = simulate_reception(rng, np.eye(2), np.ones(2), x, 0.0, alpha=2j)
    assert np.allclose(y, 2j * x)


def test_phase_stack_save_load_round_trip(tmp_path, desk_system):
    stack = random_stack(desk_system, 23, alpha=0.3 - 1.2j)
    path = tmp_path / "stack.txt"
    stack.save_text(path)
    loaded = PhaseStack.load_text(path)
    assert np.array_equal(loaded.theta, stack.theta)
    assert np.array_equal(loaded.xi, stack.xi)
    assert loaded.alpha == stack.alpha
    assert loaded.tied == stack.tied


def test_assemble_shape_mismatch(desk_system, desk_prop):
    other = SystemConfig(streams_per_pol=2, tx_layers=3, rx_layers=2,
                         tx_units_per_layer=16, rx_units_per_layer=16)
    stack = PhaseStack.random(np.random.default_rng(0), other)
    with pytest.raises(StackShapeError, match="phase layers"):
        assemble_tx(stack, desk_prop)
