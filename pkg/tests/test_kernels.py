import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depth_ntk.errors import DegenerateKernelError
from depth_ntk.kernels import (
    GramMatrix, angle_stats, compute_delta, cross_gram, gram, ntk_d_definition, ntk_d_expanded, ntk_w,
)
from depth_ntk.netarch import ActivationSpec, NetworkConfig, forward, init_network
from depth_ntk.spectrum import largest_singular_value, smallest_eigenvalue
from conftest import linear_1d, random_net, rel_err, small_nets


def _pair(net, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=net.config.input_dim), rng.normal(size=net.config.input_dim)


def test_linear_1d_delta():
    net = linear_1d(0.7)
    assert compute_delta(net, forward(net, np.array([1.0])), 1).value == pytest.approx(np.array([[0.7]]))


def test_delta_index_out_of_range():
    net = linear_1d()
    with pytest.raises(IndexError):
        compute_delta(net, forward(net, np.array([1.0])), 2)


def test_linear_1d_kernels():
    net = linear_1d(0.5)
    x, xp = np.array([1.0]), np.array([2.0])
    assert ntk_d_expanded(net, forward(net, x), forward(net, xp)).trace == pytest.approx(0.25)
    assert ntk_d_definition(net, x, xp).trace == pytest.approx(0.25)
    assert ntk_w(net, x, xp).trace == pytest.approx(1.0)  # x x' / 2


def test_zero_weights_kill_ntk_d_but_not_ntk_w():
    cfg = NetworkConfig.uniform(3, 2, 4, K=2, hbar=2, weight_std=0.0)
    net = init_network(cfg, 0)
    x, xp = np.ones(3), np.arange(3.0)
    assert not ntk_d_definition(net, x, xp).block.any()
    assert not ntk_d_expanded(net, forward(net, x), forward(net, xp)).block.any()
    for kp in (1, 2):
        assert not compute_delta(net, forward(net, x), kp).value.any()
    # with hbar = 1 every layer feeds the readout, so the first-layer gradient x (x) 1 / sqrt(M_z) survives
    lin = init_network(NetworkConfig.uniform(3, 2, 4, K=2, hbar=1, weight_std=0.0, activation=ActivationSpec("identity")), 0)
    assert ntk_w(lin, x, x).trace > 0


@given(small_nets(), st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_definition_matches_expanded(net, seed):
    x, xp = _pair(net, seed)
    a = ntk_d_definition(net, x, xp).block
    b = ntk_d_expanded(net, forward(net, x), forward(net, xp)).block
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12 * max(np.abs(b).max(), 1.0))


@given(small_nets(), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_trace_symmetry(net, seed):
    x, xp = _pair(net, seed)
    tx, txp = forward(net, x), forward(net, xp)
    assert ntk_d_expanded(net, tx, txp).trace == pytest.approx(ntk_d_expanded(net, txp, tx).trace, rel=1e-12, abs=1e-15)
    assert ntk_w(net, x, xp).trace == pytest.approx(ntk_w(net, xp, x).trace, rel=1e-12, abs=1e-15)


@given(small_nets(), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_self_block_is_symmetric_psd(net, seed):
    x, _ = _pair(net, seed)
    for block in (ntk_d_expanded(net, forward(net, x), forward(net, x)).block, ntk_w(net, x, x).block):
        np.testing.assert_allclose(block, block.T, atol=1e-12 * max(np.abs(block).max(), 1.0))
        assert np.linalg.eigvalsh(block).min() >= -1e-10 * max(np.abs(block).max(), 1.0)


@pytest.mark.parametrize("kind", ["ntk_w", "ntk_d"])
@given(net=small_nets(), seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_gram_entries_match_pairwise(kind, net, seed):
    X = np.random.default_rng(seed).normal(size=(4, net.config.input_dim))
    g = gram(net, kind, X).entries
    for i in range(4):
        for j in range(4):
            if kind == "ntk_d":
                ref = ntk_d_expanded(net, forward(net, X[i]), forward(net, X[j])).trace
            else:
                ref = ntk_w(net, X[i], X[j]).trace
            assert g[i, j] == pytest.approx(ref, rel=1e-9, abs=1e-13)
    np.testing.assert_allclose(cross_gram(net, kind, X, X), g, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("kind", ["ntk_w", "ntk_d"])
@given(net=small_nets(), seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_gram_is_psd(kind, net, seed):
    X = np.random.default_rng(seed).normal(size=(5, net.config.input_dim))
    g = gram(net, kind, X).entries
    assert smallest_eigenvalue(g) >= -1e-8 * max(np.diag(g).max(), 1e-300)


def test_gram_single_sample_and_duplicates():
    net = random_net(3)
    x = np.array([[0.3, -0.2, 0.9]])
    g = gram(net, "ntk_d", x).entries
    assert g.shape == (1, 1) and g[0, 0] >= 0
    X = np.vstack([x, x, [[1.0, 0.0, 0.0]]])
    g = gram(net, "ntk_d", X).entries
    np.testing.assert_array_equal(g[0], g[1])


def test_gram_csv_round_trip(tmp_path):
    g = gram(random_net(1), "ntk_w", np.random.default_rng(0).normal(size=(3, 3)))
    g.to_csv(tmp_path / "g.csv")
    assert np.array_equal(GramMatrix.from_csv(tmp_path / "g.csv").entries, g.entries)


def test_angle_examples():
    st_dup = angle_stats(np.array([[2.0, 2.0], [2.0, 2.0]]), 4)
    assert st_dup.angles[0] == pytest.approx(0.0)
    st_orth = angle_stats(np.eye(2), 4)
    assert st_orth.angles[0] == pytest.approx(np.pi / 2)
    assert st_orth.counts.sum() == 1
    with pytest.raises(DegenerateKernelError):
        angle_stats(np.diag([1.0, 0.0]), 4)


def stroke_images(n, seed, side=14):
    """Sparse digit-like images: a few class-dependent bars on a black background."""
    rng = np.random.default_rng(seed)
    imgs = np.zeros((n, side, side))
    for img in imgs:
        label = rng.integers(10)
        for _ in range(3):
            r = (label + rng.integers(-2, 3)) % side
            c0 = rng.integers(0, side - 5)
            img[r, c0:c0 + 5] = rng.uniform(0.5, 1.0)
            img[c0:c0 + 5, (2 * label) % side] = 1.0
    return imgs.reshape(n, -1)


def test_ntk_d_angles_on_sparse_images_mostly_above_quarter_pi_at_init():
    cfg = NetworkConfig.uniform(196, 10, 20, K=25, hbar=2, use_bias=True, weight_std=0.4, bias_std=0.2, width_divisor="linear")
    net = init_network(cfg, 0)
    assert angle_stats(gram(net, "ntk_d", stroke_images(40, 0)), 18).fraction_above_quarter_pi > 0.5


@pytest.mark.parametrize("kind", ["tanh", "sigmoid"])
def test_delta_singular_value_bound(kind):
    for seed in range(10):
        net = random_net(seed, K=4, hbar=2, width=6, kind=kind, stable=True)
        tr = forward(net, np.random.default_rng(seed).uniform(-1, 1, 3))
        n_max = net.config.n_max
        for kp in range(1, 5):
            sigma = largest_singular_value(compute_delta(net, tr, kp).value)
            assert sigma <= (net.config.K + 1 - kp) * n_max
