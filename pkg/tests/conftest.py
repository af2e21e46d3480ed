import numpy as np
import pytest
from hypothesis import strategies as st

from depth_ntk.netarch import ActivationSpec, Network, NetworkConfig, init_network, stable_pertinent_network


def linear_1d(w=0.5):
    """d = n_o = 1, K = hbar = 1, identity activation, no scaling: f(x) = (x + w x) / sqrt(2)."""
    cfg = NetworkConfig(1, 1, 1, 1, (1,), ActivationSpec("identity"))
    return Network(cfg, (np.array([[w]]),))


@pytest.fixture
def lin_net():
    return linear_1d()


def random_net(seed, K=2, hbar=2, width=4, d=3, n_o=2, kind="tanh", alpha=0.0, scaling=True, bias=True, stable=False):
    rng = np.random.default_rng(seed)
    widths = tuple(int(w) for w in rng.integers(1, width + 1, size=K * hbar))
    cfg = NetworkConfig(d, n_o, hbar, K, widths, ActivationSpec(kind, alpha), apply_layer_scaling=scaling,
                        use_bias=bias, bias_std=0.3 if bias else 0.0)
    if stable:
        return stable_pertinent_network(cfg, seed)
    return init_network(cfg, seed)


@st.composite
def small_nets(draw, kinds=("tanh", "leaky_relu", "sigmoid")):
    seed = draw(st.integers(0, 2**32 - 1))
    kind = draw(st.sampled_from(kinds))
    return random_net(
        seed,
        K=draw(st.integers(1, 3)),
        hbar=draw(st.integers(1, 3)),
        width=draw(st.integers(1, 5)),
        d=draw(st.integers(1, 4)),
        n_o=draw(st.integers(1, 3)),
        kind=kind,
        alpha=0.1 if kind == "leaky_relu" else 0.0,
        scaling=draw(st.booleans()),
        bias=draw(st.booleans()),
    )


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
