"""Shortcut-connected deep networks and their depth-induced tangent kernel NTK_(d)."""
from .netarch import ActivationSpec, Network, NetworkConfig, forward, forward_batch, init_network, stable_pertinent_network
from .kernels import cross_gram, gram, ntk_d_definition, ntk_d_expanded, ntk_w
from .regression import classify, gp_regress
from .training import TrainConfig, track_invariance, train

__all__ = [
    "ActivationSpec", "Network", "NetworkConfig", "forward", "forward_batch", "init_network",
    "stable_pertinent_network", "cross_gram", "gram", "ntk_d_definition", "ntk_d_expanded", "ntk_w",
    "classify", "gp_regress", "TrainConfig", "track_invariance", "train",
]
