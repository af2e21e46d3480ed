"""Print the three NTK_(d) routes side by side on one random stable-pertinent network.

    python3 scripts/kernel_check.py [--seed S] [--K 3] [--hbar 2] [--width 6]
"""
import argparse

import numpy as np

from depth_ntk.kernels import forward, ntk_d_definition, ntk_d_expanded, ntk_w
from depth_ntk.netarch import ActivationSpec, NetworkConfig, stable_pertinent_network
from depth_ntk.oracle import brute_ntk_d
from depth_ntk.spectrum import check_theorem3

parser = argparse.ArgumentParser()
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--K", type=int, default=3)
parser.add_argument("--hbar", type=int, default=2)
parser.add_argument("--width", type=int, default=6)
args = parser.parse_args()

cfg = NetworkConfig.uniform(3, 2, args.width, args.K, args.hbar, activation=ActivationSpec("tanh"), apply_layer_scaling=True)
net = stable_pertinent_network(cfg, args.seed)
rng = np.random.default_rng(args.seed)
x, xp = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)

np.set_printoptions(precision=10, suppress=False)
print("expanded  :\n", ntk_d_expanded(net, forward(net, x), forward(net, xp)).block)
print("definition:\n", ntk_d_definition(net, x, xp).block)
print("brute FD  :\n", brute_ntk_d(net, x, xp))
print("NTK_(w) trace:", ntk_w(net, x, xp).trace)
chk = check_theorem3(net, x, xp)
print(f"sigma_max {chk.sigma_max:.4g} <= bound {chk.bound:.4g}: {chk.holds}")
