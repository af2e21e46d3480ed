"""Slow reference computations for the test suite.

Nothing here touches the backward passes in ``kernels`` or ``training``:
derivatives come from central differences of ``netarch.forward`` and the
block-diagonal rescaling is built literally with ``scipy.linalg.block_diag``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import OracleRefusal
from .netarch import Network, forward

MAX_ORACLE_PARAMS = 10_000


@dataclass(frozen=True, eq=False)
class JacobianBlock:
    layer: int
    matrix: np.ndarray  # (n_{l-1} * n_l, n_o), row j * n_l + p


def _perturbed(net: Network, layer: int, p: int, j: int, delta: float) -> Network:
    weights = list(net.weights)
    w = weights[layer - 1].copy()
    w[p, j] += delta
    weights[layer - 1] = w
    return net.replace(weights=weights)


def fd_jacobian(net: Network, x: np.ndarray, layer: int, h: float = 1e-4) -> JacobianBlock:
    if h <= 0:
        raise ValueError("h must be positive")
    n_l, n_prev = net.weights[layer - 1].shape
    out = np.empty((n_prev * n_l, net.config.output_dim))
    for j in range(n_prev):
        for p in range(n_l):
            fp = forward(_perturbed(net, layer, p, j, h), x).output
            fm = forward(_perturbed(net, layer, p, j, -h), x).output
            out[j * n_l + p] = (fp - fm) / (2 * h)
    return JacobianBlock(layer, out)


def fd_gradient(func, arrays, h: float = 1e-4) -> list[np.ndarray]:
    """Central-difference gradient of scalar ``func(arrays)`` w.r.t. each array in the list."""
    grads = []
    for k, a in enumerate(arrays):
        g = np.empty_like(a, dtype=np.float64)
        for idx in np.ndindex(a.shape):
            plus = [b.copy() for b in arrays]
            minus = [b.copy() for b in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            g[idx] = (func(plus) - func(minus)) / (2 * h)
        grads.append(g)
    return grads


def brute_ntk_d(net: Network, x: np.ndarray, xp: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """NTK_(d) block from finite-difference Jacobians of the shortcut layers."""
    if net.n_parameters > MAX_ORACLE_PARAMS:
        raise OracleRefusal(f"network has {net.n_parameters} parameters; oracle limit is {MAX_ORACLE_PARAMS}")
    n_o = net.config.output_dim
    block = np.zeros((n_o, n_o))
    for kp in range(1, net.config.K + 1):
        l = kp * net.config.hbar
        W = net.weights[l - 1]
        scale = scipy.linalg.block_diag(*([W.T] * W.shape[1]))
        a = scale @ fd_jacobian(net, x, l, h).matrix
        b = scale @ fd_jacobian(net, xp, l, h).matrix
        block += a.T @ b
    return block


def hermite_e(r: int, x: np.ndarray) -> np.ndarray:
    """Probabilists' Hermite polynomial He_r by the three-term recurrence."""
    prev, cur = np.ones_like(x), x
    if r == 0:
        return prev
    for k in range(1, r):
        prev, cur = cur, x * cur - k * prev
    return cur


def hermite_quadrature(r: int, alpha: float, nodes: int = 128) -> float:
    """E[phi(g) He_r(g)] / sqrt(r!) for leaky ReLU phi, g ~ N(0, 1).

    phi(g) = (1 + alpha)/2 * g + (1 - alpha)/2 * |g|. The linear part uses
    Gauss-Hermite nodes. The kink sits in the |g| part, which becomes a
    polynomial times exp(-s) under s = g^2 / 2 and is integrated with
    Gauss-Laguerre nodes (plain Gauss-Hermite only converges like 1/nodes there).
    """
    if nodes < 64:
        raise ValueError("nodes must be >= 64")
    t, w = np.polynomial.hermite_e.hermegauss(nodes)
    linear = np.sum(w * t * hermite_e(r, t)) / math.sqrt(2 * math.pi)
    s, v = np.polynomial.laguerre.laggauss(nodes)
    y = np.sqrt(2 * s)
    # E|g| He_r(g) = (1/sqrt(2 pi)) * int_0^inf (He_r(y) + He_r(-y)) exp(-s) ds
    absolute = np.sum(v * (hermite_e(r, y) + hermite_e(r, -y))) / math.sqrt(2 * math.pi)
    value = 0.5 * (1 + alpha) * linear + 0.5 * (1 - alpha) * absolute
    return float(value / math.sqrt(math.factorial(r)))
