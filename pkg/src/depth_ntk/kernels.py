"""Width- and depth-induced tangent kernels of the shortcut network.

Gradients with respect to ``W^l`` use one fixed layout throughout: a matrix of
shape ``(n_{l-1} * n_l, n_o)`` whose row ``j * n_l + p`` holds
``d f / d W^l[p, j]``, i.e. the vertical stack over the input-neuron index j of
``n_l x n_o`` blocks. Matrix inner products are ``<A, B> = A.T @ B``.

Biases never enter any kernel.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ContractViolation, DegenerateKernelError, NumericError
from .netarch import BatchTrace, ForwardTrace, Network, forward, forward_batch

KernelKind = Literal["ntk_w", "ntk_d"]


@dataclass(frozen=True, eq=False)
class KernelValue:
    block: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.block))


@dataclass(frozen=True, eq=False)
class DeltaMatrix:
    kappa_prime: int
    value: np.ndarray


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.entries:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GramMatrix":
        rows = [
            [float(v) for v in line.split(",")]
            for line in Path(path).read_text().splitlines()
            if line.strip()
        ]
        return cls(np.array(rows, dtype=np.float64))


def _check_trace(net: Network, trace) -> None:
    sizes = net.config.layer_sizes
    if len(trace.z) != len(sizes) or any(z.shape[-1] != n for z, n in zip(trace.z, sizes)):
        raise ContractViolation("trace was not produced by this network")


def output_sensitivities(net: Network, bt: BatchTrace) -> list[np.ndarray]:
    """Backward pass of the readout.

    Returns ``G`` with ``G[l]`` of shape (N, n_l, n_o) equal to
    ``sqrt(M_z) * d f / d z^l`` (denominator layout), summed over every path
    to the output, for l = 0..L.
    """
    cfg = net.config
    N, n_o = len(bt), cfg.output_dim
    shortcut = set(cfg.shortcut_layers)
    sizes = cfg.layer_sizes
    G: list[np.ndarray | None] = [None] * (cfg.depth + 1)
    g = np.ones((N, sizes[cfg.depth], n_o))
    G[cfg.depth] = g
    for l in range(cfg.depth, 0, -1):
        # z^{l-1} feeds a^l = W-hat^l z^{l-1}; pull back through D^l then W-hat^l.
        g = net.scaled_weight(l).T @ (bt.d_diag[l - 1][:, :, None] * g)
        if (l - 1) in shortcut:
            g = g + 1.0
        G[l - 1] = g
    return G


def batch_deltas(net: Network, bt: BatchTrace, G: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
    """Delta^{k' hbar} for k' = 1..K, each of shape (N, n_{k' hbar - 1}, n_o)."""
    if G is None:
        G = output_sensitivities(net, bt)
    h = net.config.hbar
    out = []
    for kp in range(1, net.config.K + 1):
        l = kp * h
        out.append(net.scaled_weight(l).T @ (bt.d_diag[l - 1][:, :, None] * G[l]))
    return out


def _as_batch(trace: ForwardTrace) -> BatchTrace:
    return BatchTrace(
        tuple(z[None] for z in trace.z),
        tuple(d[None] for d in trace.d_diag),
        trace.output[None],
    )


def compute_delta(net: Network, trace: ForwardTrace, kappa_prime: int) -> DeltaMatrix:
    if not 1 <= kappa_prime <= net.config.K:
        raise IndexError(f"kappa_prime must lie in 1..{net.config.K}, got {kappa_prime}")
    _check_trace(net, trace)
    deltas = batch_deltas(net, _as_batch(trace))
    return DeltaMatrix(kappa_prime, deltas[kappa_prime - 1][0])


def ntk_d_expanded(net: Network, trace_x: ForwardTrace, trace_xp: ForwardTrace) -> KernelValue:
    """Sum over k' of (1/M_z) <z^{k'h-1}(x), z^{k'h-1}(x')> Delta(x).T Delta(x')."""
    _check_trace(net, trace_x)
    _check_trace(net, trace_xp)
    dx = batch_deltas(net, _as_batch(trace_x))
    dxp = batch_deltas(net, _as_batch(trace_xp))
    h = net.config.hbar
    n_o = net.config.output_dim
    block = np.zeros((n_o, n_o))
    for kp in range(1, net.config.K + 1):
        zz = float(trace_x.z[kp * h - 1] @ trace_xp.z[kp * h - 1])
        block += zz * (dx[kp - 1][0].T @ dxp[kp - 1][0])
    return KernelValue(block / net.M_z)


def weight_gradients(net: Network, trace: ForwardTrace, layers: Sequence[int] | None = None) -> dict[int, np.ndarray]:
    """Reverse-mode d f / d W^l in the stacked layout, keyed by layer."""
    _check_trace(net, trace)
    bt = _as_batch(trace)
    G = output_sensitivities(net, bt)
    layers = range(1, net.config.depth + 1) if layers is None else layers
    grads = {}
    for l in layers:
        # d f / d a^l, shape (n_l, n_o)
        da = trace.d_diag[l - 1][:, None] * G[l][0] / np.sqrt(net.M_z)
        grads[l] = np.kron(trace.z[l - 1][:, None], da) * net.layer_scale(l)
    return grads


def _block_diag_wt(W: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """Apply the block-diagonal matrix with n_{l-1} copies of W.T to a stacked gradient."""
    n_l, n_prev = W.shape
    blocks = stacked.reshape(n_prev, n_l, -1)
    return np.matmul(W.T, blocks).reshape(n_prev * n_prev, -1)


def ntk_d_definition(net: Network, x: np.ndarray, xp: np.ndarray) -> KernelValue:
    """Depth-induced kernel from block-diagonally rescaled shortcut-layer gradients."""
    h = net.config.hbar
    layers = [kp * h for kp in range(1, net.config.K + 1)]
    gx = weight_gradients(net, forward(net, x), layers)
    gxp = weight_gradients(net, forward(net, xp), layers)
    n_o = net.config.output_dim
    block = np.zeros((n_o, n_o))
    for l in layers:
        W = net.weights[l - 1]
        block += _block_diag_wt(W, gx[l]).T @ _block_diag_wt(W, gxp[l])
    return KernelValue(block)


def ntk_w(net: Network, x: np.ndarray, xp: np.ndarray) -> KernelValue:
    """Width-induced kernel: sum over all layers of gradient inner products."""
    gx = weight_gradients(net, forward(net, x))
    gxp = weight_gradients(net, forward(net, xp))
    n_o = net.config.output_dim
    block = np.zeros((n_o, n_o))
    for l in gx:
        block += gx[l].T @ gxp[l]
    return KernelValue(block)


def _mirror_upper(m: np.ndarray) -> np.ndarray:
    upper = np.triu(m)
    return upper + np.triu(m, 1).T


def gram_from_trace(net: Network, kernel: KernelKind, bt: BatchTrace) -> GramMatrix:
    """Trace-kernel Gram matrix from a precomputed batch trace.

    Both kernels factor per layer into a Hadamard product of an input Gram
    and a sensitivity Gram, so the whole matrix costs a few GEMMs per layer.
    """
    _check_trace(net, bt)
    N = len(bt)
    G = output_sensitivities(net, bt)
    acc = np.zeros((N, N))
    if kernel == "ntk_d":
        h = net.config.hbar
        for kp, delta in enumerate(batch_deltas(net, bt, G), start=1):
            z = bt.z[kp * h - 1]
            flat = delta.reshape(N, -1)
            acc += (z @ z.T) * (flat @ flat.T)
        acc /= net.M_z
    elif kernel == "ntk_w":
        for l in range(1, net.config.depth + 1):
            z = bt.z[l - 1]
            e = (bt.d_diag[l - 1][:, :, None] * G[l]).reshape(N, -1)
            acc += (z @ z.T) * (e @ e.T) * net.layer_scale(l) ** 2
        acc /= net.M_z
    else:
        raise ValueError(f"unknown kernel kind {kernel!r}")
    acc = _mirror_upper(acc)
    bad = np.argwhere(~np.isfinite(acc))
    if bad.size:
        i, j = bad[0]
        raise NumericError(f"non-finite {kernel} value for pair ({i}, {j})")
    return GramMatrix(acc)


def gram(net: Network, kernel: KernelKind, X: np.ndarray) -> GramMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty (N, d) array")
    return gram_from_trace(net, kernel, forward_batch(net, X))


def cross_gram(net: Network, kernel: KernelKind, X: np.ndarray, Xp: np.ndarray) -> np.ndarray:
    """Rectangular trace-kernel matrix K(X, X'), rows indexed by X."""
    bt, btp = forward_batch(net, X), forward_batch(net, Xp)
    G, Gp = output_sensitivities(net, bt), output_sensitivities(net, btp)
    N, Np = len(bt), len(btp)
    acc = np.zeros((N, Np))
    if kernel == "ntk_d":
        h = net.config.hbar
        for kp, (da, db) in enumerate(zip(batch_deltas(net, bt, G), batch_deltas(net, btp, Gp)), start=1):
            za, zb = bt.z[kp * h - 1], btp.z[kp * h - 1]
            acc += (za @ zb.T) * (da.reshape(N, -1) @ db.reshape(Np, -1).T)
    elif kernel == "ntk_w":
        for l in range(1, net.config.depth + 1):
            ea = (bt.d_diag[l - 1][:, :, None] * G[l]).reshape(N, -1)
            eb = (btp.d_diag[l - 1][:, :, None] * Gp[l]).reshape(Np, -1)
            acc += (bt.z[l - 1] @ btp.z[l - 1].T) * (ea @ eb.T) * net.layer_scale(l) ** 2
    else:
        raise ValueError(f"unknown kernel kind {kernel!r}")
    acc /= net.M_z
    if not np.all(np.isfinite(acc)):
        raise NumericError(f"non-finite {kernel} cross-kernel value")
    return acc


@dataclass(frozen=True, eq=False)
class AngleStats:
    angles: np.ndarray
    counts: np.ndarray
    edges: np.ndarray

    @property
    def fraction_above_quarter_pi(self) -> float:
        return float(np.mean(self.angles >= np.pi / 4)) if self.angles.size else float("nan")


def angle_stats(g: GramMatrix | np.ndarray, bins: int) -> AngleStats:
    m = g.entries if isinstance(g, GramMatrix) else np.asarray(g)
    if bins < 1:
        raise ValueError("bins must be positive")
    diag = np.diag(m)
    if np.any(diag <= 0):
        raise DegenerateKernelError(f"non-positive self-kernel at index {int(np.argmin(diag))}")
    iu = np.triu_indices(m.shape[0], 1)
    cos = m[iu] / np.sqrt(diag[iu[0]] * diag[iu[1]])
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    counts, edges = np.histogram(angles, bins=bins, range=(0.0, np.pi / 2))
    return AngleStats(angles, counts, edges)
