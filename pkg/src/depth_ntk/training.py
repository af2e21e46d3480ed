"""Plain gradient descent on squared loss and the NTK_(d) drift tracker."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, NumericOverflowError
from .netarch import Network, forward_batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def with_seed(self, seed: int) -> "TrainConfig":
        return dataclasses.replace(self, seed=seed)


def loss(net: Network, X: np.ndarray, Y: np.ndarray) -> float:
    """Mean over samples of ||f(x) - y||^2."""
    out = forward_batch(net, X).output
    with np.errstate(over="ignore"):  # callers turn an inf loss into DivergenceError
        return float(np.mean(np.sum((out - Y) ** 2, axis=1)))


def loss_and_gradients(net: Network, X: np.ndarray, Y: np.ndarray):
    """Loss plus gradients w.r.t. every W^l (and b^l when present), by backpropagation.

    Returns ``(loss, grad_W, grad_b)`` where ``grad_b`` is None for bias-free nets.
    """
    cfg = net.config
    bt = forward_batch(net, X)
    B = X.shape[0]
    resid = bt.output - Y
    value = float(np.mean(np.sum(resid**2, axis=1)))
    # every shortcut layer receives the same per-sample signal through J^T
    g_read = (2.0 / B) * resid.sum(axis=1, keepdims=True) / np.sqrt(net.M_z)
    shortcut = set(cfg.shortcut_layers)
    grad_W = [None] * cfg.depth
    grad_b = [None] * cfg.depth if net.biases is not None else None
    g = np.broadcast_to(g_read, bt.z[cfg.depth].shape)
    for l in range(cfg.depth, 0, -1):
        ga = g * bt.d_diag[l - 1]
        grad_W[l - 1] = (ga.T @ bt.z[l - 1]) * net.layer_scale(l)
        if grad_b is not None:
            grad_b[l - 1] = ga.sum(axis=0)
        g = ga @ net.scaled_weight(l)
        if (l - 1) in shortcut:
            g = g + g_read
    return value, grad_W, grad_b


def sgd_step(net: Network, X: np.ndarray, Y: np.ndarray, lr: float) -> tuple[Network, float]:
    value, gW, gb = loss_and_gradients(net, X, Y)
    weights = [w - lr * g for w, g in zip(net.weights, gW)]
    biases = [b - lr * g for b, g in zip(net.biases, gb)] if gb is not None else None
    return net.replace(weights=weights, biases=biases), value


@dataclass
class TrainResult:
    network: Network
    losses: list[float]  # losses[0] at initialization, losses[e] after epoch e

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,loss\n")
            for e, v in enumerate(self.losses):
                fh.write(f"{e},{v:.17g}\n")


def train(
    net: Network,
    X: np.ndarray,
    Y: np.ndarray,
    cfg: TrainConfig,
    on_epoch: Callable[[int, Network], None] | None = None,
) -> TrainResult:
    """Shuffled mini-batch gradient descent on the mean squared error.

    The permutation for epoch e is drawn from ``default_rng([cfg.seed, e])``.
    ``on_epoch(e, net)`` is called after epoch e (and with e = 0 before training).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0 or len(X) != len(Y):
        raise ValueError("training data must be non-empty with matching X and Y")
    if Y.ndim != 2 or Y.shape[1] != net.config.output_dim:
        raise ValueError(f"Y must have shape (N, {net.config.output_dim}), got {Y.shape}")

    def full_loss(epoch):
        try:
            value = loss(net, X, Y)
        except NumericOverflowError as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}", epoch) from exc
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch)
        return value

    losses = [full_loss(0)]
    if on_epoch is not None:
        on_epoch(0, net)
    for epoch in range(1, cfg.epochs + 1):
        if cfg.learning_rate > 0:
            perm = np.random.default_rng([cfg.seed, epoch]).permutation(len(X))
            for start in range(0, len(X), cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                try:
                    net, _ = sgd_step(net, X[idx], Y[idx], cfg.learning_rate)
                except NumericOverflowError as exc:
                    raise DivergenceError(f"training diverged at epoch {epoch}: {exc}", epoch) from exc
        losses.append(full_loss(epoch))
        if on_epoch is not None:
            on_epoch(epoch, net)
    return TrainResult(net, losses)


@dataclass
class DriftRecord:
    epoch: int
    probe_pairs: list[tuple[np.ndarray, np.ndarray]]
    values_t0: np.ndarray
    values_t: np.ndarray

    @property
    def drift(self) -> np.ndarray:
        return np.abs(self.values_t - self.values_t0)

    @property
    def mean_drift(self) -> float:
        return float(self.drift.mean())

    @property
    def std_drift(self) -> float:
        return float(self.drift.std())


def probe_traces(net: Network, probes: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """NTK_(d) traces on each probe pair."""
    from .kernels import cross_gram

    A = np.array([p[0] for p in probes], dtype=np.float64)
    B = np.array([p[1] for p in probes], dtype=np.float64)
    # a pairwise diagonal of the cross kernel; probes are few, so the full matrix is cheap
    return np.diag(cross_gram(net, "ntk_d", A, B)).copy()


def track_invariance(
    net0: Network,
    cfg: TrainConfig,
    X: np.ndarray,
    Y: np.ndarray,
    probes: Sequence[tuple[np.ndarray, np.ndarray]],
    checkpoints: Sequence[int],
) -> list[DriftRecord]:
    if len(probes) == 0:
        raise ValueError("probes must be non-empty")
    checkpoints = sorted(set(int(c) for c in checkpoints))
    probes = list(probes)
    v0 = probe_traces(net0, probes)
    records: list[DriftRecord] = []

    def snapshot(epoch, net):
        if epoch in checkpoints:
            vt = v0.copy() if epoch == 0 else probe_traces(net, probes)
            records.append(DriftRecord(epoch, probes, v0, vt))

    train(net0, X, Y, dataclasses.replace(cfg, epochs=max(checkpoints + [0])), on_epoch=snapshot)
    return records
