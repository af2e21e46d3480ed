"""Shortcut-related network: configuration, initialization and forward pass.

Layers are numbered 1..L as in the usual math notation; ``net.weights[l - 1]``
holds ``W^l`` with shape ``(n_l, n_{l-1})``. Layer 0 is the input. The output
is the rescaled sum of the all-ones readouts of layers ``0, hbar, ..., K*hbar``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericOverflowError, ShapeError

ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "sigmoid")
WIDTH_DIVISORS = ("none", "sqrt", "linear")


@dataclass(frozen=True)
class ActivationSpec:
    kind: str = "relu"
    alpha: float = 0.0  # leaky_relu negative-side slope

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.kind!r}; expected one of {ACTIVATIONS}")
        if self.kind == "leaky_relu" and not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"leaky_relu slope must lie in (0, 1), got {self.alpha}")

    @property
    def derivative_bound(self) -> float:
        return 0.25 if self.kind == "sigmoid" else 1.0

    @property
    def zero_convention(self) -> float | None:
        """Derivative assigned at 0 for the piecewise-linear kinds (negative-side slope)."""
        if self.kind == "relu":
            return 0.0
        if self.kind == "leaky_relu":
            return self.alpha
        return None

    @property
    def slope_range(self) -> tuple[float, float]:
        return {
            "identity": (1.0, 1.0),
            "relu": (0.0, 1.0),
            "leaky_relu": (self.alpha, 1.0),
            "tanh": (0.0, 1.0),
            "sigmoid": (0.0, 0.25),
        }[self.kind]

    @property
    def bounded(self) -> bool:
        """True when |phi| <= 1 everywhere."""
        return self.kind in ("tanh", "sigmoid")

    def __call__(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return a.copy()
        if self.kind == "relu":
            return np.maximum(a, 0.0)
        if self.kind == "leaky_relu":
            return np.where(a > 0, a, self.alpha * a)
        if self.kind == "tanh":
            return np.tanh(a)
        return 0.5 * (1.0 + np.tanh(0.5 * a))  # overflow-free logistic

    def derivative(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.ones_like(a)
        if self.kind == "relu":
            return np.where(a > 0, 1.0, 0.0)
        if self.kind == "leaky_relu":
            return np.where(a > 0, 1.0, self.alpha)
        if self.kind == "tanh":
            return 1.0 - np.tanh(a) ** 2
        s = 0.5 * (1.0 + np.tanh(0.5 * a))
        return s * (1.0 - s)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and initialization settings.

    ``widths`` lists n_1..n_L and must have exactly ``K * hbar`` entries.
    ``width_divisor`` ("none", "sqrt" or "linear") divides the layer-l
    Gaussian standard deviations by 1, sqrt(n_l) or n_l, so width-dependent
    initializations such as N(0, 0.4 / n_l) stay expressible.
    """

    input_dim: int
    output_dim: int
    hbar: int
    K: int
    widths: tuple[int, ...]
    activation: ActivationSpec = field(default_factory=ActivationSpec)
    apply_layer_scaling: bool = False
    weight_std: float = 1.0
    bias_std: float = 0.0
    use_bias: bool = False
    width_divisor: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        self.validate()

    def validate(self) -> None:
        for name in ("input_dim", "output_dim", "hbar", "K"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if len(self.widths) == 0:
            raise ConfigurationError("widths is empty")
        if len(self.widths) != self.K * self.hbar:
            raise ConfigurationError(
                f"need L = K*hbar = {self.K * self.hbar} widths, got {len(self.widths)}"
            )
        if any(w < 1 for w in self.widths):
            raise ConfigurationError(f"all widths must be positive, got {self.widths}")
        if self.weight_std < 0 or self.bias_std < 0:
            raise ConfigurationError("weight_std and bias_std must be non-negative")
        if self.width_divisor not in WIDTH_DIVISORS:
            raise ConfigurationError(f"width_divisor must be one of {WIDTH_DIVISORS}, got {self.width_divisor!r}")

    @classmethod
    def uniform(cls, input_dim: int, output_dim: int, width: int, K: int, hbar: int, **kwargs) -> "NetworkConfig":
        return cls(input_dim, output_dim, hbar, K, (width,) * (K * hbar), **kwargs)

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """n_0..n_L."""
        return (self.input_dim,) + self.widths

    @property
    def shortcut_layers(self) -> tuple[int, ...]:
        return tuple(k * self.hbar for k in range(self.K + 1))

    @property
    def M_z(self) -> int:
        sizes = self.layer_sizes
        return sum(sizes[l] for l in self.shortcut_layers)

    @property
    def n_max(self) -> int:
        return max(self.layer_sizes + (self.output_dim,))

    def with_input_dim(self, d: int) -> "NetworkConfig":
        return dataclasses.replace(self, input_dim=d)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    config: NetworkConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        cfg = self.config
        sizes = cfg.layer_sizes
        if len(self.weights) != cfg.depth:
            raise ShapeError(f"expected {cfg.depth} weight matrices, got {len(self.weights)}")
        object.__setattr__(self, "weights", tuple(_frozen(w) for w in self.weights))
        for l, w in enumerate(self.weights, start=1):
            if w.shape != (sizes[l], sizes[l - 1]):
                raise ShapeError(f"W^{l} has shape {w.shape}, expected {(sizes[l], sizes[l - 1])}")
        if self.biases is not None:
            object.__setattr__(self, "biases", tuple(_frozen(b) for b in self.biases))
            if len(self.biases) != cfg.depth:
                raise ShapeError(f"expected {cfg.depth} bias vectors, got {len(self.biases)}")
            for l, b in enumerate(self.biases, start=1):
                if b.shape != (sizes[l],):
                    raise ShapeError(f"b^{l} has shape {b.shape}, expected {(sizes[l],)}")
        if cfg.M_z <= 0:
            raise ConfigurationError("M_z must be positive")

    @property
    def M_z(self) -> int:
        return self.config.M_z

    def layer_scale(self, l: int) -> float:
        """Factor applied to W^l in the forward pass (1/sqrt(n_l) or 1)."""
        if self.config.apply_layer_scaling:
            return 1.0 / np.sqrt(self.config.layer_sizes[l])
        return 1.0

    def scaled_weight(self, l: int) -> np.ndarray:
        """W-hat^l."""
        return self.weights[l - 1] * self.layer_scale(l)

    def replace(self, weights=None, biases=None) -> "Network":
        return Network(
            self.config,
            tuple(weights) if weights is not None else self.weights,
            tuple(biases) if biases is not None else self.biases,
        )

    @property
    def n_parameters(self) -> int:
        n = sum(w.size for w in self.weights)
        if self.biases is not None:
            n += sum(b.size for b in self.biases)
        return n


def init_network(config: NetworkConfig, seed: int) -> Network:
    config.validate()
    rng = np.random.default_rng(seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for l in range(1, config.depth + 1):
        shrink = {"none": 1.0, "sqrt": 1.0 / np.sqrt(sizes[l]), "linear": 1.0 / sizes[l]}[config.width_divisor]
        weights.append(rng.normal(0.0, config.weight_std * shrink, size=(sizes[l], sizes[l - 1])))
        if config.use_bias:
            biases.append(rng.normal(0.0, config.bias_std * shrink, size=sizes[l]))
    return Network(config, tuple(weights), tuple(biases) if config.use_bias else None)


@dataclass(frozen=True, eq=False)
class BatchTrace:
    """Forward quantities for a batch of inputs, one row per sample.

    ``z[l]`` has shape (N, n_l) for l = 0..L; ``d_diag[l - 1]`` has shape
    (N, n_l) and holds the activation derivative at layer l.
    """

    z: tuple[np.ndarray, ...]
    d_diag: tuple[np.ndarray, ...]
    output: np.ndarray

    def __len__(self) -> int:
        return self.output.shape[0]

    def row(self, i: int) -> "ForwardTrace":
        return ForwardTrace(
            x=self.z[0][i],
            z=tuple(zl[i] for zl in self.z),
            d_diag=tuple(dl[i] for dl in self.d_diag),
            output=self.output[i],
        )


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    x: np.ndarray
    z: tuple[np.ndarray, ...]
    d_diag: tuple[np.ndarray, ...]
    output: np.ndarray


def readout(net: Network, z: Sequence[np.ndarray]) -> np.ndarray:
    """Shortcut readout (1/sqrt(M_z)) sum_k J z^{k hbar}; works on vectors or (N, n) batches."""
    total = sum(z[l].sum(axis=-1) for l in net.config.shortcut_layers)
    total = np.asarray(total) / np.sqrt(net.M_z)
    return np.repeat(total[..., None], net.config.output_dim, axis=-1)


def forward_batch(net: Network, X: np.ndarray) -> BatchTrace:
    X = np.array(X, dtype=np.float64)
    d = net.config.input_dim
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"inputs must have shape (N, {d}), got {X.shape}")
    act = net.config.activation
    zs, ds = [X], []
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(1, net.config.depth + 1):
            a = zs[-1] @ net.scaled_weight(l).T
            if net.biases is not None:
                a = a + net.biases[l - 1]
            z = act(a)
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(z))):
                raise NumericOverflowError(f"non-finite activation at layer {l}", layer=l)
            zs.append(z)
            ds.append(act.derivative(a))
    out = readout(net, zs)
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("non-finite network output", layer=net.config.depth)
    for arr in zs + ds:
        arr.setflags(write=False)
    return BatchTrace(tuple(zs), tuple(ds), out)


def forward(net: Network, x: np.ndarray) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.config.input_dim:
        raise ShapeError(f"input must have shape ({net.config.input_dim},), got {x.shape}")
    return forward_batch(net, x[None, :]).row(0)


def is_stable_pertinent(net: Network, epsilon: float) -> list[bool]:
    """Per layer: C_phi * sigma_max(W-hat^l) <= epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    from .spectrum import spectral_norm

    c_phi = net.config.activation.derivative_bound
    return [
        bool(c_phi * spectral_norm(net.scaled_weight(l)) <= epsilon)
        for l in range(1, net.config.depth + 1)
    ]


def stable_pertinent_network(config: NetworkConfig, seed: int, epsilon: float = 0.9) -> Network:
    """Gaussian init with every W-hat^l rescaled so C_phi * sigma_max(W-hat^l) = epsilon * u, u ~ U(0.5, 1)."""
    from .spectrum import spectral_norm

    net = init_network(config, seed)
    rng = np.random.default_rng([seed, 1])
    c_phi = config.activation.derivative_bound
    weights = []
    for l in range(1, config.depth + 1):
        s = spectral_norm(net.scaled_weight(l))
        target = epsilon * rng.uniform(0.5, 1.0) / c_phi
        weights.append(net.weights[l - 1] * (target / s if s > 0 else 1.0))
    return net.replace(weights=weights)
