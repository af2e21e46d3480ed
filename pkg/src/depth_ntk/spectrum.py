"""Spectral quantities of kernels and weights, and the eigen/singular-value bound checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import ContractViolation, IterationLimitError
from .netarch import Network, NetworkConfig, forward, init_network

DENSE_EIGH_LIMIT = 2048


def smallest_eigenvalue(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(m - m.T).max(initial=0.0) > 1e-10 * scale:
        raise ContractViolation("matrix is not symmetric")
    if m.shape[0] <= DENSE_EIGH_LIMIT:
        return float(scipy.linalg.eigh(m, eigvals_only=True, subset_by_index=[0, 0])[0])
    sym = 0.5 * (m + m.T)
    vals = scipy.sparse.linalg.eigsh(sym, k=1, which="SA", tol=1e-12, v0=np.ones(m.shape[0]))[0]
    return float(vals[0])


def largest_singular_value(m: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """sigma_max by power iteration on m.T m from the normalized all-ones vector."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if not np.any(m):
        return 0.0
    v = np.ones(m.shape[1]) / np.sqrt(m.shape[1])
    mv = m @ v
    if np.linalg.norm(mv) <= 1e-8 * np.linalg.norm(m):
        # all-ones is (numerically) in the null space; start from the largest row instead
        v = m[np.argmax(np.einsum("ij,ij->i", m, m))].copy()
        v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = m.T @ (m @ v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        v = w / nw
        if abs(lam - est) <= tol * abs(lam):
            return math.sqrt(lam)
        est = lam
    raise IterationLimitError(f"power iteration did not converge in {max_iter} steps", math.sqrt(est))


def spectral_norm(m: np.ndarray) -> float:
    """Power-iteration sigma_max with a dense SVD fallback when the top singular values nearly tie."""
    try:
        return largest_singular_value(m)
    except IterationLimitError:
        return float(scipy.linalg.svdvals(np.atleast_2d(np.asarray(m, dtype=np.float64)))[0])


def double_factorial(n: int) -> int:
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def hermite_coefficient(r: int, alpha: float) -> float:
    """Normalized r-th Hermite coefficient of leaky ReLU with slope alpha (r even, r >= 2)."""
    if r < 2 or r % 2:
        raise ValueError(f"r must be an even integer >= 2, got {r}")
    sign = -1.0 if ((r - 2) // 2) % 2 else 1.0
    return (1.0 - alpha) / math.sqrt(2 * math.pi) * sign * double_factorial(r - 3) / math.sqrt(math.factorial(r))


def theorem3_bound(K: int, n_max: int) -> float:
    return K * (2 * K + 1) / 6 * n_max**2


@dataclass
class SpectrumReport:
    lambda_min: float
    sigma_max: float
    theorem3_bound: float
    hermite_r: int
    mu_r: float
    input_dim: int


@dataclass
class Theorem3Check:
    sigma_max: float
    bound: float
    holds: bool
    n_max: int
    precondition_violations: list[str] = field(default_factory=list)

    @property
    def preconditions_met(self) -> bool:
        return not self.precondition_violations


def check_theorem3(net: Network, x: np.ndarray, xp: np.ndarray, epsilon: float = 0.999999) -> Theorem3Check:
    """Compare sigma_max of the full NTK_(d) block with K(2K+1)/6 * n_max^2.

    Precondition failures (unbounded activation, non-stable-pertinent layers,
    inputs outside [-1, 1]) are reported rather than rejected.
    """
    from .kernels import ntk_d_expanded
    from .netarch import is_stable_pertinent

    cfg = net.config
    violations = []
    if not cfg.activation.bounded:
        violations.append(f"activation {cfg.activation.kind} is not bounded by 1")
    unstable = [l + 1 for l, ok in enumerate(is_stable_pertinent(net, epsilon)) if not ok]
    if unstable:
        violations.append(f"layers {unstable} are not stable-pertinent")
    if max(np.abs(x).max(), np.abs(xp).max()) > 1:
        violations.append("input entries exceed 1 in magnitude")
    kv = ntk_d_expanded(net, forward(net, x), forward(net, xp))
    sigma = spectral_norm(kv.block)
    bound = theorem3_bound(cfg.K, cfg.n_max)
    return Theorem3Check(sigma, bound, sigma <= bound, cfg.n_max, violations)


@dataclass
class LinearFit:
    slope: float | None
    intercept: float | None
    pearson_r: float | None

    @property
    def defined(self) -> bool:
        return self.slope is not None


def linear_fit(x, y) -> LinearFit:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.ptp(x) == 0:
        return LinearFit(None, None, None)
    slope, intercept = np.polyfit(x, y, 1)
    r = float(np.corrcoef(x, y)[0, 1]) if np.ptp(y) > 0 else None
    return LinearFit(float(slope), float(intercept), r)


@dataclass
class ScalingTable:
    d_values: list[int]
    lambdas: np.ndarray  # (len(d_values), trials)
    max_diagonals: np.ndarray
    fit: LinearFit

    @property
    def mean(self) -> np.ndarray:
        return self.lambdas.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.lambdas.std(axis=1)

    @property
    def psd_ok(self) -> bool:
        return bool(np.all(self.lambdas >= -1e-8 * self.max_diagonals))

    def rows(self):
        return [(d, float(m), float(s)) for d, m, s in zip(self.d_values, self.mean, self.std)]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("d,mean_lambda_min,std_lambda_min\n")
            for d, m, s in self.rows():
                fh.write(f"{d},{m:.17g},{s:.17g}\n")


def lambda_min_trial(config: NetworkConfig, N: int, seed: int, train_cfg=None, variant: str = "gaussian") -> tuple[float, float]:
    """One trial: sample, optionally train, return (lambda_min, max diagonal) of the NTK_(d) Gram."""
    from .data import gen_wellscaled
    from .kernels import gram
    from .training import train

    data = gen_wellscaled(N, config.input_dim, "standard_normal", variant, seed=seed)
    net = init_network(config, seed)
    if train_cfg is not None and train_cfg.epochs > 0:
        net = train(net, data.X, data.Y, train_cfg.with_seed(seed)).network
    g = gram(net, "ntk_d", data.X).entries
    return smallest_eigenvalue(g), float(np.max(np.diag(g)))


def lambda_min_scaling_experiment(
    d_values,
    N: int,
    trials: int,
    net_template: NetworkConfig,
    seed: int,
    train_cfg=None,
    variant: str = "gaussian",
    jobs: int = 1,
) -> ScalingTable:
    """lambda_min of the NTK_(d) Gram versus input dimension, with a least-squares line through the means.

    Trial t at dimension index i uses seed ``seed + i * trials + t``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d_values = [int(d) for d in d_values]
    tasks = [
        (net_template.with_input_dim(d), N, seed + i * trials + t, train_cfg, variant)
        for i, d in enumerate(d_values)
        for t in range(trials)
    ]
    from .parallel import pmap

    results = pmap(_lambda_min_task, tasks, jobs)
    lam = np.array([r[0] for r in results]).reshape(len(d_values), trials)
    diag = np.array([r[1] for r in results]).reshape(len(d_values), trials)
    fit = linear_fit(d_values, lam.mean(axis=1))
    return ScalingTable(d_values, lam, diag, fit)


def _lambda_min_task(args):
    return lambda_min_trial(*args)


def sigma_max_trial(config: NetworkConfig, seed: int, x=(0.0, 1.0), xp=(1.0, 0.0), train_cfg=None, N: int = 0) -> float:
    """sigma_max of NTK_(d) between two fixed inputs, optionally after training on well-scaled data."""
    from .data import gen_wellscaled
    from .kernels import ntk_d_expanded
    from .training import train

    net = init_network(config, seed)
    if train_cfg is not None and train_cfg.epochs > 0 and N > 0:
        data = gen_wellscaled(N, config.input_dim, "standard_normal", "sphere", seed=seed)
        net = train(net, data.X, data.Y, train_cfg.with_seed(seed)).network
    kv = ntk_d_expanded(net, forward(net, np.asarray(x, float)), forward(net, np.asarray(xp, float)))
    return spectral_norm(kv.block)
