"""Gaussian-process style kernel regression on precomputed Gram blocks."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractViolation, SingularKernelError

MAX_ESCALATIONS = 6


@dataclass(frozen=True, eq=False)
class RegressionResult:
    mean: np.ndarray  # (M, label_dim)
    covariance: np.ndarray  # (M, M)
    jitter_used: float

    def mean_to_csv(self, path) -> None:
        np.savetxt(path, self.mean, delimiter=",", fmt="%.17g")

    def summary(self, accuracy: float | None = None) -> str:
        return json.dumps({"accuracy": accuracy, "jitter_used": self.jitter_used})


def default_jitter(K_train: np.ndarray) -> float:
    return 1e-8 * float(np.mean(np.diag(K_train)))


def gp_regress(K_train, K_cross, K_test, Y, jitter: float | None = None) -> RegressionResult:
    """Posterior mean K* K^{-1} Y and covariance K** - K* K^{-1} K*^T via Cholesky.

    On factorization failure the jitter is multiplied by 10, up to six times.
    A zero starting jitter escalates from the default 1e-8 * mean diagonal.
    """
    K_train = np.asarray(K_train, dtype=np.float64)
    K_cross = np.atleast_2d(np.asarray(K_cross, dtype=np.float64))
    K_test = np.atleast_2d(np.asarray(K_test, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    N = K_train.shape[0]
    if K_train.shape != (N, N) or K_cross.shape[1] != N or Y.shape[0] != N:
        raise ContractViolation("inconsistent kernel/label shapes")
    if K_test.shape != (K_cross.shape[0],) * 2:
        raise ContractViolation("K_test must be M x M")
    scale = max(np.abs(K_train).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(K_train - K_train.T).max(initial=0.0) > 1e-10 * scale:
        raise ContractViolation("K_train is not symmetric")
    if jitter is None:
        jitter = default_jitter(K_train)
    if jitter < 0:
        raise ValueError("jitter must be non-negative")

    current = jitter
    for attempt in range(MAX_ESCALATIONS + 1):
        try:
            factor = scipy.linalg.cho_factor(K_train + current * np.eye(N), lower=True)
            break
        except np.linalg.LinAlgError:
            if attempt == MAX_ESCALATIONS:
                raise SingularKernelError(
                    f"Cholesky failed after {MAX_ESCALATIONS} jitter escalations (last jitter {current:.3g})"
                ) from None
            current = current * 10 if current > 0 else max(default_jitter(K_train), np.finfo(float).tiny)
    mean = K_cross @ scipy.linalg.cho_solve(factor, Y)
    cov = K_test - K_cross @ scipy.linalg.cho_solve(factor, K_cross.T)
    cov = 0.5 * (cov + cov.T)
    return RegressionResult(mean, cov, float(current))


@dataclass(frozen=True, eq=False)
class Classification:
    predicted: np.ndarray
    accuracy: float | None


def classify(result: RegressionResult | np.ndarray, encoding=None) -> Classification:
    """Row-wise argmax of the posterior mean (first index wins ties).

    ``encoding`` is the one-hot ground truth; accuracy is None without it.
    """
    mean = result.mean if isinstance(result, RegressionResult) else np.asarray(result)
    pred = np.argmax(mean, axis=1)
    if encoding is None:
        return Classification(pred, None)
    truth = np.argmax(np.asarray(encoding), axis=1)
    return Classification(pred, float(np.mean(pred == truth)))


def rmse(pred, target) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))
