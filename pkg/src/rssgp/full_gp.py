"""Exact Gaussian process regression (the reference model and baseline arm)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .boxes import SearchBox
from .kernels import KernelParams, se_gram

__all__ = [
    "Dataset",
    "FullGpPosterior",
    "IllConditionedModelError",
    "fit_full_gp",
    "predict_full_gp",
]

# Jitter ladder tried on factorization failure, as multiples of signal variance.
_JITTER_LADDER = tuple(10.0 ** e for e in range(-10, -3))
# A factorization is accepted only if solving against the *unjittered* Gram
# matrix is faithful to this relative residual on a generic probe vector.
_SOLVE_RTOL = 1e-6


class IllConditionedModelError(RuntimeError):
    """The Gram matrix is numerically singular and jitter could not rescue it.

    Carries the final jitter value tried. Expected for large sets of
    near-duplicate observations with (near-)zero noise variance.
    """

    def __init__(self, message: str, jitter: float):
        super().__init__(message)
        self.jitter = jitter


@dataclass(frozen=True)
class Dataset:
    """Observed inputs (t, d) and noisy targets (t,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("inputs must be a (t, d) matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"inputs has {X.shape[0]} rows but targets has length {y.shape[0]}")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    @property
    def t(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.empty((0, dim)), np.empty(0))

    def append(self, x: np.ndarray, y: float) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return Dataset(np.vstack([self.inputs, x]), np.append(self.targets, y))

    def check_box(self, box: SearchBox) -> None:
        """Warn (not raise) if any observation lies outside the search box."""
        if self.t == 0:
            return
        inside = np.all((self.inputs >= box.lower) & (self.inputs <= box.upper), axis=1)
        if not np.all(inside):
            warnings.warn(
                f"{int(np.sum(~inside))} of {self.t} observations lie outside "
                "the declared search box", RuntimeWarning)


@dataclass(frozen=True)
class FullGpPosterior:
    """Posterior of an exact GP; immutable after fitting."""

    dataset: Dataset
    params: KernelParams
    gram_factor: np.ndarray      # lower-triangular factor of K + noise*I (+ jitter)
    alpha: np.ndarray            # solves (K + noise*I) alpha = Y
    jitter: float
    kernel: Callable = field(repr=False)

    def predict(self, x: np.ndarray, include_noise: bool = False) -> tuple[float, float]:
        mean, var = self.predict_batch(np.atleast_2d(np.asarray(x, dtype=float)),
                                       include_noise=include_noise)
        return float(mean[0]), float(var[0])

    def predict_batch(self, X: np.ndarray, include_noise: bool = False
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.params.dim:
            raise ValueError("query dimension does not match the model")
        prior = self.kernel(X[:1], X[:1], self.params)[0, 0] if X.shape[0] else 0.0
        if self.dataset.t == 0:
            mean = np.zeros(X.shape[0])
            var = np.full(X.shape[0], self.params.signal_variance)
        else:
            k = self.kernel(self.dataset.inputs, X, self.params)  # (t, n)
            mean = k.T @ self.alpha
            v = solve_triangular(self.gram_factor, k, lower=True, check_finite=False)
            var = prior - np.sum(v * v, axis=0)
            bad = var < 0.0
            if np.any(bad):
                worst = float(var.min())
                if worst < -1e-10:
                    warnings.warn(
                        f"negative predictive variance {worst:.3e} clamped to 0",
                        RuntimeWarning)
                var = np.where(bad, 0.0, var)
        if include_noise:
            var = var + self.params.noise_variance
        return mean, var


def _probe_vector(t: int) -> np.ndarray:
    # Deterministic, generic direction (exercises all eigendirections).
    return np.sin(1.7 * np.arange(1, t + 1)) + 0.25


def _factorize(M: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    """Cholesky of M with an escalating jitter ladder.

    A candidate factor is accepted only if it solves against the original M
    to a relative probe residual of 1e-6; otherwise the matrix is treated as
    numerically singular even when the jittered factorization succeeds.
    """
    t = M.shape[0]
    probe = _probe_vector(t)
    probe_norm = float(np.linalg.norm(probe))
    jitter = 0.0
    for jitter_rel in (0.0,) + _JITTER_LADDER:
        jitter = jitter_rel * signal_variance
        Mj = M if jitter == 0.0 else M + jitter * np.eye(t)
        try:
            L = cholesky(Mj, lower=True)
        except np.linalg.LinAlgError:
            continue
        z = cho_solve((L, True), probe)
        resid = float(np.linalg.norm(M @ z - probe)) / probe_norm
        if resid <= _SOLVE_RTOL:
            return L, jitter
    raise IllConditionedModelError(
        f"Gram matrix of size {t} is numerically singular; factorization failed "
        f"after maximum jitter {jitter:.3e}", jitter)


def fit_full_gp(data: Dataset, params: KernelParams,
                kernel: Callable | None = None) -> FullGpPosterior:
    """Factorize K + noise*I and precompute alpha.

    ``kernel`` may override the SE covariance with any callable
    ``kernel(X, X2, params) -> Gram``; this is how a full GP on the
    finite-rank approximate kernel is built.
    """
    kernel = se_gram if kernel is None else kernel
    if data.t == 0:
        return FullGpPosterior(data, params, np.empty((0, 0)), np.empty(0), 0.0, kernel)
    if data.dim != params.dim:
        raise ValueError("dataset dimension does not match kernel parameters")
    K = kernel(data.inputs, None, params)
    M = K + params.noise_variance * np.eye(data.t)
    L, jitter = _factorize(M, params.signal_variance)
    alpha = cho_solve((L, True), data.targets)
    return FullGpPosterior(data, params, L, alpha, jitter, kernel)


def predict_full_gp(model: FullGpPosterior, x: np.ndarray,
                    include_noise: bool = False) -> tuple[float, float]:
    """Posterior mean and variance at a single point (Gaussian predictive).

    The variance is latent (noise-free) unless ``include_noise`` is set.
    With no data this is the prior: mean 0, variance equal to the signal
    variance.
    """
    return model.predict(x, include_noise=include_noise)
