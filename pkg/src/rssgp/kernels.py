"""Squared-exponential kernel, its spectral density, and the trigonometric
feature map used by the sparse spectrum models.

The Fourier convention is ``k(delta) = integral exp(2*pi*i*s.T*delta) sf2*p(s) ds``,
so the spectral density of an SE kernel with lengthscale ``rho`` is a zero-mean
Gaussian with standard deviation ``1/(2*pi*rho)`` per coordinate (many texts use
the angular-frequency convention instead, which drops the ``2*pi``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelParams",
    "SpectralBasis",
    "se_kernel",
    "se_gram",
    "sample_frequencies",
    "feature_map",
    "feature_matrix",
    "approx_kernel",
    "approx_gram",
]


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the stationary SE kernel.

    Parameters
    ----------
    lengthscales : array of shape (d,)
        Per-dimension lengthscales, all positive.
    signal_variance : float
        Signal variance (prior variance of the latent function), positive.
    noise_variance : float
        Observation noise variance. Nonnegative; zero is allowed so the
        ill-conditioning failure mode of the exact GP can be exercised, but
        the sparse spectrum model requires it to be strictly positive.
    """

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1:
            raise ValueError("lengthscales must be a 1-d array")
        if not np.all(ls > 0):
            raise ValueError("all lengthscales must be > 0")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be > 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    @classmethod
    def isotropic(cls, dim: int, lengthscale: float, signal_variance: float,
                  noise_variance: float) -> "KernelParams":
        return cls(np.full(dim, float(lengthscale)), signal_variance, noise_variance)


@dataclass(frozen=True)
class SpectralBasis:
    """A set of m frequency vectors (cycles per unit input).

    Each stored frequency s_r implicitly represents the symmetric pair
    {s_r, -s_r}; the feature map realizes the pair through its cos/sin
    components, so only s_r is kept.
    """

    frequencies: np.ndarray  # (m, d)

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        if freqs.ndim != 2:
            raise ValueError("frequencies must be an (m, d) array")
        object.__setattr__(self, "frequencies", freqs)

    @property
    def m(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    def with_frequencies(self, frequencies: np.ndarray) -> "SpectralBasis":
        return SpectralBasis(np.asarray(frequencies, dtype=float))


def _check_dim(x: np.ndarray, d: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != d:
        raise ValueError(f"{name} has dimension {x.shape[-1]}, expected {d}")
    return x


def se_kernel(x: np.ndarray, x_prime: np.ndarray, params: KernelParams) -> float:
    """Squared-exponential covariance between two points."""
    x = _check_dim(x, params.dim, "x")
    x_prime = _check_dim(x_prime, params.dim, "x_prime")
    z = (x - x_prime) / params.lengthscales
    return float(params.signal_variance * np.exp(-0.5 * np.dot(z, z)))


def se_gram(X: np.ndarray, X2: np.ndarray | None, params: KernelParams) -> np.ndarray:
    """SE Gram matrix between two point sets, shape (len(X), len(X2))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != params.dim or X2.shape[1] != params.dim:
        raise ValueError("input dimension does not match lengthscales")
    A = X / params.lengthscales
    B = X2 / params.lengthscales
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(d2, 0.0, out=d2)
    return params.signal_variance * np.exp(-0.5 * d2)


def sample_frequencies(params: KernelParams, m: int, rng: np.random.Generator) -> SpectralBasis:
    """Draw m frequency vectors from the SE kernel's spectral density.

    Under the 2*pi Fourier convention each coordinate is an independent
    zero-mean Gaussian with standard deviation 1/(2*pi*rho_l).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    scale = 1.0 / (2.0 * np.pi * params.lengthscales)
    freqs = rng.standard_normal((m, params.dim)) * scale
    return SpectralBasis(freqs)


def feature_map(x: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Trigonometric feature vector of length 2m: [cos, sin] per frequency.

    The squared norm is exactly m (cos^2 + sin^2 per pair).
    """
    x = _check_dim(x, basis.dim, "x")
    phases = 2.0 * np.pi * (basis.frequencies @ x)
    phi = np.empty(2 * basis.m)
    phi[0::2] = np.cos(phases)
    phi[1::2] = np.sin(phases)
    return phi


def feature_matrix(X: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Feature matrix Phi of shape (2m, t) whose columns are feature maps."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != basis.dim:
        raise ValueError("input dimension does not match basis")
    phases = 2.0 * np.pi * (basis.frequencies @ X.T)  # (m, t)
    phi = np.empty((2 * basis.m, X.shape[0]))
    np.cos(phases, out=phi[0::2])
    np.sin(phases, out=phi[1::2])
    return phi


def approx_kernel(x: np.ndarray, x_prime: np.ndarray, basis: SpectralBasis,
                  params: KernelParams) -> float:
    """Finite-rank approximation (sf2/m) * sum_r cos(2*pi*s_r.T*(x - x')).

    Stationary by construction: it depends on x, x' only through x - x'.
    """
    x = _check_dim(x, basis.dim, "x")
    x_prime = _check_dim(x_prime, basis.dim, "x_prime")
    phases = 2.0 * np.pi * (basis.frequencies @ (x - x_prime))
    return float(params.signal_variance * np.mean(np.cos(phases)))


def approx_gram(X: np.ndarray, X2: np.ndarray | None, basis: SpectralBasis,
                params: KernelParams) -> np.ndarray:
    """Gram matrix of the finite-rank kernel, (sf2/m) * Phi(X).T @ Phi(X2)."""
    P1 = feature_matrix(X, basis)
    P2 = P1 if X2 is None else feature_matrix(X2, basis)
    return (params.signal_variance / basis.m) * (P1.T @ P2)
