"""The regularized frequency-selection objective.

Frequencies (and optionally kernel parameters) are chosen by maximizing

    loss = log_marginal_likelihood + entropy_weight * log(entropy of GMD)

so that the sparse model keeps fitting the data while its belief about the
global maximizer stays as spread out as the data allow. The likelihood term
has an analytic gradient; the entropy term is estimated by one of the GMD
estimators and differentiated with common-random-number central finite
differences (coordinate-wise for small parameter vectors, simultaneous
random perturbations for large ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .boxes import SearchBox
from .full_gp import Dataset
from .gmd import SmcConfig, gmd_ei_proxy, gmd_smc, gmd_thompson
from .kernels import KernelParams, SpectralBasis
from .ssgp import fit_ssgp, ssgp_log_marginal, ssgp_log_marginal_grad

__all__ = ["RssgpConfig", "OptStep", "rssgp_loss", "optimize_frequencies"]

_ESTIMATORS = ("thompson", "smc", "ei_proxy")


@dataclass(frozen=True)
class RssgpConfig:
    """Configuration of the regularized objective and its optimizer.

    ``seed`` fixes the common-random-number stream used by every entropy
    evaluation inside one optimization run; when None it is derived from the
    generator passed to ``optimize_frequencies``.
    """

    entropy_weight: float = 10.0
    gmd_estimator: str = "ei_proxy"
    optimizer_steps: int = 200
    step_size: float = 0.05
    entropy_floor: float = 1e-3
    seed: int | None = None
    learn_kernel_params: bool = False
    thompson_samples: int = 400
    smc: SmcConfig = field(default_factory=SmcConfig)
    smc_warm_rounds: int = 5
    fd_step: float = 0.05
    entropy_grad: str = "auto"  # auto | coordinate | spsa
    bins: int = 20

    def __post_init__(self):
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be >= 0")
        if self.entropy_floor <= 0:
            raise ValueError("entropy_floor must be > 0")
        if self.optimizer_steps < 0:
            raise ValueError("optimizer_steps must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.gmd_estimator not in _ESTIMATORS:
            raise ValueError(f"gmd_estimator must be one of {_ESTIMATORS}")
        if self.entropy_grad not in ("auto", "coordinate", "spsa"):
            raise ValueError("entropy_grad must be auto, coordinate or spsa")


class OptStep(NamedTuple):
    loss: float
    log_ml: float
    entropy: float


def _estimate_entropy(model, data: Dataset, box: SearchBox, cfg: RssgpConfig,
                      rng: np.random.Generator, warm):
    """Entropy of the configured GMD estimator; returns (entropy, smc_state)."""
    if cfg.gmd_estimator == "thompson":
        dist = gmd_thompson(model, box, samples=cfg.thompson_samples, rng=rng,
                            bins=cfg.bins)
        return dist.entropy, warm
    if cfg.gmd_estimator == "smc":
        smc_cfg = cfg.smc if warm is None else replace(cfg.smc, rounds=cfg.smc_warm_rounds)
        dist, particles = gmd_smc(model, box, smc_cfg, warm_start=warm, rng=rng,
                                  bins=cfg.bins)
        return dist.entropy, particles
    incumbent = float(np.max(data.targets)) if data.t else 0.0
    dist = gmd_ei_proxy(model, box, incumbent)
    return dist.entropy, warm


def rssgp_loss(data: Dataset, basis: SpectralBasis, params: KernelParams,
               cfg: RssgpConfig, box: SearchBox,
               rng: np.random.Generator | None = None
               ) -> tuple[float, dict[str, float]]:
    """Regularized loss and its components {log_ml, entropy}.

    With ``entropy_weight`` zero the estimator is skipped and the loss is
    exactly the log marginal likelihood (entropy reported as NaN).
    """
    model = fit_ssgp(data, basis, params)
    log_ml = ssgp_log_marginal(model)
    if cfg.entropy_weight == 0.0:
        return log_ml, {"log_ml": log_ml, "entropy": float("nan")}
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    entropy, _ = _estimate_entropy(model, data, box, cfg, rng, None)
    loss = log_ml + cfg.entropy_weight * math.log(max(entropy, cfg.entropy_floor))
    return loss, {"log_ml": log_ml, "entropy": entropy}


class _Parameterization:
    """Flattens frequencies (and optionally log kernel variances) into one
    optimization vector with a natural per-coordinate scale."""

    def __init__(self, basis: SpectralBasis, params: KernelParams, learn_kernel: bool):
        self.m, self.d = basis.m, basis.dim
        self.learn_kernel = learn_kernel
        self.lengthscales = params.lengthscales
        freq_scale = np.tile(1.0 / (2.0 * np.pi * params.lengthscales), self.m)
        self.scale = np.concatenate([freq_scale, [1.0, 1.0]]) if learn_kernel else freq_scale

    def pack(self, basis: SpectralBasis, params: KernelParams) -> np.ndarray:
        theta = basis.frequencies.ravel()
        if self.learn_kernel:
            theta = np.concatenate([theta, [math.log(params.signal_variance),
                                            math.log(params.noise_variance)]])
        return theta

    def unpack(self, theta: np.ndarray, params: KernelParams
               ) -> tuple[SpectralBasis, KernelParams]:
        n_freq = self.m * self.d
        basis = SpectralBasis(theta[:n_freq].reshape(self.m, self.d))
        if self.learn_kernel:
            params = KernelParams(self.lengthscales,
                                  math.exp(theta[n_freq]), math.exp(theta[n_freq + 1]))
        return basis, params

    def grad(self, data: Dataset, basis: SpectralBasis, params: KernelParams
             ) -> np.ndarray:
        model = fit_ssgp(data, basis, params)
        g = ssgp_log_marginal_grad(model)
        vec = g.frequencies.ravel()
        if self.learn_kernel:
            vec = np.concatenate([vec, [g.log_signal_variance, g.log_noise_variance]])
        return vec


def optimize_frequencies(data: Dataset, init_basis: SpectralBasis,
                         params: KernelParams, cfg: RssgpConfig, box: SearchBox,
                         rng: np.random.Generator | None = None
                         ) -> tuple[SpectralBasis, KernelParams, list[OptStep]]:
    """Ascent on the regularized loss; returns the best-loss iterate.

    The likelihood gradient is analytic; the entropy term is differentiated
    by central finite differences with a common random seed on both sides of
    every perturbation, so the objective seen by the optimizer is a
    deterministic function of the parameters. Moment-based per-coordinate
    scaling (Adam-style) turns the fixed step size into an adaptive one.
    Non-finite losses halve the step and retry up to 5 times before stopping
    early with the best iterate found.
    """
    rng = np.random.default_rng() if rng is None else rng
    if cfg.optimizer_steps == 0:
        return init_basis, params, []
    crn_seed = cfg.seed if cfg.seed is not None else int(rng.integers(2 ** 63))
    par = _Parameterization(init_basis, params, cfg.learn_kernel_params)
    theta = par.pack(init_basis, params)
    n = theta.size

    mode = cfg.entropy_grad
    if mode == "auto":
        mode = "coordinate" if n <= 32 else "spsa"
    spsa_rng = np.random.default_rng(crn_seed + 1)

    smc_warm = None

    def entropy_term(th: np.ndarray, warm) -> tuple[float, float, object]:
        basis_i, params_i = par.unpack(th, params)
        model = fit_ssgp(data, basis_i, params_i)
        if cfg.entropy_weight == 0.0:
            return 0.0, float("nan"), warm
        ent_rng = np.random.default_rng(crn_seed)
        entropy, warm = _estimate_entropy(model, data, box, cfg, ent_rng, warm)
        return cfg.entropy_weight * math.log(max(entropy, cfg.entropy_floor)), entropy, warm

    def full_loss(th: np.ndarray, warm, update_warm=False):
        basis_i, params_i = par.unpack(th, params)
        model = fit_ssgp(data, basis_i, params_i)
        log_ml = ssgp_log_marginal(model)
        if cfg.entropy_weight == 0.0:
            return log_ml, log_ml, float("nan"), warm
        ent_rng = np.random.default_rng(crn_seed)
        entropy, new_warm = _estimate_entropy(model, data, box, cfg, ent_rng, warm)
        loss = log_ml + cfg.entropy_weight * math.log(max(entropy, cfg.entropy_floor))
        return loss, log_ml, entropy, (new_warm if update_warm else warm)

    def entropy_grad(th: np.ndarray, warm) -> np.ndarray:
        if cfg.entropy_weight == 0.0:
            return np.zeros(n)
        if mode == "coordinate":
            g = np.zeros(n)
            for j in range(n):
                h = cfg.fd_step * par.scale[j]
                e = np.zeros(n)
                e[j] = h
                up, _, _ = entropy_term(th + e, warm)
                dn, _, _ = entropy_term(th - e, warm)
                g[j] = (up - dn) / (2.0 * h)
            return g
        delta = spsa_rng.choice([-1.0, 1.0], size=n) * par.scale
        c = cfg.fd_step
        up, _, _ = entropy_term(th + c * delta, warm)
        dn, _, _ = entropy_term(th - c * delta, warm)
        return (up - dn) / (2.0 * c) / delta

    loss, log_ml, entropy, smc_warm = full_loss(theta, smc_warm, update_warm=True)
    trace = [OptStep(loss, log_ml, entropy)]
    best_loss, best_theta = loss, theta.copy()

    step = cfg.step_size
    m1 = np.zeros(n)
    m2 = np.zeros(n)
    for k in range(1, cfg.optimizer_steps + 1):
        g = par.grad(data, *par.unpack(theta, params)) + entropy_grad(theta, smc_warm)
        if not np.all(np.isfinite(g)):
            break
        m1 = 0.9 * m1 + 0.1 * g
        m2 = 0.999 * m2 + 0.001 * g * g
        m1_hat = m1 / (1.0 - 0.9 ** k)
        m2_hat = m2 / (1.0 - 0.999 ** k)
        direction = par.scale * m1_hat / (np.sqrt(m2_hat) + 1e-12)

        accepted = False
        for _retry in range(6):
            candidate = theta + step * direction
            loss, log_ml, entropy, smc_warm_new = full_loss(candidate, smc_warm,
                                                            update_warm=True)
            if np.isfinite(loss):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        theta = candidate
        smc_warm = smc_warm_new
        trace.append(OptStep(loss, log_ml, entropy))
        if loss > best_loss:
            best_loss, best_theta = loss, theta.copy()

    basis, params_out = par.unpack(best_theta, params)
    return basis, params_out, trace
