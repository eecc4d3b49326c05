"""Estimation of the global-maximum distribution (GMD) of a posterior.

Three estimators are provided: Thompson sampling of feature-space weight
vectors (each sampled function is maximized and the maximizers histogrammed),
a sequential Monte Carlo particle scheme in which challenger locations try to
displace particles through joint posterior draws, and a fast proxy that
normalizes the expected-improvement surface into a probability mass function.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.stats import qmc

from .acquisition import expected_improvement
from .boxes import SearchBox
from .full_gp import FullGpPosterior
from .kernels import feature_matrix
from .ssgp import SsgpPosterior, sample_posterior_weights

__all__ = [
    "MaxDistribution",
    "ParticleSet",
    "SmcConfig",
    "entropy_of",
    "gmd_thompson",
    "gmd_smc",
    "gmd_ei_proxy",
    "gmd_full_gp_reference",
    "thompson_max_samples",
    "full_gp_max_samples",
    "bin_maximizers",
    "total_variation",
]

DEFAULT_BINS = 20


def entropy_of(pmf: np.ndarray) -> float:
    """Shannon entropy -sum(p log p) in nats, with 0 log 0 = 0.

    The vector must be a valid PMF: nonnegative entries summing to 1 within
    1e-6.
    """
    p = np.asarray(pmf, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("pmf must be nonempty")
    if np.any(p < 0):
        raise ValueError("pmf entries must be nonnegative")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"pmf sums to {total}, not 1")
    pos = p[p > 0]
    return float(-np.sum(pos * np.log(pos)))


@dataclass(frozen=True)
class MaxDistribution:
    """Discrete PMF over candidate maximizer locations with its entropy.

    ``support`` holds one representative point per atom (histogram cell
    centers or design points); ``cells`` holds integer histogram coordinates
    when the distribution was binned, allowing exact alignment between
    estimates on the same grid.
    """

    support: np.ndarray          # (n, d)
    pmf: np.ndarray              # (n,)
    entropy: float
    box: SearchBox
    bins: int | None = None
    cells: np.ndarray | None = None

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=float))
        pmf = np.asarray(self.pmf, dtype=float).ravel()
        if support.shape[0] != pmf.shape[0]:
            raise ValueError("support and pmf lengths differ")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(float(pmf.sum()) - 1.0) > 1e-9:
            raise ValueError("pmf must sum to 1 within 1e-9")
        if not (-1e-12 <= self.entropy <= np.log(max(pmf.size, 1)) + 1e-9):
            raise ValueError("entropy outside [0, log(support size)]")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "entropy", float(max(self.entropy, 0.0)))


@dataclass(frozen=True)
class ParticleSet:
    """Weighted particle approximation of the maximum distribution."""

    positions: np.ndarray    # (n_p, d)
    weights: np.ndarray      # (n_p,)
    flat_density: float      # uniform density over the search box

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pos.shape[0] < 2:
            raise ValueError("a particle set needs at least 2 particles")
        if pos.shape[0] != w.shape[0]:
            raise ValueError("positions and weights lengths differ")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be finite, nonnegative, not all zero")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class SmcConfig:
    """Particle counts and proposal mixture weight for the SMC estimator.

    The defaults favor many challengers over many rounds: iterating small
    challenge tournaments to stationarity over-concentrates the particles
    relative to the true maximum distribution, while wider tournaments keep
    each round's winner close to a fresh-draw argmax.
    """

    n_particles: int = 1000
    n_challengers: int = 15
    rounds: int = 10
    alpha: float = 0.5

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.n_challengers < 1:
            raise ValueError("n_challengers must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must be in [0, 1)")


def bin_maximizers(points: np.ndarray, box: SearchBox, bins: int = DEFAULT_BINS,
                   weights: np.ndarray | None = None) -> MaxDistribution:
    """Sparse joint histogram of maximizer locations (equal-width bins per
    dimension, only occupied cells stored)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = box.to_unit(points)
    idx = np.clip(np.floor(u * bins).astype(int), 0, bins - 1)
    cells, inverse = np.unique(idx, axis=0, return_inverse=True)
    mass = np.bincount(inverse, weights=weights, minlength=cells.shape[0]).astype(float)
    total = mass.sum()
    if total <= 0:
        raise ValueError("no mass to bin")
    pmf = mass / total
    support = box.from_unit((cells + 0.5) / bins)
    return MaxDistribution(support, pmf, entropy_of(pmf), box, bins, cells)


def _rebin(dist: MaxDistribution, box: SearchBox, bins: int) -> MaxDistribution:
    if dist.bins == bins and dist.cells is not None:
        return dist
    return bin_maximizers(dist.support, box, bins, weights=dist.pmf)


def total_variation(a: MaxDistribution, b: MaxDistribution,
                    bins: int = DEFAULT_BINS) -> float:
    """Total-variation distance after aligning both PMFs on a shared
    histogram grid over the first distribution's box."""
    box = a.box
    a = _rebin(a, box, bins)
    b = _rebin(b, box, bins)
    table: dict[tuple, float] = {}
    for cell, p in zip(map(tuple, a.cells), a.pmf):
        table[cell] = table.get(cell, 0.0) + p
    for cell, q in zip(map(tuple, b.cells), b.pmf):
        table[cell] = table.get(cell, 0.0) - q
    return 0.5 * float(sum(abs(v) for v in table.values()))


# ---------------------------------------------------------------------------
# Thompson sampling estimator
# ---------------------------------------------------------------------------

def _ascend_batch(freqs: np.ndarray, thetas: np.ndarray, box: SearchBox,
                  rng: np.random.Generator, starts: int, steps: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Multi-start projected gradient ascent on f_i(x) = phi_i(x).T theta_i,
    vectorized over samples and starts.

    ``freqs`` is (m, d) for a shared basis or (L, m, d) per sample;
    ``thetas`` is (L, 2m). Returns per-sample maximizers (L, d) and values.
    """
    L = thetas.shape[0]
    d = box.dim
    shared = freqs.ndim == 2
    theta_cos = thetas[:, 0::2]
    theta_sin = thetas[:, 1::2]
    widths = box.widths

    U = rng.random((L, starts, d))

    def evaluate(U, with_grad):
        X = box.lower + U * widths
        if shared:
            phases = 2.0 * np.pi * np.einsum("lsd,md->lsm", X, freqs)
        else:
            phases = 2.0 * np.pi * np.einsum("lsd,lmd->lsm", X, freqs)
        cosp = np.cos(phases)
        sinp = np.sin(phases)
        f = np.einsum("lsm,lm->ls", cosp, theta_cos) + \
            np.einsum("lsm,lm->ls", sinp, theta_sin)
        if not with_grad:
            return f, None
        coef = theta_sin[:, None, :] * cosp - theta_cos[:, None, :] * sinp
        if shared:
            grad = 2.0 * np.pi * np.einsum("lsm,md->lsd", coef, freqs)
        else:
            grad = 2.0 * np.pi * np.einsum("lsm,lmd->lsd", coef, freqs)
        return f, grad * widths  # gradient in unit-cube coordinates

    f_cur, _ = evaluate(U, False)
    eta = np.full((L, starts), 0.2)
    for _ in range(steps):
        _, grad = evaluate(U, True)
        scale = np.max(np.abs(grad), axis=-1, keepdims=True)
        step = eta[..., None] * grad / np.maximum(scale, 1e-300)
        U_new = np.clip(U + step, 0.0, 1.0)
        f_new, _ = evaluate(U_new, False)
        improved = f_new >= f_cur
        U = np.where(improved[..., None], U_new, U)
        f_cur = np.where(improved, f_new, f_cur)
        eta = np.where(improved, np.minimum(eta * 1.3, 0.5), eta * 0.5)
    pick = np.argmax(f_cur, axis=1)
    rows = np.arange(L)
    return box.lower + U[rows, pick] * widths, f_cur[rows, pick]


def _refit_thetas(model: SsgpPosterior, n: int, rng: np.random.Generator
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Draw n fresh frequency bases and posterior weights, refitting the
    feature-space posterior to the model's data for each basis."""
    params = model.params
    m, d = model.m, params.dim
    scale = 1.0 / (2.0 * np.pi * params.lengthscales)
    freqs = rng.standard_normal((n, m, d)) * scale
    X, y = model.dataset.inputs, model.dataset.targets
    t = X.shape[0]
    ridge = m * params.noise_variance / params.signal_variance
    if t == 0:
        mean = np.zeros((n, 2 * m))
        cov_factor = np.sqrt(params.signal_variance / m) * \
            np.broadcast_to(np.eye(2 * m), (n, 2 * m, 2 * m))
        z = rng.standard_normal((n, 2 * m))
        return freqs, mean + np.einsum("nij,nj->ni", cov_factor, z)
    phases = 2.0 * np.pi * np.einsum("td,nmd->ntm", X, freqs)
    phi = np.empty((n, 2 * m, t))
    phi[:, 0::2, :] = np.transpose(np.cos(phases), (0, 2, 1))
    phi[:, 1::2, :] = np.transpose(np.sin(phases), (0, 2, 1))
    A = phi @ np.transpose(phi, (0, 2, 1)) + ridge * np.eye(2 * m)
    La = np.linalg.cholesky(A)
    phi_y = phi @ y
    mean = np.linalg.solve(A, phi_y[..., None])[..., 0]
    z = rng.standard_normal((n, 2 * m))
    noise_draw = np.sqrt(params.noise_variance) * \
        np.linalg.solve(np.transpose(La, (0, 2, 1)), z[..., None])[..., 0]
    return freqs, mean + noise_draw


def thompson_max_samples(model: SsgpPosterior, box: SearchBox, samples: int,
                         rng: np.random.Generator,
                         resample_features: bool = False, starts: int = 10,
                         ascent_steps: int = 75, chunk: int = 4096) -> np.ndarray:
    """Raw Thompson maximizer locations, shape (samples, d).

    Failed maximizations (non-finite results) are skipped with a warning as
    long as they stay under 1% of the requested samples.
    """
    maximizers = np.empty((samples, box.dim))
    values = np.empty(samples)
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        if resample_features:
            freqs, thetas = _refit_thetas(model, n, rng)
        else:
            freqs = model.basis.frequencies
            thetas = sample_posterior_weights(model, rng, size=n)
        xs, fs = _ascend_batch(freqs, thetas, box, rng, starts, ascent_steps)
        maximizers[done:done + n] = xs
        values[done:done + n] = fs
        done += n
    ok = np.isfinite(values) & np.all(np.isfinite(maximizers), axis=1)
    failures = int(np.sum(~ok))
    if failures:
        warnings.warn(f"{failures} Thompson maximizations failed and were skipped",
                      RuntimeWarning)
        if failures > 0.01 * samples:
            raise RuntimeError(
                f"{failures}/{samples} Thompson maximizations failed (>1%)")
    return maximizers[ok]


def gmd_thompson(model: SsgpPosterior, box: SearchBox, samples: int = 2000,
                 resample_features: bool = False,
                 rng: np.random.Generator | None = None,
                 bins: int = DEFAULT_BINS, starts: int = 10,
                 ascent_steps: int = 75, chunk: int = 4096) -> MaxDistribution:
    """GMD by Thompson sampling: draw posterior weight vectors, maximize each
    sampled function over the box by multi-start gradient ascent, and bin the
    maximizers into a sparse histogram.

    With ``resample_features`` a fresh frequency basis is drawn and the
    posterior refitted for every sample (the classical random-feature route
    to sampling the exact-kernel posterior); otherwise the model's own basis
    is reused, which measures the sparse model itself.
    """
    if samples < 100:
        raise ValueError("need at least 100 Thompson samples")
    rng = np.random.default_rng() if rng is None else rng
    locations = thompson_max_samples(model, box, samples, rng,
                                     resample_features=resample_features,
                                     starts=starts, ascent_steps=ascent_steps,
                                     chunk=chunk)
    return bin_maximizers(locations, box, bins)


def full_gp_max_samples(model: FullGpPosterior, box: SearchBox, samples: int,
                        rng: np.random.Generator, grid_size: int = 801) -> np.ndarray:
    """Maximizer locations of dense-grid posterior draws of an exact 1d GP,
    shape (samples, 1).

    Joint draws are taken on a dense grid over the box and the argmax of each
    draw is recorded; this keeps the full-GP reference sampling-based without
    any feature approximation.
    """
    if box.dim != 1:
        raise ValueError("the dense-grid reference is implemented for 1d only")
    grid = np.linspace(box.lower[0], box.upper[0], grid_size)[:, None]
    mean, _ = model.predict_batch(grid)
    Kgg = model.kernel(grid, grid, model.params)
    if model.dataset.t:
        kxg = model.kernel(model.dataset.inputs, grid, model.params)
        V = solve_triangular(model.gram_factor, kxg, lower=True)
        cov = Kgg - V.T @ V
    else:
        cov = Kgg
    cov[np.diag_indices_from(cov)] += 1e-10 * model.params.signal_variance
    Lc = cholesky(cov, lower=True)
    draws = mean[:, None] + Lc @ rng.standard_normal((grid_size, samples))
    return grid[np.argmax(draws, axis=0)]


def gmd_full_gp_reference(model: FullGpPosterior, box: SearchBox,
                          samples: int = 2000,
                          rng: np.random.Generator | None = None,
                          bins: int = DEFAULT_BINS, grid_size: int = 801
                          ) -> MaxDistribution:
    """Reference GMD of an exact 1d GP, from dense-grid posterior draws."""
    rng = np.random.default_rng() if rng is None else rng
    locations = full_gp_max_samples(model, box, samples, rng, grid_size)
    return bin_maximizers(locations, box, bins)


# ---------------------------------------------------------------------------
# Sequential Monte Carlo estimator
# ---------------------------------------------------------------------------

def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: one uniform offset, stratified traversal of the
    cumulative weights. Returns selected indices."""
    n = weights.shape[0]
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cdf, u, side="left")


def _approx_kernel_to_seeds(diff: np.ndarray, freqs: np.ndarray,
                            signal_variance: float) -> np.ndarray:
    phases = 2.0 * np.pi * np.einsum("...d,md->...m", diff, freqs)
    return signal_variance * np.mean(np.cos(phases), axis=-1)


def challenger_weights(kernel_values: np.ndarray, alpha: float,
                       flat_density: float) -> np.ndarray:
    """Importance weight of a challenger: the flat density over the mixture
    proposal density. The kernel term is clamped at zero since the
    finite-rank kernel can dip slightly negative. Reduces to exactly 1
    everywhere when alpha = 0 (proposal equals the flat density)."""
    k = np.maximum(np.asarray(kernel_values, dtype=float), 0.0)
    return flat_density / (alpha * k + (1.0 - alpha) * flat_density)


def gmd_smc(model: SsgpPosterior, box: SearchBox, config: SmcConfig | None = None,
            warm_start: ParticleSet | None = None,
            rng: np.random.Generator | None = None,
            bins: int = DEFAULT_BINS) -> tuple[MaxDistribution, ParticleSet]:
    """GMD by sequential Monte Carlo.

    Particles start uniform over the box (or from ``warm_start``). Each round
    every particle is challenged once: challengers are drawn from a mixture
    proposal (with probability alpha, a kernel perturbation of an existing
    particle chosen by weight; otherwise uniform), weighted by the ratio of
    the flat density to the mixture density, and a single joint draw from the
    latent posterior over the particle and its challengers decides whether
    the best challenger displaces the particle. Systematic resampling
    equalizes the weights after every round.

    Returns the binned PMF and the final particle set for reuse.
    """
    cfg = SmcConfig() if config is None else config
    rng = np.random.default_rng() if rng is None else rng
    d = box.dim
    beta = 1.0 / box.volume
    if warm_start is not None:
        if warm_start.positions.shape[1] != d:
            raise ValueError("warm-start dimension does not match box")
        if not np.all((warm_start.positions >= box.lower) &
                      (warm_start.positions <= box.upper)):
            raise ValueError("warm-start particles must lie inside the box")
        positions = warm_start.positions.copy()
        weights = warm_start.weights.copy()
    else:
        positions = box.sample(rng, cfg.n_particles)
        weights = np.ones(cfg.n_particles)
    n_p = positions.shape[0]
    n_c = cfg.n_challengers
    params = model.params
    freqs = model.basis.frequencies

    for _ in range(cfg.rounds):
        total = float(weights.sum())
        if not np.isfinite(total) or total <= 1e-300:
            warnings.warn("particle weights underflowed; resetting to uniform",
                          RuntimeWarning)
            weights = np.ones(n_p)
            total = float(n_p)
        probs = weights / total

        seed_idx = rng.choice(n_p, size=(n_p, n_c), p=probs)
        use_kernel = rng.random((n_p, n_c)) < cfg.alpha
        uniform_draws = box.sample(rng, (n_p, n_c))
        perturbed = positions[seed_idx] + \
            rng.standard_normal((n_p, n_c, d)) * params.lengthscales
        # Redraw kernel-branch challengers that left the box, then clip.
        for _retry in range(50):
            outside = use_kernel & ~np.all(
                (perturbed >= box.lower) & (perturbed <= box.upper), axis=-1)
            if not np.any(outside):
                break
            redraw = positions[seed_idx] + \
                rng.standard_normal((n_p, n_c, d)) * params.lengthscales
            perturbed = np.where(outside[..., None], redraw, perturbed)
        perturbed = np.clip(perturbed, box.lower, box.upper)
        challengers = np.where(use_kernel[..., None], perturbed, uniform_draws)

        # Challenger weights: flat density over the mixture density, with the
        # kernel term evaluated against the particle that seeded the draw.
        kvals = _approx_kernel_to_seeds(challengers - positions[seed_idx],
                                        freqs, params.signal_variance)
        chal_weights = challenger_weights(kvals, cfg.alpha, beta)

        # One joint latent draw per particle over [particle, challengers].
        group = np.concatenate([positions[:, None, :], challengers], axis=1)
        flat = group.reshape(-1, d)
        P = feature_matrix(flat, model.basis)
        means = (P.T @ model.weight_mean).reshape(n_p, n_c + 1)
        V = solve_triangular(model.a_factor, P, lower=True, check_finite=False)
        V3 = V.reshape(2 * model.m, n_p, n_c + 1)
        cov = params.noise_variance * np.einsum("kgi,kgj->gij", V3, V3)
        eye = np.eye(n_c + 1)
        for jitter in (0.0, 1e-10 * params.signal_variance,
                       1e-8 * params.signal_variance):
            try:
                Lg = np.linalg.cholesky(cov + jitter * eye)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise RuntimeError("joint challenge covariance is not factorizable")
        z = rng.standard_normal((n_p, n_c + 1))
        draws = means + np.einsum("gij,gj->gi", Lg, z)

        f_particle = draws[:, 0]
        f_chal = draws[:, 1:]
        best = np.argmax(f_chal, axis=1)
        rows = np.arange(n_p)
        replace = f_chal[rows, best] > f_particle
        positions[replace] = challengers[replace, best[replace]]
        weights = weights.copy()
        weights[replace] = chal_weights[replace, best[replace]]

        total = float(weights.sum())
        if not np.isfinite(total) or total <= 1e-300:
            warnings.warn("particle weights underflowed; resetting to uniform",
                          RuntimeWarning)
            weights = np.ones(n_p)
        idx = _systematic_resample(weights, rng)
        positions = positions[idx]
        weights = np.ones(n_p)

    dist = bin_maximizers(positions, box, bins, weights=weights)
    return dist, ParticleSet(positions, weights, beta)


# ---------------------------------------------------------------------------
# Expected-improvement proxy
# ---------------------------------------------------------------------------

def _default_design(box: SearchBox) -> np.ndarray:
    """Evaluation design: full mesh of 101 points per dimension for d <= 2,
    a scrambled 4096-point Sobol design above."""
    if box.dim <= 2:
        axes = [np.linspace(lo, hi, 101) for lo, hi in zip(box.lower, box.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    sampler = qmc.Sobol(box.dim, scramble=True, seed=1234)
    return box.from_unit(sampler.random(4096))


def gmd_ei_proxy(model, box: SearchBox, incumbent: float,
                 grid: np.ndarray | None = None) -> MaxDistribution:
    """GMD proxy: normalize the EI surface over an evaluation design into a
    PMF. Falls back to the uniform PMF (with a warning) when EI vanishes
    everywhere."""
    if grid is None:
        grid = _default_design(box)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("evaluation design must be nonempty")
    mean, var = model.predict_batch(grid, include_noise=False)
    ei = expected_improvement(mean, np.sqrt(np.maximum(var, 0.0)), incumbent)
    total = float(ei.sum())
    if not np.isfinite(total) or total <= 0.0:
        warnings.warn("EI is zero over the whole design; using the uniform PMF",
                      RuntimeWarning)
        pmf = np.full(grid.shape[0], 1.0 / grid.shape[0])
    else:
        pmf = ei / total
    return MaxDistribution(grid, pmf, entropy_of(pmf), box)
