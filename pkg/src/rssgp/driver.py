"""The Bayesian optimization loop and multi-trial experiment runner.

Each iteration (re)optimizes the model where applicable, maximizes expected
improvement over the box, evaluates the objective at the suggestion, and
appends the observation. Minimization objectives are negated internally so
the loop always maximizes; regret is reported in the objective's native
sense. An ill-conditioned exact-GP fit is recorded and replaced by the prior
for that iteration rather than aborting the run.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import maximize_acquisition
from .benchmarks import Objective, simple_regret
from .full_gp import Dataset, IllConditionedModelError, fit_full_gp
from .kernels import KernelParams, sample_frequencies
from .objective import RssgpConfig, optimize_frequencies
from .ssgp import fit_ssgp

__all__ = ["BoIteration", "BoTrace", "ModelConfig", "TrialSpec", "TrialResult",
           "run_bo", "run_trials", "MODEL_KINDS"]

MODEL_KINDS = ("full_gp", "ssgp", "rssgp")


@dataclass(frozen=True)
class BoIteration:
    index: int
    x: np.ndarray
    y: float                 # observed value, native sense
    incumbent: float         # best observed value so far, native sense
    regret: float
    entropy: float           # GMD entropy at the accepted basis (NaN if unused)
    seconds: float


@dataclass
class BoTrace:
    iterations: list[BoIteration] = field(default_factory=list)
    failed_fits: list[int] = field(default_factory=list)

    def regrets(self) -> np.ndarray:
        return np.array([it.regret for it in self.iterations])

    def incumbents(self) -> np.ndarray:
        return np.array([it.incumbent for it in self.iterations])


@dataclass(frozen=True)
class ModelConfig:
    """Per-arm model configuration."""

    params: KernelParams
    frequencies: int = 20
    rssgp: RssgpConfig = field(default_factory=RssgpConfig)
    acquisition_budget: int | None = None   # defaults to 500 * d
    noisy_observations: bool = False
    redraw_basis: bool = False               # fresh spectral draw every iteration


def run_bo(objective: Objective, model_kind: str, init_data: Dataset,
           iterations: int, model_cfg: ModelConfig,
           rng: np.random.Generator) -> BoTrace:
    """Run one BO trial; ``init_data`` holds native-sense observations."""
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
    if init_data.t == 0:
        raise ValueError("init_data must be nonempty")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    box = objective.box
    params = model_cfg.params
    sign = 1.0 if objective.sense == "max" else -1.0
    init_data.check_box(box)
    data = Dataset(init_data.inputs, sign * init_data.targets)

    budget = model_cfg.acquisition_budget or 500 * box.dim
    basis = None
    if model_kind in ("ssgp", "rssgp"):
        basis = sample_frequencies(params, model_cfg.frequencies, rng)
    cfg = model_cfg.rssgp
    if model_kind == "ssgp" and cfg.entropy_weight != 0.0:
        cfg = replace(cfg, entropy_weight=0.0)

    trace = BoTrace()
    fit_params = params
    for index in range(1, iterations + 1):
        start = time.perf_counter()
        entropy = float("nan")
        if model_kind == "full_gp":
            try:
                model = fit_full_gp(data, params)
            except IllConditionedModelError:
                trace.failed_fits.append(index)
                model = fit_full_gp(Dataset.empty(data.dim), params)
        else:
            if model_cfg.redraw_basis:
                basis = sample_frequencies(params, model_cfg.frequencies, rng)
            basis, fit_params, opt_trace = optimize_frequencies(
                data, basis, params, cfg, box, rng)
            if opt_trace and cfg.entropy_weight > 0.0:
                entropy = max(opt_trace, key=lambda s: s.loss).entropy
            model = fit_ssgp(data, basis, fit_params)

        best_g = float(np.max(data.targets))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            x_next, _ = maximize_acquisition(model, box, best_g, budget)
        y_native = objective.evaluate(x_next)
        if model_cfg.noisy_observations:
            y_native += rng.normal(0.0, np.sqrt(params.noise_variance))
        data = data.append(x_next, sign * y_native)

        best_native = sign * float(np.max(data.targets))
        regret = simple_regret(best_native, objective)
        trace.iterations.append(BoIteration(
            index, np.asarray(x_next, dtype=float), float(y_native),
            best_native, regret, entropy, time.perf_counter() - start))
    return trace


@dataclass(frozen=True)
class TrialSpec:
    objective: Objective
    model_kind: str
    init_points: int
    iterations: int
    model: ModelConfig


@dataclass
class TrialResult:
    traces: list[BoTrace | None]
    mean_regret: np.ndarray
    stderr: np.ndarray
    failed_trials: list[int]
    seeds: list[list[int]]


def _run_single(spec: TrialSpec, seed_words: list[int]) -> BoTrace:
    rng = np.random.default_rng(np.random.SeedSequence(seed_words))
    X = spec.objective.box.sample(rng, spec.init_points)
    y = np.array([spec.objective.evaluate(x) for x in X])
    if spec.model.noisy_observations:
        y = y + rng.normal(0.0, np.sqrt(spec.model.params.noise_variance), y.shape)
    init = Dataset(X, y)
    return run_bo(spec.objective, spec.model_kind, init, spec.iterations,
                  spec.model, rng)


def run_trials(spec: TrialSpec, trials: int, base_seed: int,
               workers: int = 1) -> TrialResult:
    """Independent seeded trials with per-iteration mean regret and standard
    error.

    Trial seeds are fixed functions of (base_seed, trial index), so results
    do not depend on the worker count. Failing trials are recorded and
    excluded from the aggregate as long as fewer than 10% fail; otherwise the
    whole run is an error. With a single trial the standard error is NaN.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = [[int(base_seed), i] for i in range(trials)]
    traces: list[BoTrace | None] = [None] * trials
    failed: list[int] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(_run_single, spec, seeds[i])
                       for i in range(trials)}
            for i, fut in futures.items():
                try:
                    traces[i] = fut.result()
                except Exception as exc:  # noqa: BLE001 - trial isolation
                    warnings.warn(f"trial {i} failed: {exc}", RuntimeWarning)
                    failed.append(i)
    else:
        for i in range(trials):
            try:
                traces[i] = _run_single(spec, seeds[i])
            except Exception as exc:  # noqa: BLE001 - trial isolation
                warnings.warn(f"trial {i} failed: {exc}", RuntimeWarning)
                failed.append(i)
    if len(failed) >= 0.1 * trials:
        raise RuntimeError(f"{len(failed)}/{trials} trials failed")
    regret = np.stack([t.regrets() for t in traces if t is not None])
    n_ok = regret.shape[0]
    mean = regret.mean(axis=0)
    if n_ok >= 2:
        stderr = regret.std(axis=0, ddof=1) / np.sqrt(n_ok)
    else:
        stderr = np.full(regret.shape[1], np.nan)
    return TrialResult(traces, mean, stderr, sorted(failed), seeds)
