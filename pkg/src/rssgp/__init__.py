"""Bayesian optimization with an entropy-regularized sparse spectrum GP."""

from .acquisition import expected_improvement, maximize_acquisition
from .benchmarks import (OBJECTIVES, Objective, ackley2, get_objective,
                         hartmann6, simple_regret, sinc1)
from .boxes import SearchBox
from .driver import (BoIteration, BoTrace, ModelConfig, TrialResult, TrialSpec,
                     run_bo, run_trials)
from .full_gp import (Dataset, FullGpPosterior, IllConditionedModelError,
                      fit_full_gp, predict_full_gp)
from .gmd import (MaxDistribution, ParticleSet, SmcConfig, bin_maximizers,
                  entropy_of, full_gp_max_samples, gmd_ei_proxy,
                  gmd_full_gp_reference, gmd_smc, gmd_thompson,
                  thompson_max_samples, total_variation)
from .kernels import (KernelParams, SpectralBasis, approx_gram, approx_kernel,
                      feature_map, feature_matrix, sample_frequencies, se_gram,
                      se_kernel)
from .objective import OptStep, RssgpConfig, optimize_frequencies, rssgp_loss
from .ssgp import (SsgpGradient, SsgpPosterior, fit_ssgp, predict_ssgp,
                   sample_posterior_weights, ssgp_log_marginal,
                   ssgp_log_marginal_grad)

__version__ = "0.1.0"
