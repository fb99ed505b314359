"""Bayesian neural network regression by probabilistic backpropagation.

Per-weight Gaussian posteriors are maintained by assumed density filtering:
probabilities propagate forward through the network, gradients of the marginal
likelihood propagate back, and each observation refines every weight's mean
and variance in closed form. Gamma posteriors track the observation-noise and
weight-prior precisions, and stored approximate prior factors get one
expectation-propagation refresh per data pass.
"""

from .active import ActiveConfig, acquire_next, run_active_experiment
from .data import (
    DataError,
    Dataset,
    NormStats,
    load_csv,
    load_model,
    normalize,
    save_model,
    split,
)
from .forward import (
    ForwardTrace,
    MomentVector,
    append_bias,
    forward_linear,
    forward_output_moments,
    forward_output_moments_batch,
    relu_moments,
)
from .posterior import (
    GammaDist,
    GaussianScalar,
    LayerPosterior,
    NetworkPosterior,
    PbpConfig,
    new_uniform,
    perturb_means,
)
from .prediction import (
    PredictiveGaussian,
    TrainedModel,
    noise_floor,
    predict,
    predict_batch,
    rmse,
    test_log_likelihood,
)
from .training import SkipRateError, TrainReport, train
from .updates import (
    GradientStore,
    LogZTriple,
    NegativeVarianceError,
    PriorSiteStore,
    backward_gradients,
    ep_refresh_prior,
    gamma_refine,
    gaussian_refine,
    incorporate_likelihood_factor,
    incorporate_prior_factor,
    log_z_likelihood,
    log_z_prior_factor,
)

__version__ = "0.1.0"
