"""Privacy-induced utility loss, decomposed into representation displacement,
spectral effective dimension and a probe-versus-end-to-end utilization gap."""

__version__ = "0.1.0"

from .accountant import calibrate_sigma, compose, epsilon, rdp_subsampled_gaussian, rdp_to_eps
from .dp_optimizer import PrivacySpec, TrainConfig, clip, dp_step, poisson_sample, train_nonprivate, train_private
from .evaluation import auroc, macro_auroc, probe_predict, train_probe, utilization_gap
from .geometry import covariance_summary, displacement, effective_dimension
from .model import ModelConfig, Params, embed_batch, forward, init_params, per_sample_gradient, pos_weights, sample_loss
from .stats import BootstrapResult, bootstrap, paired_bootstrap, rank_with_ties, spearman
from .synthdata import Dataset, SynthConfig, generate
