"""Neural networks whose per-weight penalty coefficients are tuned during training.

The public API re-exports the building blocks most callers need; the
submodules hold the rest.
"""

from .analysis import garson_importance, importance_entropy, js_divergence, mean_pairwise_js, sparsity_report
from .data import Dataset, SynthConfig, feature_r2, load_csv, split, standardize, synth_generate
from .ensemble import ModelSet, ensemble_predict, prediction_variance, r2_score
from .errors import ConfigurationError, DataError, NumericError, ReglearnError, SequencingError
from .experiment import Grid, grid_search, run_benchmark, trend_test
from .network import LayerSpec, Network, backward, forward, init_network, mlp_specs, mse_loss
from .regularizer import RegCoefficients, project, reg_gradient, reg_term
from .trainer import TrainConfig, counterfactual_gradient, lambda_step, train, train_linear, weight_step

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DataError", "Dataset", "Grid", "LayerSpec", "ModelSet", "Network",
    "NumericError", "RegCoefficients", "ReglearnError", "SequencingError", "SynthConfig", "TrainConfig",
    "backward", "counterfactual_gradient", "ensemble_predict", "feature_r2", "forward", "garson_importance",
    "grid_search", "importance_entropy", "init_network", "js_divergence", "lambda_step", "load_csv",
    "mean_pairwise_js", "mlp_specs", "mse_loss", "prediction_variance", "project", "r2_score",
    "reg_gradient", "reg_term", "run_benchmark", "sparsity_report", "split", "standardize",
    "synth_generate", "train", "train_linear", "trend_test", "weight_step",
]
