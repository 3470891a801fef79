"""Bandit-driven minibatch selection for training under label noise."""

from .bandits import (
    BatchSelection,
    Exp3State,
    FplState,
    PerturbationSpec,
    exp3_pmf,
    exp3_sample_batch,
    exp3_update,
    fpl_select_batch,
    fpl_update,
    geometric_resample,
    sample_perturbation,
)
from .config import ExperimentConfig, config_hash, parse_config
from .data import (
    Dataset,
    Instance,
    NoiseSpec,
    generate_blobs,
    inject_symmetric_noise,
    load_csv,
    read_noise_manifest,
    split,
    write_noise_manifest,
)
from .harness import RunResult, run_experiment, run_seed
from .metrics import (
    MetricConfig,
    PredictionHistory,
    active_bias_loss_weights,
    boltzmann_pmf,
    record_prediction,
    reward_from_weight,
    variance_weight,
)
from .trainer import (
    MlpModel,
    OptimizerState,
    TrainingDiverged,
    evaluate,
    forward,
    init_model,
    loss_and_grads,
    sgd_step,
)

__version__ = "0.1.0"
