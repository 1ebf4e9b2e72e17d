from .errors import (
    FreqRegError, ConfigError, ShapeError, DomainError, NonFiniteError, TapeError,
    IdxFormatError, PpmFormatError, EmptyDatasetError, CheckpointError,
    FrequencyMismatchError, TrainingDivergedError,
)
from .config import validate_environment, get_output_dir, get_data_dir, get_parallelism, get_fs
from .io import load_state, save_state, save_json, load_json, save_csv, load_csv
from .frequency import FrequencyConfig, high_freq, augment, METHODS
from .complexity import ComplexityScore, png_code_length, complexity
from .datasets import Dataset, Manifest, load_manifest, load_idx, load_idx_labels, load_ppm_dir, synth_ood
from .models import ModelConfig, InputSpec, TrainConfig, build_model, save_model, load_model, train
from .scoring import ScoreRecord, score_nll, score_ic, score_frl, score_dataset, threshold_classify
from .metrics import auroc, histogram, throughput, ssim, recon_metrics
from .experiment import ExperimentConfig, load_config
from .orchestrator import DAG
from .testing import validate
from . import debug

__all__ = [
    # Errors
    'FreqRegError', 'ConfigError', 'ShapeError', 'DomainError', 'NonFiniteError', 'TapeError',
    'IdxFormatError', 'PpmFormatError', 'EmptyDatasetError', 'CheckpointError',
    'FrequencyMismatchError', 'TrainingDivergedError',
    # Config & I/O
    'validate_environment', 'get_output_dir', 'get_data_dir', 'get_parallelism', 'get_fs',
    'load_state', 'save_state', 'save_json', 'load_json', 'save_csv', 'load_csv',
    # Frequency & complexity
    'FrequencyConfig', 'high_freq', 'augment', 'METHODS',
    'ComplexityScore', 'png_code_length', 'complexity',
    # Data
    'Dataset', 'Manifest', 'load_manifest', 'load_idx', 'load_idx_labels', 'load_ppm_dir', 'synth_ood',
    # Models
    'ModelConfig', 'InputSpec', 'TrainConfig', 'build_model', 'save_model', 'load_model', 'train',
    # Scoring & metrics
    'ScoreRecord', 'score_nll', 'score_ic', 'score_frl', 'score_dataset', 'threshold_classify',
    'auroc', 'histogram', 'throughput', 'ssim', 'recon_metrics',
    # Experiments
    'ExperimentConfig', 'load_config', 'DAG',
    # Other
    'validate', 'debug',
]
