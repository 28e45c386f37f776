"""Data-driven twin of a semi-active shock absorber.

Simulate quarter-car obstacle runs, prepare the sensor data (scaling,
indexing, Gaussian augmentation, histogram oversampling), fit a small MLP
predicting the per-sample rod-displacement change, and score preparation
variants against each other.
"""

from .dataset import (
    DatasetError, PreparedDataset, RawDataset, RawRecord, ScalingState, apply_scaling,
    fit_scaling, invert_scaling, load_csv, save_csv, split_by_runs,
)
from .experiment import AblationReport, AblationSpec, RunConfig, dump_predictions, run_ablation
from .metrics import MetricReport, evaluate
from .mlp import MlpConfig, MlpModel, backward, forward, init_model, load_model, save_model, train
from .pipeline import (
    AugmentationConfig, IndexingConfig, OversamplingConfig, PipelineConfig, augment_gaussian,
    index_filter, oversample_histogram, run_pipeline,
)
from .plant import (
    PlantParams, RoadProfile, TestRunSpec, damping_coefficient, default_program,
    generate_program, simulate_run,
)

__version__ = "0.1.0"
