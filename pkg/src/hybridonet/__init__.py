"""Remaining-useful-life prediction for lithium-ion cells.

Pipeline: per-cycle signal statistics -> 10-of-30 cycle windows ->
LSTM/attention/NODE feature extractor with dual predictor heads,
trainable head trade-offs, and an MMD alignment loss between a labeled
source stream and the target stream.
"""

from .cycle_data import (
    CellRecord,
    CycleSeries,
    DataError,
    LifeLabel,
    SynthParams,
    compute_cycle_life,
    compute_rul_labels,
    generate_synthetic_cell,
    load_cell,
    write_cell,
)
from .preprocess import (
    SampleWindow,
    ScalerParams,
    build_sample_windows,
    extract_features,
    fit_minmax_scaler,
    median_filter,
    transform_features,
)
from .model import HybridoModel, ModelConfig, init_model, predict_rul
from .losses import LossBreakdown, lambda_schedule, mmd_loss, mse_loss, total_loss
from .trainer import (
    Ensemble,
    RunReport,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    split_train_val,
    train_ensemble,
    train_run,
)
from .evaluate import (
    EvalReport,
    compute_metrics,
    evaluate_cells,
    export_embeddings,
    export_traces,
    mape_standard,
)

__version__ = "0.1.0"
