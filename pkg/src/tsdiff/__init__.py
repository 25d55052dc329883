"""Diffusion-based synthesis of multivariate ROI time series.

A numpy/scipy library covering: a small reverse-mode autodiff engine, the
cosine-schedule DDPM with a temporal-transformer denoiser, supervised
encoder pretraining with weight transfer, functional-connectivity features,
distributional fidelity metrics, and a leakage-guarded augmentation
benchmark. See the ``tsdiff`` CLI for end-to-end runs.
"""

from .augbench import (BenchmarkConfig, BenchmarkReport, DownstreamConfig,
                       classification_metrics, run_benchmark, run_multisite,
                       train_downstream)
from .data import (Cohort, FoldSplit, Subject, ToyGenConfig, TrainingSlice,
                   generate_toy_cohort, load_cohort, preprocess, save_cohort,
                   subject_kfold_split, whole_cohort_slice)
from .denoiser import Denoiser, DenoiserConfig, temporal_encoding
from .diffusion import (DiffusionModel, TrainConfig, ancestral_sample,
                        load_model, sample, sample_batch, save_model, train)
from .errors import (CheckpointError, ConfigError, ContractError,
                     DimensionError, IngestionError, NumericError,
                     StepIndexError, TsdiffError, UsageError)
from .fc import FCMatrix, fisher_z, pearson_fc, upper_triangle_features
from .fidelity import (fidelity_report, pca_project, pooled_kl, pooled_ks,
                       pooled_values, pooled_wasserstein)
from .pretrain import (GridPoint, PretrainConfig, pretrain_classifier,
                       transfer_weights)
from .schedule import (NoiseSchedule, cosine_schedule, forward_diffuse,
                       single_step_diffuse)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkConfig", "BenchmarkReport", "CheckpointError", "Cohort",
    "ConfigError", "ContractError", "Denoiser", "DenoiserConfig",
    "DiffusionModel", "DimensionError", "DownstreamConfig", "FCMatrix",
    "FoldSplit", "GridPoint", "IngestionError", "NoiseSchedule",
    "NumericError", "PretrainConfig", "StepIndexError", "Subject",
    "ToyGenConfig", "TrainConfig", "TrainingSlice", "TsdiffError",
    "UsageError", "ancestral_sample", "classification_metrics",
    "cosine_schedule", "fidelity_report", "fisher_z", "forward_diffuse",
    "generate_toy_cohort", "load_cohort", "load_model", "pca_project",
    "pearson_fc", "pooled_kl", "pooled_ks", "pooled_values",
    "pooled_wasserstein", "preprocess", "pretrain_classifier",
    "run_benchmark", "run_multisite", "sample", "sample_batch",
    "save_cohort", "save_model", "single_step_diffuse",
    "subject_kfold_split", "temporal_encoding", "train", "train_downstream",
    "transfer_weights", "upper_triangle_features", "whole_cohort_slice",
]
