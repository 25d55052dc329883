"""Shared fixtures: small cohorts and model configs reused across test modules."""
import numpy as np
import pytest

from tsdiff.data import Subject, Cohort, ToyGenConfig, generate_toy_cohort
from tsdiff.denoiser import DenoiserConfig


@pytest.fixture(scope="session")
def tiny_cohort():
    """24 subjects, 4 ROIs, 16 timepoints; enough for split and training contracts."""
    return generate_toy_cohort(ToyGenConfig(n_per_class=12, rois=4, length=16, seed=5))


@pytest.fixture(scope="session")
def tiny_denoiser_config():
    return DenoiserConfig(input_dim=4, seq_len=16, n_layers=1, d_model=16, n_heads=2)


@pytest.fixture()
def handmade_cohort():
    """Four fixed subjects with known series values for exact-output checks."""
    rng = np.random.default_rng(42)
    subjects = []
    for i in range(4):
        series = rng.normal(size=(8, 3)).astype(np.float32)
        subjects.append(Subject(f"s{i}", i % 2, series))
    return Cohort(tuple(subjects), roi_names=("roiA", "roiB", "roiC"))
