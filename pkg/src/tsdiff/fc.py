"""Functional connectivity: Pearson correlation matrices over ROI time
series and flat feature vectors for downstream classification."""

import warnings
from dataclasses import dataclass

import numpy as np

from .data import ConstantRoiWarning
from .errors import ContractError, DimensionError

_CONST_TOL = 1e-12
_CSV_FMT = "%.12g"


@dataclass(frozen=True)
class FCMatrix:
    values: np.ndarray            # (R, R), symmetric, unit diagonal
    roi_names: tuple
    constant_rois: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).copy()
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise DimensionError(f"FC matrix must be square, got {vals.shape}")
        if len(self.roi_names) != vals.shape[0]:
            raise DimensionError(
                f"{len(self.roi_names)} ROI names for {vals.shape[0]} rows")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "roi_names", tuple(self.roi_names))
        object.__setattr__(self, "constant_rois", tuple(self.constant_rois))

    @property
    def rois(self) -> int:
        return self.values.shape[0]


def pearson_fc(series: np.ndarray, roi_names=None) -> FCMatrix:
    """Pairwise Pearson correlation of ROI columns.

    Constant ROIs correlate 0 with everything (diagonal stays 1) and raise
    ConstantRoiWarning rather than producing NaNs.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise DimensionError(f"pearson_fc: expected (timepoints, rois), got {series.shape}")
    length, rois = series.shape
    if length < 3:
        raise ContractError(f"pearson_fc: need at least 3 timepoints, got {length}")
    if roi_names is None:
        roi_names = tuple(f"roi_{j}" for j in range(rois))
    centered = series - series.mean(axis=0)
    cov = centered.T @ centered
    norms = np.sqrt(np.diag(cov))
    scale = np.maximum(1.0, np.abs(series).max(axis=0))
    constant = norms < _CONST_TOL * scale
    if constant.any():
        idx = np.flatnonzero(constant)
        warnings.warn(f"{idx.size} constant ROI(s) zero-correlated: {idx.tolist()}",
                      ConstantRoiWarning, stacklevel=2)
    safe = np.where(constant, 1.0, norms)
    corr = cov / np.outer(safe, safe)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return FCMatrix(corr, tuple(roi_names), tuple(np.flatnonzero(constant).tolist()))


def upper_triangle_features(fc: FCMatrix) -> np.ndarray:
    """Strict upper triangle in row-major order: (0,1), (0,2), ..., (R-2,R-1)."""
    i, j = np.triu_indices(fc.rois, k=1)
    return fc.values[i, j].copy()


def matrix_from_features(features: np.ndarray, rois: int) -> np.ndarray:
    """Inverse of upper_triangle_features under symmetry and unit diagonal."""
    features = np.asarray(features, dtype=np.float64)
    expected = rois * (rois - 1) // 2
    if features.shape != (expected,):
        raise DimensionError(
            f"expected {expected} features for {rois} ROIs, got {features.shape}")
    out = np.eye(rois)
    i, j = np.triu_indices(rois, k=1)
    out[i, j] = features
    out[j, i] = features
    return out


def fisher_z(values: np.ndarray, clip: float = 1.0 - 1e-7) -> np.ndarray:
    """arctanh transform of correlation values, clipped away from the poles."""
    values = np.asarray(values, dtype=np.float64)
    return np.arctanh(np.clip(values, -clip, clip))


def fc_csv(fc: FCMatrix) -> str:
    """R x R matrix with ROI names as header row and first column."""
    lines = ["," + ",".join(fc.roi_names)]
    for name, row in zip(fc.roi_names, fc.values):
        lines.append(name + "," + ",".join(_CSV_FMT % v for v in row))
    return "\n".join(lines) + "\n"
