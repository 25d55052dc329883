"""Distributional similarity between real and synthetic cohorts: pooled
1-D metrics (KL, Wasserstein-1, KS) per class and a 2-D PCA projection of
per-timepoint ROI vectors."""

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import rel_entr

from .errors import ContractError, DimensionError

_CSV_FMT = "%.12g"


def _series_label_pairs(source) -> list:
    """Normalize cohort-like inputs to [(series (L, R), label), ...].

    Accepts anything with .subjects (cohorts, training slices), an object
    with .samples and .class_label (sample batches), or an iterable whose
    items are themselves such objects or (array, label) pairs.
    """
    if hasattr(source, "subjects"):
        return [(np.asarray(s.series), s.label) for s in source.subjects]
    if hasattr(source, "samples") and hasattr(source, "class_label"):
        return [(np.asarray(arr), source.class_label) for arr in source.samples]
    pairs = []
    for item in source:
        if hasattr(item, "subjects") or hasattr(item, "samples"):
            pairs.extend(_series_label_pairs(item))
        else:
            arr, label = item
            pairs.append((np.asarray(arr), int(label)))
    return pairs


def pooled_values(source, label=None) -> np.ndarray:
    """Flatten every subject's values (all timepoints, all ROIs) into one
    1-D sample, optionally restricted to one class."""
    pairs = _series_label_pairs(source)
    if label is not None:
        pairs = [(arr, lab) for arr, lab in pairs if lab == label]
    if not pairs:
        raise ContractError(
            "pooled_values: empty slice" + (f" for label {label}" if label is not None else ""))
    return np.concatenate([arr.reshape(-1) for arr, _ in pairs]).astype(np.float64)


def pooled_kl(real: np.ndarray, synth: np.ndarray, bins: int = 100,
              eps: float = 1e-10) -> float:
    """Histogram KL(real || synth) on shared bin edges with additive
    smoothing eps, renormalized."""
    real = np.asarray(real, dtype=np.float64).reshape(-1)
    synth = np.asarray(synth, dtype=np.float64).reshape(-1)
    if real.size == 0 or synth.size == 0:
        raise ContractError("pooled_kl: empty sample")
    if bins < 2:
        raise ContractError(f"pooled_kl: need at least 2 bins, got {bins}")
    lo = min(real.min(), synth.min())
    hi = max(real.max(), synth.max())
    if not hi > lo:
        raise ContractError("pooled_kl: zero-width value range")
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(real, bins=edges)[0].astype(np.float64) / real.size
    q = np.histogram(synth, bins=edges)[0].astype(np.float64) / synth.size
    p = (p + eps) / (p + eps).sum()
    q = (q + eps) / (q + eps).sum()
    return float(rel_entr(p, q).sum())


def pooled_wasserstein(real: np.ndarray, synth: np.ndarray) -> float:
    """Empirical 1-D Wasserstein-1 distance (quantile coupling)."""
    real = np.asarray(real, dtype=np.float64).reshape(-1)
    synth = np.asarray(synth, dtype=np.float64).reshape(-1)
    if real.size == 0 or synth.size == 0:
        raise ContractError("pooled_wasserstein: empty sample")
    return float(stats.wasserstein_distance(real, synth))


def pooled_ks(real: np.ndarray, synth: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |ECDF_a - ECDF_b|."""
    real = np.asarray(real, dtype=np.float64).reshape(-1)
    synth = np.asarray(synth, dtype=np.float64).reshape(-1)
    if real.size == 0 or synth.size == 0:
        raise ContractError("pooled_ks: empty sample")
    return float(stats.ks_2samp(real, synth, method="asymp").statistic)


@dataclass(frozen=True)
class ClassFidelity:
    kl: float
    wd: float
    ks: float
    n_real: int
    n_synth: int


@dataclass(frozen=True)
class FidelityReport:
    per_class: dict               # label -> ClassFidelity
    bins: int
    eps: float


def fidelity_report(real_source, synth_source, bins: int = 100,
                    eps: float = 1e-10) -> FidelityReport:
    real_pairs = _series_label_pairs(real_source)
    synth_pairs = _series_label_pairs(synth_source)
    labels = sorted({lab for _, lab in real_pairs} & {lab for _, lab in synth_pairs})
    if not labels:
        raise ContractError("fidelity_report: no class present in both sources")
    per_class = {}
    for lab in labels:
        real = pooled_values(real_pairs, lab)
        synth = pooled_values(synth_pairs, lab)
        per_class[lab] = ClassFidelity(
            kl=pooled_kl(real, synth, bins=bins, eps=eps),
            wd=pooled_wasserstein(real, synth),
            ks=pooled_ks(real, synth),
            n_real=int(real.size),
            n_synth=int(synth.size),
        )
    return FidelityReport(per_class, bins, eps)


def fidelity_csv(report: FidelityReport) -> str:
    lines = ["class,kl,wd,ks,n_real,n_synth"]
    for lab in sorted(report.per_class):
        m = report.per_class[lab]
        lines.append(f"{lab},{_CSV_FMT % m.kl},{_CSV_FMT % m.wd},"
                     f"{_CSV_FMT % m.ks},{m.n_real},{m.n_synth}")
    return "\n".join(lines) + "\n"


# -- 2-D PCA projection -------------------------------------------------------

@dataclass(frozen=True)
class Projection2D:
    coords: np.ndarray            # (N, 2)
    source: tuple                 # "real" / "synthetic" per point
    labels: np.ndarray            # class per point
    explained: tuple              # variance fractions (pc1, pc2)


def _timepoint_cloud(pairs) -> tuple:
    points = []
    labels = []
    for arr, lab in pairs:
        if arr.ndim != 2:
            raise DimensionError(f"projection input series must be 2-D, got {arr.shape}")
        points.append(np.asarray(arr, dtype=np.float64))
        labels.extend([lab] * arr.shape[0])
    return np.concatenate(points, axis=0), np.array(labels, dtype=np.int64)


def pca_project(real_source, synth_source) -> Projection2D:
    """Project every timepoint's ROI vector (real and synthetic together)
    onto the top-2 principal directions of the combined cloud.

    Component signs are fixed by making each direction's largest-magnitude
    loading positive.
    """
    real_pts, real_labs = _timepoint_cloud(_series_label_pairs(real_source))
    synth_pts, synth_labs = _timepoint_cloud(_series_label_pairs(synth_source))
    if real_pts.shape[1] != synth_pts.shape[1]:
        raise DimensionError(
            f"ROI counts differ: {real_pts.shape[1]} vs {synth_pts.shape[1]}")
    if real_pts.shape[1] < 2:
        raise ContractError("pca_project: need at least 2 ROIs")
    cloud = np.concatenate([real_pts, synth_pts], axis=0)
    if cloud.shape[0] < 3:
        raise ContractError("pca_project: need at least 3 combined points")
    centered = cloud - cloud.mean(axis=0)
    cov = centered.T @ centered / (cloud.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    top = eigvecs[:, order[:2]]
    if eigvals[0] <= 0:
        raise ContractError("pca_project: point cloud has no variance")
    for c in range(2):
        lead = np.argmax(np.abs(top[:, c]))
        if top[lead, c] < 0:
            top[:, c] = -top[:, c]
    coords = centered @ top
    total = float(eigvals.sum())
    explained = (float(eigvals[0] / total), float(max(eigvals[1], 0.0) / total))
    source = ("real",) * real_pts.shape[0] + ("synthetic",) * synth_pts.shape[0]
    return Projection2D(coords, source, np.concatenate([real_labs, synth_labs]), explained)


def projection_csv(proj: Projection2D) -> str:
    lines = [
        "# explained_variance: pc1=%s,pc2=%s" % (_CSV_FMT % proj.explained[0],
                                                 _CSV_FMT % proj.explained[1]),
        "pc1,pc2,source,class",
    ]
    for (x, y), src, lab in zip(proj.coords, proj.source, proj.labels):
        lines.append(f"{_CSV_FMT % x},{_CSV_FMT % y},{src},{lab}")
    return "\n".join(lines) + "\n"
