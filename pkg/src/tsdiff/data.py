"""Cohorts of ROI time series: ingestion, normalization, toy generation,
and subject-level fold splitting with capability-token leakage guards.

A cohort directory holds one line-based manifest ("subject_id,label,csv_path"
per line) and one CSV per subject (header row of ROI names, then L rows of R
values). All writers are byte-deterministic.
"""

import os
import re
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, IngestionError
from .rng import substream

MANIFEST_NAME = "manifest.csv"
SERIES_DIR = "subjects"
_FLOAT_FMT = "%.9g"     # shortest format that round-trips float32 exactly
_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")
_CONST_TOL = 1e-9
_RADIUS_CAP = 0.95
_RADIUS_TARGET = 0.9


class ConstantRoiWarning(UserWarning):
    """A ROI carried no signal and was zeroed (or zero-correlated)."""


@dataclass(frozen=True)
class Subject:
    subject_id: str
    label: int
    series: np.ndarray

    def __post_init__(self):
        if not _ID_PATTERN.match(self.subject_id):
            raise ContractError(
                f"subject id {self.subject_id!r} has characters outside [A-Za-z0-9_.-]")
        if self.label not in (0, 1):
            raise ContractError(f"subject {self.subject_id}: label must be 0 or 1, got {self.label}")
        arr = np.asarray(self.series)
        if arr.ndim != 2:
            raise DimensionError(
                f"subject {self.subject_id}: series must be (timepoints, rois), got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "series", arr)


@dataclass(frozen=True)
class Cohort:
    subjects: tuple
    roi_names: tuple = ()

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise ConfigError("cohort needs at least one subject")
        shape = subjects[0].series.shape
        for s in subjects:
            if s.series.shape != shape:
                raise DimensionError(
                    f"subject {s.subject_id}: shape {s.series.shape} differs from {shape}")
        ids = [s.subject_id for s in subjects]
        if len(set(ids)) != len(ids):
            dup = sorted(i for i in set(ids) if ids.count(i) > 1)[0]
            raise ContractError(f"duplicate subject id {dup!r}")
        roi_names = tuple(self.roi_names) or tuple(f"roi_{j}" for j in range(shape[1]))
        if len(roi_names) != shape[1]:
            raise DimensionError(
                f"{len(roi_names)} ROI names for {shape[1]} ROI columns")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "roi_names", roi_names)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def length(self) -> int:
        return self.subjects[0].series.shape[0]

    @property
    def rois(self) -> int:
        return self.subjects[0].series.shape[1]

    @property
    def subject_ids(self) -> tuple:
        return tuple(s.subject_id for s in self.subjects)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=np.int64)

    def class_counts(self) -> dict:
        counts = {}
        for s in self.subjects:
            counts[s.label] = counts.get(s.label, 0) + 1
        return counts

    def series_stack(self) -> np.ndarray:
        return np.stack([s.series for s in self.subjects])


# -- preprocessing ------------------------------------------------------------

def preprocess(series: np.ndarray) -> np.ndarray:
    """Per-ROI linear detrend followed by per-ROI z-score (sample std).

    A ROI left (near-)constant by detrending becomes a zero vector and
    raises ConstantRoiWarning instead of an error.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise DimensionError(f"preprocess: expected (timepoints, rois), got {series.shape}")
    length = series.shape[0]
    if length < 3:
        raise ContractError(f"preprocess: need at least 3 timepoints, got {length}")
    t = np.arange(length, dtype=np.float64)
    design = np.stack([t, np.ones(length)], axis=1)
    coef, *_ = np.linalg.lstsq(design, series, rcond=None)
    resid = series - design @ coef
    scale = np.maximum(1.0, np.abs(series).max(axis=0))
    std = resid.std(axis=0, ddof=1)
    constant = std < _CONST_TOL * scale
    if constant.any():
        idx = np.flatnonzero(constant)
        warnings.warn(f"{idx.size} constant ROI(s) zeroed: {idx.tolist()}",
                      ConstantRoiWarning, stacklevel=2)
    out = np.zeros_like(resid)
    ok = ~constant
    out[:, ok] = (resid[:, ok] - resid[:, ok].mean(axis=0)) / std[ok]
    return out


# -- cohort files -------------------------------------------------------------

def save_cohort(cohort: Cohort, outdir) -> str:
    outdir = str(outdir)
    series_dir = os.path.join(outdir, SERIES_DIR)
    os.makedirs(series_dir, exist_ok=True)
    header = ",".join(cohort.roi_names)
    lines = []
    for s in cohort.subjects:
        rel = f"{SERIES_DIR}/{s.subject_id}.csv"
        rows = [header]
        for row in np.asarray(s.series, dtype=np.float32):
            rows.append(",".join(_FLOAT_FMT % v for v in row))
        with open(os.path.join(outdir, rel), "w", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")
        lines.append(f"{s.subject_id},{s.label},{rel}")
    manifest = os.path.join(outdir, MANIFEST_NAME)
    with open(manifest, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def _load_series(path: str, roi_names_seen: list) -> np.ndarray:
    try:
        with open(path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise IngestionError(f"{path}: cannot read series file: {exc}") from exc
    rows = [(i + 1, line) for i, line in enumerate(raw) if line.strip()]
    if len(rows) < 2:
        raise IngestionError(f"{path}:1: need a header row plus at least one data row")
    names = tuple(c.strip() for c in rows[0][1].split(","))
    if roi_names_seen:
        if names != roi_names_seen[0]:
            raise IngestionError(f"{path}:1: ROI header differs from first subject's")
    else:
        roi_names_seen.append(names)
    rois = len(names)
    data = np.empty((len(rows) - 1, rois), dtype=np.float64)
    for k, (lineno, line) in enumerate(rows[1:]):
        cells = line.split(",")
        if len(cells) != rois:
            raise IngestionError(f"{path}:{lineno}: expected {rois} values, got {len(cells)}")
        try:
            data[k] = [float(c) for c in cells]
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
    return data.astype(np.float32)


def load_cohort(manifest_path) -> Cohort:
    manifest_path = str(manifest_path)
    try:
        with open(manifest_path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise IngestionError(f"{manifest_path}: cannot read manifest: {exc}") from exc
    base = os.path.dirname(manifest_path)
    subjects = []
    seen = set()
    roi_names_seen: list = []
    for lineno, line in enumerate(raw, start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise IngestionError(
                f"{manifest_path}:{lineno}: expected 'subject_id,label,csv_path'")
        sid, label_text, rel = parts
        if label_text not in ("0", "1"):
            raise IngestionError(
                f"{manifest_path}:{lineno}: unknown label {label_text!r} (expected 0 or 1)")
        if sid in seen:
            raise IngestionError(f"{manifest_path}:{lineno}: duplicate subject id {sid!r}")
        seen.add(sid)
        series = _load_series(os.path.join(base, rel), roi_names_seen)
        subjects.append(Subject(sid, int(label_text), series))
    if not subjects:
        raise IngestionError(f"{manifest_path}: manifest lists no subjects")
    return Cohort(tuple(subjects), roi_names_seen[0])


# -- toy cohort ---------------------------------------------------------------

def _cap_radius(m: np.ndarray) -> np.ndarray:
    radius = float(np.abs(np.linalg.eigvals(m)).max())
    if radius >= _RADIUS_CAP:
        m = m * (_RADIUS_TARGET / radius)
    return m


@dataclass(frozen=True)
class ToyGenConfig:
    n_per_class: int
    rois: int = 8
    length: int = 64
    innovation_scale: float = 1.0
    seed: int = 0
    burn_in: int = 100
    a0: np.ndarray | None = None
    a1: np.ndarray | None = None

    def __post_init__(self):
        if min(self.n_per_class, self.rois, self.length) < 1 or self.burn_in < 0:
            raise ConfigError(f"toy config: sizes must be positive: {self}")
        if self.length < 3:
            raise ConfigError("toy config: length must be at least 3 for preprocessing")
        if self.innovation_scale <= 0:
            raise ConfigError("toy config: innovation scale must be positive")
        for name in ("a0", "a1"):
            mat = getattr(self, name)
            if mat is None:
                continue
            mat = np.asarray(mat, dtype=np.float64)
            if mat.shape != (self.rois, self.rois):
                raise DimensionError(
                    f"toy config: {name} must be ({self.rois}, {self.rois}), got {mat.shape}")
            object.__setattr__(self, name, _cap_radius(mat))


def _default_coupling(rng: np.random.Generator, rois: int) -> np.ndarray:
    m = 0.5 * np.eye(rois) + 0.35 * rng.standard_normal((rois, rois)) / np.sqrt(rois)
    return _cap_radius(m)


def coupling_matrices(config: ToyGenConfig) -> tuple:
    """The per-class VAR coefficient matrices actually used for a config."""
    mats = []
    for c, given in enumerate((config.a0, config.a1)):
        if given is not None:
            mats.append(np.asarray(given, dtype=np.float64))
        else:
            mats.append(_default_coupling(
                substream(config.seed, "toy-var", f"class{c}"), config.rois))
    return tuple(mats)


def generate_toy_cohort(config: ToyGenConfig) -> Cohort:
    """Class-conditional VAR(1) cohort: x_t = A_c x_{t-1} + eta_t, burned in
    from zeros, then detrended and z-scored per ROI."""
    mats = coupling_matrices(config)
    subjects = []
    for c, coupling in enumerate(mats):
        for i in range(config.n_per_class):
            rng = substream(config.seed, "toy-sim", f"class{c}", f"subject{i}")
            x = np.zeros(config.rois)
            rows = np.empty((config.length, config.rois))
            for step in range(config.burn_in + config.length):
                x = coupling @ x + config.innovation_scale * rng.standard_normal(config.rois)
                if step >= config.burn_in:
                    rows[step - config.burn_in] = x
            series = preprocess(rows).astype(np.float32)
            subjects.append(Subject(f"c{c}_s{i:04d}", c, series))
    return Cohort(tuple(subjects))


# -- fold splitting with leakage tokens ---------------------------------------

_ISSUE_TOKEN = object()


class TrainingSlice:
    """Training-folds-only view of a cohort.

    Instances are only issued by FoldSplit.train_slice and
    whole_cohort_slice, so holding one proves no held-out subject is
    reachable through it.
    """

    __slots__ = ("subjects", "test_fold", "train_fold_ids")

    def __init__(self, subjects, test_fold, train_fold_ids, *, _token=None):
        if _token is not _ISSUE_TOKEN:
            raise ContractError(
                "training slices are issued by FoldSplit.train_slice or "
                "whole_cohort_slice, not constructed directly")
        object.__setattr__(self, "subjects", tuple(subjects))
        object.__setattr__(self, "test_fold", test_fold)
        object.__setattr__(self, "train_fold_ids", train_fold_ids)

    def __setattr__(self, name, value):
        raise ContractError("training slices are read-only once issued")

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def length(self) -> int:
        return self.subjects[0].series.shape[0]

    @property
    def rois(self) -> int:
        return self.subjects[0].series.shape[1]

    @property
    def subject_ids(self) -> tuple:
        return tuple(s.subject_id for s in self.subjects)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=np.int64)

    def classes(self) -> tuple:
        return tuple(sorted({s.label for s in self.subjects}))

    def series_stack(self) -> np.ndarray:
        return np.stack([s.series for s in self.subjects])

    def only_class(self, label: int) -> "TrainingSlice":
        kept = tuple(s for s in self.subjects if s.label == label)
        if not kept:
            raise ConfigError(f"training slice has no subjects with label {label}")
        return TrainingSlice(kept, self.test_fold, self.train_fold_ids,
                             _token=_ISSUE_TOKEN)

    def map_series(self, fn) -> "TrainingSlice":
        """Derived slice with fn applied to each subject's series; ids, labels,
        and the fold token carry over, so no new subjects can enter."""
        mapped = tuple(Subject(s.subject_id, s.label, fn(s.series))
                       for s in self.subjects)
        return TrainingSlice(mapped, self.test_fold, self.train_fold_ids,
                             _token=_ISSUE_TOKEN)


def whole_cohort_slice(cohort: Cohort) -> TrainingSlice:
    """Training slice over the full cohort for runs without a held-out fold."""
    return TrainingSlice(cohort.subjects, None, None, _token=_ISSUE_TOKEN)


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple          # tuple of frozensets of subject ids
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def _check(self, cohort: Cohort, fold: int):
        if not 0 <= fold < self.k:
            raise ConfigError(f"fold {fold} out of range for k={self.k}")
        all_ids = frozenset().union(*self.folds)
        if all_ids != frozenset(cohort.subject_ids):
            raise ContractError("fold split does not cover this cohort's subjects")

    def train_slice(self, cohort: Cohort, fold: int) -> TrainingSlice:
        """All subjects outside the held-out fold, as a capability slice."""
        self._check(cohort, fold)
        held = self.folds[fold]
        kept = tuple(s for s in cohort.subjects if s.subject_id not in held)
        train_ids = tuple(i for i in range(self.k) if i != fold)
        return TrainingSlice(kept, fold, train_ids, _token=_ISSUE_TOKEN)

    def test_subjects(self, cohort: Cohort, fold: int) -> tuple:
        self._check(cohort, fold)
        held = self.folds[fold]
        return tuple(s for s in cohort.subjects if s.subject_id in held)


def stratified_deal(ids_by_label: dict, k: int, rng: np.random.Generator) -> list:
    """Deal ids into k groups, label-stratified, one global round-robin cursor
    so group sizes and per-label counts each differ by at most one."""
    folds = [[] for _ in range(k)]
    cursor = 0
    for label in sorted(ids_by_label):
        ids = sorted(ids_by_label[label])
        order = rng.permutation(len(ids))
        for j in order:
            folds[cursor % k].append(ids[j])
            cursor += 1
    return folds


def subject_kfold_split(cohort: Cohort, k: int, seed: int) -> FoldSplit:
    """Label-stratified k-fold partition of subjects, deterministic in seed."""
    if k < 2:
        raise ConfigError(f"k-fold split needs k >= 2, got {k}")
    if k > cohort.n_subjects:
        raise ConfigError(f"k={k} exceeds {cohort.n_subjects} subjects")
    by_label: dict = {}
    for s in cohort.subjects:
        by_label.setdefault(s.label, []).append(s.subject_id)
    folds = stratified_deal(by_label, k, substream(seed, "kfold"))
    return FoldSplit(tuple(frozenset(f) for f in folds), seed)
