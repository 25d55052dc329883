"""End-to-end augmentation benchmark.

Per (seed, fold): optionally pretrain the encoder on training folds, train
one diffusion model per class on training folds only, synthesize subjects,
then train a downstream FC-feature classifier with and without the synthetic
data and evaluate both on the held-out fold. Cells are independent and may
run concurrently; results merge deterministically.
"""

import dataclasses
import hashlib
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import (Cohort, FoldSplit, ToyGenConfig, coupling_matrices,
                   generate_toy_cohort, preprocess, subject_kfold_split)
from .denoiser import DenoiserConfig
from .diffusion import TrainConfig
from .diffusion import sample_batch as diffusion_sample_batch
from .diffusion import train as diffusion_train
from .errors import ConfigError, ContractError, DimensionError
from .fc import pearson_fc, upper_triangle_features
from .pretrain import (GridPoint, PretrainConfig, pretrain_classifier,
                       transfer_weights)
from .rng import derive_seed, substream

_CSV_FMT = "%.9g"
ABLATIONS = ("full", "no_pretrain", "fc_level_synthesis")
CONDITIONS = ("without_synth", "with_synth")


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class ClassMetrics:
    acc: float
    sen: float | None
    spec: float | None
    f1: float | None


def classification_metrics(tp: int, tn: int, fp: int, fn: int) -> ClassMetrics:
    """acc/sen/spec/f1 from confusion counts; ratios with zero denominators
    are reported as absent (None), never as 0."""
    counts = (tp, tn, fp, fn)
    if any(c < 0 for c in counts):
        raise ContractError(f"negative confusion count: {counts}")
    total = sum(counts)
    if total == 0:
        raise ContractError("classification_metrics: empty confusion matrix")
    acc = (tp + tn) / total
    sen = tp / (tp + fn) if tp + fn else None
    spec = tn / (tn + fp) if tn + fp else None
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else None
    return ClassMetrics(acc, sen, spec, f1)


def confusion_counts(pred: np.ndarray, truth: np.ndarray) -> tuple:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"predictions {pred.shape} vs labels {truth.shape}")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    return tp, tn, fp, fn


# -- downstream classifier ----------------------------------------------------

@dataclass(frozen=True)
class DownstreamConfig:
    hidden: int = 64
    dropout: float = 0.1
    epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 16

    def __post_init__(self):
        if min(self.hidden, self.epochs, self.batch_size) < 1 or self.lr <= 0:
            raise ConfigError(f"downstream config out of range: {self}")
        if not 0.0 <= self.dropout < 1.0 or self.weight_decay < 0:
            raise ConfigError(f"downstream config out of range: {self}")


class DownstreamClassifier:
    """1-hidden-layer MLP on FC feature vectors."""

    def __init__(self, params: nn.ParameterSet, config: DownstreamConfig):
        self.params = params
        self.config = config

    def logits(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float32)
        if x.ndim != 2:
            raise DimensionError(f"features must be (n, n_features), got {x.shape}")
        with nn.no_grad():
            h = nn.gelu(nn.linear(nn.Tensor(x), self.params["w1"].value,
                                  self.params["b1"].value))
            out = nn.linear(h, self.params["w2"].value, self.params["b2"].value)
        return out.data

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.logits(features).argmax(axis=1)


def train_downstream(features: np.ndarray, labels: np.ndarray,
                     config: DownstreamConfig, seed: int) -> DownstreamClassifier:
    """Deterministic-in-seed MLP training on feature vectors."""
    x = np.asarray(features, dtype=np.float32)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"features {x.shape} vs labels {y.shape}")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ContractError(f"downstream training set has a single class: {classes}")
    if counts.min() < 2:
        raise ContractError(f"downstream training needs 2+ samples per class, "
                            f"got {dict(zip(classes.tolist(), counts.tolist()))}")
    n_features = x.shape[1]
    init_rng = substream(seed, "downstream-init")
    params = nn.ParameterSet()
    params.add("w1", nn.init_linear(init_rng, n_features, (n_features, config.hidden)))
    params.add("b1", nn.init_linear(init_rng, n_features, (config.hidden,)))
    params.add("w2", nn.init_linear(init_rng, config.hidden, (config.hidden, 2)))
    params.add("b2", nn.init_linear(init_rng, config.hidden, (2,)))
    opt = nn.AdamState(lr=config.lr, weight_decay=config.weight_decay)
    rng = substream(seed, "downstream-train")
    for _ in range(config.epochs):
        order = rng.permutation(x.shape[0])
        for lo in range(0, x.shape[0], config.batch_size):
            idx = order[lo:lo + config.batch_size]
            h = nn.gelu(nn.linear(nn.Tensor(x[idx]), params["w1"].value,
                                  params["b1"].value))
            if config.dropout > 0:
                h = nn.dropout(h, config.dropout, rng)
            logits = nn.linear(h, params["w2"].value, params["b2"].value)
            loss = nn.cross_entropy(logits, y[idx])
            nn.gradient_of(loss, params)
            nn.adam_step(params, opt)
    return DownstreamClassifier(params, config)


# -- benchmark configuration ---------------------------------------------------

@dataclass(frozen=True)
class DenoiserShape:
    """Denoiser size knobs; input_dim and seq_len come from the data."""
    n_layers: int = 2
    d_model: int = 32
    n_heads: int = 4
    d_ff: int = 0
    dropout: float = 0.0

    def materialize(self, input_dim: int, seq_len: int) -> DenoiserConfig:
        return DenoiserConfig(input_dim=input_dim, seq_len=seq_len,
                              n_layers=self.n_layers, d_model=self.d_model,
                              n_heads=self.n_heads, d_ff=self.d_ff,
                              dropout=self.dropout)


@dataclass(frozen=True)
class BenchmarkConfig:
    k: int = 5
    seeds: int = 5
    augment_ratio: float = 1.0
    ablation: str = "full"
    seed: int = 0
    train: TrainConfig = dataclasses.field(
        default_factory=lambda: TrainConfig(epochs=60, T=200))
    pretrain: PretrainConfig = dataclasses.field(
        default_factory=lambda: PretrainConfig(
            grid=(GridPoint(3e-4, 1e-4, 15, 0.0),), inner_folds=2))
    downstream: DownstreamConfig = dataclasses.field(default_factory=DownstreamConfig)
    denoiser: DenoiserShape = dataclasses.field(default_factory=DenoiserShape)

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"benchmark needs k >= 2, got {self.k}")
        if self.seeds < 1:
            raise ConfigError(f"benchmark needs seeds >= 1, got {self.seeds}")
        if self.augment_ratio < 0:
            raise ConfigError(f"augment_ratio must be >= 0, got {self.augment_ratio}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")


@dataclass(frozen=True)
class Cell:
    seed_index: int
    fold: int
    condition: str
    metrics: ClassMetrics | None
    error: str | None = None


@dataclass(frozen=True)
class ProvenanceRecord:
    seed_index: int
    fold: int
    class_label: int
    subject_id: str
    checkpoint_hash: str
    train_fold_ids: tuple


@dataclass(frozen=True)
class BenchmarkReport:
    cells: tuple
    provenance: tuple
    split_hash: str
    ablation: str
    k: int
    seeds: int

    def aggregates(self) -> dict:
        """condition -> metric -> (mean, std, n) over non-absent cell values."""
        out = {}
        for cond in CONDITIONS:
            per_metric = {}
            for metric in ("acc", "sen", "spec", "f1"):
                vals = [getattr(c.metrics, metric) for c in self.cells
                        if c.condition == cond and c.metrics is not None
                        and getattr(c.metrics, metric) is not None]
                if vals:
                    arr = np.asarray(vals, dtype=np.float64)
                    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                    per_metric[metric] = (float(arr.mean()), std, int(arr.size))
                else:
                    per_metric[metric] = (None, None, 0)
            out[cond] = per_metric
        return out

    def paired_deltas(self) -> list:
        """(seed_index, fold, acc_with - acc_without) for complete cells."""
        by_key = {(c.seed_index, c.fold, c.condition): c for c in self.cells}
        deltas = []
        for si in range(self.seeds):
            for fold in range(self.k):
                with_c = by_key.get((si, fold, "with_synth"))
                without_c = by_key.get((si, fold, "without_synth"))
                if with_c and without_c and with_c.metrics and without_c.metrics:
                    deltas.append((si, fold, with_c.metrics.acc - without_c.metrics.acc))
        return deltas

    def mean_delta(self) -> float:
        deltas = [d for _, _, d in self.paired_deltas()]
        if not deltas:
            raise ContractError("no complete cell pairs to compare")
        return float(np.mean(deltas))


# -- the harness ---------------------------------------------------------------

def _subject_features(series: np.ndarray) -> np.ndarray:
    return upper_triangle_features(pearson_fc(preprocess(series))).astype(np.float32)


def _split_hash(splits: list) -> str:
    h = hashlib.sha256()
    for si, split in enumerate(splits):
        for fi, fold in enumerate(split.folds):
            h.update(f"{si}:{fi}:" .encode())
            h.update("|".join(sorted(fold)).encode())
            h.update(b";")
    return h.hexdigest()


def _synthesize(cohort: Cohort, train_sl, config: BenchmarkConfig,
                seed_index: int, fold: int) -> tuple:
    """Per-class diffusion training and sampling for one cell.

    Returns (synth feature rows, synth labels, provenance records).
    """
    fc_level = config.ablation == "fc_level_synthesis"
    if fc_level:
        feature_sl = train_sl.map_series(
            lambda s: _subject_features(s).reshape(1, -1))
        dcfg = config.denoiser.materialize(feature_sl.rois, 1)
        source_sl = feature_sl
    else:
        dcfg = config.denoiser.materialize(cohort.rois, cohort.length)
        source_sl = train_sl

    init_sets = {}
    if config.ablation == "full":
        presult = pretrain_classifier(
            train_sl, dcfg,
            dataclasses.replace(config.pretrain,
                                seed=derive_seed(config.seed, "bench", f"s{seed_index}",
                                                 f"f{fold}", "pretrain")))
        for label in source_sl.classes():
            params, _ = transfer_weights(
                presult, dcfg,
                seed=derive_seed(config.seed, "bench", f"s{seed_index}",
                                 f"f{fold}", f"transfer{label}"))
            init_sets[label] = params

    feats, labels, records = [], [], []
    for label in source_sl.classes():
        class_sl = source_sl.only_class(label)
        tcfg = dataclasses.replace(
            config.train,
            seed=derive_seed(config.seed, "bench", f"s{seed_index}", f"f{fold}",
                             f"diffusion{label}"),
            init_mode="pretrained" if label in init_sets else "random")
        model = diffusion_train(class_sl, dcfg, tcfg, init=init_sets.get(label))
        n_synth = int(round(config.augment_ratio * class_sl.n_subjects))
        if n_synth == 0:
            continue
        batch = diffusion_sample_batch(
            model, n_synth,
            derive_seed(config.seed, "bench", f"s{seed_index}", f"f{fold}",
                        f"sample{label}"))
        for j, arr in enumerate(batch.samples):
            sid = f"syn{label}_s{seed_index}_f{fold}_{j:03d}"
            feats.append(arr.reshape(-1).astype(np.float32) if fc_level
                         else _subject_features(arr))
            labels.append(label)
            records.append(ProvenanceRecord(seed_index, fold, label, sid,
                                            batch.checkpoint_hash,
                                            batch.train_fold_ids))
    return feats, labels, records


def _run_cell(cohort: Cohort, split: FoldSplit, config: BenchmarkConfig,
              seed_index: int, fold: int) -> tuple:
    train_sl = split.train_slice(cohort, fold)
    test_subjects = split.test_subjects(cohort, fold)
    x_real = np.stack([_subject_features(s.series) for s in train_sl.subjects])
    y_real = train_sl.labels()
    x_test = np.stack([_subject_features(s.series) for s in test_subjects])
    y_test = np.array([s.label for s in test_subjects], dtype=np.int64)

    if config.augment_ratio > 0:
        synth_feats, synth_labels, records = _synthesize(
            cohort, train_sl, config, seed_index, fold)
    else:
        synth_feats, synth_labels, records = [], [], []

    ds_seed = derive_seed(config.seed, "bench", f"s{seed_index}", f"f{fold}",
                          "downstream")
    cells = []
    for condition in CONDITIONS:
        if condition == "with_synth" and synth_feats:
            x = np.concatenate([x_real, np.stack(synth_feats)], axis=0)
            y = np.concatenate([y_real, np.asarray(synth_labels, dtype=np.int64)])
        else:
            x, y = x_real, y_real
        clf = train_downstream(x, y, config.downstream, ds_seed)
        metrics = classification_metrics(*confusion_counts(clf.predict(x_test), y_test))
        cells.append(Cell(seed_index, fold, condition, metrics))
    return cells, records


def run_benchmark(cohort: Cohort, config: BenchmarkConfig,
                  jobs: int = 1) -> BenchmarkReport:
    splits = [subject_kfold_split(cohort, config.k,
                                  derive_seed(config.seed, "bench", f"split{si}"))
              for si in range(config.seeds)]
    keys = [(si, fold) for si in range(config.seeds) for fold in range(config.k)]

    def run_key(key):
        si, fold = key
        try:
            return key, _run_cell(cohort, splits[si], config, si, fold)
        except Exception as exc:       # record the cell, keep the sweep alive
            reason = f"{type(exc).__name__}: {exc}"
            cells = [Cell(si, fold, cond, None, error=reason) for cond in CONDITIONS]
            return key, (cells, [])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(run_key, keys))
    else:
        results = dict(run_key(k) for k in keys)

    cells, provenance = [], []
    for key in keys:
        got_cells, got_records = results[key]
        cells.extend(got_cells)
        provenance.extend(got_records)
    return BenchmarkReport(tuple(cells), tuple(provenance), _split_hash(splits),
                           config.ablation, config.k, config.seeds)


def run_multisite(toy_config: ToyGenConfig, config: BenchmarkConfig,
                  n_sites: int, perturb: float = 0.1, jobs: int = 1) -> dict:
    """Site-shift mode: per site, perturb the VAR coupling matrices and run
    the full benchmark on that site's cohort."""
    if n_sites < 1:
        raise ConfigError(f"need at least 1 site, got {n_sites}")
    base = coupling_matrices(toy_config)
    reports = {}
    for site in range(n_sites):
        mats = []
        for c, mat in enumerate(base):
            noise = substream(toy_config.seed, "site", f"{site}",
                              f"class{c}").standard_normal(mat.shape)
            mats.append(mat + perturb * noise / np.sqrt(mat.shape[0]))
        site_cfg = dataclasses.replace(
            toy_config, a0=mats[0], a1=mats[1],
            seed=derive_seed(toy_config.seed, "site-cohort", f"{site}"))
        reports[site] = run_benchmark(generate_toy_cohort(site_cfg), config, jobs=jobs)
    return reports


# -- CSV emitters --------------------------------------------------------------

def _fmt(value) -> str:
    return "" if value is None else _CSV_FMT % value


def report_csv(report: BenchmarkReport) -> str:
    lines = ["seed,fold,condition,acc,sen,spec,f1,error"]
    for c in report.cells:
        m = c.metrics
        lines.append(",".join([
            str(c.seed_index), str(c.fold), c.condition,
            _fmt(m.acc if m else None), _fmt(m.sen if m else None),
            _fmt(m.spec if m else None), _fmt(m.f1 if m else None),
            (c.error or "").replace(",", ";"),
        ]))
    return "\n".join(lines) + "\n"


def summary_csv(report: BenchmarkReport) -> str:
    agg = report.aggregates()
    lines = ["condition,acc_mean,acc_std,sen_mean,sen_std,spec_mean,spec_std,"
             "f1_mean,f1_std,n_cells"]
    for cond in CONDITIONS:
        row = [cond]
        n = 0
        for metric in ("acc", "sen", "spec", "f1"):
            mean, std, count = agg[cond][metric]
            row += [_fmt(mean), _fmt(std)]
            n = max(n, count)
        row.append(str(n))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def deltas_csv(report: BenchmarkReport) -> str:
    lines = ["seed,fold,delta_acc"]
    for si, fold, delta in report.paired_deltas():
        lines.append(f"{si},{fold},{_CSV_FMT % delta}")
    return "\n".join(lines) + "\n"


def provenance_csv(report: BenchmarkReport) -> str:
    lines = ["seed,fold,class,subject_id,checkpoint_hash,train_fold_ids"]
    for r in report.provenance:
        folds = "|".join(str(f) for f in (r.train_fold_ids or ()))
        lines.append(f"{r.seed_index},{r.fold},{r.class_label},{r.subject_id},"
                     f"{r.checkpoint_hash},{folds}")
    return "\n".join(lines) + "\n"
