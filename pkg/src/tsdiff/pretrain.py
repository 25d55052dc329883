"""Supervised pretraining of the temporal encoder on class discrimination,
hyperparameter selection by inner k-fold CV, and weight transfer into the
denoiser (encoder tensors copied by name, denoiser-only tensors fresh)."""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import TrainingSlice, stratified_deal
from .denoiser import (DenoiserConfig, classifier_schema, denoiser_schema,
                       encoder_forward, encoder_schema, init_from_schema)
from .errors import ConfigError, ContractError
from .rng import substream

_CSV_FMT = "%.9g"


@dataclass(frozen=True)
class GridPoint:
    lr: float
    weight_decay: float
    epochs: int
    dropout: float

    def __post_init__(self):
        if self.lr <= 0 or self.weight_decay < 0 or self.epochs < 1:
            raise ConfigError(f"grid point out of range: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"grid point dropout must lie in [0, 1): {self}")


def default_grid() -> tuple:
    return tuple(GridPoint(lr, wd, epochs, dropout)
                 for lr in (1e-4, 3e-4)
                 for wd in (1e-3, 1e-4)
                 for epochs in (50, 100)
                 for dropout in (0.0, 0.1))


@dataclass(frozen=True)
class PretrainConfig:
    grid: tuple = ()              # () means default_grid()
    inner_folds: int = 5
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.grid:
            object.__setattr__(self, "grid", default_grid())
        if self.inner_folds < 2:
            raise ConfigError(f"inner_folds must be at least 2, got {self.inner_folds}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")


def classifier_forward(x: nn.Tensor, params: nn.ParameterSet, cfg: DenoiserConfig,
                       train: bool = False, rng=None) -> nn.Tensor:
    """Encoder, mean pooling over tokens, linear head; returns (B, 2) logits."""
    h = encoder_forward(x, params, cfg, train=train, rng=rng)
    pooled = nn.tmean(h, axis=1)
    return nn.linear(pooled, params["head.weight"].value, params["head.bias"].value)


def predict_proba(params: nn.ParameterSet, cfg: DenoiserConfig,
                  series: np.ndarray) -> np.ndarray:
    with nn.no_grad():
        logits = classifier_forward(nn.Tensor(np.asarray(series, dtype=np.float32)),
                                    params, cfg)
        return nn.softmax(logits, axis=-1).data


def classify(params: nn.ParameterSet, cfg: DenoiserConfig,
             series: np.ndarray) -> np.ndarray:
    return predict_proba(params, cfg, series).argmax(axis=1)


def _train_classifier(x: np.ndarray, y: np.ndarray, cfg: DenoiserConfig,
                      point: GridPoint, batch_size: int,
                      init_rng, train_rng) -> tuple:
    cfg = dataclasses.replace(cfg, dropout=point.dropout)
    params = init_from_schema(classifier_schema(cfg), init_rng)
    opt = nn.AdamState(lr=point.lr, weight_decay=point.weight_decay)
    labels = np.asarray(y, dtype=np.int64)
    for _ in range(point.epochs):
        order = train_rng.permutation(x.shape[0])
        for lo in range(0, x.shape[0], batch_size):
            idx = order[lo:lo + batch_size]
            logits = classifier_forward(nn.Tensor(x[idx]), params, cfg,
                                        train=True, rng=train_rng)
            loss = nn.cross_entropy(logits, labels[idx])
            nn.gradient_of(loss, params)
            nn.adam_step(params, opt)
    return params, cfg


def _accuracy(params, cfg, x, y) -> float:
    return float((classify(params, cfg, x) == np.asarray(y)).mean())


@dataclass(frozen=True)
class CVRow:
    grid_index: int
    point: GridPoint
    fold: int
    val_acc: float


@dataclass(frozen=True)
class PretrainResult:
    classifier_params: nn.ParameterSet
    config: DenoiserConfig        # with the winning dropout applied
    selected: GridPoint
    grid_index: int
    mean_val_acc: float
    cv_rows: tuple

    def encoder_arrays(self) -> dict:
        names = {name for name, _, _ in encoder_schema(self.config)}
        return {name: arr for name, arr in self.classifier_params.as_arrays().items()
                if name in names}


def select_winner(cv_rows) -> int:
    """Winning grid index from CV rows alone: best mean validation accuracy,
    ties broken by lower lr, then lower weight_decay."""
    rows = list(cv_rows)
    if not rows:
        raise ConfigError("select_winner: empty CV report")
    by_grid: dict = {}
    for row in rows:
        by_grid.setdefault(row.grid_index, []).append(row)
    ranked = sorted(
        by_grid.items(),
        key=lambda kv: (-float(np.mean([r.val_acc for r in kv[1]])),
                        kv[1][0].point.lr, kv[1][0].point.weight_decay, kv[0]))
    return ranked[0][0]


def pretrain_classifier(cohort_slice: TrainingSlice, denoiser_config: DenoiserConfig,
                        config: PretrainConfig) -> PretrainResult:
    """Grid search under inner stratified k-fold CV on training subjects only,
    then retrain on the full slice with the winner."""
    if not isinstance(cohort_slice, TrainingSlice):
        raise ContractError("pretraining requires a TrainingSlice issued by the fold splitter")
    if len(cohort_slice.classes()) < 2:
        raise ContractError(
            f"pretraining needs both classes, slice has {cohort_slice.classes()}")
    if config.inner_folds > cohort_slice.n_subjects:
        raise ConfigError(f"inner_folds={config.inner_folds} exceeds "
                          f"{cohort_slice.n_subjects} subjects")
    subjects = cohort_slice.subjects
    index_of = {s.subject_id: i for i, s in enumerate(subjects)}
    by_label: dict = {}
    for s in subjects:
        by_label.setdefault(s.label, []).append(s.subject_id)
    folds = stratified_deal(by_label, config.inner_folds,
                            substream(config.seed, "pretrain-innerfold"))
    fold_idx = [np.array(sorted(index_of[i] for i in fold), dtype=np.int64)
                for fold in folds]
    x_all = cohort_slice.series_stack().astype(np.float32)
    y_all = cohort_slice.labels()

    rows = []
    for gi, point in enumerate(config.grid):
        for j in range(config.inner_folds):
            val = fold_idx[j]
            tr = np.concatenate([fold_idx[m] for m in range(config.inner_folds) if m != j])
            params, cfg = _train_classifier(
                x_all[tr], y_all[tr], denoiser_config, point, config.batch_size,
                substream(config.seed, "pretrain-init", f"grid{gi}", f"fold{j}"),
                substream(config.seed, "pretrain-train", f"grid{gi}", f"fold{j}"))
            rows.append(CVRow(gi, point, j, _accuracy(params, cfg, x_all[val], y_all[val])))

    winner = select_winner(rows)
    point = config.grid[winner]
    params, cfg = _train_classifier(
        x_all, y_all, denoiser_config, point, config.batch_size,
        substream(config.seed, "pretrain-init", f"grid{winner}", "full"),
        substream(config.seed, "pretrain-train", f"grid{winner}", "full"))
    mean_acc = float(np.mean([r.val_acc for r in rows if r.grid_index == winner]))
    return PretrainResult(params, cfg, point, winner, mean_acc, tuple(rows))


def cv_report_csv(result: PretrainResult) -> str:
    lines = ["grid_point_id,lr,weight_decay,epochs,dropout,fold,val_acc"]
    for r in result.cv_rows:
        lines.append(f"{r.grid_index},{_CSV_FMT % r.point.lr},"
                     f"{_CSV_FMT % r.point.weight_decay},{r.point.epochs},"
                     f"{_CSV_FMT % r.point.dropout},{r.fold},{_CSV_FMT % r.val_acc}")
    p = result.selected
    lines.append(f"{result.grid_index},{_CSV_FMT % p.lr},{_CSV_FMT % p.weight_decay},"
                 f"{p.epochs},{_CSV_FMT % p.dropout},winner,{_CSV_FMT % result.mean_val_acc}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TransferReport:
    transferred: int
    fresh: int
    transferred_names: tuple


ZERO_GRAFT_NAMES = ("time_mlp.w2.weight", "time_mlp.w2.bias",
                    "output_proj.weight", "output_proj.bias")


def transfer_weights(source, denoiser_config: DenoiserConfig,
                     seed: int = 0) -> tuple:
    """Build a denoiser ParameterSet from pretrained encoder tensors.

    ``source`` is a PretrainResult or a name->array mapping. Returns
    (params, TransferReport). Shape mismatches name the offending tensor.

    The grafted tensors the encoder never had (timestep MLP, output
    projection) get their final layers zero-initialized, so at step 0 the
    model predicts zero noise and the transferred features pass through
    undisturbed; the new pathways grow in from the first updates instead of
    injecting random signals into the trunk that pretraining shaped.
    """
    arrays = source.encoder_arrays() if isinstance(source, PretrainResult) else dict(source)
    encoder_names = [name for name, _, _ in encoder_schema(denoiser_config)]
    rng = substream(seed, "transfer-fresh")
    params = nn.ParameterSet()
    transferred = []
    fresh = 0
    fresh_set = init_from_schema(denoiser_schema(denoiser_config), rng)
    for name in ZERO_GRAFT_NAMES:
        fresh_set[name].value.data[...] = 0.0
    for name, shape, _ in denoiser_schema(denoiser_config):
        if name in encoder_names:
            if name not in arrays:
                raise ContractError(f"transfer: source is missing encoder tensor {name}")
            arr = np.asarray(arrays[name])
            if arr.shape != tuple(shape):
                raise ContractError(
                    f"transfer: {name} has shape {arr.shape}, denoiser expects {tuple(shape)}")
            params.add(name, arr.copy())
            transferred.append(name)
        else:
            params.add(name, fresh_set[name].value.data)
            fresh += 1
    return params, TransferReport(len(transferred), fresh, tuple(transferred))
