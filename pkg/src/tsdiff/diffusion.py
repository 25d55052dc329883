"""DDPM training (noise-prediction objective) and ancestral sampling for
per-class time-series generation.

One model generates one class. Training requires a TrainingSlice so held-out
subjects are unreachable by construction, and every sample batch carries the
generating checkpoint's hash plus the training-fold ids as provenance.
"""

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import TrainingSlice
from .denoiser import Denoiser, DenoiserConfig, denoiser_schema, init_from_schema
from .errors import (CheckpointError, ConfigError, ContractError,
                     DimensionError, NumericError)
from .nn.checkpoint import checkpoint_hash, deserialize, serialize
from .rng import substream
from .schedule import NoiseSchedule, cosine_schedule, forward_diffuse

_META_KEY = "_meta"
VARIANCE_MODES = ("beta", "posterior")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-3
    T: int = 1000
    seed: int = 0
    init_mode: str = "random"

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.T) < 1:
            raise ConfigError(f"train config: epochs, batch_size, T must be positive: {self}")
        if self.lr <= 0:
            raise ConfigError(f"train config: lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"train config: weight_decay must be non-negative")
        if self.init_mode not in ("random", "pretrained"):
            raise ConfigError(f"train config: init_mode must be random or pretrained, "
                              f"got {self.init_mode!r}")


class DiffusionModel:
    """A trained (or in-training) per-class generator."""

    def __init__(self, schedule: NoiseSchedule, denoiser: Denoiser,
                 train_config: TrainConfig, class_label: int,
                 train_fold_ids=None):
        self.schedule = schedule
        self.denoiser = denoiser
        self.train_config = train_config
        self.class_label = class_label
        self.train_fold_ids = train_fold_ids
        self.loss_history: tuple = ()

    @property
    def config(self) -> DenoiserConfig:
        return self.denoiser.cfg

    def weights_hash(self) -> str:
        return checkpoint_hash(self.denoiser.params.as_arrays())


def train_step(batch: np.ndarray, model: DiffusionModel,
               opt_state: nn.AdamState, rng: np.random.Generator) -> float:
    """One noise-prediction step: per-element t ~ U{1..T}, eps ~ N(0, I),
    MSE between eps and the denoiser's prediction, one Adam update."""
    batch = np.asarray(batch)
    if batch.ndim != 3:
        raise DimensionError(f"train_step: expected (batch, L, R), got {batch.shape}")
    t = rng.integers(1, model.schedule.T + 1, size=batch.shape[0])
    eps = rng.standard_normal(batch.shape).astype(batch.dtype)
    x_t = forward_diffuse(batch, t, eps, model.schedule)
    pred = model.denoiser.forward(nn.Tensor(x_t), t, train=True, rng=rng)
    loss = nn.mse(pred, nn.Tensor(eps))
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericError(f"train step {opt_state.t_opt + 1}: non-finite loss")
    nn.gradient_of(loss, model.denoiser.params)
    nn.adam_step(model.denoiser.params, opt_state)
    return value


def _clone_params(source: nn.ParameterSet) -> nn.ParameterSet:
    out = nn.ParameterSet()
    for p in source:
        out.add(p.name, p.value.data.copy())
    return out


def train(cohort_slice: TrainingSlice, denoiser_config: DenoiserConfig,
          train_config: TrainConfig, init: nn.ParameterSet | None = None,
          schedule: NoiseSchedule | None = None,
          log_path=None) -> DiffusionModel:
    """Full training run on one class's training-fold subjects.

    ``init`` supplies a complete denoiser ParameterSet (the weight-transfer
    product) and is required when init_mode is "pretrained".
    """
    if not isinstance(cohort_slice, TrainingSlice):
        raise ContractError("diffusion training requires a TrainingSlice issued "
                            "by the fold splitter")
    if cohort_slice.n_subjects == 0:
        raise ConfigError("diffusion training on an empty slice")
    classes = cohort_slice.classes()
    if len(classes) != 1:
        raise ContractError(f"per-class models: slice mixes classes {classes}; "
                            "filter with only_class first")
    label = classes[0]
    if cohort_slice.length != denoiser_config.seq_len or \
            cohort_slice.rois != denoiser_config.input_dim:
        raise DimensionError(
            f"slice is ({cohort_slice.length}, {cohort_slice.rois}) but denoiser expects "
            f"({denoiser_config.seq_len}, {denoiser_config.input_dim})")

    if train_config.init_mode == "pretrained":
        if init is None:
            raise ConfigError("init_mode=pretrained needs transferred weights")
        params = _clone_params(init)
    elif init is not None:
        params = _clone_params(init)
    else:
        params = init_from_schema(
            denoiser_schema(denoiser_config),
            substream(train_config.seed, "diffusion-init", f"class{label}"))
    model = DiffusionModel(schedule or cosine_schedule(train_config.T),
                           Denoiser(denoiser_config, params),
                           train_config, label, cohort_slice.train_fold_ids)
    if model.schedule.T != train_config.T:
        raise ConfigError(f"schedule has T={model.schedule.T}, config says {train_config.T}")

    data = cohort_slice.series_stack().astype(np.float32)
    rng = substream(train_config.seed, "diffusion-train", f"class{label}")
    opt = nn.AdamState(lr=train_config.lr, weight_decay=train_config.weight_decay)
    start = time.perf_counter()
    history = []
    log_rows = ["epoch,mean_loss,wall_seconds"]
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(data.shape[0])
        losses = []
        for lo in range(0, data.shape[0], train_config.batch_size):
            losses.append(train_step(data[order[lo:lo + train_config.batch_size]],
                                     model, opt, rng))
        mean_loss = float(np.mean(losses))
        history.append(mean_loss)
        log_rows.append("%d,%.9g,%.3f" % (epoch, mean_loss, time.perf_counter() - start))
    model.loss_history = tuple(history)
    if log_path is not None:
        with open(log_path, "w", newline="\n") as fh:
            fh.write("\n".join(log_rows) + "\n")
    return model


# -- sampling -----------------------------------------------------------------

def ancestral_sample(predict, schedule: NoiseSchedule, shape,
                     rng: np.random.Generator, variance: str = "beta",
                     dtype=np.float32) -> np.ndarray:
    """Reverse the diffusion chain from pure noise.

    ``predict(x, t) -> eps_hat`` is any noise predictor; x_{t-1} =
    (x_t - ((1-alpha_t)/sqrt(1-alpha_bar_t)) eps_hat) / sqrt(alpha_t)
    + sigma_t z, with z = 0 on the final step.
    """
    if variance not in VARIANCE_MODES:
        raise ConfigError(f"variance must be one of {VARIANCE_MODES}, got {variance!r}")
    x = rng.standard_normal(shape).astype(dtype)
    for t in range(schedule.T, 0, -1):
        eps_hat = np.asarray(predict(x, t), dtype=dtype)
        if eps_hat.shape != x.shape:
            raise DimensionError(
                f"predictor returned {eps_hat.shape} for input {x.shape}")
        alpha_t = float(schedule.alphas[t - 1])
        ab_t = float(schedule.alpha_bars[t - 1])
        coef = (1.0 - alpha_t) / math.sqrt(1.0 - ab_t)
        x = (x - coef * eps_hat) / math.sqrt(alpha_t)
        if t > 1:
            if variance == "beta":
                sigma = math.sqrt(float(schedule.betas[t - 1]))
            else:
                sigma = math.sqrt(schedule.posterior_variance(t))
            x = x + sigma * rng.standard_normal(shape).astype(dtype)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"sampling diverged at step {t}")
    return x


@dataclass(frozen=True)
class SampleBatch:
    samples: np.ndarray           # (n, L, R)
    class_label: int
    checkpoint_hash: str
    train_fold_ids: tuple | None
    seed: int
    variance: str


def sample(model: DiffusionModel, n: int, seed: int,
           variance: str = "beta") -> np.ndarray:
    """n ancestral draws of shape (n, L, R), deterministic in seed."""
    if n < 1:
        raise ConfigError(f"sample count must be positive, got {n}")
    rng = substream(seed, "diffusion-sample", f"class{model.class_label}")
    shape = (n, model.config.seq_len, model.config.input_dim)
    return ancestral_sample(model.denoiser.denoise, model.schedule, shape,
                            rng, variance=variance)


def sample_batch(model: DiffusionModel, n: int, seed: int,
                 variance: str = "beta") -> SampleBatch:
    """Sampling plus provenance: who generated this, trained on which folds."""
    return SampleBatch(sample(model, n, seed, variance=variance),
                       model.class_label, model.weights_hash(),
                       model.train_fold_ids, seed, variance)


# -- persistence --------------------------------------------------------------

def _meta_to_array(meta: dict) -> np.ndarray:
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.float32)


def _meta_from_array(arr: np.ndarray) -> dict:
    return json.loads(arr.astype(np.uint8).tobytes().decode("utf-8"))


def save_model(model: DiffusionModel, path) -> str:
    """Single-file checkpoint: named weight tensors plus a config record
    (stored under the reserved name "_meta"). Returns the file's sha256."""
    tensors = model.denoiser.params.as_arrays()
    meta = {
        "class_label": model.class_label,
        "denoiser": dataclasses.asdict(model.denoiser.cfg),
        "train": dataclasses.asdict(model.train_config),
        "train_fold_ids": list(model.train_fold_ids) if model.train_fold_ids else None,
        "schedule_T": model.schedule.T,
    }
    tensors[_META_KEY] = _meta_to_array(meta)
    blob = serialize(tensors)
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


def load_model(path) -> DiffusionModel:
    with open(path, "rb") as fh:
        tensors = deserialize(fh.read())
    if _META_KEY not in tensors:
        raise CheckpointError(f"{path}: missing model config record")
    meta = _meta_from_array(tensors.pop(_META_KEY))
    cfg = DenoiserConfig(**meta["denoiser"])
    tcfg = TrainConfig(**meta["train"])
    params = nn.ParameterSet()
    for name, shape, _ in denoiser_schema(cfg):
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name}")
        arr = tensors.pop(name)
        if arr.shape != tuple(shape):
            raise CheckpointError(
                f"{path}: tensor {name} has shape {arr.shape}, expected {tuple(shape)}")
        params.add(name, arr)
    if tensors:
        raise CheckpointError(f"{path}: unexpected tensors {sorted(tensors)}")
    return DiffusionModel(cosine_schedule(meta["schedule_T"]), Denoiser(cfg, params),
                          tcfg, int(meta["class_label"]),
                          tuple(meta["train_fold_ids"]) if meta["train_fold_ids"] else None)
