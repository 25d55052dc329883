"""Temporal transformer noise predictor.

Each timepoint of an (L, R) sequence is one token; self-attention runs along
the time axis. The same encoder stack doubles as the backbone of the
supervised pretraining classifier, so its parameter names form a shared
schema that weight transfer walks by name.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, DimensionError, StepIndexError
from .nn.params import ParameterSet, init_linear
from .rng import substream


@dataclass(frozen=True)
class DenoiserConfig:
    input_dim: int
    seq_len: int
    n_layers: int = 6
    d_model: int = 256
    n_heads: int = 8
    d_ff: int = 0          # 0 means the 4 * d_model default
    dropout: float = 0.0
    pre_norm: bool = True

    def __post_init__(self):
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        if min(self.input_dim, self.seq_len, self.n_layers,
               self.d_model, self.n_heads, self.d_ff) <= 0:
            raise ConfigError(f"denoiser: all dimensions must be positive: {self}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"denoiser: d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"denoiser: dropout must lie in [0, 1), got {self.dropout}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


def sinusoid_rows(positions: np.ndarray, d: int) -> np.ndarray:
    """Fixed sinusoidal code: sin(p / 10000^(2i/D)) in even columns,
    cos of the same argument in odd columns."""
    if d % 2:
        raise ConfigError(f"sinusoidal encoding needs an even dimension, got {d}")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    i = np.arange(d // 2, dtype=np.float64)
    angles = positions / np.power(10000.0, 2.0 * i / d)
    enc = np.empty((positions.shape[0], d))
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles)
    return enc


def temporal_encoding(length: int, d: int) -> np.ndarray:
    """(L, D) position code for token indices 0..L-1."""
    if length < 1:
        raise ConfigError(f"temporal encoding needs length >= 1, got {length}")
    return sinusoid_rows(np.arange(length), d)


# -- parameter schema ---------------------------------------------------------

def encoder_schema(cfg: DenoiserConfig):
    """(name, shape, fan_in) for the transferable encoder stack.

    fan_in None marks layer-norm affine pairs (gamma init 1, beta init 0).
    """
    d, f = cfg.d_model, cfg.d_ff
    entries = [
        ("input_proj.weight", (cfg.input_dim, d), cfg.input_dim),
        ("input_proj.bias", (d,), cfg.input_dim),
    ]
    for i in range(cfg.n_layers):
        base = f"layers.{i}"
        entries += [
            (f"{base}.norm1.gamma", (d,), None),
            (f"{base}.norm1.beta", (d,), None),
        ]
        for proj in ("wq", "wk", "wv", "wo"):
            entries += [
                (f"{base}.attn.{proj}.weight", (d, d), d),
                (f"{base}.attn.{proj}.bias", (d,), d),
            ]
        entries += [
            (f"{base}.norm2.gamma", (d,), None),
            (f"{base}.norm2.beta", (d,), None),
            (f"{base}.ff.w1.weight", (d, f), d),
            (f"{base}.ff.w1.bias", (f,), d),
            (f"{base}.ff.w2.weight", (f, d), f),
            (f"{base}.ff.w2.bias", (d,), f),
        ]
    return entries


def denoiser_schema(cfg: DenoiserConfig):
    d = cfg.d_model
    return encoder_schema(cfg) + [
        ("time_mlp.w1.weight", (d, d), d),
        ("time_mlp.w1.bias", (d,), d),
        ("time_mlp.w2.weight", (d, d), d),
        ("time_mlp.w2.bias", (d,), d),
        ("output_proj.weight", (d, cfg.input_dim), d),
        ("output_proj.bias", (cfg.input_dim,), d),
    ]


def classifier_schema(cfg: DenoiserConfig, n_classes: int = 2):
    d = cfg.d_model
    return encoder_schema(cfg) + [
        ("head.weight", (d, n_classes), d),
        ("head.bias", (n_classes,), d),
    ]


def init_from_schema(schema, rng: np.random.Generator, dtype=np.float32) -> ParameterSet:
    params = ParameterSet()
    for name, shape, fan_in in schema:
        if fan_in is None:
            arr = (np.ones(shape, dtype=dtype) if name.endswith("gamma")
                   else np.zeros(shape, dtype=dtype))
        else:
            arr = init_linear(rng, fan_in, shape, dtype=dtype)
        params.add(name, arr)
    return params


# -- forward passes -----------------------------------------------------------

def _split_heads(t: nn.Tensor, n_heads: int) -> nn.Tensor:
    b, l, d = t.shape
    t = nn.reshape(t, (b, l, n_heads, d // n_heads))
    return nn.transpose(t, (0, 2, 1, 3))


def _merge_heads(t: nn.Tensor) -> nn.Tensor:
    b, h, l, dh = t.shape
    t = nn.transpose(t, (0, 2, 1, 3))
    return nn.reshape(t, (b, l, h * dh))


def attention(q: nn.Tensor, k: nn.Tensor, v: nn.Tensor,
              capture: list | None = None) -> nn.Tensor:
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"attention: Q/K feature dims differ, {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention: K/V row counts differ, {k.shape} vs {v.shape}")
    d_k = q.shape[-1]
    scores = nn.scale(nn.matmul(q, nn.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
                      1.0 / math.sqrt(d_k))
    weights = nn.softmax(scores, axis=-1)
    if capture is not None:
        capture.append(weights.data.copy())
    return nn.matmul(weights, v)


def _layer_forward(h: nn.Tensor, params: ParameterSet, base: str, cfg: DenoiserConfig,
                   train: bool, rng, capture) -> nn.Tensor:
    def p(name):
        return params[f"{base}.{name}"].value

    a = nn.layer_norm(h, p("norm1.gamma"), p("norm1.beta"))
    q = _split_heads(nn.linear(a, p("attn.wq.weight"), p("attn.wq.bias")), cfg.n_heads)
    k = _split_heads(nn.linear(a, p("attn.wk.weight"), p("attn.wk.bias")), cfg.n_heads)
    v = _split_heads(nn.linear(a, p("attn.wv.weight"), p("attn.wv.bias")), cfg.n_heads)
    attn_out = _merge_heads(attention(q, k, v, capture=capture))
    attn_out = nn.linear(attn_out, p("attn.wo.weight"), p("attn.wo.bias"))
    if train and cfg.dropout > 0:
        attn_out = nn.dropout(attn_out, cfg.dropout, rng)
    h = nn.add(h, attn_out)

    f = nn.layer_norm(h, p("norm2.gamma"), p("norm2.beta"))
    f = nn.gelu(nn.linear(f, p("ff.w1.weight"), p("ff.w1.bias")))
    f = nn.linear(f, p("ff.w2.weight"), p("ff.w2.bias"))
    if train and cfg.dropout > 0:
        f = nn.dropout(f, cfg.dropout, rng)
    return nn.add(h, f)


def encoder_forward(x: nn.Tensor, params: ParameterSet, cfg: DenoiserConfig,
                    extra: nn.Tensor | None = None, train: bool = False,
                    rng=None, capture: list | None = None) -> nn.Tensor:
    """Shared trunk: input projection + temporal encoding (+ extra embedding),
    then the encoder layers. ``x`` is (B, L, R)."""
    if x.ndim != 3 or x.shape[2] != cfg.input_dim:
        raise DimensionError(
            f"encoder: expected (batch, {cfg.seq_len}, {cfg.input_dim}), got {x.shape}")
    if train and cfg.dropout > 0 and rng is None:
        raise ConfigError("encoder: dropout requires an rng in training mode")
    h = nn.linear(x, params["input_proj.weight"].value, params["input_proj.bias"].value)
    te = temporal_encoding(x.shape[1], cfg.d_model).astype(h.dtype)
    h = nn.add(h, nn.Tensor(te))
    if extra is not None:
        h = nn.add(h, extra)
    for i in range(cfg.n_layers):
        h = _layer_forward(h, params, f"layers.{i}", cfg, train, rng, capture)
    return h


def timestep_embedding(t, params: ParameterSet, cfg: DenoiserConfig) -> nn.Tensor:
    """Sinusoidal code of the diffusion step pushed through the 2-layer MLP.

    Scalar ``t`` gives a (d_model,) vector; an array of steps gives one row
    per entry. The upper bound T is enforced by the diffusion module, which
    owns the schedule.
    """
    t_arr = np.atleast_1d(np.asarray(t))
    if t_arr.min() < 1:
        raise StepIndexError(f"diffusion step {t_arr.min()} < 1")
    dtype = params["time_mlp.w1.weight"].value.dtype
    base = nn.Tensor(sinusoid_rows(t_arr, cfg.d_model).astype(dtype))
    hidden = nn.gelu(nn.linear(base, params["time_mlp.w1.weight"].value,
                               params["time_mlp.w1.bias"].value))
    out = nn.linear(hidden, params["time_mlp.w2.weight"].value,
                    params["time_mlp.w2.bias"].value)
    if np.isscalar(t) or np.ndim(t) == 0:
        return nn.reshape(out, (cfg.d_model,))
    return out


class Denoiser:
    """Noise predictor: (B, L, R) noisy input + step index -> predicted noise."""

    def __init__(self, cfg: DenoiserConfig, params: ParameterSet):
        self.cfg = cfg
        self.params = params

    @classmethod
    def init(cls, cfg: DenoiserConfig, seed: int, dtype=np.float32) -> "Denoiser":
        rng = substream(seed, "denoiser-init")
        return cls(cfg, init_from_schema(denoiser_schema(cfg), rng, dtype))

    def forward(self, x: nn.Tensor, t, train: bool = False, rng=None,
                capture: list | None = None) -> nn.Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = nn.reshape(x, (1,) + x.shape)
        t_arr = np.atleast_1d(np.asarray(t))
        if t_arr.shape[0] not in (1, x.shape[0]):
            raise DimensionError(
                f"denoiser: {t_arr.shape[0]} steps for batch of {x.shape[0]}")
        temb = timestep_embedding(t_arr, self.params, self.cfg)
        temb = nn.reshape(temb, (temb.shape[0], 1, temb.shape[1]))
        h = encoder_forward(x, self.params, self.cfg, extra=temb,
                            train=train, rng=rng, capture=capture)
        out = nn.linear(h, self.params["output_proj.weight"].value,
                        self.params["output_proj.bias"].value)
        return nn.reshape(out, out.shape[1:]) if squeeze else out

    def denoise(self, x: np.ndarray, t) -> np.ndarray:
        """Frozen-weight prediction on plain arrays (pure, thread-safe)."""
        with nn.no_grad():
            return self.forward(nn.Tensor(x), t).data
