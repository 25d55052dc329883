"""Adam with decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus the shared step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t_opt: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"adam: lr must be positive, got {self.lr}")
        if self.eps <= 0:
            raise ConfigError(f"adam: eps must be positive, got {self.eps}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"adam: betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.weight_decay < 0:
            raise ConfigError(f"adam: weight_decay must be non-negative, got {self.weight_decay}")


def adam_step(params, state: AdamState) -> None:
    """One bias-corrected update; weight decay is applied directly to weights."""
    state.t_opt += 1
    t = state.t_opt
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    shrink = 1.0 - state.lr * state.weight_decay
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value.data)
        v = state.v.get(p.name)
        if v is None:
            v = state.v[p.name] = np.zeros_like(p.value.data)
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        if state.weight_decay:
            p.value.data *= shrink
        p.value.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
