"""Cosine variance schedule and the forward (noising) process.

Steps are 1-indexed: arrays hold values for t = 1..T at positions t-1.
"""

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StepIndexError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step diffusion constants; arrays are immutable after construction."""

    T: int
    betas: np.ndarray        # beta_t in (0, 1)
    alphas: np.ndarray       # 1 - beta_t
    alpha_bars: np.ndarray   # running product of alphas
    sigmas: np.ndarray       # sqrt(beta_t)

    def __post_init__(self):
        for arr in (self.betas, self.alphas, self.alpha_bars, self.sigmas):
            if arr.shape != (self.T,):
                raise ConfigError(
                    f"schedule arrays must have shape ({self.T},), got {arr.shape}")
            arr.flags.writeable = False
        if self.betas.min() <= 0.0 or self.betas.max() >= 1.0:
            raise ConfigError("schedule: betas must lie in (0, 1)")

    def alpha_bar_prev(self, t: int) -> float:
        """alpha_bar at t-1, with the t=1 boundary value of 1."""
        self._check_step(t)
        return 1.0 if t == 1 else float(self.alpha_bars[t - 2])

    def posterior_variance(self, t: int) -> float:
        """beta-tilde_t, the forward-posterior variance alternative to beta_t."""
        self._check_step(t)
        return (1.0 - self.alpha_bar_prev(t)) / (1.0 - float(self.alpha_bars[t - 1])) \
            * float(self.betas[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise StepIndexError(f"step {t} outside [1, {self.T}]")


def cosine_schedule(T: int, s: float = 0.008, beta_clip: float = 0.999) -> NoiseSchedule:
    """Squared-cosine schedule: alpha_bar_t follows f(t)/f(0) with
    f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), betas derived from consecutive
    ratios and clipped to (0, beta_clip]. After clipping, alphas and
    alpha_bars are rebuilt exactly from the betas.
    """
    if T < 2:
        raise ConfigError(f"schedule: T must be >= 2, got {T}")
    if not 0.0 < s < 1.0:
        raise ConfigError(f"schedule: offset s must lie in (0, 1), got {s}")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T) + s) / (1.0 + s) * (math.pi / 2.0)) ** 2
    alpha_bar = f / f[0]
    betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    betas = np.minimum(betas, beta_clip)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas,
                         alpha_bars=alpha_bars, sigmas=np.sqrt(betas))


def single_step_diffuse(x_prev: np.ndarray, t: int, eps: np.ndarray,
                        sched: NoiseSchedule) -> np.ndarray:
    """One forward step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * eps."""
    sched._check_step(t)
    beta = float(sched.betas[t - 1])
    return math.sqrt(1.0 - beta) * x_prev + math.sqrt(beta) * eps


def forward_diffuse(x0: np.ndarray, t, eps: np.ndarray,
                    sched: NoiseSchedule) -> np.ndarray:
    """Closed-form marginal: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps.

    ``t`` may be a scalar step or a per-sample integer array aligned with the
    leading axis of ``x0`` (the training-pair case).
    """
    if np.isscalar(t) or np.ndim(t) == 0:
        sched._check_step(int(t))
        ab = float(sched.alpha_bars[int(t) - 1])
        return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps
    t = np.asarray(t)
    if t.min() < 1 or t.max() > sched.T:
        raise StepIndexError(f"steps [{t.min()}, {t.max()}] outside [1, {sched.T}]")
    ab = sched.alpha_bars[t - 1].reshape((-1,) + (1,) * (x0.ndim - 1))
    ab = ab.astype(x0.dtype)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def schedule_csv(sched: NoiseSchedule) -> str:
    """CSV dump with columns t, beta, alpha, alpha_bar, sigma."""
    buf = io.StringIO()
    buf.write("t,beta,alpha,alpha_bar,sigma\n")
    for i in range(sched.T):
        buf.write(f"{i + 1},{sched.betas[i]:.12g},{sched.alphas[i]:.12g},"
                  f"{sched.alpha_bars[i]:.12g},{sched.sigmas[i]:.12g}\n")
    return buf.getvalue()
