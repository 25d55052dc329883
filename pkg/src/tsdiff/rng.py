"""Deterministic random-number plumbing.

Every random draw in the package comes from a named substream of one global
seed. A substream is identified by a path of names (strings or ints); the
names are hashed into the seed sequence, so adding a new stage to a pipeline
never perturbs the draws of existing stages.
"""

import hashlib
import os

import numpy as np

from .errors import ConfigError

SEED_ENV_VAR = "TSDF_SEED"


def _name_key(name) -> int:
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the substream identified by ``names`` under ``seed``."""
    entropy = [int(seed)] + [_name_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *names) -> int:
    """A fresh integer seed for the named substream, for APIs that take
    a seed rather than a generator."""
    return int(substream(seed, *names).integers(0, 2**63))


def resolve_seed(explicit: int | None, default: int = 0) -> int:
    """Explicit seed if given, else the TSDF_SEED environment variable, else default."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return default
