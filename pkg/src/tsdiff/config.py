"""Run configuration.

Flat "key = value" text files with dotted section prefixes (for example
``diffusion.lr = 1e-4``). Precedence: built-in defaults, then file values,
then command-line overrides. Every key has a default, so an empty config is
a complete config.
"""

import hashlib

from .errors import ConfigError


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _parse_floats(text: str) -> tuple:
    return tuple(float(p) for p in text.split("|") if p.strip())


def _parse_ints(text: str) -> tuple:
    return tuple(int(p) for p in text.split("|") if p.strip())


def _canon(value) -> str:
    if isinstance(value, tuple):
        return "|".join(_canon(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default). Dotted prefixes group keys per pipeline stage.
KEY_SPECS = {
    "seed": (_parse_int, 0),
    "jobs": (_parse_int, 1),

    "toy.n_per_class": (_parse_int, 200),
    "toy.rois": (_parse_int, 8),
    "toy.length": (_parse_int, 64),
    "toy.innovation_scale": (_parse_float, 1.0),
    "toy.burn_in": (_parse_int, 100),

    "denoiser.n_layers": (_parse_int, 6),
    "denoiser.d_model": (_parse_int, 256),
    "denoiser.n_heads": (_parse_int, 8),
    "denoiser.d_ff": (_parse_int, 0),
    "denoiser.dropout": (_parse_float, 0.0),

    "diffusion.epochs": (_parse_int, 500),
    "diffusion.batch_size": (_parse_int, 16),
    "diffusion.lr": (_parse_float, 1e-4),
    "diffusion.weight_decay": (_parse_float, 1e-3),
    "diffusion.T": (_parse_int, 1000),

    "sample.variance": (_parse_str, "beta"),

    "pretrain.inner_folds": (_parse_int, 5),
    "pretrain.batch_size": (_parse_int, 16),
    "pretrain.lr_grid": (_parse_floats, (1e-4, 3e-4)),
    "pretrain.weight_decay_grid": (_parse_floats, (1e-3, 1e-4)),
    "pretrain.epochs_grid": (_parse_ints, (50, 100)),
    "pretrain.dropout_grid": (_parse_floats, (0.0, 0.1)),

    "downstream.hidden": (_parse_int, 64),
    "downstream.dropout": (_parse_float, 0.1),
    "downstream.epochs": (_parse_int, 100),
    "downstream.lr": (_parse_float, 1e-3),
    "downstream.weight_decay": (_parse_float, 1e-4),
    "downstream.batch_size": (_parse_int, 16),

    "bench.k": (_parse_int, 5),
    "bench.seeds": (_parse_int, 5),
    "bench.augment_ratio": (_parse_float, 1.0),
    "bench.ablation": (_parse_str, "full"),
    "bench.sites": (_parse_int, 0),
    "bench.site_perturb": (_parse_float, 0.1),
    "bench.train_epochs": (_parse_int, 60),
    "bench.train_batch_size": (_parse_int, 16),
    "bench.train_lr": (_parse_float, 1e-4),
    "bench.train_weight_decay": (_parse_float, 1e-3),
    "bench.train_T": (_parse_int, 200),
    "bench.denoiser_layers": (_parse_int, 2),
    "bench.denoiser_d_model": (_parse_int, 32),
    "bench.denoiser_heads": (_parse_int, 4),
    "bench.denoiser_d_ff": (_parse_int, 0),
    "bench.pretrain_lr": (_parse_float, 3e-4),
    "bench.pretrain_weight_decay": (_parse_float, 1e-4),
    "bench.pretrain_epochs": (_parse_int, 15),
    "bench.pretrain_dropout": (_parse_float, 0.0),
    "bench.pretrain_inner_folds": (_parse_int, 2),

    "fidelity.bins": (_parse_int, 100),
    "fidelity.eps": (_parse_float, 1e-10),
}


class RunConfig:
    """Resolved key/value view with per-key origin tracking."""

    def __init__(self):
        self._values = {key: default for key, (_, default) in KEY_SPECS.items()}
        self._origins = {key: "default" for key in KEY_SPECS}

    def get(self, key: str):
        if key not in self._values:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def origin(self, key: str) -> str:
        return self._origins[key]

    def set_text(self, key: str, text: str, origin: str) -> None:
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = KEY_SPECS[key]
        try:
            value = parser(text.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text.strip()!r} ({exc})") from exc
        self._values[key] = value
        self._origins[key] = origin

    def dump(self) -> str:
        """Canonical text form: sorted keys, one "key = value" per line."""
        lines = [f"{key} = {_canon(self._values[key])}" for key in sorted(self._values)]
        return "\n".join(lines) + "\n"

    def dump_dict(self) -> dict:
        return {key: _canon(self._values[key]) for key in sorted(self._values)}

    def config_hash(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw key->value strings from flat config text. '#' starts a comment."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def resolve_config(file_path=None, overrides=()) -> RunConfig:
    """defaults < file < overrides ("key=value" strings)."""
    rc = RunConfig()
    if file_path is not None:
        try:
            with open(file_path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {file_path}: {exc}") from exc
        for key, value in parse_config_text(text, source=str(file_path)).items():
            rc.set_text(key, value, "file")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        rc.set_text(key.strip(), value, "flag")
    return rc
