"""Run configuration: one flat TOML key-value file shared by all commands.

Precedence, lowest first: built-in defaults, the config file, command-line
flags. Relative output directories are resolved under ``$DSGAN_OUTPUT_ROOT``
when that variable is set.
"""
from __future__ import annotations

import os
import typing
from dataclasses import asdict, dataclass, field, fields

import toml

from .evaluation import MetricConfig
from .training import TrainConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "write_config",
           "OUTPUT_ROOT_ENV"]

OUTPUT_ROOT_ENV = "DSGAN_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class RunConfig:
    # training schedule and optimiser
    learning_rate: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    l2_lambda: float = 1e-5
    batch_size: int = 8
    epochs: int = 100
    minibatches_per_epoch: int = 100
    d_steps_per_g_step: int = 1
    seed: int = 0
    checkpoint_every: int = 10
    sample_every: int = 10
    # data: an image file, or a procedurally generated toy texture
    data_path: typing.Optional[str] = None
    toy_kind: str = "channels"
    toy_height: int = 2500
    toy_width: int = 2500
    toy_seed: int = 0
    toy_params: dict = field(default_factory=dict)
    patch_size: int = 384
    # networks
    noise_channels: int = 1
    deconv_filters: list = field(default_factory=lambda: [256, 128, 64, 64, 64])
    dilated_filters: list = field(default_factory=lambda: [64, 64, 64, 64])
    deconv_kernel: int = 5
    dilated_kernel: int = 3
    dilation_rates: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    disc_filters: list = field(default_factory=lambda: [64, 128, 256, 512])
    disc_kernel: int = 9
    disc_leaky_slope: float = 0.2
    # generation
    checkpoint: typing.Optional[str] = None
    noise_height: int = 12
    noise_width: int = 12
    count: int = 100
    generate_seed: int = 0
    # evaluation
    real_dir: typing.Optional[str] = None
    synthetic_dir: typing.Optional[str] = None
    max_lag: int = 100
    lbp_radii: list = field(default_factory=lambda: [1, 2])
    hog_cell: list = field(default_factory=lambda: [8, 8])
    hog_bins: int = 9
    connectivity: int = 4
    threshold: float = 0.0
    # output
    output_dir: str = "runs/default"

    def train_config(self):
        return TrainConfig(**{f: getattr(self, f) for f in TrainConfig.field_names()})

    def metric_config(self):
        return MetricConfig(self.max_lag, tuple(self.lbp_radii),
                            tuple(self.hog_cell), self.hog_bins,
                            self.connectivity, self.threshold)

    def estimator_params(self):
        from .estimator import DilatedSGAN

        names = DilatedSGAN._get_param_names()
        params = {k: v for k, v in asdict(self).items() if k in names}
        params["random_state"] = self.seed
        for k, v in params.items():
            if isinstance(v, list):
                params[k] = tuple(v)
        return params

    def resolved_output_dir(self):
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not os.path.isabs(self.output_dir):
            return os.path.join(root, self.output_dir)
        return self.output_dir

    def validate(self):
        """Check every value; raise :class:`ConfigError` naming the bad key."""
        hints = typing.get_type_hints(type(self))
        for f in fields(self):
            _check_type(f.name, getattr(self, f.name), hints[f.name])
        for name in TrainConfig.field_names():
            try:
                TrainConfig(**{name: getattr(self, name)})
            except (TypeError, ValueError) as exc:
                raise ConfigError(name, str(exc)) from None
        for name in ("max_lag", "lbp_radii", "hog_cell", "hog_bins",
                     "connectivity", "threshold"):
            try:
                MetricConfig(**{name: getattr(self, name)})
            except (TypeError, ValueError) as exc:
                raise ConfigError(name, str(exc)) from None
        for name in ("patch_size", "noise_height", "noise_width", "count",
                     "noise_channels", "toy_height", "toy_width"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.toy_kind not in ("stripes", "channels"):
            raise ConfigError("toy_kind", "must be 'stripes' or 'channels'")
        if len(self.dilated_filters) != len(self.dilation_rates) - 1:
            raise ConfigError("dilated_filters", "needs one entry per dilation "
                              "rate except the last")
        up = 2 ** len(self.deconv_filters)
        if self.patch_size % up:
            raise ConfigError("patch_size", f"must be a multiple of {up}")
        down = 2 ** (len(self.disc_filters) + 1)
        if self.patch_size % down:
            raise ConfigError("patch_size", f"must be a multiple of {down} "
                              "for the discriminator")
        try:
            self.estimator_cls()(**self.estimator_params()).make_specs()
        except (TypeError, ValueError) as exc:
            raise ConfigError("network", str(exc)) from None
        return self

    @staticmethod
    def estimator_cls():
        from .estimator import DilatedSGAN
        return DilatedSGAN

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown key")
        return cls(**data).validate()

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


_SCALARS = {int: int, float: (int, float), str: str, bool: bool,
            list: list, dict: dict}


def _check_type(key, value, annotation):
    args = typing.get_args(annotation)
    if args and type(None) in args:
        if value is None:
            return
        annotation = next(a for a in args if a is not type(None))
    expected = _SCALARS[annotation]
    if isinstance(value, bool) and annotation is not bool:
        raise ConfigError(key, f"expected {annotation.__name__}, got bool")
    if not isinstance(value, expected):
        raise ConfigError(key, f"expected {annotation.__name__}, "
                          f"got {type(value).__name__} {value!r}")


def parse_override(text):
    """Parse ``key=value`` with a TOML value (bare words become strings)."""
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(text, "override must look like key=value")
    key = key.strip()
    try:
        value = toml.loads(f"v = {raw}")["v"]
    except toml.TomlDecodeError:
        value = raw.strip()
    return key, value


def load_config(path=None, overrides=None):
    """Defaults, then the TOML file at `path`, then `overrides` (a dict)."""
    data = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError("config", f"no such file {path}")
        try:
            data = toml.load(path)
        except toml.TomlDecodeError as exc:
            raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    data.update(overrides or {})
    return RunConfig.from_dict(data)


def write_config(config, path):
    """Write the resolved configuration snapshot as TOML."""
    with open(path, "w") as fh:
        toml.dump(config.to_dict(), fh)
