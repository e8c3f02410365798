import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import yaml

from .exceptions import ConfigError
from .models import ENCODER_KINDS, AttackConfig

logger = logging.getLogger(__name__)

SEED_ENV = "AADV_SEED"


def parse_epsilon(text) -> float:
    """
    Parses an l-infinity radius given as a rational ("8/255") or a decimal ("0.03").

    Raises:
        ConfigError: If the text is not a number or lies outside [0, 1].
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        value = Fraction(text)
    else:
        try:
            value = Fraction(str(text).strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse epsilon '{text}'") from exc
    if not 0 <= value <= 1:
        raise ConfigError(f"epsilon must lie in [0, 1], got {text}")
    return float(value)


@dataclass
class ExperimentConfig:
    """
    Default configuration values for every autoadv command.

    File keys use these field names; command-line flags use the same names with
    hyphens. The complete resolved instance is echoed into every report.
    """
    # Files
    model: str = "model.aadv"
    dataset: str | None = None
    out: str = "autoadv_output"

    # Data and training
    seed: int = 0
    dataset_size: int = 1000
    image_size: int = 16
    channels: int = 1
    num_classes: int = 10
    contrast: float = 0.2
    noise: float = 0.05
    epochs: int = 12
    lr: float = 0.05
    train_momentum: float = 0.9
    batch_size: int = 32
    accuracy_floor: float = 0.85

    # Attack
    count: int = 100
    epsilon: float = 16 / 255
    iterations: int = 500
    c: float = 0.1
    gamma: float = 1.0
    alpha_start: float = 0.1
    alpha_end: float = 100.0
    mu: float = 1.0
    beta: float | None = None
    enc_lr: float = 0.01
    enc_momentum: float = 0.9
    encoder: str = "fc"
    channel_shared: bool = False
    binarization_tol: float = 1e-3
    degenerate_limit: int = 25
    track_first_success: bool = False

    # Ablations and supplements
    random_k: int | None = None
    l1_lambda: float = 5.0
    calibrate_candidates: list[float] = field(default_factory=lambda: [10.0, 30.0, 100.0, 300.0, 1000.0])
    calibrate_count: int = 3
    speed_sizes: list[int] = field(default_factory=lambda: [8, 16])
    speed_count: int = 3

    # Run
    workers: int = 1
    dump_images: bool = False
    log_level: str = "INFO"
    quiet: bool = False

    def to_attack_config(self) -> AttackConfig:
        return AttackConfig(
            epsilon=self.epsilon,
            iterations=self.iterations,
            c=self.c,
            gamma=self.gamma,
            alpha_start=self.alpha_start,
            alpha_end=self.alpha_end,
            mu=self.mu,
            beta=self.beta,
            enc_lr=self.enc_lr,
            enc_momentum=self.enc_momentum,
            seed=self.seed,
            channel_independent=not self.channel_shared,
            binarization_tol=self.binarization_tol,
            encoder=self.encoder,
            degenerate_limit=self.degenerate_limit,
            track_first_success=self.track_first_success,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        if self.count < 0:
            raise ConfigError(f"count must be >= 0, got {self.count}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.encoder not in ENCODER_KINDS:
            raise ConfigError(f"encoder must be one of {ENCODER_KINDS}, got '{self.encoder}'")
        if not 0 <= self.accuracy_floor <= 1:
            raise ConfigError(f"accuracy_floor must lie in [0, 1], got {self.accuracy_floor}")
        if not 0 < self.contrast <= 1 or self.noise < 0:
            raise ConfigError(f"invalid contrast {self.contrast} or noise {self.noise}")
        if self.random_k is not None and self.random_k < 1:
            raise ConfigError(f"random_k must be >= 1, got {self.random_k}")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"unknown log level '{self.log_level}'")
        self.to_attack_config().validate()
        return self


def _coerce(name: str, kind, value):
    """Check one file or flag value against the field's declared type."""
    if value is None:
        if "None" in str(kind):
            return None
        raise ConfigError(f"'{name}' may not be null")
    if name == "epsilon":
        return parse_epsilon(value)
    if kind is bool or kind == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(f"'{name}' must be true or false, got {value!r}")
    text = str(kind)
    if text.startswith("list"):
        if not isinstance(value, list):
            raise ConfigError(f"'{name}' must be a list, got {value!r}")
        item = int if "int" in text else float
        return [_coerce(name, item, v) for v in value]
    if kind is int or text.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{name}' must be an integer, got {value!r}")
        return value
    if kind is float or text.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{name}' must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"'{name}' must be a string, got {value!r}")
    return value


def merge(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """A copy of ``config`` with ``overrides`` applied; unknown keys raise ConfigError."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    unknown = sorted(set(overrides) - set(known))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return replace(config, **{k: _coerce(k, known[k], v) for k, v in overrides.items()})


def read_config_file(path: str | Path) -> dict:
    """
    Reads a flat YAML mapping of configuration keys.

    A stored report is accepted too: its ``config`` section is returned, which
    is how a run is replayed.

    Raises:
        ConfigError: If the file is not a YAML mapping.
        FileNotFoundError: If the file does not exist.
    """
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"error parsing YAML configuration file '{path}': {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"configuration file '{path}' must contain a mapping")
    if "schema_version" in data and isinstance(data.get("config"), dict):
        logger.info("Replaying configuration stored in report %s", path)
        return data["config"]
    return data


def load_config(config_path: str | Path | None = None, overrides: dict | None = None,
                environ: dict | None = None) -> ExperimentConfig:
    """
    Resolves the experiment configuration.

    Precedence, lowest first: dataclass defaults, the ``AADV_SEED``
    environment variable (seed only), the config file, explicit overrides.

    Args:
        config_path: Optional YAML config file or stored report.
        overrides: Values given on the command line.
        environ: Environment mapping, ``os.environ`` by default.

    Returns:
        The validated ExperimentConfig.
    """
    environ = os.environ if environ is None else environ
    config = ExperimentConfig()
    if environ.get(SEED_ENV):
        try:
            config = replace(config, seed=int(environ[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got '{environ[SEED_ENV]}'") from exc
    if config_path is not None:
        config = merge(config, read_config_file(config_path))
    if overrides:
        config = merge(config, overrides)
    return config.validate()
