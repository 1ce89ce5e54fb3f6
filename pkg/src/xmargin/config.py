"""Experiment configuration: a flat key=value file plus CLI overrides.

Unknown keys are rejected; validation collects every problem before
reporting so a bad config fails with the full list at once.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields

from .data_pipeline import Scaling
from .loss_core import LossFamily, LossParams
from .optimizer import Method, OptimizerConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = ""
    label_column: int = -1
    default_label: str = ""
    header: bool = False
    loss_family: LossFamily = LossFamily.XTREME_MARGIN
    lambda1: float = 1.0
    lambda2: float = 1.0
    optimizer: Method = Method.RMSPROP
    alpha: float = 0.001
    epochs: int = 100
    batch_size: int = 16
    k: int = 10
    repeats: int = 20
    seed: int | None = None
    scaling: Scaling = Scaling.MINMAX
    test_fraction: float = 0.3
    output_dir: str = "out"
    _source: dict = field(default_factory=dict, repr=False)

    def loss_params(self) -> LossParams:
        return LossParams(lambda1=self.lambda1, lambda2=self.lambda2,
                          family=self.loss_family)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(method=self.optimizer, alpha=self.alpha)

    def echo(self) -> dict:
        """Complete effective configuration, defaults included, for report
        provenance."""
        return {
            "dataset": self.dataset,
            "label_column": self.label_column,
            "default_label": self.default_label,
            "header": self.header,
            "loss_family": self.loss_family.value,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "optimizer": self.optimizer.value,
            "alpha": self.alpha,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "k": self.k,
            "repeats": self.repeats,
            "seed": self.seed,
            "scaling": self.scaling.value,
            "test_fraction": self.test_fraction,
            "output_dir": self.output_dir,
        }


_PARSERS = {
    "dataset": str,
    "label_column": int,
    "default_label": str,
    "header": lambda v: _parse_bool(v),
    "loss_family": LossFamily.parse,
    "lambda1": float,
    "lambda2": float,
    "optimizer": Method.parse,
    "alpha": float,
    "epochs": int,
    "batch_size": int,
    "k": int,
    "repeats": int,
    "seed": int,
    "scaling": Scaling.parse,
    "test_fraction": float,
    "output_dir": str,
}


def _parse_bool(v: str) -> bool:
    low = str(v).strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse 'key = value' lines; '#' starts a comment; blank lines ignored."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path: str, overrides: list[str] = ()) -> ExperimentConfig:
    """Read a config file and apply 'key=value' overrides on top."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values = parse_config_text(text, source=path)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, val = item.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigError(f"unknown override key {key!r}")
        try:
            values[key] = _PARSERS[key](val.strip())
        except ValueError as exc:
            raise ConfigError(f"bad override value for {key}: {exc}") from None
    cfg = ExperimentConfig(**values)
    cfg._source = values
    return cfg


def validate(cfg: ExperimentConfig, needs_dataset: bool = True) -> None:
    """Check the whole config, reporting every failure at once."""
    problems = []
    if cfg.seed is None:
        problems.append("seed is mandatory (no wall-clock seeding)")
    if needs_dataset:
        if not cfg.dataset:
            problems.append("dataset path is required")
        elif not os.path.exists(cfg.dataset):
            problems.append(f"dataset file does not exist: {cfg.dataset}")
    for name, ok in [
        ("lambda1", cfg.lambda1 >= 0 and math.isfinite(cfg.lambda1)),
        ("lambda2", cfg.lambda2 >= 0 and math.isfinite(cfg.lambda2)),
        ("alpha", cfg.alpha >= 0 and math.isfinite(cfg.alpha)),
        ("epochs", cfg.epochs >= 1),
        ("batch_size", cfg.batch_size >= 1),
        ("k", cfg.k >= 2),
        ("repeats", cfg.repeats >= 1),
        ("test_fraction", 0.0 < cfg.test_fraction < 1.0),
    ]:
        if not ok:
            problems.append(f"invalid {name}: {getattr(cfg, name)}")
    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))
