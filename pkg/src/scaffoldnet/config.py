"""Flat ``key=value`` run configuration.

Blank lines and lines starting with ``#`` are ignored.  Relative paths are
resolved against the directory holding the config file.
"""

from __future__ import annotations

from pathlib import Path

from .data import AugmentConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _categories(v: str) -> tuple[str, ...]:
    cats = tuple(c.strip() for c in v.split(",") if c.strip())
    if len(cats) != 2:
        raise ValueError(f"expected two comma-separated categories, got {v!r}")
    return cats


PARSERS = {
    "epochs": int,
    "batch_size": int,
    "alpha": float,
    "beta1": float,
    "beta2": float,
    "seed": int,
    "dataset_root": str,
    "categories": _categories,
    "n_train": int,
    "n_val": int,
    "n_test": int,
    "deterministic": _bool,
    "augment": _bool,
}


def parse_config_text(text: str, base_dir: Path | None = None, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {raw!r}")
        if key not in PARSERS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: bad value for {key}: {exc}") from None
    if "dataset_root" in values and base_dir is not None:
        values["dataset_root"] = str((base_dir / values["dataset_root"]).resolve())
    return values


def read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config_text(text, path.parent, str(path))


def build_train_config(values: dict) -> TrainConfig:
    values = dict(values)
    augment = values.pop("augment", True)
    try:
        return TrainConfig(augment=AugmentConfig() if augment else None, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
