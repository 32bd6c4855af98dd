"""
Configuration for the cavitation pipeline.
Built-in defaults, then a JSON or TOML config file, then environment
variables, then command-line overrides.
"""

import json
import os
import tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import load_dotenv

from feature_engineering import AsfeConfig
from gradient_boosting import GbtHyperParams
from pipeline_errors import ConfigError
from signal_dataset import TASKS

load_dotenv(os.path.join(os.path.dirname(__file__), '.env'))

DEFAULT_CONFIG: Dict[str, Any] = {
    "manifest": None,
    "window_size": 16384,
    "train_fraction": 0.8,
    "seed": 0,
    "task": "binary",
    "asfe_enabled": True,
    "out_dir": "output",
    "workers": 1,
    "dump_spectrum": None,
    "figures": True,
    "asfe": {"k": 5},
    "gbt": {},
    "synth": {},
    "sweep": {
        "window_sizes": [8192, 16384, 32768],
        "ks": [5, 6, 7, 8, 9, 10],
    },
}


@dataclass
class SweepConfig:
    window_sizes: List[int] = field(default_factory=lambda: [8192, 16384, 32768])
    ks: List[int] = field(default_factory=lambda: [5, 6, 7, 8, 9, 10])


@dataclass
class PipelineConfig:
    """
    Settings of one pipeline run.

    Attributes:
        manifest: Dataset manifest to load
        window_size: Samples per non-overlapping window
        train_fraction: Share of records per label used for training
        seed: Seed for the split (and recorded with the model)
        task: binary, four_class or five_class
        asfe_enabled: Run feature engineering before training
        asfe: Feature engineering settings
        gbt: Boosting hyperparameters
        out_dir: Directory receiving every artifact
        workers: Threads for signal loading and featurizing
        dump_spectrum: Directory for per-segment spectrum CSVs, if any
        figures: Render SVG figures next to the CSV/JSON reports
        synth: SynthSpec values for the synth command
        sweep: Grid for the sweep command
    """

    manifest: Optional[Path] = None
    window_size: int = 16384
    train_fraction: float = 0.8
    seed: int = 0
    task: str = "binary"
    asfe_enabled: bool = True
    asfe: AsfeConfig = field(default_factory=AsfeConfig)
    gbt: GbtHyperParams = field(default_factory=GbtHyperParams)
    out_dir: Path = Path("output")
    workers: int = 1
    dump_spectrum: Optional[Path] = None
    figures: bool = True
    synth: Dict[str, Any] = field(default_factory=dict)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> "PipelineConfig":
        if self.window_size <= 0:
            raise ConfigError(f"window_size must be positive, got {self.window_size}", stage="config")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}", stage="config")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task '{self.task}' (expected one of: {', '.join(TASKS)})", stage="config")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}", stage="config")
        if any(w <= 0 for w in self.sweep.window_sizes) or not self.sweep.window_sizes:
            raise ConfigError("sweep window_sizes must be positive and non-empty", stage="config")
        for k in self.sweep.ks:
            replace(self.asfe, k=k).validate()
        self.asfe.validate()
        self.gbt.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "manifest": str(self.manifest) if self.manifest else None,
            "window_size": self.window_size,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "task": self.task,
            "asfe_enabled": self.asfe_enabled,
            "asfe": self.asfe.to_dict(),
            "gbt": self.gbt.to_dict(),
            "workers": self.workers,
            "figures": self.figures,
            "sweep": {"window_sizes": list(self.sweep.window_sizes), "ks": list(self.sweep.ks)},
        }


def _merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    """Merge update into base, one level deep for nested sections."""
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a JSON or TOML (by suffix) config document."""
    path = Path(path)
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                document = tomllib.load(f)
        else:
            with open(path, "r") as f:
                document = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}", stage="config")
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config {path}: line {e.lineno}, column {e.colno}: {e.msg}", stage="config")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e}", stage="config")
    if not isinstance(document, dict):
        raise ConfigError(f"config {path} must be an object at top level", stage="config")
    return document


def _environment() -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    if os.getenv("CAVITATION_OUT_DIR"):
        values["out_dir"] = os.environ["CAVITATION_OUT_DIR"]
    if os.getenv("CAVITATION_WORKERS"):
        try:
            values["workers"] = int(os.environ["CAVITATION_WORKERS"])
        except ValueError:
            raise ConfigError(
                f"CAVITATION_WORKERS must be an integer, got '{os.environ['CAVITATION_WORKERS']}'", stage="config")
    return values


def build_config(values: Mapping[str, Any]) -> PipelineConfig:
    """Turn a merged settings dictionary into a validated PipelineConfig."""
    known = set(DEFAULT_CONFIG)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}", stage="config")

    gbt_values = {**values.get("gbt", {})}
    gbt_values.setdefault("seed", values["seed"])
    try:
        config = PipelineConfig(
            manifest=Path(values["manifest"]) if values.get("manifest") else None,
            window_size=int(values["window_size"]),
            train_fraction=float(values["train_fraction"]),
            seed=int(values["seed"]),
            task=str(values["task"]),
            asfe_enabled=bool(values["asfe_enabled"]),
            asfe=AsfeConfig.from_dict(values.get("asfe", {})),
            gbt=GbtHyperParams.from_dict(gbt_values),
            out_dir=Path(values["out_dir"]),
            workers=int(values["workers"]),
            dump_spectrum=Path(values["dump_spectrum"]) if values.get("dump_spectrum") else None,
            figures=bool(values["figures"]),
            synth=dict(values.get("synth", {})),
            sweep=SweepConfig(
                window_sizes=[int(w) for w in values["sweep"].get("window_sizes", [])],
                ks=[int(k) for k in values["sweep"].get("ks", [])],
            ),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}", stage="config")
    return config.validate()


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """
    Load configuration from file or use defaults.

    Args:
        config_path: Optional JSON or TOML config file
        overrides: Values from the command line; None entries are ignored

    Returns:
        Validated PipelineConfig
    """
    values = dict(DEFAULT_CONFIG)
    if config_path:
        values = _merge(values, read_config_file(config_path))
    values = _merge(values, _environment())
    if overrides:
        values = _merge(values, {key: value for key, value in overrides.items() if value is not None})
    return build_config(values)

