"""YAML tool configuration with environment-variable overrides for paths."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .features import FeatureSpec
from .forecasting import MODEL_NAMES
from .synthetic import SyntheticSpec

ENV_PATHS = {
    "AQUATWIN_OUT_DIR": "out_dir",
    "AQUATWIN_CONSUMPTION": "consumption",
    "AQUATWIN_METEO": "meteo",
    "AQUATWIN_INSTANCE": "instance",
}

DEFAULTS: dict[str, Any] = {
    "seed": 42,
    "paths": {"out_dir": "out", "consumption": None, "meteo": None, "instance": None},
    "synthetic": {},
    "features": {},
    "models": list(MODEL_NAMES),
    "model_options": {
        "gbt": {"num_boost_round": 100, "learning_rate": 0.1, "min_samples_leaf": 5},
        "gbt_search": {"n_draws": 0, "k": 3},
        "lstm": {"learning_rate": 0.3},
        "stacking_loss": "squared",
    },
    "horizons": {"6 Months": 183, "18 Months": 548},
    "scheduler": {"budget": 60.0, "compare_runs": 20, "n_tasks": [4, 6], "weights": None, "work_day": None},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ToolConfig:
    seed: int
    out_dir: Path
    consumption: Path
    meteo: Path
    instance: Path | None
    synthetic: SyntheticSpec
    features: FeatureSpec
    models: list[str]
    model_options: dict
    horizons: dict[str, int]
    scheduler: dict = field(default_factory=dict)

    def options(self) -> dict:
        """Options handed to the model registry."""
        return {**self.model_options, "seed": self.seed, "features": self.features.to_dict()}


def load_config(path=None, env: dict | None = None, out_dir=None) -> ToolConfig:
    """Merge defaults, the optional YAML file, ``AQUATWIN_*`` path overrides and ``out_dir``."""
    doc = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    raw = _merge(DEFAULTS, doc)
    if "horizons" in doc:  # a listed set of horizons replaces the defaults
        raw["horizons"] = copy.deepcopy(doc["horizons"]) or {}
    env = os.environ if env is None else env
    for var, key in ENV_PATHS.items():
        if env.get(var):
            raw["paths"][key] = env[var]
    if out_dir is not None:
        raw["paths"]["out_dir"] = str(out_dir)
    unknown = [m for m in raw["models"] if m not in MODEL_NAMES]
    if unknown:
        raise ConfigError(f"unknown model(s) {unknown}; known: {', '.join(MODEL_NAMES)}")
    out_dir = Path(raw["paths"]["out_dir"])
    seed = int(raw["seed"])
    try:
        synth = SyntheticSpec.from_dict({"seed": seed, **raw["synthetic"]})
        features = FeatureSpec.from_dict(raw["features"])
    except TypeError as exc:
        raise ConfigError(f"bad synthetic/features section: {exc}") from exc
    return ToolConfig(
        seed=seed,
        out_dir=out_dir,
        consumption=Path(raw["paths"]["consumption"] or out_dir / "consumption.csv"),
        meteo=Path(raw["paths"]["meteo"] or out_dir / "meteo.csv"),
        instance=Path(raw["paths"]["instance"]) if raw["paths"]["instance"] else None,
        synthetic=synth,
        features=features,
        models=list(raw["models"]),
        model_options=raw["model_options"],
        horizons={str(k): int(v) for k, v in raw["horizons"].items()},
        scheduler=raw["scheduler"],
    )
