"""Single plain-text configuration file for the whole toolkit.

Format: one `key = value` per line, `#` comments, flat namespace.  Every key
maps onto a field of one of the stage configs below; unknown keys are errors
so typos cannot silently fall back to defaults.  Command-line flags override
file values, which override the built-in defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .attitude import FusionConfig
from .errors import ConfigError
from .features import EmbeddingConfig
from .imu_io import IngestConfig
from .ml import MlConfig
from .preprocess import PreprocConfig
from .segmentation import SegConfig


@dataclass(frozen=True)
class ToolkitConfig:
    ingest: IngestConfig = IngestConfig()
    preproc: PreprocConfig = PreprocConfig()
    fusion: FusionConfig = FusionConfig()
    seg: SegConfig = SegConfig()
    embed: EmbeddingConfig = EmbeddingConfig()
    ml: MlConfig = MlConfig()
    n_ldh: int = 20
    n_control: int = 15
    duration_s: float = 20.0
    seed: int = 0
    jobs: int = 1


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def _strings(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(","))


# key -> (section attr or None for top level, field name, caster)
_KEYS = {
    "sample_rate_hz": ("ingest", "sample_rate_hz", float),
    "acc_unit": ("ingest", "acc_unit", str),
    "gyro_unit": ("ingest", "gyro_unit", str),
    "outlier_sigma": ("preproc", "outlier_sigma", float),
    "butter_order": ("preproc", "butter_order", int),
    "butter_cutoff_hz": ("preproc", "butter_cutoff_hz", float),
    "bank_size": ("fusion", "bank_size", int),
    "gates_sigma": ("fusion", "gates_sigma", _floats),
    "q_nominal_deg": ("fusion", "q_nominal_deg", float),
    "r_nominal_deg": ("fusion", "r_nominal_deg", float),
    "init_p_deg": ("fusion", "init_p_deg", float),
    "adapt_window": ("fusion", "adapt_window", int),
    "init_window_s": ("fusion", "init_window_s", float),
    "kinematics_frame": ("fusion", "kinematics_frame", str),
    "r_floor_deg": ("fusion", "r_floor_deg", float),
    "backend": ("fusion", "backend", str),
    "min_prominence_rad": ("seg", "min_prominence_rad", float),
    "min_distance_s": ("seg", "min_distance_s", float),
    "event_mapping": ("seg", "event_mapping", str),
    "embed_dim": ("embed", "dim", int),
    "embed_delay": ("embed", "delay", int),
    "evolve_steps": ("embed", "evolve_steps", int),
    "neighbor_min_separation": ("embed", "min_separation", int),
    "classifier": ("ml", "classifiers", _strings),
    "n_trees": ("ml", "n_trees", int),
    "m_try": ("ml", "m_try", int),
    "svm_c": ("ml", "svm_c", float),
    "svm_gamma": ("ml", "svm_gamma", float),
    "mlp_hidden": ("ml", "mlp_hidden", int),
    "mlp_lr": ("ml", "mlp_lr", float),
    "mlp_epochs": ("ml", "mlp_epochs", int),
    "cv_folds": ("ml", "cv_folds", int),
    "normalize_scope": ("ml", "normalize_scope", str),
    "top_k": ("ml", "top_k", int),
    "n_ldh": (None, "n_ldh", int),
    "n_control": (None, "n_control", int),
    "duration_s": (None, "duration_s", float),
    "seed": (None, "seed", int),
    "jobs": (None, "jobs", int),
}

# crop is the one two-field composite
_CROP_KEYS = ("crop_start_s", "crop_end_s")


def parse_config_text(text: str) -> ToolkitConfig:
    sections: dict = {"ingest": {}, "preproc": {}, "fusion": {}, "seg": {},
                      "embed": {}, "ml": {}, None: {}}
    crop = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _CROP_KEYS:
            try:
                crop[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"line {ln}: bad value for {key}: {value!r}") from exc
            continue
        if key not in _KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        section, field, caster = _KEYS[key]
        try:
            sections[section][field] = caster(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {ln}: bad value for {key}: {value!r}") from exc
    if crop:
        if set(crop) != set(_CROP_KEYS):
            raise ConfigError("crop_start_s and crop_end_s must be given together")
        sections["preproc"]["crop"] = (crop["crop_start_s"], crop["crop_end_s"])
    try:
        return ToolkitConfig(
            ingest=IngestConfig(**sections["ingest"]),
            preproc=PreprocConfig(**sections["preproc"]),
            fusion=FusionConfig(**sections["fusion"]),
            seg=SegConfig(**sections["seg"]),
            embed=EmbeddingConfig(**sections["embed"]),
            ml=MlConfig(**sections["ml"]),
            **sections[None],
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> tuple:
    """Read a config file; returns (ToolkitConfig, raw bytes for hashing)."""
    data = Path(path).read_bytes()
    return parse_config_text(data.decode()), data


def override(cfg: ToolkitConfig, **top_level) -> ToolkitConfig:
    """Replace top-level fields (seed, jobs, ...) from CLI flags."""
    fields = {k: v for k, v in top_level.items() if v is not None}
    bad = set(fields) - {f.name for f in dataclasses.fields(ToolkitConfig)}
    if bad:
        raise ConfigError(f"cannot override {sorted(bad)}")
    return dataclasses.replace(cfg, **fields) if fields else cfg
