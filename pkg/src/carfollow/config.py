"""Pipeline configuration: a flat JSON document of dotted keys.

Every value that affects computed numbers lives here (command-line flags only
select subcommands, paths, and the handful of ingest conveniences, which are
folded into the effective configuration before hashing). Unknown keys and
wrong types are errors; the effective configuration's SHA-256 hash is
recorded in the report manifest for reproducibility.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .classify import ClassifierThresholds
from .episodes import ExtractionConfig
from .errors import ConfigError
from .ghr import DelayInterp, FitMode, SimConfig
from .ingest import DerivePolicy


@dataclass(frozen=True)
class ConfigKey:
    type: type
    default: object
    help: str
    choices: tuple | None = None


CONFIG_SCHEMA: dict[str, ConfigKey] = {
    "ingest.units": ConfigKey(str, "feet", "positional units of the input file",
                              ("feet", "meters")),
    "ingest.recompute_kinematics": ConfigKey(
        bool, False, "rebuild speed/accel from positions even when provided"),
    "ingest.max_backstep_m": ConfigKey(
        float, 3.0, "largest tolerated single-step y decrease before a track "
        "is excluded as corrupt"),
    "ingest.segment_length_m": ConfigKey(
        float, 400.0, "length of the monitored segment"),
    "classifier.car_max_m": ConfigKey(
        float, 5.0, "maximum passenger-car length (inclusive)"),
    "classifier.suv_max_m": ConfigKey(
        float, 5.5, "maximum SUV/light-truck length (inclusive)"),
    "extract.min_duration_s": ConfigKey(
        float, 25.0, "minimum episode duration kept"),
    "extract.gap_min_m": ConfigKey(
        float, 4.5, "episodes with a smaller mean gap are discarded"),
    "extract.gap_max_m": ConfigKey(
        float, 76.0, "episodes with a larger mean gap are discarded"),
    "extract.entry_grace_frames": ConfigKey(
        int, 10, "frames after a follower's first sample within which the "
        "pair relation must already hold"),
    "extract.merge_boundary_y_m": ConfigKey(
        float, 120.0, "y position where the merge influence zone starts"),
    "extract.lane_change_window_s": ConfigKey(
        float, 5.0, "speed averaging window on each side of a lane change"),
    "extract.min_segment_duration_s": ConfigKey(
        float, 5.0, "minimum duration of a merge-split sub-episode"),
    "extract.leader_source": ConfigKey(
        str, "auto", "leader identity source", ("auto", "column", "geometric")),
    "extract.headway_convention": ConfigKey(
        str, "front_to_front", "meaning of the space headway",
        ("front_to_front", "front_to_rear")),
    "extract.include_late_entries": ConfigKey(
        bool, False, "keep episodes whose pair forms after the entry grace"),
    "extract.exit_margin_m": ConfigKey(
        float, 10.0, "distance from the segment end treated as segment exit"),
    "ghr.dt": ConfigKey(float, 0.1, "integration/prediction step"),
    "ghr.mode": ConfigKey(str, "one_step_prediction", "fitting mode",
                          ("one_step_prediction", "forward_simulation")),
    "ghr.delay_interp": ConfigKey(str, "linear", "delayed state interpolation",
                                  ("linear", "nearest_frame")),
    "ghr.min_speed_floor": ConfigKey(
        float, 0.0, "simulated speed is clamped at this floor"),
    "fit.target": ConfigKey(str, "accel", "RMSE variable", ("accel", "speed")),
    "fit.emit_per_cluster": ConfigKey(
        bool, False, "also write the wide per-cluster RMSE table"),
    "report.format": ConfigKey(str, "csv", "report file format", ("csv", "json")),
    "report.weighting": ConfigKey(
        str, "episode", "averaging weight for summary tables",
        ("episode", "frame")),
    "report.lane_change_speed_threshold_kmh": ConfigKey(
        float, 20.0, "pre-change speed threshold of the slow-lane-change stat"),
    "run.merge_split": ConfigKey(
        bool, False, "also run the merge-boundary segmentation and comparison"),
    "run.seed": ConfigKey(int, 0, "seed for synthetic generators"),
}


def default_config() -> dict:
    return {key: spec.default for key, spec in CONFIG_SCHEMA.items()}


def _check_type(key, value, spec):
    if spec.type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
    elif spec.type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected integer, got {value!r}")
    elif spec.type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected number, got {value!r}")
        value = float(value)
    elif spec.type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected string, got {value!r}")
        if spec.choices and value not in spec.choices:
            raise ConfigError(
                f"{key}: must be one of {spec.choices}, got {value!r}")
    return value


def validate_config(overrides: dict) -> dict:
    """Merge overrides onto the defaults; unknown keys or bad types raise."""
    cfg = default_config()
    for key, value in overrides.items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        cfg[key] = _check_type(key, value, CONFIG_SCHEMA[key])
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Load a JSON config file (flat object) and apply extra overrides."""
    merged = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        merged.update(raw)
    if overrides:
        merged.update(overrides)
    return validate_config(merged)


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# adapters into module-level config objects


def derive_policy(cfg: dict) -> DerivePolicy:
    return DerivePolicy(
        recompute_kinematics=cfg["ingest.recompute_kinematics"],
        max_backstep_m=cfg["ingest.max_backstep_m"])


def classifier_thresholds(cfg: dict) -> ClassifierThresholds:
    return ClassifierThresholds(car_max_m=cfg["classifier.car_max_m"],
                                suv_max_m=cfg["classifier.suv_max_m"])


def extraction_config(cfg: dict) -> ExtractionConfig:
    return ExtractionConfig(
        min_duration_s=cfg["extract.min_duration_s"],
        gap_min_m=cfg["extract.gap_min_m"],
        gap_max_m=cfg["extract.gap_max_m"],
        entry_grace_frames=cfg["extract.entry_grace_frames"],
        merge_boundary_y_m=cfg["extract.merge_boundary_y_m"],
        lane_change_window_s=cfg["extract.lane_change_window_s"],
        min_segment_duration_s=cfg["extract.min_segment_duration_s"],
        leader_source=cfg["extract.leader_source"],
        headway_convention=cfg["extract.headway_convention"],
        include_late_entries=cfg["extract.include_late_entries"],
        exit_margin_m=cfg["extract.exit_margin_m"],
        thresholds=classifier_thresholds(cfg))


def sim_config(cfg: dict) -> SimConfig:
    return SimConfig(
        dt=cfg["ghr.dt"],
        mode=FitMode(cfg["ghr.mode"]),
        delay_interp=DelayInterp(cfg["ghr.delay_interp"]),
        min_speed_floor=cfg["ghr.min_speed_floor"])


def schema_lines() -> list:
    """Human-readable schema listing (used by the CLI and the docs)."""
    out = []
    for key, spec in CONFIG_SCHEMA.items():
        choices = f" {{{', '.join(map(str, spec.choices))}}}" if spec.choices else ""
        out.append(f"{key} ({spec.type.__name__}{choices}, "
                   f"default {spec.default!r}): {spec.help}")
    return out
