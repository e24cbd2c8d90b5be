"""Car-following analysis toolkit.

Ingests 10 Hz vehicle trajectory files, extracts leader/follower episodes by
vehicle class, fits each episode to a library of behavioral clusters of the
GHR car-following law by minimum RMSE, and aggregates gap, lane-change, and
cluster-frequency statistics.
"""

from .classify import (ClassifierThresholds, PairClass, VehicleClass,
                       classify_by_length, pair_class)
from .episodes import (EndReason, Episode, EpisodeFrame, EpisodeFrames,
                       ExtractionConfig, LaneChangeEvent, compute_gap,
                       detect_lane_changes, extract_episodes,
                       segment_by_position)
from .errors import (CarfollowError, ConfigError, DomainError, FitError,
                     InternalError, LibraryError, ParseError,
                     StateUnavailableError)
from .fitting import (ClusterDefinition, ClusterLibrary, FitResult,
                      cluster_frequencies, fit_all, fit_episode,
                      load_cluster_library, mean_rmse_by_group, rmse)
from .ghr import (DelayInterp, FitMode, GHRParams, SimConfig, delayed_state,
                  ghr_acceleration, predict_accelerations, simulate_follower)
from .ingest import (ColumnSchema, Dataset, DerivePolicy, NGSIM_SCHEMA,
                     TrajectoryPoint, VehicleTrack, central_difference,
                     load_cache, parse_trajectory_file, save_cache,
                     validate_and_derive)
from .report import (GAP_BINS, LANECHANGE_BINS, MergeComparison, SpeedBins,
                     emit_report, gap_by_speed_bins, lane_change_rates,
                     merge_comparison, pair_summary,
                     post_lane_change_speed_stats)

__version__ = "0.1.0"

__all__ = [
    "CarfollowError", "ClassifierThresholds", "ClusterDefinition",
    "ClusterLibrary", "ColumnSchema", "ConfigError", "Dataset", "DelayInterp",
    "DerivePolicy", "DomainError", "EndReason", "Episode", "EpisodeFrame",
    "EpisodeFrames", "ExtractionConfig", "FitError", "FitMode", "FitResult",
    "GAP_BINS", "GHRParams", "InternalError", "LANECHANGE_BINS",
    "LaneChangeEvent", "LibraryError", "MergeComparison", "NGSIM_SCHEMA",
    "PairClass", "ParseError", "SimConfig", "SpeedBins",
    "StateUnavailableError", "TrajectoryPoint", "VehicleClass", "VehicleTrack",
    "central_difference", "classify_by_length", "cluster_frequencies",
    "compute_gap", "delayed_state", "detect_lane_changes", "emit_report",
    "extract_episodes", "fit_all", "fit_episode", "gap_by_speed_bins",
    "ghr_acceleration", "lane_change_rates", "load_cache",
    "load_cluster_library", "mean_rmse_by_group", "merge_comparison",
    "pair_class", "pair_summary", "parse_trajectory_file",
    "post_lane_change_speed_stats", "predict_accelerations", "rmse",
    "save_cache", "segment_by_position", "simulate_follower",
    "validate_and_derive",
]
