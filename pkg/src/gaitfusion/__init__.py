"""Wearable-IMU gait assessment toolkit.

Fuses accelerometer and gyroscope streams through an adaptive Kalman filter
bank to track lower-limb attitude, segments the walk into gait cycles,
extracts a twelve-feature gait profile, and compares or classifies groups.
"""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("gaitfusion")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (
    AnalysisError,
    ConfigError,
    NumericError,
    ParseError,
    QualityError,
    ToolkitError,
    ValidationError,
)
from .imu_io import Group, ImuTrial, IngestConfig, Leg, parse_trial, write_trial
from .preprocess import PreprocConfig, preprocess_trial
from .attitude import EulerSeries, FusionConfig, estimate_attitude
from .segmentation import GaitCycleSet, SegConfig, segment_gait
from .features import (
    FEATURE_NAMES,
    EmbeddingConfig,
    FeatureVector,
    analyze_trial,
    feature_vector,
)
from .stats import Comparison, compare_groups
from .ml import LabeledDataset, MlConfig, cross_validate, evaluate_all
from .synth import GaitProfile, generate_population, generate_trial
from .config import ToolkitConfig, load_config

__all__ = [
    "__version__",
    "AnalysisError", "ConfigError", "NumericError", "ParseError",
    "QualityError", "ToolkitError", "ValidationError",
    "Group", "ImuTrial", "IngestConfig", "Leg", "parse_trial", "write_trial",
    "PreprocConfig", "preprocess_trial",
    "EulerSeries", "FusionConfig", "estimate_attitude",
    "GaitCycleSet", "SegConfig", "segment_gait",
    "FEATURE_NAMES", "EmbeddingConfig", "FeatureVector", "analyze_trial",
    "feature_vector",
    "Comparison", "compare_groups",
    "LabeledDataset", "MlConfig", "cross_validate", "evaluate_all",
    "GaitProfile", "generate_population", "generate_trial",
    "ToolkitConfig", "load_config",
]
