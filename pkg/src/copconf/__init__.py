"""Online conformal prediction with distribution-informed optimistic updates."""

from .cdf import CdfEstimate, CdfKind, ScoreWindow
from .datagen import Setting, SynthConfig, generate
from .errors import ConfigError, CopError, EstimatorContractError, EstimatorUnreadyError, IngestError, StreamCorruptionError
from .harness import ExperimentConfig, best_eta, ingest_csv, run_experiment, sweep
from .metrics import RunRecord, recovery_time, rolling_coverage, summarize
from .trackers import AciTracker, QuantileTracker, Schedule, TrackerConfig, Variant, make_tracker, track

__version__ = "0.1.0"
