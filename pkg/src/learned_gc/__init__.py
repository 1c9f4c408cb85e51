"""Learned garbage-collection scheduling on a simulated generational heap."""

from .harness import (ComparisonTable, ConfigError, EpochRecord, ExperimentConfig, MemorySpec,
                      RunResult, calibrate_M, compare_variants, median_improvement, run)
from .heap import Heap
from .mdp import GcState, MemoryConfig
from .policy import LearnerConfig, QLearner, QTable
from .workloads import WorkloadSpec

__version__ = "0.1.0"

__all__ = ["ComparisonTable", "ConfigError", "EpochRecord", "ExperimentConfig", "GcState", "Heap",
           "LearnerConfig", "MemoryConfig", "MemorySpec", "QLearner", "QTable", "RunResult",
           "WorkloadSpec", "calibrate_M", "compare_variants", "median_improvement", "run"]
