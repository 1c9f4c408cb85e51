"""Run experiments: drive a workload against a heap under a collection policy.

The managed mutator makes one policy decision before every allocation,
enforces the memory threshold after it, and feeds the learner. Rewards are
the workload's work rate per fixed tick window, normalised by the running
maximum so far.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
import statistics
import sys
from collections import Counter
from dataclasses import asdict, dataclass, field, replace

from .heap import Heap
from .mdp import NOTHING, GcState, MemoryConfig
from .policy import (BaselineCounters, BaselineThresholds, LearnerConfig, QLearner,
                     baseline_decide, table_bytes)
from .workloads import Mutator, RewardAccumulator, WorkloadSpec, finish_epoch

log = logging.getLogger(__name__)

VARIANT_FLAGS = {
    "q": (False, False, False),
    "qp": (True, False, False),
    "qps": (True, True, False),
    "qpsi": (True, True, True),
}
VARIANTS = ("baseline", "never", *VARIANT_FLAGS)
_VARIANT_ALIASES = {"nevercollect": "never", "never_collect": "never"}
VARIANT_LABELS = {"baseline": "Baseline", "never": "NeverCollect", "q": "Q",
                  "qp": "Q+P", "qps": "Q+PS", "qpsi": "Q+PSI"}


class ConfigError(ValueError):
    pass


def normalize_variant(name: str) -> str:
    """Map spellings like "Q+PSI" or "NeverCollect" to the canonical variant key."""
    v = name.lower().replace("+", "")
    return _VARIANT_ALIASES.get(v, v)


@dataclass(frozen=True)
class MemorySpec:
    threshold_M: int | str = "auto"
    num_bins: int = 64
    num_generations: int = 3

    def __post_init__(self):
        if self.threshold_M != "auto":
            if not isinstance(self.threshold_M, int) or isinstance(self.threshold_M, bool):
                raise ConfigError("memory.threshold_M must be a positive integer or 'auto'")
            if self.threshold_M <= 0:
                raise ConfigError("memory.threshold_M must be positive")
        if self.num_bins < 2:
            raise ConfigError("memory.num_bins must be >= 2")
        if self.num_generations < 1:
            raise ConfigError("memory.num_generations must be >= 1")

    def resolve(self, threshold_M: int) -> MemoryConfig:
        return MemoryConfig(threshold_M, self.num_bins, self.num_generations)


@dataclass(frozen=True)
class ExperimentConfig:
    workload: WorkloadSpec
    variant: str = "qpsi"
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    memory: MemorySpec = field(default_factory=MemorySpec)
    duration_ticks: int = 2_000_000
    epoch_ticks: int = 10_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", normalize_variant(self.variant))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.epoch_ticks <= 0 or self.duration_ticks <= 0:
            raise ConfigError("duration_ticks and epoch_ticks must be positive")
        if self.epoch_ticks > self.duration_ticks:
            raise ConfigError("epoch_ticks must not exceed duration_ticks")
        if self.variant in VARIANT_FLAGS:
            p, s, i = VARIANT_FLAGS[self.variant]
            object.__setattr__(self, "learner",
                               replace(self.learner, enable_P=p, enable_S=s, enable_I=i))

    @property
    def num_epochs(self) -> int:
        return self.duration_ticks // self.epoch_ticks

    @property
    def learning(self) -> bool:
        return self.variant in VARIANT_FLAGS


@dataclass(frozen=True)
class EpochRecord:
    epoch_index: int
    raw_reward: float
    normalized_reward: float
    live_bytes_end: int
    table_bytes: int
    collections_by_gen: tuple[int, ...]
    forced_full_collections: int
    epsilon: float


@dataclass
class RunResult:
    config: ExperimentConfig
    threshold_M: int
    epochs: list[EpochRecord]
    median_reward: float
    peak_live_bytes: int
    total_collections: int
    forced_full_collections: int
    max_event_bytes: int
    decisions_by_site: dict[int, int]
    policy_collections_by_site: dict[int, int]
    trace: list[tuple] | None = None
    learner: QLearner | None = None

    @property
    def table_bytes(self) -> int:
        return self.epochs[-1].table_bytes if self.epochs else 0

    def epochs_csv(self) -> str:
        g = self.config.memory.num_generations
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "raw_reward", "normalized_reward", "live_bytes", "table_bytes",
                    *(f"collections_g{k}" for k in range(1, g + 1)), "forced_full", "epsilon"])
        for e in self.epochs:
            w.writerow([e.epoch_index, repr(e.raw_reward), repr(e.normalized_reward),
                        e.live_bytes_end, e.table_bytes, *e.collections_by_gen,
                        e.forced_full_collections, repr(e.epsilon)])
        return buf.getvalue()

    def summary(self) -> dict:
        from .config import config_to_dict
        return {
            "config": config_to_dict(self.config),
            "threshold_M": self.threshold_M,
            "epochs": len(self.epochs),
            "median_reward": self.median_reward,
            "peak_live_bytes": self.peak_live_bytes,
            "max_event_bytes": self.max_event_bytes,
            "total_collections": self.total_collections,
            "forced_full_collections": self.forced_full_collections,
            "table_bytes": self.table_bytes,
            "decisions_by_site": {str(k): v for k, v in sorted(self.decisions_by_site.items())},
            "policy_collections_by_site": {
                str(k): v for k, v in sorted(self.policy_collections_by_site.items())},
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


class _Never:
    def decide(self, state):
        return NOTHING

    def observe(self, g):
        pass


class _Baseline:
    def __init__(self, heap, num_generations, thresholds=BaselineThresholds()):
        self.heap = heap
        self.g = num_generations
        self.thresholds = thresholds
        self.counters = BaselineCounters()

    def decide(self, state):
        self.counters.net_allocations = self.heap.net_allocations
        return baseline_decide(self.counters, self.thresholds, self.g)

    def observe(self, g):
        self.counters.observe(g)


class ManagedMutator(Mutator):
    """Mutator that runs the collection policy around every allocation."""

    def __init__(self, heap, memory: MemoryConfig, controller, learner: QLearner | None = None,
                 trace: bool = False) -> None:
        super().__init__(heap)
        self.memory = memory
        self.controller = controller
        self.learner = learner
        self.full = memory.num_generations
        self.collections = [0] * (memory.num_generations + 1)
        self.forced = 0
        self.peak_live_bytes = heap.live_bytes
        self.decisions_by_site: Counter = Counter()
        self.policy_collections_by_site: Counter = Counter()
        # trace entries: (kind, epoch, generation or live bytes, clock)
        self.trace: list[tuple] | None = [] if trace else None
        self.epoch = 0
        self._M = memory.threshold_M
        self._B = memory.num_bins

    def allocate(self, site, size, refs=(), root=False):
        heap = self.heap
        # the state sees the usage this allocation would produce
        mem_bin = (heap.live_bytes + size) * self._B // self._M
        state = GcState(site, mem_bin if mem_bin < self._B else self._B)
        action = self.controller.decide(state)
        cost = 0
        if action:
            stats = heap.collect(action)
            cost = stats.cost_ticks
            self.collections[action] += 1
            self.policy_collections_by_site[site] += 1
            self.controller.observe(action)
            if self.trace is not None:
                self.trace.append(("collect", self.epoch, action, heap.virtual_clock))
        oid = heap.allocate(site, size, refs)
        if root:
            heap.add_root(oid)
        self.bytes_allocated += size
        self.decisions_by_site[site] += 1
        live = heap.live_bytes
        if live > self.peak_live_bytes:
            self.peak_live_bytes = live
        forced = live > self._M
        if forced:
            if self.trace is not None:
                self.trace.append(("breach", self.epoch, live, heap.virtual_clock))
            heap.collect(self.full)
            self.forced += 1
            self.controller.observe(self.full)
            if self.trace is not None:
                self.trace.append(("forced", self.epoch, self.full, heap.virtual_clock))
        if self.learner is not None:
            self.learner.record(state, action, cost)
            if forced:
                self.learner.flag_forced()
        return oid


class _LearnerController:
    def __init__(self, learner: QLearner):
        self.learner = learner

    def decide(self, state):
        return self.learner.decide(state)

    def observe(self, g):
        pass


def _policy_seed(seed: int) -> int:
    # independent stream so the workload's event sequence is variant-agnostic
    return (seed * 0x9E3779B1 + 0x5EED) & 0xFFFFFFFF


def run(config: ExperimentConfig, *, threshold_M: int | None = None, trace: bool = False,
        heap_factory=None) -> RunResult:
    """Execute one experiment and collect per-epoch metrics.

    ``threshold_M`` overrides the configured threshold (used by calibration
    and by the matrix runner to share one calibration across variants).
    """
    if threshold_M is None:
        if config.memory.threshold_M == "auto":
            threshold_M = calibrate_M(config.workload, config.seed, config.duration_ticks,
                                      config.epoch_ticks, config.memory.num_generations)
        else:
            threshold_M = config.memory.threshold_M
    memory = config.memory.resolve(threshold_M)
    g = memory.num_generations
    heap = (heap_factory or Heap)(g)

    learner = None
    if config.variant == "baseline":
        controller = _Baseline(heap, g)
    elif config.variant == "never":
        controller = _Never()
    else:
        learner = QLearner(config.learner, g, memory.saturation_bin,
                           random.Random(_policy_seed(config.seed)))
        controller = _LearnerController(learner)
    mem = ManagedMutator(heap, memory, controller, learner, trace=trace)

    workload = config.workload.build()
    rng = random.Random(config.seed)
    workload.setup(mem, rng)

    epoch_ticks = config.epoch_ticks
    num_epochs = config.num_epochs
    acc = RewardAccumulator(epoch_ticks)
    epochs: list[EpochRecord] = []
    running_max = 0.0
    boundary = epoch_ticks
    prev_collections = list(mem.collections)
    prev_forced = 0
    max_event_bytes = mem.bytes_allocated
    step = workload.step
    while len(epochs) < num_epochs:
        before = mem.bytes_allocated
        event = step(mem, rng)
        acc.work_units += event.work_units
        allocated = mem.bytes_allocated - before
        if allocated > max_event_bytes:
            max_event_bytes = allocated
        while heap.virtual_clock >= boundary and len(epochs) < num_epochs:
            window = finish_epoch(acc)
            raw = window.raw_rate
            if raw > running_max:
                running_max = raw
            norm = raw / running_max if running_max > 0 else 0.0
            eps = 0.0
            tbytes = 0
            if learner is not None:
                eps = learner.apply_reward(norm, epoch_ticks).epsilon_used
                tbytes = table_bytes(learner.table)
            by_gen = tuple(c - p for c, p in zip(mem.collections[1:], prev_collections[1:]))
            epochs.append(EpochRecord(window.epoch_index, raw, norm, heap.live_bytes, tbytes,
                                      by_gen, mem.forced - prev_forced, eps))
            prev_collections = list(mem.collections)
            prev_forced = mem.forced
            mem.epoch = len(epochs)
            boundary += epoch_ticks

    return RunResult(
        config=config,
        threshold_M=threshold_M,
        epochs=epochs,
        median_reward=statistics.median(e.raw_reward for e in epochs),
        peak_live_bytes=mem.peak_live_bytes,
        total_collections=sum(mem.collections) + mem.forced,
        forced_full_collections=mem.forced,
        max_event_bytes=max_event_bytes,
        decisions_by_site=dict(mem.decisions_by_site),
        policy_collections_by_site=dict(mem.policy_collections_by_site),
        trace=mem.trace,
        learner=learner,
    )


_calibration_cache: dict[tuple, int] = {}


def calibrate_M(workload: WorkloadSpec, seed: int, duration_ticks: int,
                epoch_ticks: int = 10_000, num_generations: int = 3) -> int:
    """Median end-of-epoch live bytes under the baseline policy with no threshold."""
    key = (workload.kind, json.dumps(workload.params, sort_keys=True), seed,
           duration_ticks, epoch_ticks, num_generations)
    if key not in _calibration_cache:
        cfg = ExperimentConfig(workload, "baseline", memory=MemorySpec(1, 2, num_generations),
                               duration_ticks=duration_ticks, epoch_ticks=epoch_ticks, seed=seed)
        result = run(cfg, threshold_M=sys.maxsize)
        _calibration_cache[key] = median_live_bytes(result.epochs)
        log.info("calibrated M=%d for %s seed=%d", _calibration_cache[key], workload.kind, seed)
    return _calibration_cache[key]


def median_live_bytes(epochs) -> int:
    return int(statistics.median(e.live_bytes_end for e in epochs))


def median_improvement(variant: RunResult | float, baseline: RunResult | float) -> float:
    """Percent change of the variant's median reward relative to the baseline's."""
    v = variant.median_reward if isinstance(variant, RunResult) else variant
    b = baseline.median_reward if isinstance(baseline, RunResult) else baseline
    if b == 0:
        raise ValueError("baseline median reward is 0; improvement is undefined")
    return 100.0 * (v - b) / b


@dataclass
class ComparisonTable:
    workloads: list[str]
    variants: list[str]
    cells: dict[tuple[str, str], float]
    per_seed: dict[tuple[str, str], dict[int, float]]
    results: dict[tuple[str, str, int], RunResult]

    def spread(self, workload: str, variant: str) -> float:
        vals = list(self.per_seed[workload, variant].values())
        return statistics.pstdev(vals) if len(vals) > 1 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["workload", *(VARIANT_LABELS[v] for v in self.variants)])
        for wl in self.workloads:
            w.writerow([wl, *(f"{self.cells[wl, v]:.2f}" for v in self.variants)])
        return buf.getvalue()

    def detail_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["workload", "variant", "seed", "median_reward", "baseline_median_reward",
                    "improvement_pct"])
        for wl in self.workloads:
            for v in self.variants:
                for seed, imp in sorted(self.per_seed[wl, v].items()):
                    w.writerow([wl, VARIANT_LABELS[v], seed,
                                repr(self.results[wl, v, seed].median_reward),
                                repr(self.results[wl, "baseline", seed].median_reward),
                                f"{imp:.4f}"])
        return buf.getvalue()


def _run_one(args):
    config, threshold_M, trace = args
    result = run(config, threshold_M=threshold_M, trace=trace)
    result.learner = None  # keep pickles small when fanned out
    return result


def compare_variants(matrix: list[ExperimentConfig], workers: int = 1,
                     trace: bool = False) -> ComparisonTable:
    """Median-of-per-seed-median improvements of every variant over the baseline."""
    if not matrix:
        raise ConfigError("empty experiment matrix")
    specs: dict[str, WorkloadSpec] = {}
    cells: dict[tuple[str, int], set[str]] = {}
    shape = {(c.duration_ticks, c.epoch_ticks, c.memory) for c in matrix}
    if len(shape) != 1:
        raise ConfigError("matrix runs must share duration, epoching and memory settings")
    for c in matrix:
        if specs.setdefault(c.workload.kind, c.workload) != c.workload:
            raise ConfigError(f"workload {c.workload.kind!r} appears with different parameters")
        cells.setdefault((c.workload.kind, c.seed), set()).add(c.variant)
    variant_sets = {frozenset(v) for v in cells.values()}
    if len(variant_sets) != 1:
        raise ConfigError("every (workload, seed) must run the same set of variants")
    if "baseline" not in next(iter(variant_sets)):
        raise ConfigError("matrix needs a baseline run for every (workload, seed)")
    seeds_by_wl: dict[str, set[int]] = {}
    for wl, seed in cells:
        seeds_by_wl.setdefault(wl, set()).add(seed)
    if len({frozenset(s) for s in seeds_by_wl.values()}) != 1:
        raise ConfigError("every workload must use the same seeds")

    jobs = []
    for c in sorted(matrix, key=lambda c: (c.workload.kind, c.seed, VARIANTS.index(c.variant))):
        m = c.memory.threshold_M
        if m == "auto":
            m = calibrate_M(c.workload, c.seed, c.duration_ticks, c.epoch_ticks,
                            c.memory.num_generations)
        jobs.append((c, m, trace))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            outputs = list(pool.map(_run_one, jobs))
    else:
        outputs = [_run_one(j) for j in jobs]
    results = {(c.workload.kind, c.variant, c.seed): r for (c, _, _), r in zip(jobs, outputs)}

    workloads = sorted(specs)
    variants = [v for v in VARIANTS if v in next(iter(variant_sets)) and v != "baseline"]
    per_seed: dict[tuple[str, str], dict[int, float]] = {}
    table: dict[tuple[str, str], float] = {}
    for wl in workloads:
        for v in variants:
            imps = {seed: median_improvement(results[wl, v, seed], results[wl, "baseline", seed])
                    for seed in sorted(seeds_by_wl[wl])}
            per_seed[wl, v] = imps
            table[wl, v] = statistics.median(imps.values())
    return ComparisonTable(workloads, variants, table, per_seed, results)


def build_matrix(base: ExperimentConfig, workloads: list[WorkloadSpec], variants: list[str],
                 seeds: list[int]) -> list[ExperimentConfig]:
    if "baseline" not in variants:
        variants = ["baseline", *variants]
    return [replace(base, workload=w, variant=v, seed=s)
            for w in workloads for v in variants for s in seeds]


def io_window_ratio(result: RunResult, io_sites) -> float:
    """How much more often policy collections land on I/O-window decisions than chance.

    A uniformly random schedule with the same number of collections would
    put the fraction ``decisions at io sites / all decisions`` of them in the
    window; the ratio compares the policy's actual fraction to that.
    """
    decisions = sum(result.decisions_by_site.values())
    collections = sum(result.policy_collections_by_site.values())
    if not decisions or not collections:
        return 0.0
    io_dec = sum(n for s, n in result.decisions_by_site.items() if s in io_sites)
    io_col = sum(n for s, n in result.policy_collections_by_site.items() if s in io_sites)
    if io_dec == 0:
        return 0.0
    return (io_col / collections) / (io_dec / decisions)


def convergence_epoch(epochs, tail_fraction: float = 0.2, window_fraction: float = 0.1,
                      tolerance: float = 0.1) -> int | None:
    """First epoch whose trailing rolling median reaches the late-run level.

    The late-run level is the median raw reward over the final
    ``tail_fraction`` of epochs. The rolling median uses a trailing window of
    ``window_fraction`` of the run; the result is the first window-end index
    whose median is at least ``1 - tolerance`` times that level, or None.
    """
    rewards = [e.raw_reward for e in epochs]
    n = len(rewards)
    if n == 0:
        return None
    tail = max(1, round(n * tail_fraction))
    target = statistics.median(rewards[-tail:])
    window = max(1, round(n * window_fraction))
    for i in range(window - 1, n):
        if statistics.median(rewards[i - window + 1:i + 1]) >= (1 - tolerance) * target:
            return i
    return None


__all__ = ["ComparisonTable", "ConfigError", "EpochRecord", "ExperimentConfig", "ManagedMutator",
           "MemorySpec", "RunResult", "VARIANTS", "VARIANT_LABELS", "asdict", "build_matrix",
           "calibrate_M", "convergence_epoch", "compare_variants", "io_window_ratio", "median_improvement",
           "median_live_bytes", "normalize_variant", "run"]
