"""TOML experiment configuration with command-line style overrides.

Layout::

    [experiment]
    variant = "qpsi"            # run: one variant
    variants = ["q", "qpsi"]    # compare: variants (baseline always added)
    workloads = ["lru", "tx"]   # compare: workloads
    seeds = [0, 1, 2]           # compare: seeds
    seed = 0
    duration_ticks = 2000000
    epoch_ticks = 10000

    [learner]       # LearnerConfig fields other than the variant flags
    [memory]        # threshold_M (int or "auto"), num_bins, num_generations
    [workload]
    kind = "lru"
    [workload.lru]  # parameters for one workload kind

Unknown keys anywhere are errors.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harness import VARIANTS, ConfigError, ExperimentConfig, MemorySpec, normalize_variant
from .policy import LearnerConfig
from .workloads import WORKLOADS, WorkloadSpec

_VARIANT_FLAGS = {"enable_P", "enable_S", "enable_I"}
LEARNER_KEYS = {f.name for f in fields(LearnerConfig)} - _VARIANT_FLAGS
MEMORY_KEYS = {f.name for f in fields(MemorySpec)}
EXPERIMENT_KEYS = {"variant", "variants", "workloads", "seeds", "seed", "duration_ticks",
                   "epoch_ticks"}


@dataclass
class Settings:
    """A parsed configuration: the single-run config plus the comparison matrix axes."""
    experiment: ExperimentConfig
    variants: list[str] = field(default_factory=lambda: ["q", "qp", "qps", "qpsi"])
    workloads: list[WorkloadSpec] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Set dotted ``key=value`` pairs into a nested dict (values parsed as TOML)."""
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table value")
        node[parts[-1]] = _parse_value(value.strip())
    return raw


def _check_keys(section: str, table: dict, allowed: set) -> None:
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def _int(section, key, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{section}.{key} must be an integer, got {v!r}")
    return v


def settings_from_dict(raw: dict) -> Settings:
    _check_keys("top level", raw, {"experiment", "learner", "memory", "workload"})
    exp = raw.get("experiment", {})
    learner = raw.get("learner", {})
    memory = raw.get("memory", {})
    workload = raw.get("workload", {})
    _check_keys("experiment", exp, EXPERIMENT_KEYS)
    _check_keys("learner", learner, LEARNER_KEYS)
    _check_keys("memory", memory, MEMORY_KEYS)
    _check_keys("workload", workload, {"kind", *WORKLOADS})

    try:
        learner_cfg = LearnerConfig(**{k: float(v) if not isinstance(v, bool) else v
                                       for k, v in learner.items()})
        mem_spec = MemorySpec(**memory)
        specs = {}
        for kind in WORKLOADS:
            params = workload.get(kind, {})
            if not isinstance(params, dict):
                raise ConfigError(f"[workload.{kind}] must be a table")
            specs[kind] = WorkloadSpec(kind, dict(params))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    kind = workload.get("kind", "lru")
    if kind not in WORKLOADS:
        raise ConfigError(f"unknown workload {kind!r}; expected one of {sorted(WORKLOADS)}")
    base = ExperimentConfig(
        workload=specs[kind],
        variant=exp.get("variant", "qpsi"),
        learner=learner_cfg,
        memory=mem_spec,
        duration_ticks=_int("experiment", "duration_ticks", exp.get("duration_ticks", 2_000_000)),
        epoch_ticks=_int("experiment", "epoch_ticks", exp.get("epoch_ticks", 10_000)),
        seed=_int("experiment", "seed", exp.get("seed", 0)),
    )
    settings = Settings(base)
    if "variants" in exp:
        variants = [normalize_variant(str(v)) for v in exp["variants"]]
        bad = [v for v in variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown variant(s) {bad}; expected from {VARIANTS}")
        settings.variants = variants
    kinds = exp.get("workloads", sorted(WORKLOADS))
    bad = [k for k in kinds if k not in WORKLOADS]
    if bad:
        raise ConfigError(f"unknown workload(s) {bad}; expected from {sorted(WORKLOADS)}")
    settings.workloads = [specs[k] for k in kinds]
    if "seeds" in exp:
        settings.seeds = [_int("experiment", "seeds", s) for s in exp["seeds"]]
    return settings


def load_config(path=None, overrides=None) -> Settings:
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return settings_from_dict(apply_overrides(raw, overrides))


def config_to_dict(config: ExperimentConfig) -> dict:
    """Nested dict in the config-file schema; ``settings_from_dict`` reloads it."""
    learner = {k: v for k, v in dataclasses.asdict(config.learner).items()
               if k not in _VARIANT_FLAGS}
    return {
        "experiment": {"variant": config.variant, "seed": config.seed,
                       "duration_ticks": config.duration_ticks,
                       "epoch_ticks": config.epoch_ticks},
        "learner": learner,
        "memory": dataclasses.asdict(config.memory),
        "workload": {"kind": config.workload.kind,
                     config.workload.kind: dict(config.workload.build().params)},
    }


def config_from_dict(raw: dict) -> ExperimentConfig:
    return settings_from_dict(raw).experiment
