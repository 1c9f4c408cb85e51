"""State encoding, action set and the memory-threshold rule.

Actions are plain ints: ``NOTHING`` (0) or a generation number ``g`` meaning
"collect generation g and everything younger". Using the generation number
as the action id keeps Q-table rows indexable by action directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

NOTHING = 0


class GcState(NamedTuple):
    site: int
    mem_bin: int


@dataclass(frozen=True)
class MemoryConfig:
    threshold_M: int
    num_bins: int = 64
    num_generations: int = 3

    def __post_init__(self):
        if self.threshold_M <= 0:
            raise ValueError(f"threshold_M must be positive, got {self.threshold_M}")
        if self.num_bins < 2:
            raise ValueError(f"num_bins must be >= 2, got {self.num_bins}")
        if self.num_generations < 1:
            raise ValueError(f"num_generations must be >= 1, got {self.num_generations}")

    @property
    def saturation_bin(self) -> int:
        return self.num_bins


def encode_state(site: int, live_bytes: int, cfg: MemoryConfig) -> GcState:
    b = live_bytes * cfg.num_bins // cfg.threshold_M
    return GcState(site, b if b < cfg.num_bins else cfg.num_bins)


def action_set(num_generations: int) -> list[int]:
    if num_generations < 1:
        raise ValueError("num_generations must be >= 1")
    return list(range(num_generations + 1))


def threshold_breached(live_bytes: int, cfg: MemoryConfig) -> bool:
    return live_bytes > cfg.threshold_M


def action_name(action: int) -> str:
    return "nothing" if action == NOTHING else f"collect{action}"


def parse_action(name: str) -> int:
    if name == "nothing":
        return NOTHING
    if name.startswith("collect") and name[7:].isdigit():
        return int(name[7:])
    raise ValueError(f"unknown action {name!r}")
