"""Tabular Q-learning collection policy and the CPython-style baseline."""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass

from .mdp import NOTHING, GcState, action_name, parse_action

# Footprint model for table_bytes: one 8-byte float per cell plus an 8-byte
# share of the (site, mem_bin) key, over a fixed container header.
BYTES_PER_ENTRY = 16
TABLE_OVERHEAD_BYTES = 64


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.1
    gamma: float = 0.9999
    epsilon_start: float = 0.2
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.98
    prior_collect_prob: float = 1 / 700
    shaping_kappa: float = 0.1
    penalty_init: float = -100.0
    threshold_penalty: float = 1.0
    enable_P: bool = True
    enable_S: bool = True
    enable_I: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.epsilon_min <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if not 0 <= self.prior_collect_prob <= 1:
            raise ValueError("prior_collect_prob must be a probability")
        if self.shaping_kappa < 0:
            raise ValueError("shaping_kappa must be >= 0")
        if self.threshold_penalty < 0:
            raise ValueError("threshold_penalty must be >= 0")


class QTable:
    """Sparse (state, action) -> value map stored as one row per state.

    Reads of an unseen state return zeros without creating a row. When
    ``lazy_penalty`` is set, the first read of a saturation-bin state
    materialises its row with ``lazy_penalty`` on every action except the
    full collection.
    """

    def __init__(self, num_generations: int, saturation_bin: int,
                 lazy_penalty: float | None = None) -> None:
        self.num_generations = num_generations
        self.num_actions = num_generations + 1
        self.saturation_bin = saturation_bin
        self.lazy_penalty = lazy_penalty
        self._rows: dict[GcState, list[float]] = {}
        self._zero = (0.0,) * self.num_actions

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, state) -> bool:
        return state in self._rows

    @property
    def entries(self) -> int:
        return len(self._rows) * self.num_actions

    def states(self) -> list[GcState]:
        return sorted(self._rows)

    def row(self, state: GcState):
        r = self._rows.get(state)
        if r is not None:
            return r
        if self.lazy_penalty is not None and state[1] == self.saturation_bin:
            return self.lazy_init(state, self.lazy_penalty)
        return self._zero

    def lazy_init(self, state: GcState, penalty: float) -> list[float]:
        r = self._rows.get(state)
        if r is None:
            r = [penalty] * self.num_actions
            r[self.num_generations] = 0.0
            self._rows[state] = r
        return r

    def value(self, state: GcState, action: int) -> float:
        return self.row(state)[action]

    def set(self, state: GcState, action: int, value: float) -> None:
        r = self.row(state)
        if r is self._zero:
            r = self._rows[state] = list(self._zero)
        r[action] = value

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site", "mem_bin", "action", "q_value"])
        for state in self.states():
            for a, v in enumerate(self._rows[state]):
                w.writerow([state.site, state.mem_bin, action_name(a), repr(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, num_generations: int, saturation_bin: int,
                 lazy_penalty: float | None = None) -> "QTable":
        table = cls(num_generations, saturation_bin, lazy_penalty)
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["site", "mem_bin", "action", "q_value"]:
            raise ValueError(f"unexpected policy header {reader.fieldnames}")
        for rec in reader:
            state = GcState(int(rec["site"]), int(rec["mem_bin"]))
            action = parse_action(rec["action"])
            if not 0 <= action <= num_generations:
                raise ValueError(f"action {rec['action']} out of range")
            r = table._rows.setdefault(state, list(table._zero))
            r[action] = float(rec["q_value"])
        return table


def lazy_init(table: QTable, state: GcState, cfg: LearnerConfig) -> None:
    """Seed a fresh saturation-bin state so only the full collection looks viable."""
    if cfg.enable_I and state.mem_bin == table.saturation_bin:
        table.lazy_init(state, cfg.penalty_init)


def table_bytes(table: QTable) -> int:
    return TABLE_OVERHEAD_BYTES + BYTES_PER_ENTRY * table.entries


def opt_action(table: QTable, state: GcState, actions=None) -> tuple[int, float]:
    """Greedy action for ``state``; ties go to the earliest action in ``actions``."""
    row = table.row(state)
    if actions is None:
        actions = range(table.num_actions)
    best = None
    best_v = 0.0
    for a in actions:
        v = row[a]
        if best is None or v > best_v:
            best, best_v = a, v
    if best is None:
        raise ValueError("empty action set")
    return best, best_v


def explore_action(cfg: LearnerConfig, num_generations: int, rng: random.Random) -> int:
    if cfg.enable_P:
        if rng.random() < cfg.prior_collect_prob:
            return rng.randrange(num_generations) + 1
        return NOTHING
    return rng.randrange(num_generations + 1)


def select_action(table: QTable, state: GcState, cfg: LearnerConfig, epsilon: float,
                  rng: random.Random) -> int:
    if rng.random() < epsilon:
        return explore_action(cfg, table.num_generations, rng)
    return opt_action(table, state)[0]


def q_update(table: QTable, state: GcState, action: int, reward: float,
             next_state: GcState, alpha: float, gamma: float) -> float:
    """One application of the classical update rule; returns the new value."""
    row = table.row(state)
    if row is table._zero:
        row = table._rows[state] = list(table._zero)
    # (1 - a) q + a target: algebraically the usual form, and exact when alpha == 1
    q = (1.0 - alpha) * row[action] + alpha * (reward + gamma * max(table.row(next_state)))
    row[action] = q
    return q


class Transition:
    __slots__ = ("state", "action", "next_state", "cost", "forced")

    def __init__(self, state: GcState, action: int, cost: int) -> None:
        self.state = state
        self.action = action
        self.next_state: GcState | None = None
        self.cost = cost
        self.forced = False

    def __repr__(self) -> str:
        return (f"Transition({self.state}, {action_name(self.action)}, next={self.next_state}, "
                f"cost={self.cost}, forced={self.forced})")


class TransitionBuffer:
    def __init__(self) -> None:
        self.records: list[Transition] = []

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def complete(self) -> int:
        n = len(self.records)
        return n - 1 if n and self.records[-1].next_state is None else n

    def flag_forced(self) -> None:
        if self.records:
            self.records[-1].forced = True


def record_transition(buffer: TransitionBuffer, state: GcState, action: int,
                      collection_cost_ticks: int) -> Transition:
    records = buffer.records
    if records:
        records[-1].next_state = state
    t = Transition(state, action, collection_cost_ticks)
    records.append(t)
    return t


def shaped_reward(cfg: LearnerConfig, r_raw: float, record: Transition,
                  epoch_ticks: int) -> float:
    r = r_raw
    if cfg.enable_S and record.action != NOTHING:
        r -= cfg.shaping_kappa * record.cost / epoch_ticks
    if record.forced:
        r -= cfg.threshold_penalty
    return r if r > -1.0 else -1.0


@dataclass(frozen=True)
class UpdateSummary:
    records_applied: int
    records_pending: int
    forced_penalties: int
    epsilon_used: float
    epsilon_next: float


def apply_reward(table: QTable, buffer: TransitionBuffer, cfg: LearnerConfig,
                 r_raw: float, epoch_ticks: int) -> tuple[int, int]:
    """Credit ``r_raw`` to every completed transition, oldest first.

    Completed records are consumed; a trailing record still waiting for its
    next state stays in the buffer. Returns (records applied, forced penalties).
    """
    if not 0.0 <= r_raw <= 1.0:
        raise ValueError(f"reward must be normalised to [0, 1], got {r_raw}")
    records = buffer.records
    n = buffer.complete
    alpha, gamma = cfg.alpha, cfg.gamma
    forced = 0
    for rec in records[:n]:
        forced += rec.forced
        q_update(table, rec.state, rec.action, shaped_reward(cfg, r_raw, rec, epoch_ticks),
                 rec.next_state, alpha, gamma)
    del records[:n]
    return n, forced


class QLearner:
    """Epsilon-greedy learner that owns its table, buffer and exploration rate."""

    def __init__(self, cfg: LearnerConfig, num_generations: int, saturation_bin: int,
                 rng: random.Random) -> None:
        self.cfg = cfg
        self.num_generations = num_generations
        self.rng = rng
        self.table = QTable(num_generations, saturation_bin,
                            cfg.penalty_init if cfg.enable_I else None)
        self.buffer = TransitionBuffer()
        self.epsilon = cfg.epsilon_start

    def decide(self, state: GcState) -> int:
        return select_action(self.table, state, self.cfg, self.epsilon, self.rng)

    def record(self, state: GcState, action: int, cost: int) -> None:
        record_transition(self.buffer, state, action, cost)

    def flag_forced(self) -> None:
        self.buffer.flag_forced()

    def apply_reward(self, r_raw: float, epoch_ticks: int) -> UpdateSummary:
        eps = self.epsilon
        n, forced = apply_reward(self.table, self.buffer, self.cfg, r_raw, epoch_ticks)
        self.epsilon = max(self.cfg.epsilon_min, eps * self.cfg.epsilon_decay)
        return UpdateSummary(n, len(self.buffer), forced, eps, self.epsilon)


# -- CPython-style baseline ------------------------------------------------

@dataclass(frozen=True)
class BaselineThresholds:
    t0: int = 700
    t1: int = 10
    t2: int = 10


@dataclass
class BaselineCounters:
    """Collection counters in the style of CPython's gc module.

    ``net_allocations`` is allocations minus deallocations since the last
    collection of any generation; ``gen1_collections`` counts young
    collections since the last middle-or-older one, and ``gen2_collections``
    counts middle collections since the last full one.
    """
    net_allocations: int = 0
    gen1_collections: int = 0
    gen2_collections: int = 0

    def observe(self, g: int) -> None:
        self.net_allocations = 0
        if g == 1:
            self.gen1_collections += 1
        elif g == 2:
            self.gen1_collections = 0
            self.gen2_collections += 1
        else:
            self.gen1_collections = 0
            self.gen2_collections = 0


def baseline_decide(counters: BaselineCounters,
                    thresholds: BaselineThresholds = BaselineThresholds(),
                    num_generations: int = 3) -> int:
    if counters.net_allocations < thresholds.t0:
        return NOTHING
    g = 1
    if counters.gen1_collections + 1 >= thresholds.t1:
        g = 3 if counters.gen2_collections + 1 >= thresholds.t2 else 2
    return min(g, num_generations)
