import random

import pytest

from learned_gc.heap import Heap
from learned_gc.workloads import (WEB_LOG, WEB_REQUEST, WORKLOADS, Mutator, RewardAccumulator,
                                  WorkEvent, WorkloadSpec, finish_epoch)


def drive(kind, steps, seed=0, mutator_cls=Mutator, **params):
    heap = Heap()
    mem = mutator_cls(heap)
    wl = WorkloadSpec(kind, params).build()
    rng = random.Random(seed)
    wl.setup(mem, rng)
    events = [wl.step(mem, rng) for _ in range(steps)]
    return heap, wl, events


def test_unknown_workload_and_params():
    with pytest.raises(ValueError):
        WorkloadSpec("nope")
    with pytest.raises(ValueError):
        WorkloadSpec("lru", {"capacityy": 3})


@pytest.mark.parametrize("params", [{"capacity": 0}, {"capacity": 2.5}, {"insert_fraction": 1.5},
                                    {"query_ticks": -1}, {"capacity": True}])
def test_param_validation(params):
    with pytest.raises(ValueError):
        WorkloadSpec("lru", params)


@pytest.mark.parametrize("kind", sorted(WORKLOADS))
def test_steps_report_work_and_time(kind):
    heap, _, events = drive(kind, 300)
    assert all(isinstance(e, WorkEvent) and e.work_units == 1 and e.ticks > 0 for e in events)
    assert heap.virtual_clock >= sum(e.ticks for e in events)


@pytest.mark.parametrize("kind", sorted(WORKLOADS))
def test_deterministic_per_seed(kind):
    a, _, ea = drive(kind, 400, seed=3)
    b, _, eb = drive(kind, 400, seed=3)
    c, _, _ = drive(kind, 400, seed=4)
    assert ea == eb
    assert a.dump_edges() == b.dump_edges()
    assert a.dump_edges() != c.dump_edges()


@pytest.mark.parametrize("kind", sorted(WORKLOADS))
def test_heap_consistent_and_garbage_is_cyclic(kind):
    heap, _, _ = drive(kind, 500)
    assert heap.recount_refs() == {o: heap.ref_count(o) for o in heap.object_ids()}
    before = len(heap)
    heap.collect(3)
    # every workload leaks cycles that only the tracing collector reclaims
    assert len(heap) < before
    assert set(heap.object_ids()) == heap.reachable_set()


class CollectingMutator(Mutator):
    """Runs a full collection before every allocation, the harshest schedule."""

    def allocate(self, site, size, refs=(), root=False):
        self.heap.collect(self.heap.num_generations)
        return super().allocate(site, size, refs, root)


@pytest.mark.parametrize("kind", sorted(WORKLOADS))
def test_live_structures_survive_aggressive_collection(kind):
    # would raise HeapError if a workload touched an object the collector freed
    heap, wl, _ = drive(kind, 150, mutator_cls=CollectingMutator)
    assert heap.recount_refs() == {o: heap.ref_count(o) for o in heap.object_ids()}


def test_lru_capacity_and_roots():
    heap, wl, _ = drive("lru", 3000, capacity=16, key_space=64)
    assert len(wl.cache) <= 16
    assert set(heap.roots()) == set(wl.cache.values())


def test_webserver_session_store_bounded():
    heap, wl, _ = drive("webserver", 1000, session_capacity=32)
    assert len(wl.sessions) <= 32


class DelayAt(Mutator):
    def __init__(self, heap, site, ticks):
        super().__init__(heap)
        self.site, self.ticks = site, ticks

    def allocate(self, site, size, refs=(), root=False):
        if site == self.site:
            self.heap.advance(self.ticks)
        return super().allocate(site, size, refs, root)


def test_io_window_absorbs_pause_but_request_phase_does_not():
    _, _, plain = drive("webserver", 50)
    _, _, io = drive("webserver", 50, mutator_cls=lambda h: DelayAt(h, WEB_LOG, 40))
    _, _, req = drive("webserver", 50, mutator_cls=lambda h: DelayAt(h, WEB_REQUEST, 40))
    base = [e.ticks for e in plain]
    assert [e.ticks for e in io] == base
    assert [e.ticks for e in req] == [t + 40 for t in base]


def test_webserver_pause_beyond_window_spills_over():
    _, _, plain = drive("webserver", 10)
    _, _, io = drive("webserver", 10, mutator_cls=lambda h: DelayAt(h, WEB_LOG, 100))
    assert all(a.ticks > b.ticks for a, b in zip(io, plain))


def test_tx_segments_retire():
    _, wl, _ = drive("tx", 3000, mean_lifetime_ticks=5000, segment_transactions=50)
    # 60 segments were opened; with short lifetimes only a handful remain
    assert 1 <= wl.live_segments() <= 10


def test_reward_accumulator():
    acc = RewardAccumulator(window_ticks=100)
    acc.add(WorkEvent(3, 10))
    acc.add(WorkEvent(2, 10))
    w = finish_epoch(acc)
    assert (w.epoch_index, w.work_units, w.raw_rate) == (0, 5, 0.05)
    assert finish_epoch(acc).epoch_index == 1
    assert acc.work_units == 0
