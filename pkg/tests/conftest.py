import random

import pytest

from learned_gc.heap import BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def heap_cls(request):
    return BACKENDS[request.param]


def brute_force_survivors(heap, g):
    """Objects reachable from roots or from anything older than generation g.

    Works only from the public graph view (edges, roots, generations), so it
    shares no code with either collector.
    """
    ids = heap.object_ids()
    adj = {oid: [] for oid in ids}
    for src, dst in heap.edges():
        adj[src].append(dst)
    seeds = set(heap.roots()) | {oid for oid in ids if heap.generation(oid) > g}
    seen = set(seeds)
    stack = list(seeds)
    while stack:
        for t in adj[stack.pop()]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


def build_random_heap(heap_cls, seed, max_objects=1000, num_generations=3):
    """Random graph with cycles, random roots and objects spread over generations.

    Intermediate collections push survivors into older generations, and
    some roots are dropped afterwards so older generations hold garbage too.
    """
    rng = random.Random(seed)
    heap = heap_cls(num_generations)
    n = rng.randint(1, max_objects)
    live = []
    rooted = []
    for i in range(n):
        if i % 64 == 0:
            live = [o for o in live if heap.is_live(o)]
        picks = rng.sample(live, min(len(live), rng.randint(0, 3)))
        refs = [o for o in picks if heap.is_live(o)]
        oid = heap.allocate(rng.randrange(8), rng.randint(1, 64), refs)
        heap.add_root(oid)  # keep alive while wiring
        live.append(oid)
        if rng.random() < 0.5:
            target = rng.choice(live)
            if heap.is_live(target):
                heap.add_ref(oid, target)  # may close a cycle or self-loop
        if rng.random() < 0.3:
            rooted.append(oid)
        else:
            heap.remove_root(oid)
        if rng.random() < 0.01:
            heap.collect(rng.randint(1, num_generations))
    # drop some roots so garbage cycles exist in every generation
    for oid in rooted:
        if heap.is_live(oid) and rng.random() < 0.5:
            heap.remove_root(oid)
    return heap
