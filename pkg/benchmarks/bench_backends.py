"""Compare the pure-Python and compiled heap backends.

Times a raw mutation/collection kernel and a full simulated run per
backend, and checks that both backends produce identical results.

    python benchmarks/bench_backends.py [--ticks N] [--repeat K]
"""

import argparse
import random
import time

from learned_gc.harness import ExperimentConfig, MemorySpec, run
from learned_gc.heap import BACKENDS
from learned_gc.workloads import WorkloadSpec


def kernel(cls, ops: int, seed: int = 0):
    rng = random.Random(seed)
    h = cls()
    roots = []
    for _ in range(ops):
        r = rng.random()
        if r < 0.45 or not roots:
            oid = h.allocate(1, rng.randint(1, 64), [rng.choice(roots)] if roots else [])
            h.add_root(oid)
            roots.append(oid)
        elif r < 0.75:
            h.remove_root(roots.pop(rng.randrange(len(roots))))
        elif r < 0.99:
            h.add_ref(rng.choice(roots), rng.choice(roots))
        else:
            h.collect(rng.randint(1, 3))
    return h.dump_edges()


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ops", type=int, default=50_000, help="kernel operations")
    ap.add_argument("--ticks", type=int, default=500_000, help="simulated run length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = ExperimentConfig(WorkloadSpec("lru"), "baseline", memory=MemorySpec(1 << 20),
                           duration_ticks=args.ticks, epoch_ticks=10_000)
    rows = []
    outputs = {}
    for name, cls in BACKENDS.items():
        k_time, k_out = best_of(lambda: kernel(cls, args.ops), args.repeat)
        r_time, r_out = best_of(lambda: run(cfg, heap_factory=cls).epochs_csv(), args.repeat)
        outputs[name] = (k_out, r_out)
        rows.append((name, k_time, r_time))

    print(f"{'backend':<8} {'kernel s':>10} {'run s':>10}")
    for name, k, r in rows:
        print(f"{name:<8} {k:>10.3f} {r:>10.3f}")
    if len(rows) == 2:
        (_, pk, pr), (_, nk, nr) = rows
        print(f"speedup  {pk / nk:>9.1f}x {pr / nr:>9.1f}x")
        same = len(set(outputs.values())) == 1
        print("outputs identical" if same else "OUTPUTS DIFFER")
    else:
        print("compiled backend not built; only the Python heap was timed")


if __name__ == "__main__":
    main()
