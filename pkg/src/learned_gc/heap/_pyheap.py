"""Pure-Python generational heap.

Reference-counted objects partitioned into generations, with a
mark-and-sweep collector for cycles. Reachability for a partial collection
is computed the way CPython does it: an object in the collected generations
is externally referenced when its stored ref_count exceeds the number of
references it receives from other objects in the collected set. Those
objects seed the mark phase; everything else in the collected set that the
mark phase cannot reach is garbage.
"""

from __future__ import annotations

from .common import CollectionStats, HeapError, HeapObject, format_edges


class _Obj:
    __slots__ = ("id", "site", "size", "generation", "out_refs", "ref_count")

    def __init__(self, oid: int, site: int, size: int, refs: list[int]) -> None:
        self.id = oid
        self.site = site
        self.size = size
        self.generation = 1
        self.out_refs = refs
        self.ref_count = 0


class Heap:
    backend = "python"

    def __init__(self, num_generations: int = 3, alloc_cost: int = 1,
                 cost_per_scan: int = 1) -> None:
        if num_generations < 1:
            raise HeapError("num_generations must be >= 1")
        self._num_generations = num_generations
        self._alloc_cost = alloc_cost
        self._cost_per_scan = cost_per_scan
        self._objects: dict[int, _Obj] = {}
        # index 0 unused so generation numbers index directly
        self._gens: list[set[int]] = [set() for _ in range(num_generations + 1)]
        self._roots: dict[int, int] = {}
        self._next_id = 1
        self._live_bytes = 0
        self._clock = 0
        self._net_allocations = 0
        self.total_allocated = 0
        self.total_freed = 0

    # -- read-only state --------------------------------------------------

    @property
    def num_generations(self) -> int:
        return self._num_generations

    @property
    def live_bytes(self) -> int:
        return self._live_bytes

    @property
    def virtual_clock(self) -> int:
        return self._clock

    @property
    def net_allocations(self) -> int:
        """Allocations minus refcount deallocations since the last collection."""
        return self._net_allocations

    def __len__(self) -> int:
        return len(self._objects)

    def is_live(self, oid: int) -> bool:
        return oid in self._objects

    def _live(self, oid: int) -> _Obj:
        try:
            return self._objects[oid]
        except KeyError:
            raise HeapError(f"object {oid} is not live") from None

    def get(self, oid: int) -> HeapObject:
        o = self._live(oid)
        return HeapObject(o.id, o.site, o.size, o.generation, tuple(o.out_refs), o.ref_count)

    def ref_count(self, oid: int) -> int:
        return self._live(oid).ref_count

    def generation(self, oid: int) -> int:
        return self._live(oid).generation

    def object_ids(self) -> list[int]:
        return sorted(self._objects)

    def roots(self) -> dict[int, int]:
        return dict(self._roots)

    def generation_counts(self) -> list[int]:
        return [len(s) for s in self._gens[1:]]

    def edges(self) -> list[tuple[int, int]]:
        return [(oid, t) for oid in sorted(self._objects) for t in self._objects[oid].out_refs]

    # -- mutation ---------------------------------------------------------

    def advance(self, ticks: int) -> None:
        if ticks < 0:
            raise HeapError("cannot move the clock backwards")
        self._clock += ticks

    def allocate(self, site: int, size: int, refs=()) -> int:
        if size <= 0:
            raise HeapError(f"allocation size must be positive, got {size}")
        objects = self._objects
        refs = list(refs)
        for t in refs:
            if t not in objects:
                raise HeapError(f"allocation references dead object {t}")
        for t in refs:
            objects[t].ref_count += 1
        oid = self._next_id
        self._next_id += 1
        objects[oid] = _Obj(oid, site, size, refs)
        self._gens[1].add(oid)
        self._live_bytes += size
        self._clock += self._alloc_cost
        self._net_allocations += 1
        self.total_allocated += 1
        return oid

    def add_root(self, oid: int) -> None:
        self._live(oid).ref_count += 1
        self._roots[oid] = self._roots.get(oid, 0) + 1

    def remove_root(self, oid: int) -> None:
        n = self._roots.get(oid, 0)
        if n == 0:
            raise HeapError(f"object {oid} is not a root")
        if n == 1:
            del self._roots[oid]
        else:
            self._roots[oid] = n - 1
        o = self._objects[oid]
        o.ref_count -= 1
        if o.ref_count == 0:
            self.cascade_free(oid)

    def add_ref(self, src: int, dst: int) -> None:
        s = self._live(src)
        d = self._live(dst)
        s.out_refs.append(dst)
        d.ref_count += 1

    def remove_ref(self, src: int, dst: int) -> None:
        s = self._live(src)
        try:
            s.out_refs.remove(dst)
        except ValueError:
            raise HeapError(f"no reference {src} -> {dst}") from None
        d = self._objects[dst]
        d.ref_count -= 1
        if d.ref_count == 0:
            self.cascade_free(dst)

    def cascade_free(self, oid: int) -> int:
        """Free ``oid`` (whose ref_count must be 0) and anything it alone kept alive."""
        o = self._live(oid)
        if o.ref_count != 0:
            raise HeapError(f"object {oid} still has {o.ref_count} references")
        objects = self._objects
        gens = self._gens
        freed_bytes = 0
        freed = 0
        stack = [o]
        while stack:
            o = stack.pop()
            del objects[o.id]
            gens[o.generation].discard(o.id)
            freed_bytes += o.size
            freed += 1
            for t in o.out_refs:
                target = objects[t]
                target.ref_count -= 1
                if target.ref_count == 0:
                    stack.append(target)
        self._live_bytes -= freed_bytes
        self.total_freed += freed
        self._net_allocations = max(0, self._net_allocations - freed)
        return freed_bytes

    def collect(self, g: int) -> CollectionStats:
        if not 1 <= g <= self._num_generations:
            raise HeapError(f"generation {g} out of range 1..{self._num_generations}")
        objects = self._objects
        gens = self._gens
        young: dict[int, int] = {}
        for k in range(1, g + 1):
            for oid in gens[k]:
                young[oid] = objects[oid].ref_count
        for oid in young:
            for t in objects[oid].out_refs:
                if t in young:
                    young[t] -= 1
        stack = [oid for oid, ext in young.items() if ext > 0]
        reached = set(stack)
        while stack:
            for t in objects[stack.pop()].out_refs:
                if t in young and t not in reached:
                    reached.add(t)
                    stack.append(t)

        garbage = [oid for oid in young if oid not in reached]
        dead = set(garbage)
        freed_bytes = 0
        for oid in garbage:
            o = objects.pop(oid)
            gens[o.generation].discard(oid)
            freed_bytes += o.size
            for t in o.out_refs:
                if t not in dead:
                    objects[t].ref_count -= 1

        target = min(g + 1, self._num_generations)
        for k in range(1, g + 1):
            if k == target:
                continue
            for oid in gens[k]:
                objects[oid].generation = target
            gens[target] |= gens[k]
            gens[k] = set()

        scanned = len(young)
        cost = scanned * self._cost_per_scan
        self._live_bytes -= freed_bytes
        self._clock += cost
        self._net_allocations = 0
        self.total_freed += len(garbage)
        return CollectionStats(g, scanned, len(garbage), freed_bytes, cost)

    # -- verification helpers ---------------------------------------------

    def reachable_set(self) -> set[int]:
        """Objects reachable from the root set by full graph traversal."""
        objects = self._objects
        seen = set(self._roots)
        stack = list(seen)
        while stack:
            for t in objects[stack.pop()].out_refs:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return seen

    def recount_refs(self) -> dict[int, int]:
        counts = dict.fromkeys(self._objects, 0)
        for oid, n in self._roots.items():
            counts[oid] += n
        for o in self._objects.values():
            for t in o.out_refs:
                counts[t] += 1
        return counts

    def dump_edges(self) -> str:
        return format_edges(self._roots, self.edges())
