# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled generational heap; behaviourally identical to ``_pyheap.Heap``.

Object ids are handed out sequentially, so per-object fields live in flat
vectors indexed by id. Each generation is an unordered vector of ids with a
back-index so removal is O(1) by swapping with the last element.
"""

from libcpp.vector cimport vector

from .common import CollectionStats, HeapError, HeapObject, format_edges

ctypedef long long i64


cdef class Heap:
    cdef readonly str backend
    cdef int _g
    cdef i64 _alloc_cost, _cost_per_scan
    cdef i64 _next_id, _live_bytes, _clock, _net, _count
    cdef public i64 total_allocated, total_freed
    cdef vector[i64] _site, _size, _rc, _pos, _rootc
    cdef vector[int] _gen          # 0 means dead / never allocated
    cdef vector[vector[i64]] _out
    cdef vector[vector[i64]] _gens  # index 0 unused
    # scratch space for collections, stamped to avoid clearing
    cdef vector[i64] _stamp, _gcref, _reached
    cdef i64 _epoch

    def __init__(self, int num_generations=3, i64 alloc_cost=1, i64 cost_per_scan=1):
        if num_generations < 1:
            raise HeapError("num_generations must be >= 1")
        self.backend = "native"
        self._g = num_generations
        self._alloc_cost = alloc_cost
        self._cost_per_scan = cost_per_scan
        self._next_id = 1
        self._live_bytes = 0
        self._clock = 0
        self._net = 0
        self._count = 0
        self._epoch = 0
        self.total_allocated = 0
        self.total_freed = 0
        self._gens.resize(num_generations + 1)
        self._grow(1)

    cdef void _grow(self, i64 n):
        self._site.resize(n, 0)
        self._size.resize(n, 0)
        self._rc.resize(n, 0)
        self._pos.resize(n, 0)
        self._rootc.resize(n, 0)
        self._gen.resize(n, 0)
        self._out.resize(n)
        self._stamp.resize(n, 0)
        self._gcref.resize(n, 0)
        self._reached.resize(n, 0)

    cdef inline bint _alive(self, i64 oid):
        return 0 < oid < self._next_id and self._gen[oid] != 0

    cdef inline void _check(self, i64 oid) except *:
        if not self._alive(oid):
            raise HeapError(f"object {oid} is not live")

    cdef inline void _gen_remove(self, i64 oid):
        cdef vector[i64]* lst = &self._gens[self._gen[oid]]
        cdef i64 p = self._pos[oid]
        cdef i64 last = lst.back()
        lst[0][p] = last
        self._pos[last] = p
        lst.pop_back()

    # -- read-only state --------------------------------------------------

    @property
    def num_generations(self):
        return self._g

    @property
    def live_bytes(self):
        return self._live_bytes

    @property
    def virtual_clock(self):
        return self._clock

    @property
    def net_allocations(self):
        """Allocations minus refcount deallocations since the last collection."""
        return self._net

    def __len__(self):
        return self._count

    def is_live(self, i64 oid):
        return self._alive(oid)

    def get(self, i64 oid):
        self._check(oid)
        return HeapObject(oid, self._site[oid], self._size[oid], self._gen[oid],
                          tuple(self._out[oid]), self._rc[oid])

    def ref_count(self, i64 oid):
        self._check(oid)
        return self._rc[oid]

    def generation(self, i64 oid):
        self._check(oid)
        return self._gen[oid]

    def object_ids(self):
        ids = []
        for k in range(1, self._g + 1):
            ids.extend(self._gens[k])
        ids.sort()
        return ids

    def roots(self):
        return {oid: self._rootc[oid] for oid in self.object_ids() if self._rootc[oid]}

    def generation_counts(self):
        return [self._gens[k].size() for k in range(1, self._g + 1)]

    def edges(self):
        return [(oid, t) for oid in self.object_ids() for t in self._out[oid]]

    # -- mutation ---------------------------------------------------------

    def advance(self, i64 ticks):
        if ticks < 0:
            raise HeapError("cannot move the clock backwards")
        self._clock += ticks

    def allocate(self, i64 site, i64 size, refs=()):
        if size <= 0:
            raise HeapError(f"allocation size must be positive, got {size}")
        cdef vector[i64] out
        cdef i64 t
        for t in refs:
            if not self._alive(t):
                raise HeapError(f"allocation references dead object {t}")
            out.push_back(t)
        for t in out:
            self._rc[t] += 1
        cdef i64 oid = self._next_id
        self._next_id += 1
        if <i64>self._gen.size() <= oid:
            self._grow(2 * oid)
        self._site[oid] = site
        self._size[oid] = size
        self._rc[oid] = 0
        self._rootc[oid] = 0
        self._gen[oid] = 1
        self._out[oid].swap(out)
        self._pos[oid] = self._gens[1].size()
        self._gens[1].push_back(oid)
        self._count += 1
        self._live_bytes += size
        self._clock += self._alloc_cost
        self._net += 1
        self.total_allocated += 1
        return oid

    def add_root(self, i64 oid):
        self._check(oid)
        self._rc[oid] += 1
        self._rootc[oid] += 1

    def remove_root(self, i64 oid):
        if not self._alive(oid) or self._rootc[oid] == 0:
            raise HeapError(f"object {oid} is not a root")
        self._rootc[oid] -= 1
        self._rc[oid] -= 1
        if self._rc[oid] == 0:
            self._cascade(oid)

    def add_ref(self, i64 src, i64 dst):
        self._check(src)
        self._check(dst)
        self._out[src].push_back(dst)
        self._rc[dst] += 1

    def remove_ref(self, i64 src, i64 dst):
        self._check(src)
        cdef vector[i64]* out = &self._out[src]
        cdef size_t i, n = out.size()
        for i in range(n):
            if out[0][i] == dst:
                out.erase(out.begin() + i)
                break
        else:
            raise HeapError(f"no reference {src} -> {dst}")
        self._rc[dst] -= 1
        if self._rc[dst] == 0:
            self._cascade(dst)

    def cascade_free(self, i64 oid):
        """Free ``oid`` (whose ref_count must be 0) and anything it alone kept alive."""
        self._check(oid)
        if self._rc[oid] != 0:
            raise HeapError(f"object {oid} still has {self._rc[oid]} references")
        return self._cascade(oid)

    cdef i64 _cascade(self, i64 oid):
        cdef vector[i64] stack
        cdef vector[i64] out
        cdef i64 o, t, freed = 0, freed_bytes = 0
        stack.push_back(oid)
        while not stack.empty():
            o = stack.back()
            stack.pop_back()
            self._gen_remove(o)
            self._gen[o] = 0
            freed_bytes += self._size[o]
            freed += 1
            out.swap(self._out[o])
            vector[i64]().swap(self._out[o])
            for t in out:
                self._rc[t] -= 1
                if self._rc[t] == 0:
                    stack.push_back(t)
            out.clear()
        self._count -= freed
        self._live_bytes -= freed_bytes
        self.total_freed += freed
        self._net = self._net - freed if self._net > freed else 0
        return freed_bytes

    def collect(self, int g):
        if not 1 <= g <= self._g:
            raise HeapError(f"generation {g} out of range 1..{self._g}")
        cdef vector[i64] young
        cdef vector[i64] stack
        cdef vector[i64] survivors
        cdef i64 oid, t, k, n_garbage = 0, freed_bytes = 0
        cdef size_t i
        self._epoch += 1
        cdef i64 ep = self._epoch
        for k in range(1, g + 1):
            for oid in self._gens[k]:
                young.push_back(oid)
                self._stamp[oid] = ep
                self._gcref[oid] = self._rc[oid]
        for oid in young:
            for t in self._out[oid]:
                if self._stamp[t] == ep:
                    self._gcref[t] -= 1
        for oid in young:
            if self._gcref[oid] > 0:
                self._reached[oid] = ep
                stack.push_back(oid)
        while not stack.empty():
            oid = stack.back()
            stack.pop_back()
            for t in self._out[oid]:
                if self._stamp[t] == ep and self._reached[t] != ep:
                    self._reached[t] = ep
                    stack.push_back(t)

        for oid in young:
            if self._reached[oid] == ep:
                survivors.push_back(oid)
                continue
            n_garbage += 1
            freed_bytes += self._size[oid]
            for t in self._out[oid]:
                # skip targets that are garbage themselves
                if not (self._stamp[t] == ep and self._reached[t] != ep):
                    self._rc[t] -= 1
        for oid in young:
            if self._reached[oid] != ep:
                self._gen[oid] = 0
                vector[i64]().swap(self._out[oid])

        cdef int target = g + 1 if g < self._g else self._g
        for k in range(1, g + 1):
            self._gens[k].clear()
        cdef vector[i64]* dest = &self._gens[target]
        for oid in survivors:
            self._gen[oid] = target
            self._pos[oid] = dest.size()
            dest.push_back(oid)

        cdef i64 scanned = young.size()
        cdef i64 cost = scanned * self._cost_per_scan
        self._count -= n_garbage
        self._live_bytes -= freed_bytes
        self._clock += cost
        self._net = 0
        self.total_freed += n_garbage
        return CollectionStats(g, scanned, n_garbage, freed_bytes, cost)

    # -- verification helpers ---------------------------------------------

    def reachable_set(self):
        """Objects reachable from the root set by full graph traversal."""
        seen = set(self.roots())
        stack = list(seen)
        while stack:
            for t in self._out[stack.pop()]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return seen

    def recount_refs(self):
        counts = dict.fromkeys(self.object_ids(), 0)
        for oid, n in self.roots().items():
            counts[oid] += n
        for oid in list(counts):
            for t in self._out[oid]:
                counts[t] += 1
        return counts

    def dump_edges(self):
        return format_edges(self.roots(), self.edges())
