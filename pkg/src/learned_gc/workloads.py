"""Synthetic programs that drive a heap and report work done.

A workload never touches the heap directly; it talks to a ``Mutator``,
which forwards to the heap. The harness substitutes a mutator that consults
the collection policy before every allocation. Every allocation site a
workload uses is a module-level constant, so site ids are stable across runs.
"""

from __future__ import annotations

import random
from collections import OrderedDict, deque
from dataclasses import dataclass, field

# allocation sites
LRU_QUERY = 101
LRU_HEAD = 102
LRU_NODE = 103

WEB_REQUEST = 201
WEB_HEADERS = 202
WEB_HANDLER = 203
WEB_SESSION = 204
WEB_SESSION_DATA = 205
WEB_BODY = 206
WEB_RESPONSE = 207
WEB_LOG = 208
WEB_APP = 209

TX_SEGMENT = 301
TX_ACCOUNT = 302
TX_RECORD = 303
TX_FRAME = 304
TX_PATH = 305


class Mutator:
    """Pass-through view of a heap with the calls workloads are allowed to make."""

    def __init__(self, heap) -> None:
        self.heap = heap
        self.bytes_allocated = 0

    @property
    def virtual_clock(self) -> int:
        return self.heap.virtual_clock

    def allocate(self, site: int, size: int, refs=(), root: bool = False) -> int:
        oid = self.heap.allocate(site, size, refs)
        if root:
            self.heap.add_root(oid)
        self.bytes_allocated += size
        return oid

    def add_root(self, oid: int) -> None:
        self.heap.add_root(oid)

    def remove_root(self, oid: int) -> None:
        self.heap.remove_root(oid)

    def add_ref(self, src: int, dst: int) -> None:
        self.heap.add_ref(src, dst)

    def remove_ref(self, src: int, dst: int) -> None:
        self.heap.remove_ref(src, dst)

    def advance(self, ticks: int) -> None:
        self.heap.advance(ticks)


@dataclass(frozen=True)
class WorkEvent:
    work_units: int
    ticks: int
    kind: str = ""


@dataclass(frozen=True)
class RewardWindow:
    epoch_index: int
    work_units: int
    window_ticks: int
    raw_rate: float


@dataclass
class RewardAccumulator:
    window_ticks: int
    epoch_index: int = 0
    work_units: int = 0

    def add(self, event: WorkEvent) -> None:
        self.work_units += event.work_units


def finish_epoch(acc: RewardAccumulator) -> RewardWindow:
    w = RewardWindow(acc.epoch_index, acc.work_units, acc.window_ticks,
                     acc.work_units / acc.window_ticks)
    acc.epoch_index += 1
    acc.work_units = 0
    return w


def _ring(mem: Mutator, site: int, n: int, size: int, head: int) -> None:
    """Hang a ring of ``n`` objects off ``head``; the last one points back to it."""
    prev = head
    for _ in range(n):
        node = mem.allocate(site, size, root=True)
        mem.add_ref(prev, node)
        mem.remove_root(node)
        prev = node
    mem.add_ref(prev, head)


class Workload:
    kind = ""
    io_sites: frozenset = frozenset()
    defaults: dict = {}

    def __init__(self, **params) -> None:
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ValueError(f"unknown {self.kind} parameters: {', '.join(sorted(unknown))}")
        self.params = {**self.defaults, **params}
        for k, v in self.params.items():
            default = self.defaults[k]
            if isinstance(default, int):
                low = 0 if k.endswith("_ticks") and k != "mean_lifetime_ticks" else 1
                if isinstance(v, bool) or not isinstance(v, int) or v < low:
                    raise ValueError(f"{self.kind}.{k} must be an integer >= {low}, got {v!r}")
            elif isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
                raise ValueError(f"{self.kind}.{k} must be a fraction in [0, 1], got {v!r}")
        for k, v in self.params.items():
            setattr(self, k, v)

    def setup(self, mem: Mutator, rng: random.Random) -> None:
        pass

    def step(self, mem: Mutator, rng: random.Random) -> WorkEvent:
        raise NotImplementedError


class LruCache(Workload):
    """Key/value cache whose values are rings of large objects.

    Each query picks a key; inserts build a fresh ring (replacing any value
    already under that key) and evict the least recently used entry at
    capacity. Evicted rings are cyclic, so only the tracing collector can
    reclaim them.
    """

    kind = "lru"
    defaults = {
        "capacity": 256,
        "cluster_objects": 8,
        "object_size": 256,
        "key_space": 512,
        "insert_fraction": 0.5,
        "query_ticks": 16,
    }

    def __init__(self, **params) -> None:
        super().__init__(**params)
        self.cache: OrderedDict[int, int] = OrderedDict()

    def step(self, mem, rng):
        start = mem.virtual_clock
        key = rng.randrange(self.key_space)
        mem.advance(self.query_ticks)
        if rng.random() < self.insert_fraction:
            head = mem.allocate(LRU_HEAD, self.object_size, root=True)
            _ring(mem, LRU_NODE, self.cluster_objects - 1, self.object_size, head)
            old = self.cache.pop(key, None)
            if old is not None:
                mem.remove_root(old)
            elif len(self.cache) >= self.capacity:
                _, evicted = self.cache.popitem(last=False)
                mem.remove_root(evicted)
            self.cache[key] = head
            kind = "insert"
        else:
            if key in self.cache:
                self.cache.move_to_end(key)
                kind = "hit"
            else:
                kind = "miss"
        return WorkEvent(1, mem.virtual_clock - start, kind)


class Webserver(Workload):
    """Request/response loop with a session store and an I/O window.

    A request allocates its parse state and rendered page while the client
    waits, so collection during that phase delays completion tick for tick.
    Once the response is queued the server records an access-log entry and
    waits ``io_window_ticks`` for the socket; collection cost incurred from
    the queueing point onwards is absorbed by that wait up to its length.
    Handler scratch objects form a small cycle with the parsed headers, and
    sessions are reference cycles kept in a bounded store, so both leak until
    traced.
    """

    kind = "webserver"
    io_sites = frozenset({WEB_LOG})
    defaults = {
        "request_ticks": 100,
        "io_window_ticks": 50,
        "app_objects": 200,
        "session_capacity": 512,
        "new_session_fraction": 0.5,
        "temp_objects": 8,
        "small_size": 64,
        "temp_size": 16,
        "session_size": 96,
        "body_size": 512,
        "log_size": 512,
    }

    def __init__(self, **params) -> None:
        super().__init__(**params)
        self.sessions: deque[int] = deque()
        self.app_root: int | None = None
        self.last_latency = 0
        self.requests = 0

    def setup(self, mem, rng):
        self.app_root = mem.allocate(WEB_APP, self.small_size, root=True)
        _ring(mem, WEB_APP, self.app_objects - 1, self.small_size, self.app_root)

    def _session(self, mem, rng, req):
        if self.sessions and rng.random() >= self.new_session_fraction:
            sid = self.sessions[rng.randrange(len(self.sessions))]
        else:
            sid = mem.allocate(WEB_SESSION, self.session_size, root=True)
            self._attach(mem, sid, WEB_SESSION_DATA, self.session_size, refs=[sid])
            self.sessions.append(sid)
            if len(self.sessions) > self.session_capacity:
                mem.remove_root(self.sessions.popleft())
        mem.add_ref(req, sid)

    def _attach(self, mem, parent, site, size, refs=()):
        oid = mem.allocate(site, size, refs, root=True)
        mem.add_ref(parent, oid)
        mem.remove_root(oid)
        return oid

    def step(self, mem, rng):
        start = mem.virtual_clock
        # request phase: parse state hangs off the request object
        req = mem.allocate(WEB_REQUEST, self.small_size, root=True)
        headers = parent = self._attach(mem, req, WEB_HEADERS, self.temp_size)
        for _ in range(self.temp_objects):
            parent = self._attach(mem, parent, WEB_HANDLER, self.temp_size)
        mem.add_ref(parent, headers)
        self._session(mem, rng, req)
        body = self._attach(mem, req, WEB_BODY, self.body_size)
        resp = mem.allocate(WEB_RESPONSE, self.small_size, refs=[body], root=True)
        mem.advance(self.request_ticks)  # handler compute
        # response queued: I/O window
        queued = mem.virtual_clock
        log = mem.allocate(WEB_LOG, self.log_size, refs=[resp], root=True)
        mem.advance(max(0, self.io_window_ticks - (mem.virtual_clock - queued)))
        mem.remove_root(log)
        mem.remove_root(resp)
        mem.remove_root(req)
        self.requests += 1
        self.last_latency = mem.virtual_clock - start
        return WorkEvent(1, self.last_latency, "request")


class TxGraph(Workload):
    """Cycle search over a long-lived, randomly grown transaction graph.

    Accounts live in segments; each transaction links two accounts of the
    current segment through a record that both accounts point at, so the
    graph is dense with cycles. Segments are retired after a geometrically
    distributed number of ticks, becoming cyclic garbage. Each search
    builds a short-lived frame/path structure with back pointers.
    """

    kind = "tx"
    defaults = {
        "tx_ticks": 40,
        "accounts_per_segment": 64,
        "segment_transactions": 400,
        "mean_lifetime_ticks": 200_000,
        "frame_objects": 12,
        "account_size": 128,
        "record_size": 96,
        "frame_size": 64,
    }

    def __init__(self, **params) -> None:
        super().__init__(**params)
        self.segments: list[tuple[int, int]] = []  # (head, retire_at)
        self.accounts: list[int] = []
        self.seg_tx = 0
        self.current: int | None = None

    def _new_segment(self, mem, rng):
        head = mem.allocate(TX_SEGMENT, self.account_size, root=True)
        accounts = []
        for _ in range(self.accounts_per_segment):
            a = mem.allocate(TX_ACCOUNT, self.account_size, refs=[head], root=True)
            mem.add_ref(head, a)
            mem.remove_root(a)
            accounts.append(a)
        life = int(rng.expovariate(1.0 / self.mean_lifetime_ticks))
        self.segments.append((head, mem.virtual_clock + life))
        self.accounts = accounts
        self.current = head
        self.seg_tx = 0

    def setup(self, mem, rng):
        self._new_segment(mem, rng)

    def live_segments(self) -> int:
        return len(self.segments)

    def step(self, mem, rng):
        start = mem.virtual_clock
        now = start
        keep = []
        for head, retire_at in self.segments:
            if retire_at <= now and head != self.current:
                mem.remove_root(head)
            else:
                keep.append((head, retire_at))
        self.segments = keep
        if self.seg_tx >= self.segment_transactions:
            self._new_segment(mem, rng)

        a, b = rng.sample(self.accounts, 2)
        rec = mem.allocate(TX_RECORD, self.record_size, refs=[a, b], root=True)
        mem.add_ref(a, rec)
        mem.remove_root(rec)
        self.seg_tx += 1

        frame = mem.allocate(TX_FRAME, self.frame_size, refs=[a], root=True)
        prev = frame
        for _ in range(self.frame_objects - 1):
            p = mem.allocate(TX_PATH, self.frame_size, refs=[frame], root=True)
            mem.add_ref(prev, p)
            mem.remove_root(p)
            prev = p
        mem.advance(self.tx_ticks)
        mem.remove_root(frame)
        return WorkEvent(1, mem.virtual_clock - start, "tx")


WORKLOADS = {cls.kind: cls for cls in (LruCache, Webserver, TxGraph)}


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in WORKLOADS:
            raise ValueError(f"unknown workload {self.kind!r}; expected one of {sorted(WORKLOADS)}")
        # validate, then store the full parameter set so equal workloads compare equal
        object.__setattr__(self, "params", dict(WORKLOADS[self.kind](**self.params).params))

    def build(self) -> Workload:
        return WORKLOADS[self.kind](**self.params)
