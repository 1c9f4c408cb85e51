"""Types shared by both heap backends."""

from __future__ import annotations

from dataclasses import dataclass


class HeapError(RuntimeError):
    """Raised when a heap operation violates its precondition.

    These are simulator bugs (dangling ids, missing edges), not conditions a
    caller is expected to recover from.
    """


@dataclass(frozen=True)
class HeapObject:
    id: int
    site: int
    size: int
    generation: int
    out_refs: tuple[int, ...]
    ref_count: int


@dataclass(frozen=True)
class CollectionStats:
    generation_collected: int
    objects_scanned: int
    objects_freed: int
    bytes_freed: int
    cost_ticks: int


def format_edges(roots: dict[int, int], edges: list[tuple[int, int]]) -> str:
    """Render the object graph as a text edge list.

    Root entries come first as ``R <id>`` (repeated per multiset entry),
    followed by one ``from to`` pair per reference.
    """
    lines = []
    for oid in sorted(roots):
        lines.extend(f"R {oid}" for _ in range(roots[oid]))
    lines.extend(f"{src} {dst}" for src, dst in edges)
    return "\n".join(lines) + ("\n" if lines else "")
