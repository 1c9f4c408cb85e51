"""Simulated generational heap.

Two interchangeable backends implement the same ``Heap`` class: a compiled
one (``_cheap``, Cython over C++ containers) and a pure-Python fallback
(``_pyheap``). The compiled backend is used when it has been built; set
``LEARNED_GC_BACKEND=python`` to force the fallback.
"""

import os

from . import _pyheap
from .common import CollectionStats, HeapError, HeapObject

PyHeap = _pyheap.Heap

try:
    from ._cheap import Heap as NativeHeap
except ImportError:  # extension not built
    NativeHeap = None

BACKENDS = {"python": PyHeap}
if NativeHeap is not None:
    BACKENDS["native"] = NativeHeap


def _select():
    wanted = os.environ.get("LEARNED_GC_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in BACKENDS:
            raise ImportError(f"heap backend {wanted!r} is not available "
                              f"(have: {', '.join(sorted(BACKENDS))})")
        return BACKENDS[wanted]
    return NativeHeap or PyHeap


Heap = _select()

__all__ = ["BACKENDS", "CollectionStats", "Heap", "HeapError", "HeapObject",
           "NativeHeap", "PyHeap"]
