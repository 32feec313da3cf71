"""Arena memory pool and bounded worker-lane pool.

The memory pool is a single contiguous arena walked by a one-way recorder.
Returned blocks go to per-size LIFO free lists and are handed straight back
on the next ask of the same (aligned) size, so steady-state workloads stop
touching the host allocator entirely.  The worker pool caps per-residue task
parallelism at a small fixed lane count and provides the join barrier.
"""

from __future__ import annotations

import concurrent.futures
import mmap
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

ALIGN = 256  # bytes; ask sizes are rounded up to this granule

DEFAULT_UNIT_MB = 200
DEFAULT_CAP_MB = 2048
DESK_UNIT_MB = 25
DESK_CAP_MB = 256

MAX_LEN = 4  # worker lane ceiling


class ResourceError(RuntimeError):
    """Arena or host allocation failure."""


class PoolLogicError(RuntimeError):
    """Protocol violation such as a double return (debug mode only)."""


class PoolMode(str, Enum):
    POOLED = "pooled"
    NEVER_RETURN = "never_return"
    RETURN_EVERY_OP = "return_every_op"


def arena_bytes(modulus_length: int, unit_mb: int = DEFAULT_UNIT_MB,
                cap_mb: int = DEFAULT_CAP_MB) -> int:
    """Arena sizing rule: S = min(cap, L * unit) megabytes."""
    if modulus_length < 1:
        raise ValueError(f"modulus_length must be >= 1, got {modulus_length}")
    return min(cap_mb, modulus_length * unit_mb) * (1 << 20)


@dataclass
class PoolHandle:
    origin: str               # "arena" or "overflow"
    offset: int               # arena byte offset, or overflow id
    size: int                 # aligned byte size
    buf: np.ndarray = field(repr=False)  # uint8 view of the block

    def words(self) -> np.ndarray:
        """The block as a uint64 array."""
        return self.buf.view(np.uint64)


class MemoryPool:
    """Size-keyed arena allocator with a monotone recorder.

    ask/ret are not internally synchronized; callers with concurrent mutators
    must serialize access themselves.
    """

    def __init__(self, modulus_length: int, unit_mb: int = DEFAULT_UNIT_MB,
                 cap_mb: int = DEFAULT_CAP_MB, mode: PoolMode | str = PoolMode.POOLED,
                 rebalance: bool = False, debug: bool = False):
        self.capacity = arena_bytes(modulus_length, unit_mb, cap_mb)
        self.mode = PoolMode(mode)
        self.rebalance = rebalance
        self.debug = debug
        try:
            self.arena = np.zeros(self.capacity, dtype=np.uint8)
        except MemoryError as exc:
            raise ResourceError(f"cannot allocate {self.capacity} byte arena") from exc
        self.free_lists: dict[int, list[int]] = {}
        self.overflow_free: dict[int, list[int]] = {}  # size -> overflow ids
        self.recorder = 0
        self.overflow_allocs: dict[int, np.ndarray] = {}
        self._mmaps: dict[int, mmap.mmap] = {}
        self._next_overflow_id = 0
        self._live: set[tuple[str, int]] = set()
        self._live_bytes = 0
        self.stats = {
            "ask_count": 0,
            "reuse_count": 0,
            "virgin_count": 0,
            "overflow_count": 0,
            "return_count": 0,
            "high_water_bytes": 0,
            "per_size": {},  # aligned size -> {asks, reuses, returns, high_water}
        }

    # ------------------------------------------------------------------
    def _size_rec(self, size: int) -> dict:
        rec = self.stats["per_size"].get(size)
        if rec is None:
            rec = {"asks": 0, "reuses": 0, "returns": 0, "live": 0, "high_water": 0}
            self.stats["per_size"][size] = rec
        return rec

    def _track_ask(self, size: int, kind: str):
        self.stats["ask_count"] += 1
        self.stats[f"{kind}_count"] += 1
        rec = self._size_rec(size)
        rec["asks"] += 1
        if kind == "reuse":
            rec["reuses"] += 1
        rec["live"] += 1
        rec["high_water"] = max(rec["high_water"], rec["live"])
        self._live_bytes += size
        self.stats["high_water_bytes"] = max(self.stats["high_water_bytes"], self._live_bytes)

    def _host_alloc(self, size: int) -> PoolHandle:
        try:
            buf = np.zeros(size, dtype=np.uint8)
        except MemoryError as exc:
            raise ResourceError(f"host allocation of {size} bytes failed") from exc
        oid = self._next_overflow_id
        self._next_overflow_id += 1
        self.overflow_allocs[oid] = buf
        return PoolHandle("overflow", oid, size, buf)

    def _mmap_alloc(self, size: int) -> PoolHandle:
        try:
            mm = mmap.mmap(-1, size)
        except (OSError, MemoryError) as exc:
            raise ResourceError(f"mmap of {size} bytes failed") from exc
        buf = np.frombuffer(mm, dtype=np.uint8)
        oid = self._next_overflow_id
        self._next_overflow_id += 1
        self.overflow_allocs[oid] = buf
        self._mmaps[oid] = mm
        return PoolHandle("overflow", oid, size, buf)

    def ask(self, size: int) -> PoolHandle:
        if size <= 0:
            raise ValueError(f"ask size must be positive, got {size}")
        size = -(-size // ALIGN) * ALIGN
        if self.mode is PoolMode.RETURN_EVERY_OP:
            # Bypass the arena entirely: every ask is fresh OS memory.  Raw
            # mmap rather than the heap, so libc's own free-list caching
            # cannot quietly reintroduce pooling into the no-pool baseline.
            h = self._mmap_alloc(size)
            self._track_ask(size, "overflow")
            if self.debug:
                self._live.add((h.origin, h.offset))
            return h
        lst = self.free_lists.get(size)
        olst = self.overflow_free.get(size)
        if lst:
            offset = lst.pop()
            h = PoolHandle("arena", offset, size, self.arena[offset : offset + size])
            self._track_ask(size, "reuse")
        elif olst:
            oid = olst.pop()
            h = PoolHandle("overflow", oid, size, self.overflow_allocs[oid])
            self._track_ask(size, "reuse")
        elif self.recorder + size <= self.capacity:
            offset = self.recorder
            self.recorder += size
            h = PoolHandle("arena", offset, size, self.arena[offset : offset + size])
            self._track_ask(size, "virgin")
        elif self.rebalance and (bigger := self._closest_larger(size)) is not None:
            # Serve from the smallest free block larger than the request; the
            # surplus tail stays attached to the handle's keyed size.
            big_size, offset = bigger
            h = PoolHandle("arena", offset, big_size, self.arena[offset : offset + big_size])
            self._track_ask(big_size, "reuse")
        else:
            h = self._host_alloc(size)
            self._track_ask(size, "overflow")
        if self.debug:
            self._live.add((h.origin, h.offset))
        return h

    def _closest_larger(self, size: int):
        candidates = [s for s, lst in self.free_lists.items() if s > size and lst]
        if not candidates:
            return None
        best = min(candidates)
        return best, self.free_lists[best].pop()

    def ret(self, handle: PoolHandle):
        if self.debug:
            key = (handle.origin, handle.offset)
            if key not in self._live:
                raise PoolLogicError(f"double return of {key}")
            self._live.discard(key)
        self.stats["return_count"] += 1
        rec = self._size_rec(handle.size)
        rec["returns"] += 1
        rec["live"] -= 1
        self._live_bytes -= handle.size
        if self.mode is PoolMode.NEVER_RETURN:
            # Ablation mode: block is abandoned, never reused.
            self._live_bytes += handle.size  # still resident
            return
        if self.mode is PoolMode.RETURN_EVERY_OP:
            # Release straight back to the OS.
            self.overflow_allocs.pop(handle.offset, None)
            mm = self._mmaps.pop(handle.offset, None)
            if mm is not None:
                handle.buf = np.empty(0, dtype=np.uint8)
                try:
                    mm.close()
                except BufferError:  # a view is still alive; leave it to GC
                    pass
            return
        if handle.origin == "overflow":
            # Overflow blocks join their own free lists; storage is released
            # at pool teardown rather than per return.
            self.overflow_free.setdefault(handle.size, []).append(handle.offset)
            return
        self.free_lists.setdefault(handle.size, []).append(handle.offset)

    def pool_stats(self) -> dict:
        """JSON-serializable counter snapshot with derived ratios."""
        s = self.stats
        asks = s["ask_count"]
        per_size = {
            str(size): {
                **{k: v for k, v in rec.items() if k != "live"},
                "reuse_ratio": rec["reuses"] / rec["asks"] if rec["asks"] else 0.0,
                "return_ratio": rec["returns"] / rec["asks"] if rec["asks"] else 0.0,
            }
            for size, rec in s["per_size"].items()
        }
        return {
            "ask_count": asks,
            "reuse_count": s["reuse_count"],
            "virgin_count": s["virgin_count"],
            "overflow_count": s["overflow_count"],
            "return_count": s["return_count"],
            "recorder": self.recorder,
            "capacity": self.capacity,
            "live_bytes": self._live_bytes,
            "high_water_bytes": s["high_water_bytes"],
            "reuse_ratio": s["reuse_count"] / asks if asks else 0.0,
            "return_ratio": s["return_count"] / asks if asks else 0.0,
            "per_size": per_size,
        }


def pool_new(modulus_length: int, unit_mb: int = DEFAULT_UNIT_MB,
             cap_mb: int = DEFAULT_CAP_MB, **kwargs) -> MemoryPool:
    return MemoryPool(modulus_length, unit_mb, cap_mb, **kwargs)


# ---------------------------------------------------------------------------


class WorkerPool:
    """Bounded thread lanes for independent per-residue tasks."""

    def __init__(self, modulus_length: int, max_len: int = MAX_LEN):
        if modulus_length < 1 or max_len < 1:
            raise ValueError("modulus_length and max_len must be >= 1")
        self.lane_count = min(modulus_length, max_len)
        self._executor = concurrent.futures.ThreadPoolExecutor(max_workers=self.lane_count)

    def run(self, tasks):
        """Run callables on the lanes; joins all before returning.  The first
        raised exception is re-raised after every lane has quiesced."""
        futures = [self._executor.submit(t) for t in tasks]
        concurrent.futures.wait(futures)
        for f in futures:
            exc = f.exception()
            if exc is not None:
                raise exc

    def shutdown(self):
        self._executor.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.shutdown()
        return False


def par_for_each_modulus(pool: WorkerPool | None, tasks):
    """Join-barrier map over data-disjoint per-residue tasks.  A None pool
    runs them sequentially (single-lane fallback)."""
    if pool is None:
        for t in tasks:
            t()
        return
    pool.run(tasks)
