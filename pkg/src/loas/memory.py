"""Banked set-associative fiber cache, bandwidth-only DRAM and energy accounting."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, NamedTuple

from .snn import ConfigError

CATEGORIES = ("A-payload", "A-metadata", "B-payload", "B-metadata", "psum", "output")


@dataclass(frozen=True)
class CacheConfig:
    capacity_bytes: int = 256 * 1024
    banks: int = 16
    associativity: int = 16
    line_bytes: int = 64

    def __post_init__(self):
        unit = self.banks * self.associativity * self.line_bytes
        if self.capacity_bytes <= 0 or self.capacity_bytes % unit:
            raise ConfigError(
                f"cache capacity {self.capacity_bytes} not divisible by banks*ways*line = {unit}")

    @property
    def n_sets(self) -> int:
        return self.capacity_bytes // (self.associativity * self.line_bytes)


@dataclass(frozen=True)
class DramConfig:
    # 128 GB/s at 800 MHz
    bandwidth_bytes_per_cycle: int = 160
    access_bytes: int = 64

    def __post_init__(self):
        if self.bandwidth_bytes_per_cycle <= 0:
            raise ConfigError("DRAM bandwidth must be positive")


def dram_cycles(nbytes: int, cfg: DramConfig = DramConfig()) -> int:
    if nbytes < 0:
        raise ValueError("byte count must be non-negative")
    return -(-nbytes // cfg.bandwidth_bytes_per_cycle)


@dataclass
class TrafficCounters:
    dram: dict = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))
    sram: dict = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))

    def total_dram(self) -> int:
        return sum(self.dram.values())

    def total_sram(self) -> int:
        return sum(self.sram.values())

    def scaled(self, k: int) -> "TrafficCounters":
        return TrafficCounters({c: v * k for c, v in self.dram.items()},
                               {c: v * k for c, v in self.sram.items()})


class AccessResult(NamedTuple):
    hit_bytes: int
    miss_bytes: int


class FiberCache:
    """LRU cache over fiber lines with pinning.

    Lines are keyed by ``(fiber_id, line_index)``; ``fiber_id`` must be an int
    or a tuple of ints so that set mapping is reproducible between runs.
    Pinned fibers are never chosen as victims; if every way of a set is
    pinned the incoming line bypasses the cache.
    """

    def __init__(self, cfg: CacheConfig = CacheConfig(), counters: TrafficCounters | None = None):
        self.cfg = cfg
        self.counters = counters if counters is not None else TrafficCounters()
        self._sets = [OrderedDict() for _ in range(cfg.n_sets)]
        self._pinned = set()
        self.hits = 0
        self.misses = 0
        self.bypasses = 0
        self.fetches = dict.fromkeys(CATEGORIES, 0)
        self.fetched_fibers = {c: set() for c in CATEGORIES}

    def _set_of(self, key):
        return self._sets[hash(key) % self.cfg.n_sets]

    def pin(self, fiber_id):
        self._pinned.add(fiber_id)

    def unpin(self, fiber_id):
        self._pinned.discard(fiber_id)

    def unpin_all(self):
        self._pinned.clear()

    def _install(self, s: OrderedDict, key, dirty: bool, category: str) -> bool:
        if len(s) >= self.cfg.associativity:
            victim = next((k for k in s if k[0] not in self._pinned), None)
            if victim is None:
                self.bypasses += 1
                return False
            v_dirty, v_cat = s.pop(victim)
            if v_dirty:
                self.counters.dram[v_cat] += self.cfg.line_bytes
        s[key] = (dirty, category)
        return True

    def _lines(self, offset: int, nbytes: int):
        L = self.cfg.line_bytes
        for li in range(offset // L, (offset + nbytes - 1) // L + 1):
            lo, hi = max(offset, li * L), min(offset + nbytes, (li + 1) * L)
            yield li, hi - lo

    def access(self, fiber_id, nbytes: int, category: str, meta_bytes: int = 0,
               meta_category: str | None = None, offset: int = 0,
               count_sram: bool = True) -> AccessResult:
        """Read ``nbytes`` of a fiber starting at byte ``offset``.

        The first ``meta_bytes`` of the fiber (bitmask and pointer) are
        attributed to ``meta_category``; the rest to ``category``. With
        ``count_sram=False`` the caller accounts SRAM accesses itself.
        """
        if nbytes <= 0:
            return AccessResult(0, 0)
        L = self.cfg.line_bytes
        hit_bytes = miss_bytes = 0
        dram, sram = self.counters.dram, self.counters.sram
        for li, used in self._lines(offset, nbytes):
            meta_here = max(0, min(meta_bytes - li * L, L)) if meta_category else 0
            cat = meta_category if meta_here else category
            if count_sram:
                sram[cat] += 1
            key = (fiber_id, li)
            s = self._set_of(key)
            if key in s:
                s.move_to_end(key)
                self.hits += 1
                hit_bytes += used
                continue
            self.misses += 1
            miss_bytes += L
            if meta_here and used == meta_here:
                # header-only line (empty fiber): the fill is all metadata
                dram[meta_category] += L
            else:
                dram[category] += L - meta_here
                if meta_here:
                    dram[meta_category] += meta_here
            self._install(s, key, False, category)
        if miss_bytes:
            fcat = meta_category if meta_category else category
            self.fetches[fcat] += 1
            self.fetched_fibers[fcat].add(fiber_id)
        return AccessResult(hit_bytes, miss_bytes)

    def write(self, fiber_id, nbytes: int, category: str, offset: int = 0,
              count_sram: bool = True) -> None:
        """Write-allocate without fetch; dirty lines reach DRAM only on eviction."""
        if nbytes <= 0:
            return
        for li, _ in self._lines(offset, nbytes):
            if count_sram:
                self.counters.sram[category] += 1
            key = (fiber_id, li)
            s = self._set_of(key)
            if key in s:
                s[key] = (True, category)
                s.move_to_end(key)
            elif not self._install(s, key, True, category):
                self.counters.dram[category] += self.cfg.line_bytes

    def discard(self, fiber_id, nbytes: int, offset: int = 0) -> None:
        """Drop a fiber's lines without write-back (dead data)."""
        for li, _ in self._lines(offset, max(nbytes, 1)):
            key = (fiber_id, li)
            self._set_of(key).pop(key, None)

    @property
    def miss_rate(self) -> float:
        total = self.hits + self.misses
        return self.misses / total if total else 0.0


@dataclass(frozen=True)
class EnergyTable:
    """Unit energies in pJ."""

    dram_byte: float
    sram_access: float
    accumulate: float
    fast_prefix: float
    laggy_prefix: float
    lif_op: float

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"energy cost {f.name} must be non-negative")

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> "EnergyTable":
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        missing = names - set(values)
        if unknown:
            raise ConfigError(f"unknown energy keys: {sorted(unknown)}")
        if missing:
            raise ConfigError(f"missing energy keys: {sorted(missing)}")
        return cls(**{k: float(v) for k, v in values.items()})


# op-count key -> energy table field
OP_COSTS = {
    "accumulates": "accumulate",
    "fast_prefix": "fast_prefix",
    "laggy_prefix": "laggy_prefix",
    "lif_ops": "lif_op",
}


def energy_report(counters: TrafficCounters, op_counts: Mapping[str, int],
                  table: EnergyTable | Mapping[str, float]) -> dict:
    """Linear energy model: counts times unit costs, itemized, in pJ."""
    costs = asdict(table) if isinstance(table, EnergyTable) else dict(table)
    needed = {"dram_byte", "sram_access"} | {OP_COSTS[k] for k in op_counts if k in OP_COSTS}
    missing = needed - costs.keys()
    if missing:
        raise ConfigError(f"energy table lacks entries: {sorted(missing)}")
    parts = {}
    for cat, b in counters.dram.items():
        parts[f"dram:{cat}"] = b * costs["dram_byte"]
    for cat, n in counters.sram.items():
        parts[f"sram:{cat}"] = n * costs["sram_access"]
    for op, n in op_counts.items():
        if op in OP_COSTS:
            parts[f"op:{op}"] = n * costs[OP_COSTS[op]]
    return {"total_pj": sum(parts.values()), "breakdown_pj": parts}


class DramQueue:
    """Single bandwidth-limited DRAM channel serving requests in order."""

    def __init__(self, cfg: DramConfig = DramConfig()):
        self.cfg = cfg
        self.free_at = 0
        self.busy_cycles = 0

    def request(self, nbytes: int, at: int) -> int:
        """Issue a transfer at cycle ``at``; returns the cycle it completes."""
        if nbytes <= 0:
            return at
        n = dram_cycles(nbytes, self.cfg)
        self.free_at = max(at, self.free_at) + n
        self.busy_cycles += n
        return self.free_at
