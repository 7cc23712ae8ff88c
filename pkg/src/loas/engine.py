"""Fully temporal-parallel (FTP) accelerator model.

Loop order is m-group / n / k-chunk with all T timesteps handled inside one
TPPE. Each TPPE owns one row of A for the whole m-group; the weight fiber of
column n is broadcast to every TPPE in batches that fit the TPPE weight
buffer, and TPPEs synchronize at the end of every batch. When a column is
fully reduced the P-LIF fires all T output spikes at once and the output
compressor records the compressed output traffic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compression import (FIBER_HEADER_BYTES, compress_rows, compress_weights,
                          pack_spikes)
from .innerjoin import Tppe, TppeConfig, plif_fire
from .memory import (CacheConfig, DramConfig, DramQueue, EnergyTable, FiberCache,
                     TrafficCounters, energy_report)
from .report import SimReport, config_hash
from .snn import LifParams, OutputSpikes, ShapeError, SpikeTensor, WeightMatrix

# fiber-id namespaces for the cache
A_FIBER, B_FIBER, B_ROW_FIBER, A_DENSE, A_CSR, PSUM = range(6)


@dataclass(frozen=True)
class HwConfig:
    num_tppes: int = 16
    tppe: TppeConfig = field(default_factory=TppeConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    dram: DramConfig = field(default_factory=DramConfig)
    broadcast_latency_cycles: int = 1

    def __post_init__(self):
        if self.num_tppes < 1:
            raise ValueError("num_tppes must be >= 1")


def m_groups(M: int, size: int) -> list[tuple[int, int]]:
    return [(m0, min(m0 + size, M)) for m0 in range(0, M, size)]


def schedule_tiles(M: int, N: int, K: int, num_tppes: int, chunk: int = 128):
    """Static work order: ``(m0, m1, n, k_chunk)`` steps, m-group outermost."""
    n_chunks = -(-K // chunk)
    return [(m0, m1, n, c)
            for m0, m1 in m_groups(M, num_tppes)
            for n in range(N)
            for c in range(n_chunks)]


def compress_outputs(tile: np.ndarray) -> dict:
    """Byte cost of storing an output tile (rows x N x T) as row fibers.

    Neurons with fewer than two spikes are dropped from the payload.
    """
    rows, N, T = tile.shape
    kept = int((tile.sum(axis=2) >= 2).sum())
    n_chunks = -(-N // 128)
    return {"payload_bytes": kept * -(-T // 8), "metadata_bytes": rows * n_chunks * FIBER_HEADER_BYTES,
            "kept_neurons": kept}


def _weight_batches(nnz_per_chunk, capacity: int) -> list[list[int]]:
    batches, cur, used = [], [], 0
    for c, n in enumerate(nnz_per_chunk):
        if n == 0:
            continue
        if cur and used + n > capacity:
            batches.append(cur)
            cur, used = [], 0
        cur.append(c)
        used += n
    if cur:
        batches.append(cur)
    return batches


def write_output(counters: TrafficCounters, q: DramQueue, nbytes: int, at: int, line: int):
    counters.dram["output"] += nbytes
    counters.sram["output"] += -(-nbytes // line)
    q.request(nbytes, at)


def run_ftp(A: SpikeTensor, B: WeightMatrix, p: LifParams, hw: HwConfig = HwConfig(),
            energy: EnergyTable | None = None) -> SimReport:
    if A.K != B.K:
        raise ShapeError(f"A has K={A.K} but B has K={B.K}")
    M, K, T, N = A.M, A.K, A.T, B.N
    CA = compress_rows(pack_spikes(A))
    CB = compress_weights(B)
    n_chunks = CA.n_chunks
    wA = CA.entry_bytes
    counters = TrafficCounters()
    cache = FiberCache(hw.cache, counters)
    q = DramQueue(hw.dram)
    bl = hw.broadcast_latency_cycles
    tppes = [Tppe(hw.tppe, T) for _ in range(hw.num_tppes)]
    out = np.zeros((M, N, T), dtype=np.uint8)

    a_bytes = [[FIBER_HEADER_BYTES + f.nnz * wA for f in row] for row in CA.fibers]
    b_nnz = [[f.nnz for f in col] for col in CB.fibers]

    barrier = prev_start = last_fire = 0
    idle = 0
    for m0, m1 in m_groups(M, hw.num_tppes):
        rows = list(range(m0, m1))
        active = tppes[: len(rows)]
        cache.unpin_all()
        for m in rows:
            for c in range(n_chunks):
                cache.pin((A_FIBER, m, c))
        for n in range(N):
            for pe in active:
                pe.begin_neuron()
            before = counters.total_dram()
            for c in range(n_chunks):
                cache.access((B_FIBER, n, c), FIBER_HEADER_BYTES + b_nnz[n][c], "B-payload",
                             FIBER_HEADER_BYTES, "B-metadata")
            for batch in _weight_batches(b_nnz[n], hw.tppe.weight_buffer_bytes):
                for c in batch:
                    for m in rows:
                        cache.access((A_FIBER, m, c), a_bytes[m][c], "A-payload",
                                     FIBER_HEADER_BYTES, "A-metadata")
                ready = q.request(counters.total_dram() - before, prev_start)
                before = counters.total_dram()
                start = max(barrier, ready)
                prev_start = start
                ends = []
                for m, pe in zip(rows, active):
                    end = start
                    for j, c in enumerate(batch):
                        end = pe.join(CA.fibers[m][c], CB.fibers[n][c], start + (j + 1) * bl)
                    ends.append(end)
                barrier = max(ends)
                idle += sum(barrier - e for e in ends)
            if counters.total_dram() > before:
                q.request(counters.total_dram() - before, prev_start)
            for m, pe in zip(rows, active):
                out[m, n] = plif_fire(pe.sums(), p)
                last_fire = max(last_fire, max(pe.fast_free, pe.drain_done) + 1)
        ob = compress_outputs(out[m0:m1])
        write_output(counters, q, ob["payload_bytes"] + ob["metadata_bytes"], last_fire,
                     hw.cache.line_bytes)

    matches = sum(pe.matches for pe in tppes)
    corr_adds = sum(pe.corr_adds for pe in tppes)
    op_counts = {
        "matches": matches,
        "corrections": sum(pe.corrections for pe in tppes),
        "accumulates": matches + corr_adds,
        "fast_prefix": sum(pe.fast_invocations for pe in tppes),
        "laggy_prefix": sum(pe.laggy_invocations for pe in tppes),
        "lif_ops": M * N * T,
    }
    stats = {
        "stall_cycles": sum(pe.stall_cycles for pe in tppes),
        "idle_cycles": idle,
        "dram_busy_cycles": q.busy_cycles,
        "a_fiber_fetches": cache.fetches["A-metadata"],
        "a_fibers_fetched": len(cache.fetched_fibers["A-metadata"]),
        "cache_bypasses": cache.bypasses,
    }
    report = SimReport(
        engine="ftp",
        output=OutputSpikes(out),
        total_cycles=max(last_fire, barrier, q.free_at),
        traffic=counters,
        cache_hits=cache.hits,
        cache_misses=cache.misses,
        op_counts=op_counts,
        stats=stats,
        config_hash=config_hash(hw, p),
    )
    if energy is not None:
        report.energy = energy_report(counters, op_counts, energy)
    return report

