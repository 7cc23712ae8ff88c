"""Sequential-timestep baselines: inner product, outer product and Gustavson.

All three keep the timestep loop innermost-sequential: every timestep is a
separate binary spMspM over the spike plane ``A[:, :, t]``. PEs perform one
match or merge operation per cycle, and they share the fiber cache and DRAM
model with the FTP engine. The LIF state carries across timesteps, so each
engine's reduced sums go through the same LIF sequence as the oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compression import CHUNK, FIBER_HEADER_BYTES
from .engine import (A_CSR, A_DENSE, B_FIBER, B_ROW_FIBER, PSUM, m_groups,
                     write_output)
from .memory import (CacheConfig, DramConfig, DramQueue, EnergyTable, FiberCache,
                     TrafficCounters, energy_report)
from .report import SimReport, config_hash
from .snn import (ConfigError, LifParams, OutputSpikes, ShapeError, SpikeTensor,
                  WeightMatrix, lif_sequence)

A_ROW = 6
ENGINES = ("ip-seq", "op-seq", "gust-seq")
PSUM_ENTRY_BYTES = 4
# a spilled psum update is written out and read back once
SPILL_BYTES = 2 * PSUM_ENTRY_BYTES
# a merged partial-row element: 4 B value + 2 B column index
PARTIAL_ELEM_BYTES = 6


@dataclass(frozen=True)
class BaselineConfig:
    engine: str = "ip-seq"
    num_pes: int = 16
    psum_buffer_bytes: int = 32768
    merger_ways: int = 16
    join_setup_cycles: int = 0
    broadcast_latency_cycles: int = 1
    cache: CacheConfig = field(default_factory=CacheConfig)
    dram: DramConfig = field(default_factory=DramConfig)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown baseline engine {self.engine!r}")
        if self.num_pes < 1:
            raise ConfigError("num_pes must be >= 1")
        if self.merger_ways < 2:
            raise ConfigError("merger_ways must be >= 2")
        if self.psum_buffer_bytes < 0 or self.join_setup_cycles < 0:
            raise ConfigError("buffer size and setup cycles must be non-negative")


class _Timeline:
    """Barrier-synchronized steps whose inputs are prefetched one step ahead.

    DRAM bytes generated while preparing a step are requested when the
    previous step starts; the step begins once both the data and the
    previous barrier are ready.
    """

    def __init__(self, q: DramQueue, counters: TrafficCounters):
        self.q, self.counters = q, counters
        self.before = 0
        self.barrier = 0
        self.prev_start = 0

    def step(self, cost: int) -> int:
        now = self.counters.total_dram()
        ready = self.q.request(now - self.before, self.prev_start)
        self.before = now
        start = max(self.barrier, ready)
        self.prev_start = start
        self.barrier = start + cost
        return start

    def finish(self) -> int:
        now = self.counters.total_dram()
        self.q.request(now - self.before, self.barrier)
        self.before = now
        return max(self.barrier, self.q.free_at)


def _check(A: SpikeTensor, B: WeightMatrix):
    if A.K != B.K:
        raise ShapeError(f"A has K={A.K} but B has K={B.K}")


def _b_row_bytes(B: WeightMatrix):
    """Per-row fiber bytes of B stored row-wise (chunks over N): (total, header)."""
    n_chunks = -(-B.N // CHUNK)
    meta = n_chunks * FIBER_HEADER_BYTES
    return (B.data != 0).sum(axis=1) + meta, meta


def _finish(engine, A, B, p, cfg, sums, counters, cache, tl, q, op_counts, stats, energy):
    out = lif_sequence(sums, p)
    write_output(counters, q, A.M * B.N * A.T // 8 + (A.M * B.N * A.T % 8 > 0),
                 tl.barrier, cfg.cache.line_bytes)
    stats = {"dram_busy_cycles": q.busy_cycles, "cache_bypasses": cache.bypasses, **stats}
    report = SimReport(engine=engine, output=OutputSpikes(out), total_cycles=tl.finish(),
                       traffic=counters, cache_hits=cache.hits, cache_misses=cache.misses,
                       op_counts=op_counts, stats=stats, config_hash=config_hash(cfg, p))
    if energy is not None:
        report.energy = energy_report(counters, op_counts, energy)
    return report


def _setup(cfg: BaselineConfig):
    counters = TrafficCounters()
    q = DramQueue(cfg.dram)
    return counters, FiberCache(cfg.cache, counters), q, _Timeline(q, counters)


def run_ip_seq(A: SpikeTensor, B: WeightMatrix, p: LifParams,
               cfg: BaselineConfig = BaselineConfig("ip-seq"),
               energy: EnergyTable | None = None) -> SimReport:
    """Inner product with the timestep loop innermost.

    PEs own one output column each; a 128-bit chunk of A row m is broadcast
    for every timestep and each PE joins it with its B column chunk. Spike
    rows are stored dense (one bit per (k, t)), so A traffic does not depend
    on spike sparsity.
    """
    _check(A, B)
    M, K, T, N = A.M, A.K, A.T, B.N
    P, bl = cfg.num_pes, cfg.broadcast_latency_cycles
    counters, cache, q, tl = _setup(cfg)
    n_chunks = -(-K // CHUNK)
    pad = n_chunks * CHUNK - K
    Ap = np.pad(A.data, ((0, 0), (0, pad), (0, 0))).astype(np.int64)
    Bw = np.pad(B.data, ((0, pad), (0, 0))).astype(np.int64).reshape(n_chunks, CHUNK, N)
    Bnz = (Bw != 0).astype(np.int64)
    b_nnz = Bnz.sum(axis=1)  # (chunk, n)
    row_bytes = -(-K // 8)
    chunk_bytes = CHUNK // 8
    sums = np.zeros((M, N, T), dtype=np.int64)
    joins = matches = 0
    for m in range(M):
        Am = Ap[m].reshape(n_chunks, CHUNK, T)
        match = np.einsum("ckt,ckn->cnt", Am, Bnz)
        # a join takes one cycle per match, and one cycle when nothing matches
        join_cycles = np.maximum(match, 1).sum(axis=2)
        match = match.sum(axis=2)
        sums[m] = np.einsum("ckt,ckn->nt", Am, Bw)
        for n0 in range(0, N, P):
            cols = range(n0, min(n0 + P, N))
            for c in range(n_chunks):
                off = c * chunk_bytes
                for t in range(T):
                    cache.access((A_DENSE, m, t), min(chunk_bytes, row_bytes - off),
                                 "A-payload", offset=off)
                cost = 0
                for n in cols:
                    nnz = int(b_nnz[c, n])
                    if not nnz:
                        continue
                    cache.access((B_FIBER, n, c), FIBER_HEADER_BYTES + nnz, "B-payload",
                                 FIBER_HEADER_BYTES, "B-metadata")
                    joins += T
                    mt = int(match[c, n])
                    matches += mt
                    cost = max(cost, int(join_cycles[c, n]) + T * cfg.join_setup_cycles)
                tl.step(cost + bl)
    op_counts = {"matches": matches, "accumulates": matches, "fast_prefix": matches,
                 "laggy_prefix": 0, "lif_ops": M * N * T}
    return _finish("ip-seq", A, B, p, cfg, sums, counters, cache, tl, q, op_counts,
                   {"join_invocations": joins}, energy)


def _first_touch(Pt, Bnz, groups, M, N):
    first = np.full(M * N, -1, dtype=np.int64)
    for g, ks in enumerate(groups):
        hit = (Pt[:, ks] @ Bnz[ks]).ravel() > 0
        new = hit & (first < 0)
        first[new] = g
    return first


def run_op_seq(A: SpikeTensor, B: WeightMatrix, p: LifParams,
               cfg: BaselineConfig = BaselineConfig("op-seq"),
               energy: EnergyTable | None = None) -> SimReport:
    """Outer product with the timestep loop inside the k loop.

    Each step, PE i takes one k of the current k-group at timestep t: the
    CSR column of spike plane t times the row fiber of B. Partial sums for
    all T timesteps share a buffer of ``psum_buffer_bytes``; entries become
    resident in first-touch order and every update to a non-resident entry
    spills (written out, read back for the final merge).
    """
    _check(A, B)
    M, K, T, N = A.M, A.K, A.T, B.N
    P, bl = cfg.num_pes, cfg.broadcast_latency_cycles
    counters, cache, q, tl = _setup(cfg)
    cap = cfg.psum_buffer_bytes // PSUM_ENTRY_BYTES
    Bnz = (B.data != 0).astype(np.int64)
    Bw = B.data.astype(np.int64)
    nnzB = Bnz.sum(axis=1)
    b_bytes, b_meta = _b_row_bytes(B)
    groups = [np.arange(k0, min(k0 + P, K)) for k0 in range(0, K, P)]
    planes = [A.data[:, :, t].astype(np.int64) for t in range(T)]
    nnzA = A.data.sum(axis=0, dtype=np.int64)  # (K, T)

    # residency: entries (m, n, t) ranked by (first touching k-group, t, m, n)
    first = np.stack([_first_touch(planes[t], Bnz, groups, M, N) for t in range(T)])
    flat = first.ravel()
    touched = np.flatnonzero(flat >= 0)
    order = touched[np.argsort(flat[touched], kind="stable")]
    spill = np.ones(T * M * N, dtype=bool)
    spill[order[:cap]] = False
    spill = spill.reshape(T, M, N)

    sums = np.zeros((M, N, T), dtype=np.int64)
    products = spilled = joins = 0
    for ks in groups:
        for t in range(T):
            for k in ks:
                na = int(nnzA[k, t])
                cache.access((A_CSR, t, int(k)), 4 + 2 * na, "A-metadata")
                if na:
                    joins += 1
                    cache.access((B_ROW_FIBER, int(k)), int(b_bytes[k]), "B-payload",
                                 b_meta, "B-metadata")
            U = planes[t][:, ks] @ Bnz[ks]
            n_up = int(U.sum())
            sp = int(U[spill[t]].sum())
            counters.dram["psum"] += SPILL_BYTES * sp
            counters.sram["psum"] += n_up - sp
            spilled += sp
            products += n_up
            sums[:, :, t] += planes[t][:, ks] @ Bw[ks]
            tl.step(int((nnzA[ks, t] * nnzB[ks]).max()) + bl)
    if spilled:
        # merging the spilled partial sums back, one per PE per cycle
        tl.step(-(-spilled // P))
    op_counts = {"matches": products, "accumulates": products, "fast_prefix": 0,
                 "laggy_prefix": 0, "lif_ops": M * N * T}
    stats = {"join_invocations": joins, "psum_spilled_updates": spilled}
    return _finish("op-seq", A, B, p, cfg, sums, counters, cache, tl, q, op_counts, stats, energy)


def _merge_row(Bnz_rows: np.ndarray, ways: int):
    """Multi-level merge of the selected B rows (as nonzero masks).

    Returns ``(b_reads, partial_reads, partial_lengths_per_level, merges)``:
    operand touches on B rows, touches on re-read partial rows, the lengths
    of the partial rows written at each intermediate level, and the number
    of merge groups with at least two inputs.
    """
    lengths = Bnz_rows.sum(axis=1)
    items = [r for r, n in zip(Bnz_rows, lengths) if n]
    b_reads = int(lengths.sum())
    p_reads = merges = 0
    partials = []
    level = 0
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items), ways):
            grp = items[i:i + ways]
            if len(grp) > 1:
                merges += 1
                nxt.append(np.logical_or.reduce(grp))
            else:
                nxt.append(grp[0])
            if level:
                p_reads += int(sum(int(g.sum()) for g in grp))
        if len(nxt) > 1:
            partials.append([int(u.sum()) for u in nxt])
        items = nxt
        level += 1
    return b_reads, p_reads, partials, merges


def run_gust_seq(A: SpikeTensor, B: WeightMatrix, p: LifParams,
                 cfg: BaselineConfig = BaselineConfig("gust-seq"),
                 energy: EnergyTable | None = None) -> SimReport:
    """Row-wise Gustavson, one timestep at a time.

    Rows of A go round-robin to PEs. For row m at timestep t the B rows
    selected by its spikes are merged ``merger_ways`` at a time; when more
    rows are selected, intermediate partial rows are written to the cache
    and merged again. Every operand an element merger touches counts as one
    SRAM access and one cycle.
    """
    _check(A, B)
    M, K, T, N = A.M, A.K, A.T, B.N
    P, W = cfg.num_pes, cfg.merger_ways
    counters, cache, q, tl = _setup(cfg)
    Bnz = B.data != 0
    Bw = B.data.astype(np.int64)
    b_bytes, b_meta = _b_row_bytes(B)
    sums = np.zeros((M, N, T), dtype=np.int64)
    merges = accum = 0
    for m0, m1 in m_groups(M, P):
        for t in range(T):
            cost = 0
            for m in range(m0, m1):
                ks = np.flatnonzero(A.data[m, :, t])
                cache.access((A_ROW, m, t), 4 + 2 * len(ks), "A-metadata")
                for k in ks:
                    cache.access((B_ROW_FIBER, int(k)), int(b_bytes[k]), "B-payload",
                                 b_meta, "B-metadata", count_sram=False)
                b_touch, p_read, partials, mg = _merge_row(Bnz[ks], W)
                p_write = sum(map(sum, partials))
                counters.sram["B-payload"] += b_touch
                counters.sram["psum"] += p_read + p_write
                for level, lens in enumerate(partials):
                    for i, n in enumerate(lens):
                        cache.write((PSUM, m, level, i), PARTIAL_ELEM_BYTES * n, "psum",
                                    count_sram=False)
                for level, lens in enumerate(partials):
                    for i, n in enumerate(lens):
                        cache.access((PSUM, m, level, i), PARTIAL_ELEM_BYTES * n, "psum",
                                     count_sram=False)
                        cache.discard((PSUM, m, level, i), PARTIAL_ELEM_BYTES * n)
                merges += mg
                accum += b_touch
                # merged elements are written back in the cycle they are produced
                cost = max(cost, b_touch + p_read)
            sums[m0:m1, :, t] = A.data[m0:m1, :, t].astype(np.int64) @ Bw
            tl.step(cost + cfg.broadcast_latency_cycles)
    op_counts = {"matches": accum, "accumulates": accum, "fast_prefix": 0,
                 "laggy_prefix": 0, "lif_ops": M * N * T}
    return _finish("gust-seq", A, B, p, cfg, sums, counters, cache, tl, q, op_counts,
                   {"merge_ops": merges}, energy)


def run_baseline(A, B, p, cfg: BaselineConfig, energy=None) -> SimReport:
    fn = {"ip-seq": run_ip_seq, "op-seq": run_op_seq, "gust-seq": run_gust_seq}[cfg.engine]
    return fn(A, B, p, cfg, energy)
