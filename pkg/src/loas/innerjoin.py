"""Temporal-parallel PE: bitmask inner join with fast/laggy offset generation.

The fast prefix-sum path produces one matched offset per cycle and feeds the
matched weight straight into a pseudo-accumulator, as if the spike word were
all ones. The laggy prefix-sum over the spike bitmask becomes ready
``ceil(width / adders)`` cycles after the chunk starts; from then on the
buffered matches are drained from FIFO-mp/FIFO-B one per cycle and, for every
timestep whose spike bit is 0, the weight goes into that timestep's
correction accumulator. The full sum for timestep t is ``pseudo - corr[t]``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .compression import CHUNK, Fiber
from .snn import LifParams, lif_sequence


class AccumulatorOverflow(ArithmeticError):
    """A bit-accurate accumulator left its signed range."""


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class TppeConfig:
    bitmask_width: int = CHUNK
    laggy_adders: int = 16
    fifo_depth: int = 8
    weight_buffer_bytes: int = 128
    pseudo_acc_bits: int = 12
    corr_acc_bits: int = 10
    bit_accurate: bool = False

    def __post_init__(self):
        if self.laggy_adders < 1 or self.bitmask_width % self.laggy_adders:
            raise ValueError("laggy_adders must divide bitmask_width")
        if self.fifo_depth < 1:
            raise ValueError("fifo_depth must be >= 1")


@dataclass
class JoinResult:
    sums: list
    cycles: int
    matches: int
    corrections: int
    stall_cycles: int = 0


def and_match(bm_a: int, bm_b: int) -> list[int]:
    """Positions set in both bitmasks, ascending."""
    both = bm_a & bm_b
    out = []
    while both:
        top = both.bit_length()
        out.append(CHUNK - top)
        both ^= 1 << (top - 1)
    return out


def prefix_offset(bm: int, pos: int) -> int:
    """Number of set bits strictly before ``pos``: the payload index of ``pos``."""
    if not (bm >> (CHUNK - 1 - pos)) & 1:
        raise ContractError(f"position {pos} is not set in the bitmask")
    return (bm >> (CHUNK - pos)).bit_count()


def laggy_latency(cfg: TppeConfig) -> int:
    return -(-cfg.bitmask_width // cfg.laggy_adders)


def _check_range(value: int, bits: int, what: str):
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= value <= hi:
        raise AccumulatorOverflow(f"{what} value {value} outside {bits}-bit range [{lo}, {hi}]")


class Tppe:
    """Cycle model of one TPPE processing a stream of chunk joins.

    Times are absolute cycle numbers. A chunk's fast path occupies cycles
    ``start+1 .. start+matches`` (one cycle if nothing matches); corrections
    overlap later chunks and only the final drain is exposed.
    """

    def __init__(self, cfg: TppeConfig, T: int):
        self.cfg = cfg
        self.T = T
        self.all_ones = (1 << T) - 1
        self.lag = laggy_latency(cfg)
        self.fast_free = 0
        self.last_pop = 0
        self.pops = deque(maxlen=cfg.fifo_depth)
        self.matches = 0
        self.corrections = 0
        self.corr_adds = 0
        self.stall_cycles = 0
        self.fast_invocations = 0
        self.laggy_invocations = 0
        self.begin_neuron()

    def begin_neuron(self):
        self.pseudo = 0
        self.corr = [0] * self.T
        self.drain_done = 0

    def join(self, fa: Fiber, fb: Fiber, start: int = 0) -> int:
        """Process one chunk pair; returns the cycle its fast path finishes."""
        cfg = self.cfg
        s = max(start, self.fast_free)
        pos = and_match(fa.bitmask, fb.bitmask)
        if not pos:
            self.fast_free = s + 1
            return self.fast_free
        ready = s + self.lag
        self.laggy_invocations += 1
        self.drain_done = max(self.drain_done, ready)
        issue = s
        T = self.T
        for p in pos:
            earliest = issue + 1
            if len(self.pops) == cfg.fifo_depth:
                earliest = max(earliest, self.pops[0])
            self.stall_cycles += earliest - (issue + 1)
            issue = earliest
            self.fast_invocations += 1
            b = fb.payload[prefix_offset(fb.bitmask, p)]
            self.pseudo += b
            if cfg.bit_accurate:
                _check_range(self.pseudo, cfg.pseudo_acc_bits, "pseudo-accumulator")
            pop = max(self.last_pop + 1, issue + 1, ready + 1)
            self.pops.append(pop)
            self.last_pop = pop
            a = fa.payload[prefix_offset(fa.bitmask, p)]
            if a != self.all_ones:
                self.corrections += 1
                self.drain_done = max(self.drain_done, pop)
                for t in range(T):
                    if not (a >> (T - 1 - t)) & 1:
                        self.corr[t] += b
                        self.corr_adds += 1
                        if cfg.bit_accurate:
                            _check_range(self.corr[t], cfg.corr_acc_bits, "correction accumulator")
        self.matches += len(pos)
        self.drain_done = max(self.drain_done, issue)
        self.fast_free = issue
        return issue

    def sums(self) -> list[int]:
        return [self.pseudo - c for c in self.corr]


def tppe_join_chunk(fa: Fiber, fb: Fiber, T: int, cfg: TppeConfig = TppeConfig()) -> JoinResult:
    """Join a single spike/weight chunk pair on an idle TPPE starting at cycle 0."""
    pe = Tppe(cfg, T)
    fast_end = pe.join(fa, fb, 0)
    cycles = max(fast_end, pe.drain_done)
    return JoinResult(pe.sums(), cycles, pe.matches, pe.corrections, pe.stall_cycles)


def plif_fire(full_sums, p: LifParams) -> np.ndarray:
    """All T output spikes of one or more neurons from their fully reduced sums."""
    return lif_sequence(np.asarray(full_sums, dtype=np.int64), p)
