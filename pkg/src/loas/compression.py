"""Timestep-packed spike words and bitmask fibers.

Spikes of one pre-synaptic neuron across all T timesteps are packed into a
single T-bit word, most significant bit first (``1010`` with T=4 means
spikes at t0 and t2). Rows of packed words (for A) and columns of weights
(for B) are then split into 128-position chunks and stored as fibers: a
128-bit occupancy bitmask followed by the non-zero payload. Neurons whose
word is zero ("silent" neurons) are not stored at all.

Bitmasks are plain Python ints with position ``p`` at bit ``127 - p`` so
that ``format(bm, "0128b")`` reads left to right in coordinate order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .snn import T_MAX, ConfigError, SpikeTensor, WeightMatrix

CHUNK = 128
POINTER_BITS = 32
NULL_PTR = 0xFFFFFFFF
BITMASK_BYTES = CHUNK // 8
FIBER_HEADER_BYTES = BITMASK_BYTES + POINTER_BITS // 8

_MAGIC = b"LOASC1"
_VERSION = 1


class CorruptionError(ValueError):
    """A fiber's bitmask and payload disagree, or a serialized stream is malformed."""


@dataclass(frozen=True, eq=False)
class PackedSpikeMatrix:
    """One T-bit word per (m, k); zero words are silent neurons."""

    words: np.ndarray
    T: int

    @property
    def M(self) -> int:
        return self.words.shape[0]

    @property
    def K(self) -> int:
        return self.words.shape[1]

    def silent(self) -> np.ndarray:
        return self.words == 0

    def __eq__(self, other):
        return (isinstance(other, PackedSpikeMatrix) and self.T == other.T
                and np.array_equal(self.words, other.words))


@dataclass(frozen=True)
class Fiber:
    bitmask: int
    payload: tuple
    next_ptr: int | None = None

    def __post_init__(self):
        if self.bitmask.bit_count() != len(self.payload):
            raise CorruptionError(
                f"bitmask popcount {self.bitmask.bit_count()} != payload length {len(self.payload)}")
        if any(v == 0 for v in self.payload):
            raise CorruptionError("fiber payload contains a zero entry")

    @property
    def nnz(self) -> int:
        return len(self.payload)

    def positions(self) -> list[int]:
        return bitmask_positions(self.bitmask)

    def bitstring(self, width: int = CHUNK) -> str:
        return format(self.bitmask, f"0{CHUNK}b")[:width]


@dataclass(eq=False)
class CompressedMatrix:
    """Fibers indexed ``fibers[line][chunk]``.

    ``orientation`` is ``"row"`` for spike matrices (lines are rows m of A)
    or ``"col"`` for weights (lines are columns n of B).
    """

    orientation: str
    n_lines: int
    K: int
    T: int | None
    fibers: list = field(default_factory=list)
    chunk_size: int = CHUNK

    @property
    def n_chunks(self) -> int:
        return -(-self.K // self.chunk_size)

    @property
    def entry_bytes(self) -> int:
        return 1 if self.orientation == "col" else -(-self.T // 8)

    @property
    def entry_bits(self) -> int:
        return 8 if self.orientation == "col" else self.T

    def nnz(self) -> int:
        return sum(f.nnz for line in self.fibers for f in line)

    def fiber_bytes(self, line: int, chunk: int) -> int:
        """Storage footprint of one fiber: bitmask, pointer and payload."""
        return FIBER_HEADER_BYTES + self.fibers[line][chunk].nnz * self.entry_bytes

    def __eq__(self, other):
        return (isinstance(other, CompressedMatrix)
                and (self.orientation, self.n_lines, self.K, self.T)
                == (other.orientation, other.n_lines, other.K, other.T)
                and self.fibers == other.fibers)


def bitmask_positions(bm: int) -> list[int]:
    """Set positions of a 128-bit bitmask in ascending coordinate order."""
    out = []
    while bm:
        low = bm & -bm
        out.append(CHUNK - low.bit_length())
        bm ^= low
    out.reverse()
    return out


def bitmask_from_positions(positions) -> int:
    bm = 0
    for p in positions:
        bm |= 1 << (CHUNK - 1 - int(p))
    return bm


def bitmask_from_string(bits: str) -> int:
    """``"1001"`` -> bitmask with positions 0 and 3 set (remaining bits zero)."""
    return int(bits.ljust(CHUNK, "0"), 2)


def _bitmask_from_bool(occupied: np.ndarray) -> int:
    padded = np.zeros(CHUNK, dtype=bool)
    padded[: len(occupied)] = occupied
    return int.from_bytes(np.packbits(padded).tobytes(), "big")


def pack_spikes(A: SpikeTensor) -> PackedSpikeMatrix:
    if A.T > T_MAX:
        raise ConfigError(f"T={A.T} exceeds the {T_MAX}-bit word width")
    shifts = np.arange(A.T - 1, -1, -1, dtype=np.uint64)
    words = (A.data.astype(np.uint64) << shifts).sum(axis=2, dtype=np.uint64)
    return PackedSpikeMatrix(words, A.T)


def unpack_spikes(P: PackedSpikeMatrix) -> SpikeTensor:
    shifts = np.arange(P.T - 1, -1, -1, dtype=np.uint64)
    bits = (P.words[:, :, None] >> shifts) & np.uint64(1)
    return SpikeTensor(bits.astype(np.uint8))


def _compress_lines(values: np.ndarray, orientation: str, K: int, T, to_int) -> CompressedMatrix:
    n_lines = values.shape[0]
    n_chunks = -(-K // CHUNK)
    fibers = []
    for line in range(n_lines):
        row = values[line]
        chain = []
        for c in range(n_chunks):
            seg = row[c * CHUNK:(c + 1) * CHUNK]
            occupied = seg != 0
            nxt = (c + 1) * n_lines + line if c + 1 < n_chunks else None
            chain.append(Fiber(_bitmask_from_bool(occupied),
                               tuple(to_int(v) for v in seg[occupied]), nxt))
        fibers.append(chain)
    return CompressedMatrix(orientation, n_lines, K, T, fibers)


def compress_rows(P: PackedSpikeMatrix) -> CompressedMatrix:
    """Row-wise fibers of packed spike words; silent neurons are dropped."""
    return _compress_lines(P.words, "row", P.K, P.T, int)


def compress_weights(B: WeightMatrix) -> CompressedMatrix:
    """Column-wise fibers of non-zero weights."""
    return _compress_lines(B.data.T, "col", B.K, None, int)


def decompress(C: CompressedMatrix):
    """Inverse of :func:`compress_rows` / :func:`compress_weights`."""
    dense = np.zeros((C.n_lines, C.n_chunks * C.chunk_size),
                     dtype=np.uint64 if C.orientation == "row" else np.int64)
    for line, chain in enumerate(C.fibers):
        if len(chain) != C.n_chunks:
            raise CorruptionError(f"line {line} has {len(chain)} chunks, expected {C.n_chunks}")
        for c, f in enumerate(chain):
            pos = f.positions()
            if len(pos) != len(f.payload):
                raise CorruptionError(f"fiber ({line}, {c}): popcount/payload mismatch")
            if pos and c * C.chunk_size + pos[-1] >= C.K:
                raise CorruptionError(f"fiber ({line}, {c}) marks a position beyond K={C.K}")
            for p, v in zip(pos, f.payload):
                dense[line, c * C.chunk_size + p] = v
    dense = dense[:, : C.K]
    if C.orientation == "row":
        return PackedSpikeMatrix(dense.astype(np.uint64), C.T)
    return WeightMatrix(dense.T.astype(np.int8))


def mask_low_activity(A: SpikeTensor, max_spikes: int = 1) -> SpikeTensor:
    """Silence every neuron that fires at most ``max_spikes`` times."""
    if max_spikes < 0:
        raise ValueError("max_spikes must be >= 0")
    keep = A.data.sum(axis=2, keepdims=True) > max_spikes
    return SpikeTensor(A.data * keep)


def compression_stats(C: CompressedMatrix) -> dict:
    entries = C.nnz()
    positions = C.n_lines * C.K
    chunks = C.n_lines * C.n_chunks
    return {
        "silent_fraction": 1.0 - entries / positions,
        "stored_bits": entries * C.entry_bits,
        "raw_bits": positions * C.entry_bits,
        "metadata_bits": chunks * (CHUNK + POINTER_BITS),
    }


# --- serialized form -------------------------------------------------------
#
# header: magic "LOASC1", u16 version, u8 orientation (0 row, 1 col),
#         u32 lines, u32 K, u8 T (0 for weights)
# body:   fibers chunk-major (for chunk: for line), each as
#         16-byte big-endian bitmask, u32 LE next index (0xFFFFFFFF = null),
#         payload entries little-endian at their natural width


def to_bytes(C: CompressedMatrix) -> bytes:
    out = bytearray(_MAGIC)
    out += struct.pack("<HBIIB", _VERSION, 0 if C.orientation == "row" else 1,
                       C.n_lines, C.K, C.T or 0)
    width = C.entry_bytes
    signed = C.orientation == "col"
    for c in range(C.n_chunks):
        for line in range(C.n_lines):
            f = C.fibers[line][c]
            out += f.bitmask.to_bytes(BITMASK_BYTES, "big")
            out += struct.pack("<I", NULL_PTR if f.next_ptr is None else f.next_ptr)
            for v in f.payload:
                out += int(v).to_bytes(width, "little", signed=signed)
    return bytes(out)


def from_bytes(buf: bytes) -> CompressedMatrix:
    if buf[:6] != _MAGIC:
        raise CorruptionError("bad magic at offset 0")
    head = struct.calcsize("<HBIIB")
    if len(buf) < 6 + head:
        raise CorruptionError(f"truncated header at offset {len(buf)}")
    version, orient, n_lines, K, T = struct.unpack_from("<HBIIB", buf, 6)
    if version != _VERSION:
        raise CorruptionError(f"unsupported version {version} at offset 6")
    if orient not in (0, 1):
        raise CorruptionError(f"bad orientation {orient} at offset 8")
    orientation = "row" if orient == 0 else "col"
    C = CompressedMatrix(orientation, n_lines, K, T if orientation == "row" else None)
    width = C.entry_bytes
    signed = orientation == "col"
    grid = [[None] * C.n_chunks for _ in range(n_lines)]
    off = 6 + head
    for c in range(C.n_chunks):
        for line in range(n_lines):
            if off + FIBER_HEADER_BYTES > len(buf):
                raise CorruptionError(f"truncated fiber header at offset {off}")
            bm = int.from_bytes(buf[off:off + BITMASK_BYTES], "big")
            (nxt,) = struct.unpack_from("<I", buf, off + BITMASK_BYTES)
            off += FIBER_HEADER_BYTES
            n = bm.bit_count()
            if off + n * width > len(buf):
                raise CorruptionError(f"truncated payload at offset {off}")
            payload = tuple(int.from_bytes(buf[off + i * width: off + (i + 1) * width],
                                           "little", signed=signed) for i in range(n))
            off += n * width
            grid[line][c] = Fiber(bm, payload, None if nxt == NULL_PTR else nxt)
    if off != len(buf):
        raise CorruptionError(f"trailing bytes at offset {off}")
    C.fibers = grid
    return C
