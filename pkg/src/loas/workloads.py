"""Synthetic dual-sparse workloads, layer presets and the LOASW1 container."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .snn import T_MAX, LifParams, SpikeTensor, WeightMatrix


class SpecError(ValueError):
    pass


class FormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class WorkloadSpec:
    """Layer shape plus target sparsities, all as fractions of zeros.

    ``spike_sparsity`` counts zero (m, k, t) entries; ``silent_fraction``
    counts (m, k) neurons that never fire.
    """

    name: str
    T: int
    M: int
    N: int
    K: int
    spike_sparsity: float
    silent_fraction: float
    weight_sparsity: float
    lif: LifParams = field(default_factory=LifParams)
    seed: int = 0

    def __post_init__(self):
        if min(self.T, self.M, self.N, self.K) < 1:
            raise SpecError("all dimensions must be >= 1")
        if self.T > T_MAX:
            raise SpecError(f"T={self.T} exceeds {T_MAX}")
        for name in ("spike_sparsity", "silent_fraction", "weight_sparsity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SpecError(f"{name}={v} outside [0, 1]")
        if self.silent_fraction > self.spike_sparsity + 1e-12:
            raise SpecError(
                f"silent fraction {self.silent_fraction} exceeds spike sparsity {self.spike_sparsity}")
        # every non-silent neuron needs at least one spike
        if (1 - self.spike_sparsity) * self.T < (1 - self.silent_fraction) - 1e-12:
            raise SpecError(
                f"spike sparsity {self.spike_sparsity} leaves fewer spikes than non-silent neurons "
                f"(silent fraction {self.silent_fraction}, T={self.T})")

    def with_(self, **kw) -> "WorkloadSpec":
        return replace(self, **kw)


# T, M, N, K, spike sparsity, silent fraction, weight sparsity
_TABLE = {
    "A-L4": (4, 64, 256, 3456, 0.758, 0.632, 0.989),
    "V-L8": (4, 16, 512, 2304, 0.881, 0.765, 0.968),
    "R-L19": (4, 16, 512, 2304, 0.579, 0.514, 0.991),
    # only a silent fraction is known for this layer; the
    # spike sparsity assumes V-L8's per-bit density inside non-silent neurons
    "T-HFF": (4, 784, 3072, 3072, 0.933, 0.868, 0.968),
}
PRESETS = tuple(_TABLE)


def preset(name: str, seed: int = 0, lif: LifParams | None = None) -> WorkloadSpec:
    try:
        T, M, N, K, sa, sp, sb = _TABLE[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}") from None
    return WorkloadSpec(name, T, M, N, K, sa, sp, sb, lif or LifParams(), seed)


def gen_spikes(spec: WorkloadSpec) -> SpikeTensor:
    """Silent mask first, then the remaining spikes spread over non-silent neurons."""
    rng = np.random.default_rng(spec.seed)
    M, K, T = spec.M, spec.K, spec.T
    n = M * K
    n_silent = int(round(spec.silent_fraction * n))
    n_live = n - n_silent
    n_spikes = int(round((1 - spec.spike_sparsity) * n * T))
    n_spikes = min(max(n_spikes, n_live), n_live * T)
    data = np.zeros((n, T), dtype=np.uint8)
    if n_live:
        live = np.sort(rng.permutation(n)[:n_live])
        first = rng.integers(0, T, n_live)
        data[live, first] = 1
        extra = n_spikes - n_live
        if extra:
            slots = rng.choice(n_live * (T - 1), size=extra, replace=False)
            who, r = np.divmod(slots, T - 1)
            t = r + (r >= first[who])
            data[live[who], t] = 1
    return SpikeTensor(data.reshape(M, K, T))


def gen_weights(K: int, N: int, sparsity: float, seed: int = 0) -> WeightMatrix:
    """Int8 weights with an exact zero count; non-zeros uniform over [-128, 127] minus 0."""
    if not 0.0 <= sparsity <= 1.0:
        raise SpecError(f"weight sparsity {sparsity} outside [0, 1]")
    rng = np.random.default_rng(seed)
    nnz = int(round((1 - sparsity) * K * N))
    flat = np.zeros(K * N, dtype=np.int16)
    pos = rng.choice(K * N, size=nnz, replace=False)
    vals = rng.integers(0, 255, size=nnz) - 128
    flat[pos] = vals + (vals >= 0)
    return WeightMatrix(flat.reshape(K, N).astype(np.int8))


def make_workload(spec: WorkloadSpec):
    A = gen_spikes(spec)
    B = gen_weights(spec.K, spec.N, spec.weight_sparsity, spec.seed + 1)
    return A, B, spec.lif


# --- LOASW1 container -------------------------------------------------------
#
# "LOASW1", u16 version, u32 M, K, N, T, i32 v_th, u8 tau_log2, i32 u_init,
# then A row-major over (m, k), each word ceil(T/8) bytes with t0 in the most
# significant bit of the first byte, then B row-major as int8.

MAGIC = b"LOASW1"
VERSION = 1
_HEADER = struct.Struct("<HIIIIiBi")


def encode_workload(A: SpikeTensor, B: WeightMatrix, p: LifParams) -> bytes:
    if A.K != B.K:
        raise ValueError(f"A has K={A.K} but B has K={B.K}")
    head = MAGIC + _HEADER.pack(VERSION, A.M, A.K, B.N, A.T, p.v_th, p.tau_log2, p.u_init)
    a = np.packbits(A.data, axis=2, bitorder="big")
    return head + a.tobytes() + B.data.astype(np.int8).tobytes()


def decode_workload(buf: bytes):
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic", 0)
    off = len(MAGIC)
    if len(buf) < off + _HEADER.size:
        raise FormatError("truncated header", len(buf))
    version, M, K, N, T, v_th, tau, u_init = _HEADER.unpack_from(buf, off)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", off)
    if min(M, K, N, T) < 1:
        raise FormatError(f"invalid dimensions M={M} K={K} N={N} T={T}", off + 2)
    if T > T_MAX:
        raise FormatError(f"T={T} exceeds {T_MAX}", off + 14)
    off += _HEADER.size
    wbytes = -(-T // 8)
    a_len, b_len = M * K * wbytes, K * N
    if len(buf) != off + a_len + b_len:
        raise FormatError(f"expected {off + a_len + b_len} bytes, found {len(buf)}",
                          min(len(buf), off + a_len + b_len))
    packed = np.frombuffer(buf, dtype=np.uint8, count=a_len, offset=off).reshape(M, K, wbytes)
    bits = np.unpackbits(packed, axis=2, bitorder="big")
    if bits[:, :, T:].any():
        raise FormatError("padding bits set in spike words", off)
    A = SpikeTensor(bits[:, :, :T].copy())
    B = WeightMatrix(np.frombuffer(buf, dtype=np.int8, count=b_len, offset=off + a_len)
                     .reshape(K, N).copy())
    try:
        p = LifParams(v_th, tau, u_init)
    except ValueError as e:
        raise FormatError(str(e), len(MAGIC) + 22) from e
    return A, B, p


def save_workload(A: SpikeTensor, B: WeightMatrix, p: LifParams, path) -> None:
    Path(path).write_bytes(encode_workload(A, B, p))


def load_workload(path):
    return decode_workload(Path(path).read_bytes())


def workload_id(A: SpikeTensor, B: WeightMatrix, p: LifParams) -> str:
    return hashlib.sha256(encode_workload(A, B, p)).hexdigest()[:16]
