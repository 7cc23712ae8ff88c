"""Dense SNN layer types and the exact reference evaluator.

A layer takes binary input spikes ``A`` (M x K x T) and integer weights
``B`` (K x N), forms the per-timestep integer products, and runs a
leaky-integrate-and-fire neuron with hard reset over the T timesteps.

The leak factor is restricted to ``2**-tau_log2`` and the membrane potential
is carried as a fixed-point integer, so every engine in this package can be
compared against :func:`reference_layer` bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

T_MAX = 64
WEIGHT_MIN, WEIGHT_MAX = -128, 127


class ShapeError(ValueError):
    """Raised when operand dimensions do not line up."""


class ConfigError(ValueError):
    """Raised for out-of-range parameters (timesteps, thresholds, ...)."""


@dataclass(frozen=True, eq=False)
class SpikeTensor:
    """Binary input spikes, indexed ``data[m, k, t]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"spike tensor must be 3-D (M, K, T), got shape {data.shape}")
        M, K, T = data.shape
        if min(M, K, T) < 1:
            raise ShapeError(f"spike tensor dimensions must be >= 1, got {data.shape}")
        if T > T_MAX:
            raise ConfigError(f"T={T} exceeds the {T_MAX}-bit packed word width")
        if not np.isin(data, (0, 1)).all():
            raise ValueError("spike tensor must be binary")
        object.__setattr__(self, "data", data.astype(np.uint8, copy=False))

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def K(self) -> int:
        return self.data.shape[1]

    @property
    def T(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        return isinstance(other, SpikeTensor) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Signed 8-bit weights, indexed ``data[k, n]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or min(data.shape) < 1:
            raise ShapeError(f"weight matrix must be 2-D and non-empty, got shape {data.shape}")
        if data.size and (data.min() < WEIGHT_MIN or data.max() > WEIGHT_MAX):
            raise ValueError("weights must lie in the signed 8-bit range [-128, 127]")
        object.__setattr__(self, "data", data.astype(np.int8, copy=False))

    @property
    def K(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return isinstance(other, WeightMatrix) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class LifParams:
    """Threshold, leak (as a power-of-two shift) and initial potential."""

    v_th: int = 0
    tau_log2: int = 1
    u_init: int = 0

    def __post_init__(self):
        if not 0 <= self.tau_log2 <= 8:
            raise ConfigError(f"tau_log2 must be in [0, 8], got {self.tau_log2}")

    def frac_bits(self, T: int = T_MAX) -> int:
        """Fractional bits that keep T successive leaks exact."""
        return self.tau_log2 * T


@dataclass(frozen=True, eq=False)
class OutputSpikes:
    """Binary output spikes, indexed ``data[m, n, t]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"output spikes must be 3-D (M, N, T), got shape {data.shape}")
        if not np.isin(data, (0, 1)).all():
            raise ValueError("output spikes must be binary")
        object.__setattr__(self, "data", data.astype(np.uint8, copy=False))

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, OutputSpikes) and np.array_equal(self.data, other.data)

    def first_mismatch(self, other: "OutputSpikes"):
        """Coordinate ``(m, n, t)`` of the first differing element, or None."""
        if self.shape != other.shape:
            return ()
        diff = np.argwhere(self.data != other.data)
        return tuple(int(i) for i in diff[0]) if len(diff) else None


def _check_shapes(A: SpikeTensor, B: WeightMatrix):
    if A.K != B.K:
        raise ShapeError(f"A has K={A.K} but B has K={B.K}")


def dense_spmm_timestep(A: SpikeTensor, t: int, B: WeightMatrix) -> np.ndarray:
    """Integer product of the timestep-``t`` spike slice with ``B`` (M x N, int64)."""
    _check_shapes(A, B)
    if not 0 <= t < A.T:
        raise ShapeError(f"timestep {t} out of range for T={A.T}")
    return A.data[:, :, t].astype(np.int64) @ B.data.astype(np.int64)


def _state_dtype(frac_bits: int):
    # 8-bit weights summed over K <= 2**32 positions need ~41 integer bits
    return np.int64 if frac_bits <= 20 else object


def lif_step(o: np.ndarray, u_prev: np.ndarray, p: LifParams, frac_bits: int | None = None):
    """One LIF update with hard reset.

    ``u_prev`` and the returned potential are fixed-point integers scaled by
    ``2**frac_bits``. Returns ``(spikes, u_next)``.
    """
    if frac_bits is None:
        frac_bits = p.frac_bits()
    o = np.asarray(o)
    u_prev = np.asarray(u_prev)
    if o.shape != u_prev.shape:
        raise ShapeError(f"O shape {o.shape} != U shape {u_prev.shape}")
    dtype = _state_dtype(frac_bits)
    one = 1 << frac_bits
    x = o.astype(dtype) * one + u_prev.astype(dtype)
    fire = x > p.v_th * one
    # exact: x carries at most frac_bits - tau_log2 fractional bits here
    u_next = np.where(fire, 0, x >> p.tau_log2).astype(dtype)
    return fire.astype(np.uint8), u_next


def lif_sequence(sums: np.ndarray, p: LifParams) -> np.ndarray:
    """Run LIF over the last axis of ``sums`` (shape ``(..., T)``)."""
    sums = np.asarray(sums)
    T = sums.shape[-1]
    fb = p.frac_bits(T)
    u = np.full(sums.shape[:-1], p.u_init, dtype=_state_dtype(fb)) * (1 << fb)
    out = np.zeros(sums.shape, dtype=np.uint8)
    for t in range(T):
        out[..., t], u = lif_step(sums[..., t], u, p, fb)
    return out


def reference_layer(A: SpikeTensor, B: WeightMatrix, p: LifParams) -> OutputSpikes:
    """Exact layer evaluation, timestep by timestep."""
    _check_shapes(A, B)
    fb = p.frac_bits(A.T)
    u = np.full((A.M, B.N), p.u_init, dtype=_state_dtype(fb)) * (1 << fb)
    out = np.zeros((A.M, B.N, A.T), dtype=np.uint8)
    for t in range(A.T):
        out[:, :, t], u = lif_step(dense_spmm_timestep(A, t, B), u, p, fb)
    return OutputSpikes(out)
