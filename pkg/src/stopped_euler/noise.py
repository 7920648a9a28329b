"""Counter-based Brownian increments with exact coarse/fine coupling.

Every fine increment ``dW[k, l]`` (time slot ``k``, noise mode ``l``) is a
pure function of ``(seed, k, l)``:

* the 64-bit counter ``(k << 20) | l`` is hashed together with the seed by
  two rounds of the SplitMix64 finalizer into two 53-bit uniforms
  ``u1, u2`` in (0, 1);
* the Box-Muller cosine branch ``sqrt(-2 log u1) cos(2 pi u2)`` gives the
  standard normal, scaled by ``sqrt(T / N_fine)``.

Entries do not depend on the table shape, so tables with more modes or
computed in a different order agree entry by entry.

Coarse increments are built by pairwise tree summation over dyadic
blocks: the increment over a level-N step is exactly the floating-point
sum of its two level-2N children.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "BrownianPath",
    "generate",
    "coarse_increment",
    "aggregate",
    "sample_seed",
    "normal_table",
    "increment_tables",
    "dump_path",
    "load_path",
]

MAX_ENTRIES = 1 << 28
MODE_BITS = 20

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_A = np.uint64(0x6A09E667F3BCC909)
_STREAM_B = np.uint64(0xBB67AE8584CAA73B)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _to_unit(bits):
    # 53-bit uniform strictly inside (0, 1)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def sample_seed(master_seed: int, index: int) -> int:
    """Per-sample stream key derived from the master seed."""
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ _mix(np.uint64(index) * _GAMMA + _GAMMA))
    return int(z)


def normal_table(seed: int, k_start: int, k_stop: int, m: int) -> np.ndarray:
    """Standard normals for time slots ``k_start..k_stop-1`` and modes ``1..m``."""
    if m >= 1 << MODE_BITS:
        raise ConfigurationError(f"at most {(1 << MODE_BITS) - 1} noise modes supported")
    k = np.arange(k_start, k_stop, dtype=np.uint64)[:, None]
    l = np.arange(1, m + 1, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        key = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GAMMA)
        base = _mix(key + ((k << np.uint64(MODE_BITS)) | l) * _GAMMA)
        u1 = _to_unit(_mix(base ^ _STREAM_A))
        u2 = _to_unit(_mix(base ^ _STREAM_B))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def aggregate(fine: np.ndarray, N_coarse: int, axis: int = -2) -> np.ndarray:
    """Sum fine increments into ``N_coarse`` blocks by dyadic pairwise summation.

    ``fine.shape[axis]`` must be ``N_coarse`` times a power of two.
    """
    fine = np.moveaxis(np.asarray(fine), axis, 0)
    N_fine = fine.shape[0]
    if N_coarse < 1 or N_fine % N_coarse or not _is_pow2(N_fine // N_coarse):
        raise ConfigurationError(
            f"coarse level {N_coarse} does not divide fine level {N_fine} by a power of two"
        )
    x = fine
    while x.shape[0] > N_coarse:
        x = x[0::2] + x[1::2]
    return np.moveaxis(x, 0, axis)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Per-mode increments of one Wiener path on ``N_fine`` uniform slots of [0, T]."""

    master_seed: int
    N_fine: int
    m_max: int
    T: float
    increments: np.ndarray = field(repr=False)

    def coarse(self, N_coarse: int, m: int | None = None) -> np.ndarray:
        """All ``N_coarse`` coarse increments, shape ``(N_coarse, m)``."""
        m = self.m_max if m is None else m
        if not 1 <= m <= self.m_max:
            raise ConfigurationError(f"m={m} outside 1..{self.m_max}")
        return aggregate(self.increments[:, :m], N_coarse, axis=0)


def _validate(N_fine: int, m_max: int, T: float) -> None:
    if not _is_pow2(N_fine):
        raise ConfigurationError(f"N_fine={N_fine} must be a power of two", field="N_fine")
    if m_max < 1:
        raise ConfigurationError("m_max must be at least 1", field="m_max")
    if N_fine * m_max > MAX_ENTRIES:
        raise ConfigurationError(f"path table of {N_fine}x{m_max} entries exceeds 2^28")
    if not T > 0:
        raise ConfigurationError("T must be positive", field="T")


def generate(master_seed: int, N_fine: int, m_max: int, T: float) -> BrownianPath:
    _validate(N_fine, m_max, T)
    table = normal_table(master_seed, 0, N_fine, m_max) * np.sqrt(T / N_fine)
    table.setflags(write=False)
    return BrownianPath(int(master_seed), int(N_fine), int(m_max), float(T), table)


def coarse_increment(path: BrownianPath, N_coarse: int, j: int, m: int) -> np.ndarray:
    """Increment over ``[jT/N, (j+1)T/N)`` on modes ``1..m``."""
    if N_coarse < 1 or path.N_fine % N_coarse:
        raise ValueError(f"N_coarse={N_coarse} does not divide N_fine={path.N_fine}")
    if not 0 <= j < N_coarse:
        raise ValueError(f"step index {j} outside 0..{N_coarse - 1}")
    if not 1 <= m <= path.m_max:
        raise ValueError(f"m={m} outside 1..{path.m_max}")
    r = path.N_fine // N_coarse
    block = path.increments[j * r:(j + 1) * r, :m]
    return aggregate(block, 1, axis=0)[0]


def increment_tables(seeds, N_fine: int, m: int, T: float) -> np.ndarray:
    """Stacked fine tables, shape ``(len(seeds), N_fine, m)``."""
    _validate(N_fine, m, T)
    scale = np.sqrt(T / N_fine)
    return np.stack([normal_table(s, 0, N_fine, m) * scale for s in seeds])


_HEADER = struct.Struct("<QQQd")


def dump_path(path: BrownianPath, file) -> None:
    """Write header (seed, N_fine, m_max, T) then the table as little-endian f64."""
    with open(file, "wb") as fh:
        fh.write(_HEADER.pack(path.master_seed & 0xFFFFFFFFFFFFFFFF, path.N_fine, path.m_max, path.T))
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def load_path(file) -> BrownianPath:
    data = Path(file).read_bytes()
    seed, N_fine, m_max, T = _HEADER.unpack_from(data)
    table = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    if table.size != N_fine * m_max:
        raise ConfigurationError("path file size does not match its header")
    table = table.reshape(N_fine, m_max)
    table.setflags(write=False)
    return BrownianPath(int(seed), int(N_fine), int(m_max), float(T), table)
