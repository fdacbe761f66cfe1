"""Bit handling, Gray-coded square QAM, grid packing, and frame assembly.

Constellation convention (normative for every test in this repo): square QAM
with per-axis Gray-coded PAM levels, unit average energy.  A symbol label is
read MSB-first; the first half of the bits selects the in-phase level, the
second half the quadrature level.  On each axis the bit group is a Gray code
and maps to levels descending from +(sqrt(M)-1) to -(sqrt(M)-1), so the
all-zeros label is the top-right corner point and carries index 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, SizeError

__all__ = [
    "Constellation",
    "constellation",
    "map_bits",
    "demap_symbols",
    "fill_grid",
    "read_grid",
    "ComplexFrame",
    "assemble_frame",
    "disassemble_frame",
    "all_ones_preamble",
]

SUPPORTED_MOD_ORDERS = (4, 16, 64)


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = 1
    while shift < 32:
        b ^= b >> shift
        shift *= 2
    return b


@dataclass(frozen=True)
class Constellation:
    mod_order: int
    bits_per_symbol: int
    points: np.ndarray  # indexed by label value, unit average energy

    def bit_labels(self) -> np.ndarray:
        """Label bits per point, shape (M, bits_per_symbol), MSB first."""
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return (np.arange(self.mod_order)[:, None] >> shifts) & 1


@lru_cache(maxsize=None)
def constellation(mod_order: int) -> Constellation:
    """Gray-coded square QAM constellation for M in {4, 16, 64}."""
    if mod_order not in SUPPORTED_MOD_ORDERS:
        raise ConfigError(f"unsupported modulation order {mod_order}")
    bits = int(np.log2(mod_order))
    half = bits // 2
    axis_size = 1 << half
    labels = np.arange(mod_order)
    g_i = labels >> half
    g_q = labels & (axis_size - 1)
    # Gray label g sits at rank gray_to_binary(g) along the axis; levels run
    # +(axis_size-1), +(axis_size-3), ..., -(axis_size-1).
    level_i = (axis_size - 1) - 2 * _gray_to_binary(g_i)
    level_q = (axis_size - 1) - 2 * _gray_to_binary(g_q)
    scale = np.sqrt(2.0 * (mod_order - 1) / 3.0)
    points = (level_i + 1j * level_q) / scale
    points.setflags(write=False)
    return Constellation(mod_order=mod_order, bits_per_symbol=bits, points=points)


def map_bits(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map a {0,1} sequence to constellation symbols, MSB-first per symbol."""
    bits = np.asarray(bits)
    if bits.size % c.bits_per_symbol != 0:
        raise SizeError(
            f"bit count {bits.size} not divisible by {c.bits_per_symbol}"
        )
    groups = bits.reshape(-1, c.bits_per_symbol).astype(np.int64)
    weights = 1 << np.arange(c.bits_per_symbol - 1, -1, -1)
    labels = groups @ weights
    return c.points[labels]


def demap_symbols(y: np.ndarray, c: Constellation) -> np.ndarray:
    """Hard decision: nearest point in Euclidean distance, ties to lowest index."""
    y = np.asarray(y, dtype=complex).ravel()
    d2 = (y.real[:, None] - c.points.real[None, :]) ** 2
    d2 += (y.imag[:, None] - c.points.imag[None, :]) ** 2
    labels = np.argmin(d2, axis=1)  # argmin keeps the first (lowest) index on ties
    shifts = np.arange(c.bits_per_symbol - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.int8).ravel()


def fill_grid(s: np.ndarray, n_seq: int, n_freq: int) -> np.ndarray:
    """Row-major (sequency-major) packing of symbols into an (n_seq, n_freq) grid."""
    s = np.asarray(s, dtype=complex)
    if s.size != n_seq * n_freq:
        raise SizeError(f"need {n_seq * n_freq} symbols, got {s.size}")
    return s.reshape(n_seq, n_freq)


def read_grid(g: np.ndarray) -> np.ndarray:
    """Inverse of fill_grid: row-major unpacking."""
    return np.asarray(g).reshape(-1)


@dataclass
class ComplexFrame:
    """Time-domain baseband frame: preamble then n_blocks of (cp + block) samples."""

    samples: np.ndarray
    n_blocks: int
    block_len: int
    cp_len: int
    preamble_len: int

    def __post_init__(self):
        expected = self.preamble_len + self.n_blocks * (self.block_len + self.cp_len)
        if len(self.samples) != expected:
            raise SizeError(
                f"frame has {len(self.samples)} samples, expected {expected}"
            )

    @property
    def data_section(self) -> np.ndarray:
        return self.samples[self.preamble_len:]


def all_ones_preamble(n: int) -> np.ndarray:
    return np.ones(n, dtype=complex)


def assemble_frame(
    blocks: np.ndarray, cp_len: int, preamble: np.ndarray | None = None
) -> ComplexFrame:
    """Prepend a cyclic prefix to each time block and a known preamble in front."""
    blocks = np.asarray(blocks, dtype=complex)
    n_blocks, block_len = blocks.shape
    if cp_len < 0 or cp_len >= block_len:
        raise ConfigError(f"cp_len {cp_len} must satisfy 0 <= cp_len < {block_len}")
    if preamble is None:
        preamble = np.zeros(0, dtype=complex)
    preamble = np.asarray(preamble, dtype=complex)
    if cp_len:
        with_cp = np.concatenate([blocks[:, block_len - cp_len:], blocks], axis=1)
    else:
        with_cp = blocks
    samples = np.concatenate([preamble, with_cp.ravel()])
    return ComplexFrame(
        samples=samples,
        n_blocks=n_blocks,
        block_len=block_len,
        cp_len=cp_len,
        preamble_len=len(preamble),
    )


def disassemble_frame(f: ComplexFrame) -> np.ndarray:
    """Strip preamble and cyclic prefixes; returns the (n_blocks, block_len) matrix."""
    body = f.samples[f.preamble_len:].reshape(f.n_blocks, f.block_len + f.cp_len)
    return body[:, f.cp_len:]
