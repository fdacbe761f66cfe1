"""Orthonormal transforms for the sequency-frequency grid.

A sequency-frequency grid is an ``(n_seq, n_freq)`` complex ndarray whose
axis 0 (rows, index ``i``) is the sequency dimension and axis 1 (columns,
index ``j``) is the frequency dimension.  Both axes must be powers of two.

All transforms here use the unitary convention (``1/sqrt(N)`` in each
direction), so energy is preserved exactly and the Walsh-Hadamard transform
is its own inverse.  The Walsh-Hadamard transform uses natural (Hadamard)
ordering; :func:`sequency_permutation` converts to sequency order when a
zero-crossing-ordered view is wanted.

Every fast transform optionally records its work in an :class:`OpCounter`,
which the complexity reports aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, SizeError

__all__ = [
    "OpCounter",
    "wht",
    "dft",
    "idft",
    "jsft",
    "ijsft",
    "jsft_dense_matrix",
    "jsft_dense_oracle",
    "hadamard_matrix",
    "sequency_counts",
    "sequency_permutation",
    "is_power_of_two",
]

# Dense-oracle refusal threshold: the explicit (n*n) matrix is a test aid,
# not a production path.
DENSE_ORACLE_MAX_CELLS = 4096


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class OpCounter:
    """Instrumented operation counts for the fast transforms.

    wht_stages counts one unit per butterfly stage per transformed lane
    (the convention the complexity report uses for the spreading term);
    wht_butterflies and dft_butterflies count individual (a, b) ->
    (a + b, a - b) pair operations, (N/2)*log2(N) per length-N transform.
    """

    wht_stages: int = 0
    wht_butterflies: int = 0
    dft_butterflies: int = 0

    def reset(self) -> None:
        self.wht_stages = 0
        self.wht_butterflies = 0
        self.dft_butterflies = 0


def _as_lastaxis_2d(a: np.ndarray, axis: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Move `axis` last and flatten the rest; return (2-D view copy, out shape)."""
    moved = np.moveaxis(a, axis, -1)
    return moved.reshape(-1, moved.shape[-1]), moved.shape


def _restore_axis(flat: np.ndarray, moved_shape: tuple[int, ...], axis: int) -> np.ndarray:
    return np.moveaxis(flat.reshape(moved_shape), -1, axis)


def _fwht_2d(out: np.ndarray, ops: OpCounter | None) -> np.ndarray:
    """In-place style fast Walsh-Hadamard transform of each row (unnormalized)."""
    lanes, n = out.shape
    h = 1
    while h < n:
        view = out.reshape(lanes, n // (2 * h), 2, h)
        top = view[:, :, 0, :].copy()
        bot = view[:, :, 1, :]
        view[:, :, 0, :] = top + bot
        view[:, :, 1, :] = top - bot
        if ops is not None:
            ops.wht_stages += lanes
            ops.wht_butterflies += lanes * (n // 2)
        h *= 2
    return out


def wht(v: np.ndarray, axis: int = -1, ops: OpCounter | None = None) -> np.ndarray:
    """Walsh-Hadamard transform, natural (Hadamard) order, 1/sqrt(N) normalized.

    Self-inverse under this normalization: ``wht(wht(v)) == v``.  Accepts
    real or complex input; the length along `axis` must be a power of two.
    """
    v = np.asarray(v)
    n = v.shape[axis]
    if not is_power_of_two(n):
        raise DimensionError(f"WHT length must be a power of two, got {n}")
    flat, moved_shape = _as_lastaxis_2d(v, axis)
    dtype = np.complex128 if np.iscomplexobj(v) else np.float64
    out = _fwht_2d(flat.astype(dtype, copy=True), ops)
    out *= 1.0 / np.sqrt(n)
    return _restore_axis(out, moved_shape, axis)


@lru_cache(maxsize=None)
def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int, sign: int) -> np.ndarray:
    tw = np.exp(sign * 2j * np.pi * np.arange(m // 2) / m)
    tw.setflags(write=False)
    return tw


def _fft_2d(flat: np.ndarray, sign: int, ops: OpCounter | None) -> np.ndarray:
    """Radix-2 decimation-in-time FFT of each row (unnormalized)."""
    lanes, n = flat.shape
    out = flat[:, _bit_reverse_indices(n)].astype(np.complex128)
    m = 2
    while m <= n:
        half = m // 2
        tw = _twiddles(m, sign)
        view = out.reshape(lanes, n // m, m)
        even = view[:, :, :half].copy()
        odd = view[:, :, half:] * tw
        view[:, :, :half] = even + odd
        view[:, :, half:] = even - odd
        if ops is not None:
            ops.dft_butterflies += lanes * (n // 2)
        m *= 2
    return out


def _dft_direct(flat: np.ndarray, sign: int) -> np.ndarray:
    """Reference O(N^2) summation path for lengths that are not powers of two."""
    n = flat.shape[-1]
    k = np.arange(n)
    kernel = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    return flat.astype(np.complex128) @ kernel.T


def _dft_impl(v: np.ndarray, sign: int, axis: int, ops: OpCounter | None) -> np.ndarray:
    v = np.asarray(v)
    n = v.shape[axis]
    if n < 1:
        raise DimensionError("DFT input must be non-empty")
    flat, moved_shape = _as_lastaxis_2d(v, axis)
    if is_power_of_two(n):
        out = _fft_2d(flat, sign, ops)
    else:
        out = _dft_direct(flat, sign)
    out *= 1.0 / np.sqrt(n)
    return _restore_axis(out, moved_shape, axis)


def dft(v: np.ndarray, axis: int = -1, ops: OpCounter | None = None) -> np.ndarray:
    """Unitary forward DFT (1/sqrt(N) scaling, e^{-j2pi kn/N} kernel)."""
    return _dft_impl(v, -1, axis, ops)


def idft(v: np.ndarray, axis: int = -1, ops: OpCounter | None = None) -> np.ndarray:
    """Unitary inverse DFT; ``idft(dft(v)) == v``."""
    return _dft_impl(v, +1, axis, ops)


def _validate_grid(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g)
    if g.ndim != 2:
        raise DimensionError(f"grid must be 2-D, got shape {g.shape}")
    n_seq, n_freq = g.shape
    if not (is_power_of_two(n_seq) and is_power_of_two(n_freq)):
        raise DimensionError(f"grid axes must be powers of two, got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("grid entries must be finite")
    return g


def jsft(g: np.ndarray, ops: OpCounter | None = None) -> np.ndarray:
    """Joint transform: WHT along the sequency axis, then DFT along frequency."""
    g = _validate_grid(g)
    return dft(wht(g, axis=0, ops=ops), axis=1, ops=ops)


def ijsft(t: np.ndarray, ops: OpCounter | None = None) -> np.ndarray:
    """Inverse joint transform: inverse DFT along frequency, then WHT (self-inverse)."""
    t = _validate_grid(t)
    return wht(idft(t, axis=1, ops=ops), axis=0, ops=ops)


def hadamard_matrix(n: int) -> np.ndarray:
    """Unnormalized natural-order Hadamard matrix (entries +-1)."""
    if not is_power_of_two(n):
        raise DimensionError(f"Hadamard order must be a power of two, got {n}")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def jsft_dense_matrix(n_seq: int, n_freq: int) -> np.ndarray:
    """Explicit (n_seq*n_freq) x (n_seq*n_freq) joint transform matrix.

    Acts on row-major flattened grids: ``jsft(g).ravel() == K @ g.ravel()``.
    """
    if n_seq * n_freq > DENSE_ORACLE_MAX_CELLS:
        raise SizeError(
            f"dense matrix capped at {DENSE_ORACLE_MAX_CELLS} cells, "
            f"got {n_seq}x{n_freq}"
        )
    w = hadamard_matrix(n_seq) / np.sqrt(n_seq)
    j = np.arange(n_freq)
    f = np.exp(-2j * np.pi * np.outer(j, j) / n_freq) / np.sqrt(n_freq)
    return np.kron(w, f)


def jsft_dense_oracle(g: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Joint transform by explicit matrix multiplication (test oracle only)."""
    g = _validate_grid(g)
    k = jsft_dense_matrix(*g.shape)
    if inverse:
        k = k.conj().T
    return (k @ g.ravel()).reshape(g.shape)


def sequency_counts(n: int) -> np.ndarray:
    """Zero crossings of each natural-order Walsh row (its sequency)."""
    h = hadamard_matrix(n)
    return np.count_nonzero(np.diff(h, axis=1), axis=1)


def sequency_permutation(n: int) -> np.ndarray:
    """Indices that reorder natural (Hadamard) rows into ascending sequency."""
    return np.argsort(sequency_counts(n), kind="stable")
