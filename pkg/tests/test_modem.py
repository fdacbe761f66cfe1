"""Constellation, mapping, grid, and frame invariants."""

import numpy as np
import pytest

from usfm_sim.errors import ConfigError, SizeError
from usfm_sim.modem import (
    ComplexFrame,
    all_ones_preamble,
    assemble_frame,
    constellation,
    demap_symbols,
    disassemble_frame,
    fill_grid,
    map_bits,
    read_grid,
)
from usfm_sim.metrics import ber_qam_awgn

# Eq-19-style closed form at Eb/N0 = 4 dB, frozen from a 30-digit erfc oracle.
QPSK_BER_4DB = 0.012500818040737560


# ----------------------------------------------------------- constellation


@pytest.mark.parametrize("m", [4, 16, 64])
def test_unit_average_energy(m):
    c = constellation(m)
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12


@pytest.mark.parametrize("m", [4, 16, 64])
def test_gray_property_exhaustive(m):
    """Horizontally/vertically adjacent points differ in exactly one label bit."""
    c = constellation(m)
    labels = c.bit_labels()
    pts = c.points
    axis = int(np.sqrt(m))
    spacing = 2.0 / np.sqrt(2.0 * (m - 1) / 3.0)
    for i in range(m):
        for j in range(i + 1, m):
            d = pts[i] - pts[j]
            adjacent = (
                (abs(d.real) < 1e-9 and abs(abs(d.imag) - spacing) < 1e-9)
                or (abs(d.imag) < 1e-9 and abs(abs(d.real) - spacing) < 1e-9)
            )
            if adjacent:
                assert np.sum(labels[i] != labels[j]) == 1, (i, j)
    # sanity: each inner point has the expected number of axis neighbors
    assert axis * axis == m


def test_unsupported_order_rejected():
    with pytest.raises(ConfigError):
        constellation(32)


# ----------------------------------------------------------------- mapping


def test_map_qpsk_normative_points():
    c = constellation(4)
    s = map_bits(np.array([0, 0]), c)
    np.testing.assert_allclose(s, [(1 + 1j) / np.sqrt(2)], atol=1e-15)
    s = map_bits(np.array([1, 1, 1, 0]), c)
    np.testing.assert_allclose(
        s, [(-1 - 1j) / np.sqrt(2), (-1 + 1j) / np.sqrt(2)], atol=1e-15
    )


def test_map_rejects_indivisible_length():
    with pytest.raises(SizeError):
        map_bits(np.array([0, 1, 0]), constellation(4))


def test_sample_mean_energy_16qam():
    rng = np.random.default_rng(12)
    bits = rng.integers(0, 2, 4000)
    s = map_bits(bits, constellation(16))
    assert abs(np.mean(np.abs(s) ** 2) - 1.0) < 0.05


@pytest.mark.parametrize("m", [4, 16, 64])
def test_map_demap_round_trip(m):
    rng = np.random.default_rng(m)
    bits = rng.integers(0, 2, 600 * int(np.log2(m)))
    c = constellation(m)
    np.testing.assert_array_equal(demap_symbols(map_bits(bits, c), c), bits)


def test_demap_tie_breaks_to_index_zero():
    c = constellation(4)
    np.testing.assert_array_equal(demap_symbols(np.array([0 + 0j]), c), [0, 0])


def test_demap_awgn_matches_closed_form():
    rng = np.random.default_rng(99)
    n_bits = 400_000
    c = constellation(4)
    bits = rng.integers(0, 2, n_bits)
    s = map_bits(bits, c)
    gamma_b = 10 ** 0.4
    noise_var = 1.0 / (2.0 * gamma_b)
    noise = np.sqrt(noise_var / 2) * (
        rng.standard_normal(s.size) + 1j * rng.standard_normal(s.size)
    )
    hat = demap_symbols(s + noise, c)
    ber = np.count_nonzero(hat != bits) / n_bits
    ci = 1.96 * np.sqrt(QPSK_BER_4DB * (1 - QPSK_BER_4DB) / n_bits)
    assert abs(ber - QPSK_BER_4DB) < 3 * ci
    assert abs(QPSK_BER_4DB - ber_qam_awgn(4, gamma_b)) < 1e-12


# -------------------------------------------------------------------- grid


def test_fill_grid_row_major():
    s = np.array([1, 2, 3, 4], dtype=complex)
    g = fill_grid(s, 2, 2)
    np.testing.assert_array_equal(g[0], [1, 2])
    np.testing.assert_array_equal(g[1], [3, 4])


def test_grid_round_trip_and_energy():
    rng = np.random.default_rng(5)
    s = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    g = fill_grid(s, 8, 8)
    np.testing.assert_array_equal(read_grid(g), s)
    assert abs(np.sum(np.abs(g) ** 2) - np.sum(np.abs(s) ** 2)) == 0.0


def test_fill_grid_size_mismatch():
    with pytest.raises(SizeError):
        fill_grid(np.ones(5, dtype=complex), 2, 2)


# ------------------------------------------------------------------- frame


def test_frame_no_overhead_is_concatenation():
    blocks = np.arange(8, dtype=complex).reshape(2, 4)
    f = assemble_frame(blocks, 0, None)
    np.testing.assert_array_equal(f.samples, np.arange(8))
    assert f.preamble_len == 0 and f.cp_len == 0


def test_cyclic_prefix_definition():
    f = assemble_frame(np.array([[1, 2, 3, 4]], dtype=complex), 1, None)
    np.testing.assert_array_equal(f.samples, [4, 1, 2, 3, 4])


def test_frame_round_trip_with_cp_and_preamble():
    rng = np.random.default_rng(2)
    blocks = rng.standard_normal((4, 16)) + 1j * rng.standard_normal((4, 16))
    f = assemble_frame(blocks, 4, all_ones_preamble(16))
    assert len(f.samples) == 16 + 4 * (16 + 4)
    np.testing.assert_array_equal(disassemble_frame(f), blocks)


def test_cp_must_be_shorter_than_block():
    with pytest.raises(ConfigError):
        assemble_frame(np.ones((2, 4), dtype=complex), 4, None)


def test_frame_length_invariant_enforced():
    with pytest.raises(SizeError):
        ComplexFrame(np.zeros(7, dtype=complex), n_blocks=2, block_len=4, cp_len=0, preamble_len=0)


@pytest.mark.parametrize("cp,preamble_len", [(0, 0), (3, 0), (0, 16), (5, 16)])
def test_frame_bookkeeping(cp, preamble_len):
    blocks = np.ones((8, 16), dtype=complex)
    pre = all_ones_preamble(preamble_len) if preamble_len else None
    f = assemble_frame(blocks, cp, pre)
    assert len(f.samples) == preamble_len + 8 * (16 + cp)
    assert len(f.data_section) == 8 * (16 + cp)
