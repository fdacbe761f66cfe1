"""End-to-end transceiver chains: spread joint-domain scheme and OFDM baseline.

Transmit pipeline (usfm): bits -> Gray QAM -> (n_seq, n_freq) grid -> spread
each subcarrier across blocks with the Walsh-Hadamard transform -> apply
per-bin amplitude weights on the block/subcarrier lattice -> per-block
inverse DFT -> cyclic prefix + optional preamble.  The OFDM baseline is the
same chain with the spreading stage removed (grid rows are independent OFDM
symbols) and no transmit weighting.

Receive mirrors it: strip overhead, per-block DFT, per-bin equalization
against the effective gain H*w (zero-forcing or MMSE), despread, demap.

Cyclic prefix policy: OFDM always transmits its configured prefix; the
spread scheme only needs one when the channel is frequency selective, so it
runs prefix-free on flat channels (that is where its rate advantage over the
baseline comes from).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from .errors import ConfigError, SizeError
from .modem import (
    all_ones_preamble,
    assemble_frame,
    constellation,
    demap_symbols,
    disassemble_frame,
    fill_grid,
    map_bits,
    read_grid,
    ComplexFrame,
)
from .optimizer import OptimizerConfig, optimize_weights
from .transforms import OpCounter, dft, idft, is_power_of_two, wht

__all__ = [
    "LinkConfig",
    "TxArtifacts",
    "effective_cp_len",
    "preamble_length",
    "n_info_bits",
    "usfm_transmit",
    "usfm_receive",
    "ofdm_transmit",
    "ofdm_receive",
    "transmit",
    "receive",
    "run_link_trial",
    "synthesize_time_blocks",
]

SCHEMES = ("usfm", "ofdm")
EQUALIZERS = ("zf", "mmse")

ZF_ERASURE_THRESHOLD = 1e-12


@dataclass
class LinkConfig:
    scheme: str = "usfm"
    mod_order: int = 4
    n_seq: int = 64
    n_freq: int = 64
    cp_len: int = 16
    channel: chan.ChannelConfig = field(default_factory=chan.ChannelConfig)
    equalizer: str = "mmse"
    optimize: bool = False
    opt_params: OptimizerConfig = field(default_factory=OptimizerConfig)
    ebn0_db_grid: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    seed: int = 0
    use_preamble: bool = False

    def validate(self) -> "LinkConfig":
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.equalizer not in EQUALIZERS:
            raise ConfigError(f"unknown equalizer {self.equalizer!r}")
        if self.mod_order not in (4, 16, 64):
            raise ConfigError(f"unsupported modulation order {self.mod_order}")
        if not (is_power_of_two(self.n_seq) and is_power_of_two(self.n_freq)):
            raise ConfigError("n_seq and n_freq must be powers of two")
        if not 0 <= self.cp_len < self.n_freq:
            raise ConfigError(f"cp_len must be in [0, {self.n_freq}), got {self.cp_len}")
        self.channel.validate()
        self.opt_params.validate()
        if self.channel.kind == "freq_selective":
            if self.channel.n_taps >= self.n_freq:
                raise ConfigError("n_taps must be < n_freq")
            if self.cp_len < self.channel.n_taps - 1:
                raise ConfigError(
                    f"cp_len {self.cp_len} must cover n_taps-1 = {self.channel.n_taps - 1}"
                )
        if not self.ebn0_db_grid:
            raise ConfigError("ebn0_db_grid must be non-empty")
        return self


@dataclass
class TxArtifacts:
    frame: ComplexFrame
    grid: np.ndarray
    weights: np.ndarray
    flags: tuple = ()


def effective_cp_len(cfg: LinkConfig) -> int:
    """Prefix actually transmitted: the spread scheme drops it on flat channels."""
    if cfg.scheme == "usfm" and cfg.channel.kind != "freq_selective":
        return 0
    return cfg.cp_len


def preamble_length(cfg: LinkConfig) -> int:
    return cfg.n_freq if cfg.use_preamble else 0


def n_info_bits(cfg: LinkConfig) -> int:
    return cfg.n_seq * cfg.n_freq * int(math.log2(cfg.mod_order))


def _preamble(cfg: LinkConfig) -> np.ndarray | None:
    return all_ones_preamble(cfg.n_freq) if cfg.use_preamble else None


def synthesize_time_blocks(
    lattice: np.ndarray, scheme: str, ops: OpCounter | None = None
) -> np.ndarray:
    """Grid/lattice -> time blocks.  For usfm the input is the data grid and the
    spreading transform is applied here; for ofdm rows go straight to the IDFT."""
    if scheme == "usfm":
        lattice = wht(lattice, axis=0, ops=ops)
    return idft(lattice, axis=1, ops=ops)


def usfm_transmit(bits, cfg: LinkConfig, csi=None, ops: OpCounter | None = None) -> TxArtifacts:
    cfg.validate()
    bits = np.asarray(bits)
    if bits.size != n_info_bits(cfg):
        raise SizeError(f"need {n_info_bits(cfg)} bits, got {bits.size}")
    grid = fill_grid(map_bits(bits, constellation(cfg.mod_order)), cfg.n_seq, cfg.n_freq)
    flags: tuple = ()
    if cfg.optimize and csi is not None:
        weights = optimize_weights(csi, cfg).w
    else:
        weights = np.ones((cfg.n_seq, cfg.n_freq))
        if cfg.optimize:
            flags = ("optimize_without_csi",)
    spread = wht(grid, axis=0, ops=ops) * weights
    blocks = idft(spread, axis=1, ops=ops)
    frame = assemble_frame(blocks, effective_cp_len(cfg), _preamble(cfg))
    return TxArtifacts(frame=frame, grid=grid, weights=weights, flags=flags)


def ofdm_transmit(bits, cfg: LinkConfig, ops: OpCounter | None = None) -> TxArtifacts:
    cfg.validate()
    bits = np.asarray(bits)
    if bits.size != n_info_bits(cfg):
        raise SizeError(f"need {n_info_bits(cfg)} bits, got {bits.size}")
    grid = fill_grid(map_bits(bits, constellation(cfg.mod_order)), cfg.n_seq, cfg.n_freq)
    blocks = idft(grid, axis=1, ops=ops)
    frame = assemble_frame(blocks, effective_cp_len(cfg), _preamble(cfg))
    return TxArtifacts(frame=frame, grid=grid, weights=np.ones((cfg.n_seq, cfg.n_freq)))


def _equalize(a_hat: np.ndarray, h_eff: np.ndarray, noise_var: float, mode: str) -> np.ndarray:
    if mode == "zf":
        mag = np.abs(h_eff)
        safe = np.where(mag < ZF_ERASURE_THRESHOLD, 1.0, h_eff)
        out = a_hat / safe
        out[mag < ZF_ERASURE_THRESHOLD] = 0.0  # erasure instead of near-zero division
        return out
    return a_hat * np.conj(h_eff) / (np.abs(h_eff) ** 2 + noise_var)


def usfm_receive(
    frame: ComplexFrame,
    cfg: LinkConfig,
    csi: chan.Csi,
    weights: np.ndarray | None = None,
    ops: OpCounter | None = None,
):
    if weights is None:
        weights = np.ones((cfg.n_seq, cfg.n_freq))
    a_hat = dft(disassemble_frame(frame), axis=1, ops=ops)
    equalized = _equalize(a_hat, csi.gains * weights, csi.noise_var, cfg.equalizer)
    grid_hat = wht(equalized, axis=0, ops=ops)
    return demap_symbols(read_grid(grid_hat), constellation(cfg.mod_order))


def ofdm_receive(
    frame: ComplexFrame, cfg: LinkConfig, csi: chan.Csi, ops: OpCounter | None = None
):
    a_hat = dft(disassemble_frame(frame), axis=1, ops=ops)
    equalized = _equalize(a_hat, csi.gains, csi.noise_var, cfg.equalizer)
    return demap_symbols(read_grid(equalized), constellation(cfg.mod_order))


def transmit(bits, cfg: LinkConfig, csi=None, ops: OpCounter | None = None) -> TxArtifacts:
    if cfg.scheme == "usfm":
        return usfm_transmit(bits, cfg, csi, ops=ops)
    return ofdm_transmit(bits, cfg, ops=ops)


def receive(frame, cfg: LinkConfig, csi, weights=None, ops: OpCounter | None = None):
    if cfg.scheme == "usfm":
        return usfm_receive(frame, cfg, csi, weights, ops=ops)
    return ofdm_receive(frame, cfg, csi, ops=ops)


def run_link_trial(cfg: LinkConfig, ebn0_db: float, rng: np.random.Generator):
    """One frame end to end; returns (bit_errors, bits_tried).

    The channel realization is drawn before transmission so the optimizer can
    consume the trial's genie CSI, then the same realization is applied to
    the transmitted frame.
    """
    noise_var = chan.noise_var_for_ebn0(ebn0_db, cfg)
    bits = rng.integers(0, 2, size=n_info_bits(cfg), dtype=np.int8)
    realization = chan.draw_realization(cfg.channel, cfg.n_seq, cfg.n_freq, rng)
    csi = chan.extract_csi(realization, noise_var)
    tx = transmit(bits, cfg, csi)
    rx_frame = chan.add_awgn(chan.apply_realization(tx.frame, realization), noise_var, rng)
    bits_hat = receive(rx_frame, cfg, csi, tx.weights)
    return int(np.count_nonzero(bits != bits_hat)), bits.size
