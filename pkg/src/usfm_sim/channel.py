"""Stochastic channel simulation and genie CSI extraction.

Channel kinds
-------------
awgn
    Identity gains; noise is added separately by :func:`add_awgn`.
flat_rayleigh
    One complex Gaussian gain CN(0,1) held for the whole frame.
time_varying_rayleigh
    Per-block Gauss-Markov (AR(1)) fading h[k+1] = rho*h[k] +
    sqrt(1-rho^2)*w[k] with rho = J0(2*pi*d), d the per-block normalized
    Doppler.  Every subcarrier of block k shares h[k].
freq_selective
    Static per-frame tap vector with an exponential power-delay profile,
    applied by linear convolution; the cyclic prefix turns it into a
    circular (one-tap-per-subcarrier) channel.

All tap/gain powers are normalized so E[|H|^2] = 1 per entry.  Randomness
always flows through an explicit numpy Generator; :func:`trial_rng` builds
counter-based per-trial streams so results never depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .modem import ComplexFrame

__all__ = [
    "ChannelConfig",
    "ChannelRealization",
    "Csi",
    "CHANNEL_KINDS",
    "trial_rng",
    "bessel_j0",
    "draw_realization",
    "apply_realization",
    "apply_channel",
    "add_awgn",
    "noise_var_for_ebn0",
    "extract_csi",
]

CHANNEL_KINDS = ("awgn", "flat_rayleigh", "time_varying_rayleigh", "freq_selective")


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "awgn"
    n_taps: int = 1
    delay_decay: float = 1.0  # exponential power-delay constant, in taps
    normalized_doppler: float = 0.0  # f_D * T_block
    seed: int = 0

    def validate(self) -> "ChannelConfig":
        if self.kind not in CHANNEL_KINDS:
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        if self.n_taps < 1:
            raise ConfigError("n_taps must be >= 1")
        if self.delay_decay <= 0:
            raise ConfigError("delay_decay must be > 0")
        if not 0.0 <= self.normalized_doppler <= 0.5:
            raise ConfigError("normalized_doppler must be in [0, 0.5]")
        return self


@dataclass
class ChannelRealization:
    """Per-(block, subcarrier) complex gains, plus taps when frequency selective."""

    gains: np.ndarray  # (n_blocks, n_freq)
    taps: np.ndarray | None = None
    kind: str = "awgn"


@dataclass
class Csi:
    """Genie channel state: per-bin gains and the receiver noise variance."""

    gains: np.ndarray
    noise_var: float

    def __post_init__(self):
        if self.noise_var < 0:
            raise ConfigError("noise_var must be >= 0")


def trial_rng(seed: int, stream: int, trial: int) -> np.random.Generator:
    """Counter-based per-trial random stream: independent of execution order."""
    bg = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
    return np.random.Generator(bg.jumped(trial))


# Abramowitz & Stegun 9.4.1 / 9.4.3 polynomial fits, |error| < 1e-7.
_J0_SMALL = (1.0, -2.2499997, 1.2656208, -0.3163866, 0.0444479, -0.0039444, 0.0002100)
_J0_F = (0.79788456, -0.00000077, -0.00552740, -0.00009512, 0.00137237, -0.00072805, 0.00014476)
_J0_THETA = (-0.78539816, -0.04166397, -0.00003954, 0.00262573, -0.00054125, -0.00029333, 0.00013558)


def bessel_j0(x: float) -> float:
    """Bessel function J0 via the classic polynomial approximations."""
    ax = abs(x)
    if ax <= 3.0:
        t = (ax / 3.0) ** 2
        acc = 0.0
        for c in reversed(_J0_SMALL):
            acc = acc * t + c
        return acc
    t = 3.0 / ax
    f0 = 0.0
    th = 0.0
    for c in reversed(_J0_F):
        f0 = f0 * t + c
    for c in reversed(_J0_THETA):
        th = th * t + c
    return f0 * math.cos(ax + th) / math.sqrt(ax)


def _cn01(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Circular complex Gaussian CN(0,1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _ar1_gains(rng: np.random.Generator, n_blocks: int, doppler: float) -> np.ndarray:
    rho = bessel_j0(2.0 * np.pi * doppler)
    h = np.empty(n_blocks, dtype=complex)
    h[0] = _cn01(rng)
    drive = np.sqrt(max(0.0, 1.0 - rho * rho))
    innovations = _cn01(rng, n_blocks - 1) if n_blocks > 1 else ()
    for k in range(1, n_blocks):
        h[k] = rho * h[k - 1] + drive * innovations[k - 1]
    return h


def tap_powers(n_taps: int, delay_decay: float) -> np.ndarray:
    """Exponential power-delay profile, normalized to unit total power."""
    p = np.exp(-np.arange(n_taps) / delay_decay)
    return p / p.sum()


def draw_realization(
    cfg: ChannelConfig, n_blocks: int, n_freq: int, rng: np.random.Generator
) -> ChannelRealization:
    """Draw one frame's channel realization (no noise)."""
    cfg.validate()
    if cfg.kind == "awgn":
        return ChannelRealization(np.ones((n_blocks, n_freq), dtype=complex), kind=cfg.kind)
    if cfg.kind == "flat_rayleigh":
        h = complex(_cn01(rng))
        return ChannelRealization(np.full((n_blocks, n_freq), h, dtype=complex), kind=cfg.kind)
    if cfg.kind == "time_varying_rayleigh":
        h = _ar1_gains(rng, n_blocks, cfg.normalized_doppler)
        return ChannelRealization(np.repeat(h[:, None], n_freq, axis=1), kind=cfg.kind)
    # freq_selective
    if cfg.n_taps >= n_freq:
        raise ConfigError(f"n_taps {cfg.n_taps} must be < n_freq {n_freq}")
    taps = np.sqrt(tap_powers(cfg.n_taps, cfg.delay_decay)) * _cn01(rng, cfg.n_taps)
    freqs = np.exp(-2j * np.pi * np.outer(np.arange(cfg.n_taps), np.arange(n_freq)) / n_freq)
    h_f = taps @ freqs
    gains = np.repeat(h_f[None, :], n_blocks, axis=0)
    return ChannelRealization(gains, taps=taps, kind=cfg.kind)


def apply_realization(f: ComplexFrame, r: ChannelRealization) -> ComplexFrame:
    """Pass a frame through a drawn channel realization (noiseless)."""
    if r.kind == "awgn":
        return f
    if r.kind == "flat_rayleigh":
        out = f.samples * r.gains[0, 0]
    elif r.kind == "time_varying_rayleigh":
        out = f.samples.copy()
        h = r.gains[:, 0]
        out[: f.preamble_len] *= h[0]
        body = out[f.preamble_len:].reshape(f.n_blocks, f.block_len + f.cp_len)
        body *= h[:, None]
        out = np.concatenate([out[: f.preamble_len], body.ravel()])
    else:  # freq_selective
        if f.cp_len < len(r.taps) - 1:
            raise ConfigError(
                f"cp_len {f.cp_len} shorter than {len(r.taps) - 1}: "
                "inter-block interference would break one-tap equalization"
            )
        out = np.convolve(f.samples, r.taps)[: len(f.samples)]
    return ComplexFrame(out, f.n_blocks, f.block_len, f.cp_len, f.preamble_len)


def apply_channel(
    f: ComplexFrame, cfg: ChannelConfig, rng: np.random.Generator
) -> tuple[ComplexFrame, ChannelRealization]:
    """Draw a realization and apply it; returns (output frame, realization)."""
    r = draw_realization(cfg, f.n_blocks, f.block_len, rng)
    return apply_realization(f, r), r


def add_awgn(f: ComplexFrame, noise_var: float, rng: np.random.Generator) -> ComplexFrame:
    """Add circular complex Gaussian noise, total variance noise_var per sample."""
    if noise_var < 0:
        raise ConfigError("noise_var must be >= 0")
    if noise_var == 0:
        return f
    n = len(f.samples)
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return ComplexFrame(f.samples + noise, f.n_blocks, f.block_len, f.cp_len, f.preamble_len)


def noise_var_for_ebn0(ebn0_db: float, link) -> float:
    """Noise variance so that Eb/N0 counts the whole transmitted frame energy.

    Eb is the expected frame energy (data blocks, cyclic prefixes, and
    preamble all included) divided by the number of information bits; with
    unit-energy symbols and no overhead this reduces to
    1 / (log2(M) * 10^(ebn0_db/10)).
    """
    from .links import effective_cp_len, n_info_bits, preamble_length

    cp = effective_cp_len(link)
    frame_energy = preamble_length(link) + link.n_seq * (link.n_freq + cp)
    eb = frame_energy / n_info_bits(link)
    return eb / (10.0 ** (ebn0_db / 10.0))


def extract_csi(r: ChannelRealization, noise_var: float) -> Csi:
    """Perfect (genie) channel state information."""
    return Csi(gains=r.gains.copy(), noise_var=noise_var)
