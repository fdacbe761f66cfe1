"""Closed-form error-rate oracles, link metrics, and the Monte Carlo harness.

The closed forms:

* ``ber_qam_awgn``: nearest-neighbor BER of Gray square M-QAM over AWGN,
  (4/log2 M)(1 - 1/sqrt(M)) Q(sqrt(3 log2(M) g / (M - 1))) at per-bit SNR g.
  Exact for M = 4.
* ``ber_rayleigh``: 0.5 (1 - sqrt(g / (1 + g))), exact for coherent QPSK
  per-bit over flat Rayleigh fading with one-tap equalization.
* ``ber_usfm_model``: the Rayleigh form scaled by (1 - delta) for a measured
  improvement factor delta.

``run_ber_sweep`` drives independent per-trial link simulations with a
stopping rule (enough errors and enough bits, or a hard bit cap) and attaches
normal-approximation binomial confidence half-widths.  Trials use
counter-based random streams, so a sweep is reproducible bit-for-bit no
matter how it is scheduled.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "q_function",
    "ber_qam_awgn",
    "ber_rayleigh",
    "ber_usfm_model",
    "spectral_efficiency",
    "papr",
    "papr_db",
    "BerRecord",
    "ComplexityRecord",
    "run_ber_sweep",
    "complexity_count",
]

_ERFC = np.frompyfunc(math.erfc, 1, 1)


def q_function(x):
    """Gaussian tail probability Q(x) = 0.5 * erfc(x / sqrt(2))."""
    if np.isscalar(x):
        return 0.5 * math.erfc(x / math.sqrt(2))
    return 0.5 * _ERFC(np.asarray(x, dtype=float) / math.sqrt(2)).astype(float)


def ber_qam_awgn(mod_order: int, ebn0_linear):
    """Gray square M-QAM bit error rate over AWGN at linear per-bit SNR."""
    if mod_order not in (4, 16, 64):
        raise ConfigError(f"unsupported modulation order {mod_order}")
    k = math.log2(mod_order)
    coeff = (4.0 / k) * (1.0 - 1.0 / math.sqrt(mod_order))
    arg = np.sqrt(3.0 * k * np.asarray(ebn0_linear, dtype=float) / (mod_order - 1))
    out = coeff * q_function(arg)
    return float(out) if np.isscalar(ebn0_linear) else out


def ber_rayleigh(ebn0_linear):
    """QPSK per-bit BER over flat Rayleigh fading at linear per-bit SNR."""
    g = np.asarray(ebn0_linear, dtype=float)
    out = 0.5 * (1.0 - np.sqrt(g / (1.0 + g)))
    return float(out) if np.isscalar(ebn0_linear) else out


def ber_usfm_model(ebn0_linear, delta: float):
    """Rayleigh BER scaled by a measured optimization improvement factor."""
    if not 0.0 <= delta <= 1.0:
        warnings.warn(f"improvement factor {delta} outside [0, 1], clamping")
        delta = min(1.0, max(0.0, delta))
    return ber_rayleigh(ebn0_linear) * (1.0 - delta)


def spectral_efficiency(
    mod_order: int, n_freq: int, cp_len: int, preamble_len: int = 0, n_blocks: int = 1
) -> float:
    """Information bits per transmitted sample (bits/s/Hz at Nyquist signalling)."""
    payload = n_blocks * n_freq
    duration = preamble_len + n_blocks * (n_freq + cp_len)
    return math.log2(mod_order) * payload / duration


def papr(f) -> float:
    """Peak-to-average power ratio of the frame's data section."""
    x = np.abs(f.data_section) ** 2
    mean = x.mean() if x.size else 0.0
    if mean == 0.0:
        warnings.warn("PAPR undefined for an all-zero frame")
        return float("nan")
    return float(x.max() / mean)


def papr_db(f) -> float:
    return 10.0 * math.log10(papr(f))


@dataclass(frozen=True)
class BerRecord:
    """One measured BER point."""

    scheme: str
    channel: str
    equalizer: str
    ebn0_db: float
    bits: int
    errors: int
    ber: float
    ci_half_width: float  # 95% normal approximation
    flags: tuple = ()


@dataclass(frozen=True)
class ComplexityRecord:
    scheme: str
    n_total: int
    butterfly_count: int
    optimizer_iters: int
    wall_time_label: str = "machine-dependent"


def _threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("USFM_SIM_THREADS", "1")))
    except ValueError:
        return 1


def _run_trials(cfg, ebn0_db: float, point_index: int, start: int, count: int):
    from .links import run_link_trial

    from .channel import trial_rng

    out = []
    for t in range(start, start + count):
        rng = trial_rng(cfg.seed, point_index, t)
        out.append(run_link_trial(cfg, ebn0_db, rng))
    return out


def _ci_half_width(errors: int, bits: int) -> float:
    p = errors / bits
    return 1.96 * math.sqrt(p * (1.0 - p) / bits)


def run_ber_sweep(
    cfg,
    min_bits: int,
    max_bits: int,
    target_errors: int = 100,
    threads: int | None = None,
) -> list[BerRecord]:
    """Measure BER at every Eb/N0 point of cfg.ebn0_db_grid.

    Per point, trials run until (errors >= target_errors and bits >= min_bits)
    or bits >= max_bits.  The stopping rule is evaluated over trial results in
    trial-index order, so the included trial set (and hence every record) is
    identical whether trials run serially or across a worker pool.
    """
    if min_bits < 10_000:
        raise ConfigError("min_bits must be >= 10000")
    if max_bits < min_bits:
        raise ConfigError("max_bits must be >= min_bits")
    threads = _threads_from_env() if threads is None else max(1, threads)

    records = []
    for point_index, ebn0_db in enumerate(cfg.ebn0_db_grid):
        errors = 0
        bits = 0
        trial = 0
        done = False
        while not done:
            chunk = 64 if threads == 1 else 64 * threads
            if threads == 1:
                results = _run_trials(cfg, ebn0_db, point_index, trial, chunk)
            else:
                results = _run_trials_parallel(cfg, ebn0_db, point_index, trial, chunk, threads)
            for e, b in results:
                errors += e
                bits += b
                trial += 1
                if (errors >= target_errors and bits >= min_bits) or bits >= max_bits:
                    done = True
                    break
        flags = []
        if errors == 0:
            flags.append("no_errors_observed")
        if bits >= max_bits and errors < target_errors:
            flags.append("max_bits_reached")
        records.append(
            BerRecord(
                scheme=cfg.scheme,
                channel=cfg.channel.kind,
                equalizer=cfg.equalizer,
                ebn0_db=float(ebn0_db),
                bits=bits,
                errors=errors,
                ber=errors / bits,
                ci_half_width=_ci_half_width(errors, bits),
                flags=tuple(flags),
            )
        )
    return records


def _run_trials_parallel(cfg, ebn0_db, point_index, start, count, threads):
    from concurrent.futures import ProcessPoolExecutor

    per_worker = max(1, count // threads)
    spans = []
    t = start
    while t < start + count:
        n = min(per_worker, start + count - t)
        spans.append((t, n))
        t += n
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_run_trials, cfg, ebn0_db, point_index, s, n) for s, n in spans
        ]
        results = []
        for fut in futures:  # submission order == trial-index order
            results.extend(fut.result())
    return results


def complexity_count(cfg) -> ComplexityRecord:
    """Instrumented transform work for synthesizing one frame.

    Counting convention: the spreading stage contributes one unit per
    butterfly stage per subcarrier (n_freq * log2(n_seq) for the joint
    scheme, zero for plain OFDM); the per-block DFT contributes one unit per
    radix-2 butterfly (n_seq * (n_freq/2) * log2(n_freq)).  Optimizer
    iterations are measured on a genie realization drawn from cfg.seed.
    """
    from .channel import draw_realization, extract_csi, noise_var_for_ebn0, trial_rng
    from .links import synthesize_time_blocks
    from .optimizer import optimize_weights
    from .transforms import OpCounter

    ops = OpCounter()
    grid = np.ones((cfg.n_seq, cfg.n_freq), dtype=complex)
    synthesize_time_blocks(grid, cfg.scheme, ops=ops)
    butterflies = ops.wht_stages + ops.dft_butterflies

    opt_iters = 0
    if cfg.optimize:
        rng = trial_rng(cfg.seed, 0, 0)
        realization = draw_realization(cfg.channel, cfg.n_seq, cfg.n_freq, rng)
        mid = cfg.ebn0_db_grid[len(cfg.ebn0_db_grid) // 2]
        csi = extract_csi(realization, noise_var_for_ebn0(mid, cfg))
        opt_iters = optimize_weights(csi, cfg).iterations

    return ComplexityRecord(
        scheme=cfg.scheme,
        n_total=cfg.n_seq * cfg.n_freq,
        butterfly_count=int(butterflies),
        optimizer_iters=int(opt_iters),
    )
