"""CSI-driven per-bin power allocation and modulation scheme selection.

The allocation minimizes a differentiable surrogate for the post-despreading
bit error rate: with per-bin amplitude weights w[k, j] (k indexing blocks on
the spread lattice, j indexing subcarriers), zero-forcing despreading gives
subcarrier j the harmonic-mean effective per-bit SNR

    g_eff(j) = n_seq * g0 / sum_k 1 / (w[k,j]^2 |H[k,j]|^2),

with g0 the per-bit SNR at unit gain, and the surrogate loss is the sum over
subcarriers of the closed-form QAM bit error rate at g_eff(j).  Subcarriers
containing a dead bin (|H| = 0 or w = 0) contribute a coin-flip 0.5 and a
zero gradient.

Minimization is projected gradient descent on the power sphere
mean(w^2) = 1 (negative weights are clamped before rescaling), keeping the
best-loss iterate so the returned allocation is never worse than uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .metrics import ber_qam_awgn

__all__ = [
    "OptimizerConfig",
    "Weights",
    "surrogate_loss",
    "loss_gradient",
    "optimize_weights",
    "improvement_factor",
    "ImprovementFactor",
    "McsEntry",
    "McsTable",
    "McsSelection",
    "select_mcs",
    "project_weights",
]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 2.0
    max_iters: int = 500
    rel_tol: float = 1e-6
    gradient: str = "analytic"  # analytic | central_difference
    fd_step: float = 1e-5

    def validate(self) -> "OptimizerConfig":
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.gradient not in ("analytic", "central_difference"):
            raise ConfigError(f"unknown gradient mode {self.gradient!r}")
        return self


@dataclass
class Weights:
    """Per-bin amplitude weights on the power sphere, plus how they were found."""

    w: np.ndarray
    iterations: int = 0
    initial_loss: float = math.nan
    final_loss: float = math.nan
    flags: tuple = ()


def _per_bit_snr(csi, cfg) -> float:
    if csi.noise_var == 0:
        return math.inf
    return 1.0 / (math.log2(cfg.mod_order) * csi.noise_var)


def _qam_coefficients(mod_order: int) -> tuple[float, float]:
    k = math.log2(mod_order)
    coeff = (4.0 / k) * (1.0 - 1.0 / math.sqrt(mod_order))
    slope = 3.0 * k / (mod_order - 1)
    return coeff, slope


def _effective_snr(w: np.ndarray, gains2: np.ndarray, g0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-subcarrier harmonic-mean SNR; returns (g_eff, inv_sum, dead column mask)."""
    n_seq = w.shape[0]
    prod = (w * w) * gains2
    dead = np.any(prod <= 0.0, axis=0)
    with np.errstate(divide="ignore"):
        inv = np.where(prod > 0.0, 1.0 / np.where(prod > 0.0, prod, 1.0), np.inf)
    inv_sum = inv.sum(axis=0)
    g_eff = np.where(dead, 0.0, n_seq * g0 / np.where(dead, 1.0, inv_sum))
    return g_eff, inv_sum, dead


def surrogate_loss(w: np.ndarray, csi, cfg) -> float:
    """Sum over subcarriers of the predicted bit error rate after despreading."""
    w = np.asarray(w, dtype=float)
    gains2 = np.abs(csi.gains) ** 2
    if w.shape != gains2.shape:
        raise ConfigError(f"weights shape {w.shape} != gains shape {gains2.shape}")
    g0 = _per_bit_snr(csi, cfg)
    if math.isinf(g0):
        return 0.0
    g_eff, _, dead = _effective_snr(w, gains2, g0)
    per_col = np.where(dead, 0.5, ber_qam_awgn(cfg.mod_order, g_eff))
    return float(per_col.sum())


def loss_gradient(w: np.ndarray, csi, cfg) -> np.ndarray:
    """Analytic gradient of :func:`surrogate_loss` with respect to w."""
    w = np.asarray(w, dtype=float)
    gains2 = np.abs(csi.gains) ** 2
    g0 = _per_bit_snr(csi, cfg)
    if math.isinf(g0):
        return np.zeros_like(w)
    n_seq = w.shape[0]
    coeff, slope = _qam_coefficients(cfg.mod_order)
    g_eff, inv_sum, dead = _effective_snr(w, gains2, g0)

    live = ~dead
    grad = np.zeros_like(w)
    if not np.any(live):
        return grad
    u = np.sqrt(slope * g_eff[live])
    # d/dg of coeff*Q(sqrt(slope*g)) = -coeff * phi(u) * slope / (2u); u > 0
    # except when g_eff = 0, which only happens on dead columns.
    phi = np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    dber_dg = -coeff * phi * slope / (2.0 * np.maximum(u, 1e-300))
    # dg/dw[k,j] = 2 * n_seq * g0 / (w^3 |H|^2 inv_sum^2)
    wl = w[:, live]
    dg_dw = 2.0 * n_seq * g0 / (wl**3 * gains2[:, live] * inv_sum[live] ** 2)
    grad[:, live] = dber_dg * dg_dw
    return grad


def _fd_gradient(w: np.ndarray, csi, cfg, step: float) -> np.ndarray:
    grad = np.zeros_like(w, dtype=float)
    for idx in np.ndindex(w.shape):
        wp = w.copy()
        wm = w.copy()
        wp[idx] += step
        wm[idx] -= step
        grad[idx] = (surrogate_loss(wp, csi, cfg) - surrogate_loss(wm, csi, cfg)) / (2 * step)
    return grad


def project_weights(w: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero, then rescale onto the sphere mean(w^2) = 1."""
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    rms = math.sqrt(float(np.mean(w * w)))
    if rms == 0.0:
        return np.ones_like(w)
    return w / rms


def optimize_weights(csi, cfg, opt: OptimizerConfig | None = None) -> Weights:
    """Projected gradient descent from uniform weights, keeping the best iterate."""
    opt = (opt if opt is not None else cfg.opt_params).validate()
    w = np.ones_like(csi.gains, dtype=float)
    loss0 = surrogate_loss(w, csi, cfg)
    best_w, best_loss = w, loss0
    prev_loss = loss0
    flags: list[str] = []
    iters = 0
    for k in range(1, opt.max_iters + 1):
        if opt.gradient == "analytic":
            grad = loss_gradient(w, csi, cfg)
        else:
            grad = _fd_gradient(w, csi, cfg, opt.fd_step)
        if not np.all(np.isfinite(grad)):
            flags.append("nonfinite_gradient_abort")
            break
        w = project_weights(w - opt.learning_rate * grad)
        loss = surrogate_loss(w, csi, cfg)
        iters = k
        if not math.isfinite(loss):
            flags.append("nonfinite_loss_abort")
            break
        if loss < best_loss:
            best_w, best_loss = w, loss
        if abs(prev_loss - loss) <= opt.rel_tol * max(abs(prev_loss), 1e-300):
            break
        prev_loss = loss
    return Weights(
        w=best_w,
        iterations=iters,
        initial_loss=loss0,
        final_loss=best_loss,
        flags=tuple(flags),
    )


class ImprovementFactor(NamedTuple):
    delta: float
    flags: tuple


def improvement_factor(ber_base: float, ber_opt: float) -> ImprovementFactor:
    """Fractional BER reduction 1 - ber_opt/ber_base, clamped to [0, 1]."""
    if ber_base == 0:
        return ImprovementFactor(math.nan, ("undefined_zero_baseline",))
    raw = 1.0 - ber_opt / ber_base
    if raw < 0.0:
        return ImprovementFactor(0.0, (f"clamped_negative_delta:{raw:.6g}",))
    if raw > 1.0:
        return ImprovementFactor(1.0, (f"clamped_excess_delta:{raw:.6g}",))
    return ImprovementFactor(raw, ())


@dataclass(frozen=True)
class McsEntry:
    mod_order: int
    code_rate: float
    spectral_eff: float


@dataclass(frozen=True)
class McsTable:
    entries: tuple

    def validate(self) -> "McsTable":
        if not self.entries:
            raise ConfigError("MCS table must be non-empty")
        effs = [e.spectral_eff for e in self.entries]
        if effs != sorted(effs):
            raise ConfigError("MCS entries must be sorted by spectral efficiency")
        return self


def default_mcs_table(overhead_factor: float = 1.0) -> McsTable:
    return McsTable(
        tuple(
            McsEntry(m, 1.0, math.log2(m) * overhead_factor) for m in (4, 16, 64)
        )
    )


class McsSelection(NamedTuple):
    entry: McsEntry
    predicted_ber: float
    feasible: bool


def _predicted_ber_per_bit(mod_order: int, csi, n_seq: int) -> float:
    """Uniform-weight surrogate loss normalized per bit for one candidate order."""
    gains2 = np.abs(csi.gains) ** 2
    if csi.noise_var == 0:
        return 0.0
    g0 = 1.0 / (math.log2(mod_order) * csi.noise_var)
    dead = np.any(gains2 <= 0.0, axis=0)
    with np.errstate(divide="ignore"):
        inv_sum = np.where(gains2 > 0.0, 1.0 / np.where(gains2 > 0.0, gains2, 1.0), np.inf).sum(axis=0)
    g_eff = np.where(dead, 0.0, n_seq * g0 / np.where(dead, 1.0, inv_sum))
    per_col = np.where(dead, 0.5, ber_qam_awgn(mod_order, g_eff))
    return float(per_col.mean())


def select_mcs(table: McsTable, csi, cfg, eta_target: float) -> McsSelection:
    """Lowest predicted-BER entry among those meeting the efficiency target.

    Ties go to the lower modulation order.  If no entry meets the target, the
    highest-efficiency entry is returned flagged infeasible.
    """
    table.validate()
    candidates = [e for e in table.entries if e.spectral_eff >= eta_target - 1e-12]
    feasible = bool(candidates)
    if not candidates:
        candidates = [max(table.entries, key=lambda e: e.spectral_eff)]
    scored = [
        (_predicted_ber_per_bit(e.mod_order, csi, cfg.n_seq), e.mod_order, e)
        for e in candidates
    ]
    ber, _, entry = min(scored, key=lambda t: (t[0], t[1]))
    return McsSelection(entry=entry, predicted_ber=ber, feasible=feasible)
