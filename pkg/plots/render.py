#!/usr/bin/env python3
"""Render publication-style figures from the simulator's CSV outputs.

Usage:
    python3 plots/render.py --figure fig1_ber --in ber_*.csv theory_*.csv --out fig1.png

Figures and the CSV headers they consume (written by `usfm-sim run`):

* fig1_ber, fig5_ablation: `scheme,channel,equalizer,ebn0_db,bits,errors,ber,
  ci_half_width` - semilog-y BER vs Eb/N0 with confidence bars; rows with
  bits = 0 (or scheme "theory") are drawn as dashed oracle overlays.
* fig2_eff: `scheme,mod_order,n_freq,cp_len,eta_bps_hz` - efficiency per
  modulation order for each scheme.
* fig3_complexity, fig4_latency: `scheme,n_total,butterflies,opt_iters` -
  operation counts vs grid size.

Every run writes both PNG and SVG next to the requested output path.
Rendering is read-only over its inputs and deterministic: fixed style, no
embedded dates.  A malformed or empty CSV aborts with a nonzero exit and the
offending column or file named; a missing optional column only drops the
layer it feeds (with a warning).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "usfm-plots"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

FIGURES = ("fig1_ber", "fig2_eff", "fig3_complexity", "fig4_latency", "fig5_ablation")

BER_REQUIRED = ("scheme", "channel", "equalizer", "ebn0_db", "ber")
BER_OPTIONAL = ("bits", "errors", "ci_half_width")
EFF_REQUIRED = ("scheme", "mod_order", "eta_bps_hz")
EFF_OPTIONAL = ("n_freq", "cp_len")
OPS_REQUIRED = ("scheme", "n_total", "butterflies")
OPS_OPTIONAL = ("opt_iters",)


class RenderError(Exception):
    pass


def warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def load_csv(path: Path, required: tuple, optional: tuple) -> list[dict]:
    """Read rows, enforcing the exact expected column set."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            rows = list(reader)
    except OSError as exc:
        raise RenderError(f"{path}: {exc}") from exc
    if header is None:
        raise RenderError(f"{path}: empty file")
    missing = [c for c in required if c not in header]
    if missing:
        raise RenderError(f"{path}: missing required column {missing[0]!r}")
    unknown = [c for c in header if c not in required + optional]
    if unknown:
        raise RenderError(f"{path}: unexpected column {unknown[0]!r}")
    absent = [c for c in optional if c not in header]
    for col in absent:
        warn(f"{path.name}: optional column {col!r} absent; omitting that layer")
    if not rows:
        raise RenderError(f"{path}: no data rows")
    return rows


def group_rows(rows: list[dict], keys: tuple) -> dict:
    grouped: dict = {}
    for row in rows:
        grouped.setdefault(tuple(row[k] for k in keys), []).append(row)
    return grouped


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.2), dpi=120)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.35)
    return fig, ax


def render_ber(paths: list[Path], title: str):
    fig, ax = _new_axes(title, "Eb/N0 (dB)", "bit error rate")
    for path in paths:
        rows = load_csv(path, BER_REQUIRED, BER_OPTIONAL)
        has_ci = "ci_half_width" in rows[0]
        has_bits = "bits" in rows[0]
        for (scheme, channel), grp in sorted(group_rows(rows, ("scheme", "channel")).items()):
            grp = sorted(grp, key=lambda r: float(r["ebn0_db"]))
            x = [float(r["ebn0_db"]) for r in grp]
            y = [float(r["ber"]) for r in grp]
            is_theory = scheme == "theory" or (
                has_bits and all(int(float(r["bits"])) == 0 for r in grp)
            )
            label = f"{scheme} {channel} [{path.stem}]"
            if is_theory:
                ax.semilogy(x, y, "--", color="0.3", label=label)
                continue
            line = ax.semilogy(x, y, marker="o", label=label)
            if has_ci:
                ci = [float(r["ci_half_width"]) for r in grp]
                lo = [max(v - c, 1e-12) for v, c in zip(y, ci)]
                hi = [v + c for v, c in zip(y, ci)]
                ax.fill_between(x, lo, hi, alpha=0.2, color=line[0].get_color())
    ax.legend(fontsize=7)
    return fig


def render_efficiency(paths: list[Path]):
    fig, ax = _new_axes("Spectral efficiency", "modulation order", "eta (bits/s/Hz)")
    for path in paths:
        rows = load_csv(path, EFF_REQUIRED, EFF_OPTIONAL)
        for (scheme,), grp in sorted(group_rows(rows, ("scheme",)).items()):
            grp = sorted(grp, key=lambda r: int(float(r["mod_order"])))
            x = [int(float(r["mod_order"])) for r in grp]
            y = [float(r["eta_bps_hz"]) for r in grp]
            ax.plot(x, y, marker="s", label=f"{scheme} [{path.stem}]")
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    return fig


def render_ops(paths: list[Path], title: str):
    fig, ax = _new_axes(title, "grid size (n_seq * n_freq)", "operation count")
    for path in paths:
        rows = load_csv(path, OPS_REQUIRED, OPS_OPTIONAL)
        has_iters = "opt_iters" in rows[0]
        for (scheme,), grp in sorted(group_rows(rows, ("scheme",)).items()):
            grp = sorted(grp, key=lambda r: int(float(r["n_total"])))
            x = [int(float(r["n_total"])) for r in grp]
            y = [int(float(r["butterflies"])) for r in grp]
            line = ax.loglog(x, y, marker="o", label=f"{scheme} butterflies")
            if has_iters:
                iters = [int(float(r["opt_iters"])) for r in grp]
                if any(iters):
                    ax.loglog(
                        x, [max(i, 1) for i in iters], ":",
                        color=line[0].get_color(), label=f"{scheme} optimizer iters",
                    )
    ax.legend(fontsize=8)
    return fig


def render(figure: str, inputs: list[Path], out: Path) -> None:
    if figure == "fig1_ber":
        fig = render_ber(inputs, "BER under AWGN and fading")
    elif figure == "fig5_ablation":
        fig = render_ber(inputs, "BER with and without optimization")
    elif figure == "fig2_eff":
        fig = render_efficiency(inputs)
    elif figure == "fig3_complexity":
        fig = render_ops(inputs, "Computational complexity")
    elif figure == "fig4_latency":
        fig = render_ops(inputs, "Processing cost per round trip")
    else:
        raise RenderError(f"unknown figure {figure!r}")
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")
    fig.tight_layout()
    fig.savefig(stem.with_suffix(".png"), metadata={"Software": "usfm-plots"})
    fig.savefig(stem.with_suffix(".svg"), metadata={"Date": None})
    plt.close(fig)
    print(f"wrote {stem.with_suffix('.png')} and {stem.with_suffix('.svg')}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--figure", required=True, choices=FIGURES)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True, help="input CSV files")
    parser.add_argument("--out", required=True, help="output image path (png + svg written)")
    args = parser.parse_args(argv)
    try:
        render(args.figure, [Path(p) for p in args.inputs], Path(args.out))
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
