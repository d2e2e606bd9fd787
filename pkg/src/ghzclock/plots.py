"""Figure rendering for sweep, bounds, and clock reports.

Figures are written next to the delimited output files; all rendering uses
the Agg backend so the command line works headless.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sensitivity import heralded_asymptote

PROTOCOL_STYLE = {
    "css": dict(color="tab:gray", marker="o", label="css"),
    "sss": dict(color="tab:green", marker="s", label="squeezed"),
    "parity_ghz": dict(color="tab:orange", marker="^", label="parity ghz"),
    "linear_ghz": dict(color="tab:red", marker="v", label="linear ghz"),
    "heralded_ghz": dict(color="tab:blue", marker="D", label="heralded ghz"),
}


def sweep_figure(rows, path):
    """Ratio-to-uncorrelated-limit versus ensemble size, one line per protocol."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    kinds = sorted({r.protocol for r in rows}, key=lambda k: list(PROTOCOL_STYLE).index(k))
    for kind in kinds:
        pts = sorted((r.n_atoms, r.delta_omega_ratio) for r in rows if r.protocol == kind and r.converged)
        if not pts:
            continue
        ns, ratios = zip(*pts)
        ax.plot(ns, ratios, ms=4, lw=1.2, **PROTOCOL_STYLE[kind])
    _, plateau = heralded_asymptote()
    ax.axhline(1.0, color="k", lw=0.8, ls=":")
    ax.axhline(plateau, color="tab:blue", lw=0.8, ls="--", alpha=0.6)
    ax.axhline(math.exp(-0.5), color="k", lw=0.8, ls="--", alpha=0.6)
    ax.set_xlabel("atom number N")
    ax.set_ylabel(r"$\Delta\omega_{\min}/\Delta\omega_{\mathrm{SQL}}$")
    ax.set_ylim(0.5, 1.05)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def allan_figure(per_run, prediction, path):
    """Allan deviations of all runs (log-log) with the dead-time-free theory line."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for idx, allan in enumerate(per_run):
        ax.loglog(allan.taus, allan.sigma_y, "o-", ms=2.5, lw=0.8, alpha=0.6,
                  label="runs" if idx == 0 else None)
    if per_run and prediction is not None:
        taus = per_run[0].taus
        ax.loglog(taus, prediction / np.sqrt(taus), "k--", lw=1.2, label="projection-noise theory")
    ax.set_xlabel(r"averaging time $\tau$ (s)")
    ax.set_ylabel(r"$\sigma_y(\tau)$")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bounds_figure(entries, path):
    """Frequency-variance landmarks versus ensemble size."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ns = [n for n, _ in entries]
    for key, style in (("sql", "k:"), ("ghz_qcrb_min", "b-"), ("asymptotic", "g--")):
        ax.loglog(ns, [getattr(b, key) for _, b in entries], style, label=key)
    ax.set_xlabel("atom number N")
    ax.set_ylabel(r"$\Delta\omega^2\,\tau$ (1/s)")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
