"""Figures for the CLI report paths (matplotlib, file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import jacobi as J  # noqa: E402

__all__ = ["region_figure", "urn_figure", "weight_figure"]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def region_figure(scan: "J.RegionScan", p: "J.JacobiParams", path) -> None:
    """Scan result as a shaded region with the closed-form bounds drawn on top."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    sa, sb = scan.s_a, scan.s_b
    extent = [sa[0], sa[-1], sb[0], sb[-1]]
    ax.imshow(scan.stochastic.T, origin="lower", extent=extent, aspect="auto",
              cmap="Reds", alpha=0.45, vmin=0, vmax=1.6)
    xs = np.linspace(sa[0], sa[-1], 400)
    if scan.case == "case1":
        cap = J.case1_s21_bound(p)
        xx = xs[(xs > 0) & (xs <= cap)]
        ax.plot(xx, J.case1_s11_bound(p, xx), "k-", lw=1.2, label="s11 bound (factors)")
        ax.plot(xx, J.case1_s11_psd_bound(p, xx), "g-", lw=1.2, label="s11 bound (M psd)")
        ax.plot(xx, xx, "k--", lw=0.8, label="s11 = s21")
        ax.axvline(cap, color="k", lw=0.8, ls=":")
        ax.set_xlabel("s21")
        ax.set_ylabel("s11")
    elif scan.case == "case2a":
        ax.plot(xs, J.case2a_s12_bound(p, xs), "k-", lw=1.2, label="s12 bound")
        ax.plot(xs, xs, "k--", lw=0.8, label="s12 = s11")
        ax.axvline(1.0, color="k", lw=0.8, ls=":")
        ax.set_xlabel("s11")
        ax.set_ylabel("s12")
    else:
        ax.set_xlabel("first free entry")
        ax.set_ylabel("second free entry")
    ax.set_ylim(sb[0], sb[-1])
    ax.set_title(f"{scan.case}: alpha={p.alpha:g}, beta={p.beta:g}, k={p.k:g}, n <= {scan.n_check}")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8, loc="upper left")
    _save(fig, path)


def urn_figure(rows, path, title="") -> None:
    """Empirical vs reference one-step probabilities, one panel per start state."""
    starts = sorted({r[0] for r in rows})
    ncol = min(3, len(starts))
    nrow = -(-len(starts) // ncol)
    fig, axes = plt.subplots(nrow, ncol, figsize=(3.2 * ncol, 2.4 * nrow), squeeze=False)
    for ax, s in zip(axes.ravel(), starts):
        sub = [r for r in rows if r[0] == s]
        t = np.array([r[1] for r in sub])
        ax.bar(t - 0.18, [r[4] for r in sub], width=0.36, label="empirical")
        ax.bar(t + 0.18, [r[5] for r in sub], width=0.36, label="matrix")
        ax.set_title(f"start {s}", fontsize=9)
        ax.set_xticks(t)
    for ax in axes.ravel()[len(starts):]:
        ax.axis("off")
    axes[0, 0].legend(fontsize=7)
    if title:
        fig.suptitle(title, fontsize=10)
    _save(fig, path)


def weight_figure(xs, values, path, title="") -> None:
    """Entries of a 2x2 (or d x d) weight matrix on a grid."""
    values = np.asarray(values)
    d = values.shape[-1]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for i in range(d):
        for j in range(i, d):
            ax.plot(xs, values[:, i, j], label=f"W[{i},{j}]")
    ax.axhline(0, color="0.6", lw=0.6)
    ax.set_xlabel("x")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)
