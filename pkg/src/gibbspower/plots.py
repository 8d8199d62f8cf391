"""Figure rendering for the CLI report paths. Headless-safe: the Agg
backend is forced before pyplot is imported, figures only go to files."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_trace(trace, path, tail_fraction: float = 0.5):
    """Utility over events, tail window shaded, per-link powers below."""
    fig, (ax_u, ax_p) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    k = np.arange(trace.times.size)
    ax_u.plot(k, trace.utility, lw=0.8)
    sl = trace.tail_slice(tail_fraction)
    ax_u.axvspan(sl.start, k[-1], alpha=0.15, color="tab:green",
                 label=f"tail ({tail_fraction:.0%})")
    ax_u.set_ylabel("system utility")
    ax_u.legend(loc="lower right")
    for j in range(trace.n_links):
        ax_p.plot(k, trace.powers[:, j] * 1e3, lw=0.7, label=f"link {j}")
    ax_p.set_xlabel("event")
    ax_p.set_ylabel("power [mW]")
    if trace.n_links <= 10:
        ax_p.legend(ncol=2, fontsize=7)
    return _finish(fig, path)


def plot_sweep(rows, path, x_key="beta", y_key="tail_mean_utility",
               group_key="seed"):
    """One line per group over the sweep variable, plus the group mean."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    groups = sorted({r[group_key] for r in rows})
    xs = sorted({r[x_key] for r in rows})
    for g in groups:
        pts = [(r[x_key], r[y_key]) for r in rows if r[group_key] == g]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], alpha=0.35, lw=0.8)
    means = [np.mean([r[y_key] for r in rows if r[x_key] == x]) for x in xs]
    ax.plot(xs, means, "o-", color="black", label="mean over seeds")
    if x_key == "beta" and len(xs) > 1 and min(xs) > 0:
        ax.set_xscale("log")
    ax.set_xlabel(x_key)
    ax.set_ylabel(y_key)
    ax.legend()
    return _finish(fig, path)


def plot_compare(rows, path):
    """Tail utility and signaling load per variant (bars)."""
    keys = [(r["variant"], r.get("gamma_bar_db")) for r in rows]
    labels = []
    for v, g in dict.fromkeys(keys):
        labels.append(v if g is None else f"{v}@{g:g}dB")
    uniq = list(dict.fromkeys(keys))
    means = []
    bcasts = []
    for key in uniq:
        sel = [r for r in rows if (r["variant"], r.get("gamma_bar_db")) == key]
        means.append(np.mean([r["tail_mean_utility"] for r in sel]))
        bcasts.append(np.mean([r["broadcasts"] for r in sel]))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(uniq))
    ax1.bar(x, means, color="tab:blue")
    ax1.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("tail mean utility")
    ax2.bar(x, bcasts, color="tab:orange")
    ax2.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("control packets broadcast")
    return _finish(fig, path)


def plot_analysis(rows, path):
    """Stationary mean, variance and its bound, and optimal-set mass
    against temperature."""
    betas = [r["beta"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(betas, [r["mean_utility"] for r in rows], "o-", label="mean utility")
    ax1.set_xlabel("beta")
    ax1.set_ylabel("stationary mean utility")
    axr = ax1.twinx()
    axr.plot(betas, [r["prob_optimal"] for r in rows], "s--", color="tab:green",
             label="optimal mass")
    axr.set_ylabel("optimal-set mass")
    ax2.plot(betas, [r["variance"] for r in rows], "o-", label="variance")
    ax2.plot(betas, [r["variance_bound"] for r in rows], "s--", label="bound")
    ax2.set_xlabel("beta")
    ax2.set_yscale("log")
    ax2.legend()
    finite = [b for b in betas if np.isfinite(b) and b > 0]
    if len(finite) > 1:
        ax1.set_xscale("log")
        ax2.set_xscale("log")
    return _finish(fig, path)


def plot_mixing(tvs, lambda2, path):
    """TV distance to stationarity per step, against the spectral envelope."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    k = np.arange(len(tvs))
    ax.semilogy(k, np.maximum(tvs, 1e-300), lw=1.2, label="TV distance")
    if 0 < lambda2 < 1 and tvs[0] > 0:
        ax.semilogy(k, tvs[0] * lambda2 ** k, "--",
                    label=f"envelope |lambda2|^k, |lambda2|={lambda2:.4f}")
    ax.set_xlabel("update events")
    ax.set_ylabel("TV distance")
    ax.set_ylim(bottom=max(np.min(tvs[tvs > 0], initial=1e-16) * 0.1, 1e-17))
    ax.legend()
    return _finish(fig, path)
