"""Figure rendering for sweep outputs.

Each CLI mode maps to one figure; rendering consumes the same row dicts that
go to the delimited output, so a saved CSV and its PNG always agree.
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

RC_PARAMS = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.4,
    "lines.linewidth": 1.4,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
}


def _series(rows, y_key):
    """Group (rho, y) pairs by the (eps, k) curve they belong to."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r["eps"], r["k"])].append((r["rho"], r[y_key]))
    return {key: sorted(pts) for key, pts in groups.items()}


def _curve_label(eps, k):
    return f"eps={eps:g}, K={k}"


def _plot_families(ax, rows, analytic_key, sim_key=None, err_key=None):
    for (eps, k), pts in sorted(_series(rows, analytic_key).items()):
        xs, ys = zip(*pts)
        (line,) = ax.plot(xs, ys, label=_curve_label(eps, k))
        if sim_key is not None:
            spts = sorted(
                (r["rho"], r[sim_key], r.get(err_key, 0.0))
                for r in rows
                if (r["eps"], r["k"]) == (eps, k)
            )
            sx, sy, se = zip(*spts)
            ax.errorbar(sx, sy, yerr=[3 * e for e in se], fmt="o", ms=3,
                        color=line.get_color(), capsize=2, linestyle="none")


def render(mode: str, rows: list[dict], out_path: str) -> None:
    """Write the figure for one sweep; silently skips empty row sets."""
    if not rows:
        return
    with plt.rc_context(RC_PARAMS):
        fig, ax = plt.subplots()
        if mode == "analytic-sweep":
            _plot_families(ax, rows, "throughput_uplink")
            ax.set_ylabel("collected packets per slot")
        elif mode == "simulate":
            _plot_families(ax, rows, "throughput_analytic", "throughput_sim", "throughput_sim_stderr")
            ax.set_ylabel("collected packets per slot")
        elif mode == "plr":
            _plot_families(ax, rows, "plr_analytic", "plr_sim", "plr_sim_stderr")
            ax.set_yscale("log")
            ax.set_ylabel("packet loss probability")
        elif mode == "sic":
            _plot_families(ax, rows, "sic_analytic", "sic_sim", "sic_sim_stderr")
            ax.set_ylabel("cancellation gain (packets per slot)")
        elif mode == "downlink-e2e":
            _plot_families(ax, rows, "success_rate")
            ax.set_ylim(-0.02, 1.02)
            ax.set_ylabel("decode success rate")
        elif mode == "oracle-check":
            _plot_families(ax, rows, "abs_err")
            ax.set_yscale("log")
            ax.set_ylabel("|closed form - enumeration|")
        else:
            plt.close(fig)
            raise ValueError(f"no figure defined for mode {mode!r}")
        ax.set_xlabel("offered load (packets per slot)")
        ax.legend(loc="best")
        fig.savefig(out_path)
        plt.close(fig)
