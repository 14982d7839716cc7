"""Report figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.labelsize": 11,
    "axes.titlesize": 12,
    "legend.fontsize": 9,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "lines.linewidth": 1.6,
    "lines.markersize": 5,
    # keep PNG bytes stable between runs
    "svg.hashsalt": "v2vtraj",
}

COLORS = {"nn": "#1f77b4", "kin": "#d62728", "ideal": "#2ca02c", "lossy": "#ff7f0e", "truth": "#7f7f7f"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_p90(report, directory, stem: str = "eval") -> list:
    """p90 error against prediction step, network vs kinematics, one figure per axis."""
    out = []
    steps = np.arange(1, report.steps + 1)
    panels = (("longitudinal", "narx_long", "kin_long", "NARX"), ("lateral", "rnn_lat", "kin_lat", "RNN"))
    with plt.rc_context(STYLE):
        for axis_name, nn, kin, label in panels:
            fig, ax = plt.subplots()
            if report.n_windows:
                ax.plot(steps, report.p90(kin), "s--", color=COLORS["kin"], label="Kinematic")
                ax.plot(steps, report.p90(nn), "o-", color=COLORS["nn"], label=label)
            ax.set_xlabel("prediction step (0.1 s)")
            ax.set_ylabel(f"90th percentile |error| [m]")
            ax.set_title(f"{axis_name.capitalize()} position, n = {report.n_windows} windows")
            ax.set_xticks(steps)
            ax.legend(loc="upper left")
            out.append(_save(fig, Path(directory) / f"{stem}_p90_{axis_name}.png"))
    return out


def plot_loss_curves(history: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for label, h in history.items():
            line, = ax.semilogy(h["train_loss"], label=label)
            ax.semilogy(h["cv_loss"], ls=":", color=line.get_color())
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE (normalized units)")
        ax.set_title("Training (solid) and cross-validation (dotted) loss")
        ax.legend(ncol=2)
        return _save(fig, path)


def plot_robustness(result, directory, stem: str = "robustness") -> list:
    """Lossy/ideal p90 ratios per step, and one scenario's one-step parameter forecasts."""
    directory = Path(directory)
    out = []
    rates = sorted({r["drop_rate"] for r in result.p90_rows})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8), sharey=True)
        for ax, preds in zip(axes, (("narx_long", "kin_long"), ("rnn_lat", "kin_lat"))):
            for p in preds:
                for rate in rates:
                    if rate == 0:
                        continue
                    r = result.ratio(rate, p)
                    ax.plot(np.arange(1, len(r) + 1), r, "o-" if p.startswith(("narx", "rnn")) else "s--",
                            label=f"{p} @ {rate:.0%} drop")
            ax.axhline(2.0, color="k", lw=0.8, ls=":")
            ax.set_xlabel("prediction step")
            ax.legend()
        axes[0].set_ylabel("lossy p90 / ideal p90")
        out.append(_save(fig, directory / f"{stem}_p90_ratio.png"))

        for rate, ex in sorted(result.example.items()):
            if rate == 0:
                continue
            channels = [c for c in ex if c != "anchor"]
            fig, axes = plt.subplots(len(channels), 1, figsize=(7.0, 2.2 * len(channels)), sharex=True)
            for ax, c in zip(np.atleast_1d(axes), channels):
                ax.plot(ex["anchor"], ex[c]["truth"], color=COLORS["truth"], lw=1.0, label="smoothed truth")
                ax.plot(ex["anchor"], ex[c]["ideal"], color=COLORS["ideal"], label="ideal link")
                ax.plot(ex["anchor"], ex[c]["lossy"], ".", color=COLORS["lossy"], label=f"{rate:.0%} drop")
                ax.set_ylabel(f"d {c}")
            np.atleast_1d(axes)[0].legend(ncol=3)
            np.atleast_1d(axes)[-1].set_xlabel("anchor sample")
            out.append(_save(fig, directory / f"{stem}_params_{int(round(rate * 100))}.png"))
    return out
