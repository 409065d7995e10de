"""SVG figures for the command line.  Presentational only; nothing reads them back."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def trajectory_svg(traj, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for j in range(traj.outputs.shape[1]):
        ax.plot(traj.times, traj.outputs[:, j], label=f"y{j + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("output")
    ax.legend()
    _save(fig, path)


def sweep_svg(trajs: Sequence, report, path: str) -> None:
    """|y(t)| fan chart next to a T_emp vs |x0| scatter."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 3.5))
    for tr in trajs:
        left.semilogy(tr.times, np.maximum(tr.output_norms(), 1e-16), lw=0.6, color="C0", alpha=0.5)
    left.axhline(report.epsilon, color="k", ls="--", lw=0.8)
    left.set_xlabel("t")
    left.set_ylabel("|y(t)|")
    norms = [s.norm for s in report.samples]
    times = [s.T_emp for s in report.samples]
    right.scatter(norms, times, s=8)
    if report.T_analytic is not None:
        right.axhline(report.T_analytic, color="C3", ls="--", lw=0.8, label="analytic bound")
        right.legend()
    right.set_xlabel("|x0|")
    right.set_ylabel("T_emp")
    _save(fig, path)


def signal_svg(sig, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(sig.t, sig.v, lw=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel(sig.name)
    _save(fig, path)


def overlay_svg(curves: Sequence[tuple[str, np.ndarray, np.ndarray]], path: str,
                ylabel: str = "y(t)") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, t, y in curves:
        ax.plot(t, y, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)


def envelope_svg(table, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, t in enumerate(table.times):
        ax.plot(table.radii, table.M[i], marker=".", label=f"t={t:g}")
    ax.plot(table.radii, table.zeta, "k--", label="sup over t")
    ax.set_xlabel("|x0|")
    ax.set_ylabel("output envelope")
    ax.legend()
    _save(fig, path)
