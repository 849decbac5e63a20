"""SVG figure emission for the report paths.

All figures are vector SVG with deterministic ids and no timestamp, and carry a
data-provenance comment naming the files they were rendered from.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

plt.rcParams["svg.hashsalt"] = "mracrl"

from .harness import LoeSweepRow, SummaryRow
from .simcore import Trajectory

# rollout palette: baseline blue, direct policy orange, adaptive green
ROLLOUT_COLORS = ("tab:blue", "tab:orange", "tab:green")


def _save_svg(fig, out_path: str, sources: Sequence[str]) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    with open(out_path) as fh:
        text = fh.read()
    head, sep, tail = text.partition("\n")
    comment = "<!-- data sources: " + ", ".join(str(s) for s in sources) + " -->"
    with open(out_path, "w") as fh:
        fh.write(head + sep + comment + "\n" + tail)


def plot_rollouts(
    trajectories: Sequence[Trajectory],
    labels: Sequence[str],
    out_path: str,
    sources: Optional[Sequence[str]] = None,
) -> None:
    """Overlay rollout paths: top-down ground track and altitude over time."""
    fig, (ax_xy, ax_z) = plt.subplots(1, 2, figsize=(9, 4))
    for i, (traj, label) in enumerate(zip(trajectories, labels)):
        color = ROLLOUT_COLORS[i % len(ROLLOUT_COLORS)]
        ax_xy.plot(traj.states[:, 0], traj.states[:, 1], color=color, label=label)
        ax_z.plot(traj.times, traj.states[:, 2], color=color, label=label)
    ax_xy.set_xlabel("x [m]")
    ax_xy.set_ylabel("y [m]")
    ax_xy.set_title("ground track")
    ax_xy.legend()
    ax_z.set_xlabel("t [s]")
    ax_z.set_ylabel("z [m]")
    ax_z.set_title("altitude")
    fig.tight_layout()
    _save_svg(fig, out_path, sources if sources is not None else labels)


def plot_success_rates(rows: Sequence[SummaryRow], out_path: str, source: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    names = [r.condition for r in rows]
    rates = [r.success_rate for r in rows]
    ax.bar(names, rates, color=["tab:orange", "tab:green", "tab:purple"][: len(rows)])
    ax.set_ylim(0, 1)
    ax.set_ylabel("success rate")
    ax.set_title(f"landing success ({rows[0].uncertainty})" if rows else "landing success")
    fig.tight_layout()
    _save_svg(fig, out_path, [source])


def plot_loe_sweep(rows: Sequence[LoeSweepRow], out_path: str, source: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    loe = [r.loe_fraction for r in rows]
    ax.plot(loe, [r.rl_success_rate for r in rows], "o-", color="tab:orange", label="rl")
    ax.plot(
        loe, [r.mracrl_success_rate for r in rows], "s-", color="tab:green", label="mrac-rl"
    )
    ax.set_xlabel("loss of effectiveness (fraction of thrust lost)")
    ax.set_ylabel("success rate")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, out_path, [source])


def plot_training_log(costs: Sequence[float], out_path: str, source: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(costs) + 1), costs, color="tab:blue")
    ax.set_xlabel("batch")
    ax.set_ylabel("mean episodic cost")
    fig.tight_layout()
    _save_svg(fig, out_path, [source])
