"""CSV emission and figure rendering for preset runs.

CSV files are the primary output and are byte-deterministic for a fixed
config and constants file: floats are written with ``repr`` (shortest
round-trip form) and row order is fixed by the pipeline.  Figures are
rendered alongside them as PNG for quick inspection; they carry no data
that is not already in a CSV.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .cascade import smoothing_bound
from .integrator import Trajectory

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.dpi": 140,
}


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_norms_csv(path, traj: Trajectory) -> None:
    rows = []
    for sigma in sorted(traj.norms):
        for t, v in zip(traj.times, traj.norms[sigma]):
            rows.append((t, sigma, v))
    write_csv(path, ["t", "sigma", "norm"], rows)


def write_energy_csv(path, traj: Trajectory, constants: dict) -> None:
    """Per-step dissipation residual against its frozen source bound."""
    rows = []
    for sigma in sorted(traj.energy):
        if sigma not in constants:
            continue
        c = constants[sigma]
        tr = traj.energy[sigma]
        c_grad = 2.0 * (sigma - 1.0) / sigma**2
        for t, d, gpw, rpw in zip(tr.times, tr.d_norm_pow, tr.grad_pow,
                                  tr.reaction_pow):
            residual = d + c_grad * gpw + c.coercivity * rpw - c.source_bound
            rows.append((t, sigma, residual, c.source_bound))
    write_csv(path, ["t", "sigma", "residual", "bound_B"], rows)


def write_snapshots_csv(path, traj: Trajectory) -> None:
    header = [f"x_{i}" for i in range(traj.mesh.n)]
    write_csv(path, header, [tuple(row) for row in traj.snapshots])


def write_cascade_csv(path, result) -> None:
    rows = []
    ks = result.k_schedule
    for sigma in sorted(result.cauchy_gaps):
        for (lo, hi), gap in zip(zip(ks, ks[1:]), result.cauchy_gaps[sigma]):
            rows.append((lo, hi, sigma, gap))
    write_csv(path, ["K_low", "K_high", "sigma", "gap"], rows)


def write_equilibria_csv(path, mesh, pair, found) -> None:
    header = ["x", "phi_min", "phi_max"] + [f"eq_{i}" for i in range(len(found))]
    rows = []
    for i, x in enumerate(mesh.nodes):
        row = [x, pair.phi_min.field.values[i], pair.phi_max.field.values[i]]
        row.extend(eq.field.values[i] for eq in found)
        rows.append(tuple(row))
    write_csv(path, header, rows)


# ----------------------------------------------------------------------
# figures

def _new_axes():
    plt.rcParams.update(_STYLE)
    fig, ax = plt.subplots()
    return fig, ax


def save_figure(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_norm_decay(path, trajectories, constants, reaction_exponent) -> None:
    """Log-log norm histories with their frozen smoothing bounds."""
    fig, ax = _new_axes()
    colors = plt.cm.viridis(np.linspace(0.0, 0.85, len(constants)))
    for color, sigma in zip(colors, sorted(constants)):
        for k, traj in enumerate(trajectories):
            sel = traj.times > 0
            ax.loglog(traj.times[sel], traj.norms[sigma][sel], color=color,
                      alpha=0.6, label=f"sigma={sigma:g}" if k == 0 else None)
        tgrid = np.geomspace(max(1e-4, trajectories[0].times[1]),
                             trajectories[0].times[-1], 100)
        ax.loglog(tgrid, smoothing_bound(tgrid, constants[sigma],
                                         reaction_exponent),
                  "--", color=color, alpha=0.9)
    ax.set_xlabel("t")
    ax.set_ylabel("Lebesgue norm")
    ax.set_title("norm histories (solid) vs frozen bounds (dashed)")
    ax.legend(loc="best", fontsize=8)
    save_figure(fig, path)


def render_energy_residuals(path, trajectories, constants) -> None:
    fig, ax = _new_axes()
    colors = plt.cm.viridis(np.linspace(0.0, 0.85, len(constants)))
    for color, sigma in zip(colors, sorted(constants)):
        c = constants[sigma]
        c_grad = 2.0 * (sigma - 1.0) / sigma**2
        for k, traj in enumerate(trajectories):
            tr = traj.energy[sigma]
            res = (np.asarray(tr.d_norm_pow) + c_grad * np.asarray(tr.grad_pow)
                   + c.coercivity * np.asarray(tr.reaction_pow)
                   - c.source_bound)
            ax.semilogx(tr.times, res, color=color, alpha=0.5,
                        label=f"sigma={sigma:g}" if k == 0 else None)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("per-step dissipation residual")
    ax.legend(loc="best", fontsize=8)
    save_figure(fig, path)


def render_cascade_gaps(path, results_by_name) -> None:
    fig, ax = _new_axes()
    for name, result in results_by_name.items():
        for sigma, gaps in sorted(result.cauchy_gaps.items()):
            rungs = np.arange(1, len(gaps) + 1)
            ax.semilogy(rungs, np.maximum(gaps, 1e-17), "o-",
                        label=f"{name}, sigma={sigma:g}")
    ax.set_xlabel("schedule rung")
    ax.set_ylabel("sup-in-time Lebesgue gap")
    ax.set_title("contraction along the clamp schedule")
    ax.legend(loc="best", fontsize=8)
    save_figure(fig, path)


def render_continuity(path, times, dists, alpha) -> None:
    fig, ax = _new_axes()
    ax.loglog(times, dists, "o-")
    ax.set_xlabel("t")
    ax.set_ylabel(f"interior L^{alpha:g} distance to data")
    ax.set_title("approach to the initial data")
    save_figure(fig, path)


def render_dichotomy_map(path, entries) -> None:
    """Scatter of (q, p) colored by outcome, with the balance line."""
    fig, ax = _new_axes()
    styles = {"completed": ("tab:blue", "o"), "blown_up": ("tab:red", "x"),
              "newton_failed": ("tab:orange", "s")}
    seen = set()
    for p, q, _, status, *_ in entries:
        color, marker = styles.get(status, ("gray", "d"))
        label = status if status not in seen else None
        seen.add(status)
        ax.scatter(q, p, c=color, marker=marker, label=label)
    qgrid = np.linspace(min(e[1] for e in entries) - 0.1,
                        max(e[1] for e in entries) + 0.1, 50)
    ax.plot(qgrid, 2.0 * qgrid - 1.0, "k--", label="p+1 = 2q")
    ax.set_xlabel("q")
    ax.set_ylabel("p")
    ax.set_title("interior absorption vs boundary forcing")
    ax.legend(loc="best", fontsize=8)
    save_figure(fig, path)


def render_equilibria(path, mesh, pair, found) -> None:
    fig, ax = _new_axes()
    x = mesh.nodes
    ax.plot(x, pair.phi_max.field.values, "tab:red", label="maximal")
    ax.plot(x, pair.phi_min.field.values, "tab:blue", label="minimal")
    for i, eq in enumerate(found):
        ax.plot(x, eq.field.values, "k--", alpha=0.5,
                label="stationary" if i == 0 else None)
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.set_title("extremal bracket and stationary states")
    ax.legend(loc="best", fontsize=8)
    save_figure(fig, path)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
