"""Truncation cascade: solve with clamped flux, bound, and pass to the limit.

For rough initial data the full flux problem is outside the classical
well-posedness range, so the solver never attacks it head on.  Instead it
solves a ladder of problems whose boundary flux is slope-clamped, each of
which is globally solvable, checks that every clamped solution is
dominated by an explicit linear Robin flow, and certifies that the ladder
contracts: successive clamp levels differ less and less on any window
bounded away from the initial time.  The finest clamp level stands in for
the limit object.

The quantitative checks live here too: the per-step dissipation residual,
the instantaneous-smoothing bound with its t^(-1/(p-1)) tail, time-
integrated boundary (trace) bounds, separation growth of nearby initial
data, and continuity down to t=0 in a weaker interior norm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientSamples, ScheduleNotCauchy
from .grid import Field, interior_norm
from .integrator import (RobinLinearProblem, StepConfig, Trajectory,
                         integrate, solve_robin)
from .nonlinearity import PowerNonlinearity, truncate


@dataclass(frozen=True)
class EnergyConstants:
    """Frozen constants of the dissipation estimates for one sigma.

    ``coercivity`` multiplies the |u|^(sigma+p-1) mass in the per-step
    inequality and is shared across all sigmas of one problem;
    ``source_bound`` is the sigma-dependent right-hand side.  ``ode_source``
    and ``ode_decay`` drive the scalar comparison
    y' + ode_decay * y^((sigma+p-1)/sigma) <= ode_source for
    y = (L^sigma norm)^sigma, whose explicit majorant gives the smoothing
    bound checked by :func:`smoothing_bound_check`.
    """

    sigma: float
    coercivity: float
    source_bound: float
    ode_source: float
    ode_decay: float

    def __post_init__(self):
        for name in ("coercivity", "source_bound", "ode_source", "ode_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class CascadeResult:
    k_schedule: list
    trajectories: list
    cauchy_gaps: dict              # sigma -> gaps between consecutive clamps
    monotone: bool                 # nodewise nondecreasing in the clamp
    limit: Trajectory


@dataclass(frozen=True)
class SmoothingReport:
    sigma: float
    times: np.ndarray
    residuals: np.ndarray          # norm(t) - bound(t), t > 0
    max_residual: float
    data_bound_residual: float | None   # sup-style bound at the data exponent


def smoothing_bound(t, consts: EnergyConstants, reaction_exponent: float):
    """Equilibrium level plus the t^(-1/(p-1)) transient tail."""
    p = reaction_exponent
    s = consts.sigma
    level = (consts.ode_source / consts.ode_decay) ** (1.0 / (s + p - 1.0))
    tail = (s / (consts.ode_decay * (p - 1.0))) ** (1.0 / (p - 1.0))
    return level + tail * np.asarray(t, dtype=float) ** (-1.0 / (p - 1.0))


def solve_truncated(u0: Field, f: PowerNonlinearity, g: PowerNonlinearity,
                    clamp: float, T: float, cfg: StepConfig, *,
                    sigma_list=(), save_times=None, save_stride: int = 1,
                    record_energy: bool = True) -> Trajectory:
    """Integrate the problem with the flux slope-clamped at ``clamp``."""
    return integrate(u0, T, f, truncate(g, clamp), cfg,
                     sigma_list=sigma_list, save_times=save_times,
                     save_stride=save_stride, record_energy=record_energy)


def domination_check(u0: Field, f: PowerNonlinearity, g: PowerNonlinearity,
                     clamp: float, T: float, cfg: StepConfig, *,
                     save_stride: int = 1) -> float:
    """Worst excess of |clamped solution| over the linear Robin majorant.

    The majorant solves U_t - Lap U = floor*U + |f(0)| with flux
    dU/dn = clamp*U + |g(0)| from |u0|; order preservation of the implicit
    scheme keeps it above the clamped solution at every node and time, so
    anything beyond discretisation noise signals a broken scheme.
    """
    traj = solve_truncated(u0, f, g, clamp, T, cfg, save_stride=save_stride,
                           record_energy=False)
    if not traj.status.is_completed:
        raise RuntimeError(f"clamped run ended {traj.status.kind}; "
                           "domination undefined")
    prob = RobinLinearProblem(
        interior_rate=f.growth_floor,
        interior_source=abs(f.value(0.0)),
        boundary_rate=clamp,
        boundary_source=abs(g.value(0.0)),
        u0=Field(u0.mesh, np.abs(u0.values)),
    )
    # the majorant grows like exp(clamp^2 t); it is a bound, never a
    # blow-up candidate, so it runs without a sup-norm cap
    robin_cfg = replace(cfg, blowup_threshold=np.inf)
    robin = solve_robin(prob, T, robin_cfg, save_stride=save_stride)
    n_common = min(len(traj.times), len(robin.times))
    if not np.allclose(traj.times[:n_common], robin.times[:n_common]):
        raise RuntimeError("clamped and Robin runs recorded different times")
    excess = np.abs(traj.snapshots[:n_common]) - robin.snapshots[:n_common]
    return float(np.max(excess))


def k_limit(u0: Field, f: PowerNonlinearity, g: PowerNonlinearity,
            k_schedule, epsilon: float, T: float, sigma_list, cfg: StepConfig,
            *, extra_save_times=(), window_samples: int = 33,
            contraction_factor: float = 1.0) -> CascadeResult:
    """Solve along the clamp schedule and measure inter-level gaps.

    Gaps are sup over saved times in [epsilon, T] of the L^sigma distance
    between consecutive clamp levels, computed on one shared save grid.
    They must shrink by ``contraction_factor`` at every rung, else
    ``ScheduleNotCauchy`` (typically the window starts too early or the
    mesh is too coarse for the data).
    """
    schedule = [float(k) for k in k_schedule]
    if len(schedule) < 3:
        raise ValueError("clamp schedule needs at least 3 entries")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("clamp schedule must be strictly increasing")
    if not 0 < epsilon < T:
        raise ValueError(f"need 0 < epsilon < T, got {epsilon}, {T}")

    window = np.linspace(epsilon, T, window_samples)
    save = sorted(set(float(t) for t in window) | set(float(t) for t in extra_save_times))
    trajectories = [
        solve_truncated(u0, f, g, clamp, T, cfg, sigma_list=sigma_list,
                        save_times=save, record_energy=False)
        for clamp in schedule
    ]
    for clamp, traj in zip(schedule, trajectories):
        if not traj.status.is_completed:
            raise RuntimeError(f"clamp {clamp} run ended {traj.status.kind}")

    times = trajectories[0].times
    in_window = (times >= epsilon - 1e-12) & (times <= T + 1e-12)
    h = u0.mesh.h
    gaps = {float(s): [] for s in sigma_list}
    monotone = True
    for lo, hi in zip(trajectories, trajectories[1:]):
        diff = hi.snapshots - lo.snapshots
        if np.min(diff) < -1e-9:
            monotone = False
        for s in gaps:
            dist = (np.trapezoid(np.abs(diff[in_window]) ** s, dx=h, axis=1)
                    ** (1.0 / s))
            gaps[s].append(float(np.max(dist)))

    for s, seq in gaps.items():
        for wide, narrow in zip(seq, seq[1:]):
            if narrow > wide / contraction_factor + 1e-12:
                raise ScheduleNotCauchy(
                    f"sigma={s}: gaps {seq} fail to contract by "
                    f"{contraction_factor}x")

    return CascadeResult(k_schedule=schedule, trajectories=trajectories,
                         cauchy_gaps={s: np.asarray(v) for s, v in gaps.items()},
                         monotone=monotone, limit=trajectories[-1])


def smoothing_bound_check(traj: Trajectory, consts: EnergyConstants,
                          reaction_exponent: float, *,
                          data_norm_cap: float | None = None) -> SmoothingReport:
    """Residuals of the L^sigma smoothing bound along a trajectory.

    ``residuals[t] = norm(t) - bound(t)`` for every saved t > 0; all must
    be nonpositive for the bound to hold.  When ``data_norm_cap`` is given
    (the norm of the initial data at the data exponent), the sup-style
    bound max(cap, equilibrium level) is also checked at every t >= 0.
    """
    sigma = consts.sigma
    if sigma not in traj.norms:
        raise KeyError(f"trajectory did not record sigma={sigma}")
    times = traj.times
    norms = traj.norms[sigma]
    positive = times > 0
    res = norms[positive] - smoothing_bound(times[positive], consts,
                                            reaction_exponent)
    data_res = None
    if data_norm_cap is not None:
        p = reaction_exponent
        level = (consts.ode_source / consts.ode_decay) ** (
            1.0 / (sigma + p - 1.0))
        data_res = float(np.max(norms - max(data_norm_cap, level)))
    return SmoothingReport(sigma=sigma, times=times[positive],
                           residuals=res, max_residual=float(np.max(res)),
                           data_bound_residual=data_res)


def decay_exponent_fit(traj: Trajectory, sigma: float, t_window) -> float:
    """Log-log slope of the L^sigma norm over the window (least squares)."""
    t_lo, t_hi = float(t_window[0]), float(t_window[1])
    if sigma not in traj.norms:
        raise KeyError(f"trajectory did not record sigma={sigma}")
    times = traj.times
    mask = (times >= t_lo) & (times <= t_hi) & (times > 0)
    if int(np.sum(mask)) < 8:
        raise InsufficientSamples(
            f"only {int(np.sum(mask))} samples in [{t_lo}, {t_hi}]; need 8")
    norms = traj.norms[sigma][mask]
    if np.any(norms <= 0):
        raise InsufficientSamples("nonpositive norms in fit window")
    slope = np.polyfit(np.log(times[mask]), np.log(norms), 1)[0]
    return float(slope)


def energy_residual_monitor(traj: Trajectory,
                            consts: EnergyConstants) -> float:
    """Worst per-step residual of the dissipation inequality.

    residual_k = (1/sigma) dy/dt + (2(sigma-1)/sigma^2) * grad_pow
                 + coercivity * reaction_pow - source_bound
    using the per-step terms recorded by the integrator.
    """
    sigma = consts.sigma
    if sigma not in traj.energy:
        raise KeyError(f"trajectory did not record energy terms for "
                       f"sigma={sigma}")
    tr = traj.energy[sigma]
    c_grad = 2.0 * (sigma - 1.0) / sigma**2
    res = (np.asarray(tr.d_norm_pow) + c_grad * np.asarray(tr.grad_pow)
           + consts.coercivity * np.asarray(tr.reaction_pow)
           - consts.source_bound)
    return float(np.max(res))


@dataclass(frozen=True)
class TraceBoundReport:
    lhs: float
    rhs: float
    constant_used: float
    satisfied: bool


def trace_bound_check(traj: Trajectory, sigma: float, epsilon: float,
                      T: float, constant: float) -> TraceBoundReport:
    """Time-integrated boundary mass against constant*T plus the start norm."""
    if not 0 < epsilon < T:
        raise ValueError(f"need 0 < epsilon < T, got {epsilon}, {T}")
    times = traj.times
    mask = (times >= epsilon - 1e-12) & (times <= T + 1e-12)
    if int(np.sum(mask)) < 2:
        raise ValueError("too few saved times inside [epsilon, T]")
    tt = times[mask]
    boundary = (np.abs(traj.snapshots[mask, 0]) ** sigma
                + np.abs(traj.snapshots[mask, -1]) ** sigma)
    lhs = float(np.trapezoid(boundary, tt))
    start_idx = int(np.argmin(np.abs(times - epsilon)))
    h = traj.mesh.h
    start_pow = float(np.trapezoid(
        np.abs(traj.snapshots[start_idx]) ** sigma, dx=h))
    rhs = constant * T + start_pow
    return TraceBoundReport(lhs=lhs, rhs=rhs, constant_used=constant,
                            satisfied=lhs <= rhs + 1e-9)


def separation_series(traj_a: Trajectory, traj_b: Trajectory,
                      exponent: float):
    """(times, ||a-b||^exponent in L^exponent) on the shared save grid."""
    n = min(len(traj_a.times), len(traj_b.times))
    if not np.allclose(traj_a.times[:n], traj_b.times[:n]):
        raise ValueError("trajectories recorded different time grids")
    h = traj_a.mesh.h
    diff = np.abs(traj_a.snapshots[:n] - traj_b.snapshots[:n]) ** exponent
    return traj_a.times[:n], np.trapezoid(diff, dx=h, axis=1)


def initial_continuity_check(result: CascadeResult, u0: Field, alpha: float,
                             interior_fraction: float, check_times):
    """Interior L^alpha distance of the limit run to its initial data.

    Returns (times, distances) for the requested decreasing times; the
    limit trajectory must have saved snapshots at each of them.
    """
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    traj = result.limit
    times = np.asarray(sorted(float(t) for t in check_times), dtype=float)
    dists = np.empty_like(times)
    for i, t in enumerate(times):
        snap = traj.value_at(t)
        dists[i] = interior_norm(Field(u0.mesh, snap - u0.values), alpha,
                                 interior_fraction)
    return times, dists
