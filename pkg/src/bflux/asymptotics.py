"""Equilibria and long-time behaviour.

Stationary states solve Lap(phi) = f(phi) with the same ghost-node flux
boundary condition as the evolution.  The extremal pair is produced the
way the theory says it exists: integrate down from a large constant and
up from its negative, watching that each trajectory is nodewise monotone
in time, then polish the settled state with Newton.  Every stationary
state and every late-time snapshot must live between the two.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .cascade import solve_truncated
from .errors import NoConvergence, NotSettled
from .grid import Field
from .integrator import StepConfig, ghost_laplacian, step


class StabilityTag(enum.Enum):
    FROM_ABOVE = "from_above"
    FROM_BELOW = "from_below"
    NEWTON_FOUND = "newton_found"


@dataclass(frozen=True)
class Equilibrium:
    field: Field
    residual: float
    stability_tag: StabilityTag


@dataclass(frozen=True)
class ExtremalPair:
    phi_min: Equilibrium
    phi_max: Equilibrium
    level: float                   # constant initial level the pair came from


@dataclass(frozen=True)
class AbsorbingReport:
    sup_norms: list                # per initial datum, sup over [epsilon, T]
    uniform_bound: float
    spread: float                  # max/min ratio across the data set


def elliptic_residual(phi: np.ndarray, f, g, h: float) -> np.ndarray:
    lo = g.eval_with_derivative(phi[0])[0] if g is not None else 0.0
    hi = g.eval_with_derivative(phi[-1])[0] if g is not None else 0.0
    fv = f.eval_with_derivative(phi)[0] if f is not None else 0.0
    return ghost_laplacian(phi, lo, hi, h) - fv


def solve_equilibrium(guess: Field, f, g, *, tol: float = 1e-10,
                      max_iter: int = 80,
                      tag: StabilityTag = StabilityTag.NEWTON_FOUND) -> Equilibrium:
    """Damped Newton on the stationary system from the given guess.

    The convergence tolerance scales with the guess amplitude and never
    drops below the evaluation roundoff of the second difference, which
    divides by h^2; an absolute cutoff under that floor would spin
    forever.
    """
    mesh = guess.mesh
    h = mesh.h
    n = mesh.n
    phi = guess.values.copy()
    amplitude = 1.0 + float(np.max(np.abs(phi)))
    tol = max(tol, 16.0 * np.finfo(float).eps / h**2) * amplitude
    ab = np.zeros((3, n))

    res = elliptic_residual(phi, f, g, h)
    res_norm = float(np.max(np.abs(res)))
    for _ in range(max_iter):
        if res_norm <= tol:
            return Equilibrium(Field(mesh, phi), res_norm, tag)
        fp = (np.broadcast_to(f.eval_with_derivative(phi)[1], phi.shape)
              if f is not None else np.zeros_like(phi))
        gp_lo = g.eval_with_derivative(phi[0])[1] if g is not None else 0.0
        gp_hi = g.eval_with_derivative(phi[-1])[1] if g is not None else 0.0
        ab[1, :] = -2.0 / h**2 - fp
        ab[1, 0] += (2.0 / h) * gp_lo
        ab[1, -1] += (2.0 / h) * gp_hi
        ab[0, 1:] = 1.0 / h**2
        ab[0, 1] = 2.0 / h**2
        ab[2, :-1] = 1.0 / h**2
        ab[2, -2] = 2.0 / h**2
        try:
            delta = solve_banded((1, 1), ab, -res)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular stationary Jacobian; "
                                "guess outside any basin")
        scale = 1.0
        for _ in range(30):
            trial = phi + scale * delta
            trial_res = elliptic_residual(trial, f, g, h)
            trial_norm = float(np.max(np.abs(trial_res)))
            if np.isfinite(trial_norm) and trial_norm < res_norm:
                phi, res, res_norm = trial, trial_res, trial_norm
                break
            scale *= 0.5
        else:
            raise NoConvergence(f"stationary Newton stalled at residual "
                                f"{res_norm:.3g}")
    if res_norm <= tol:
        return Equilibrium(Field(mesh, phi), res_norm, tag)
    raise NoConvergence(f"no convergence after {max_iter} iterations "
                        f"(residual {res_norm:.3g})")


def _settle_from(level: float, sign: int, T_max: float, tol: float, f, g,
                 cfg: StepConfig, mesh) -> tuple[Field, bool]:
    """Integrate from a constant level until successive checks stop moving.

    Returns the settled field and whether the run was nodewise monotone
    (nonincreasing from above, nondecreasing from below) at every check.
    """
    check_every = 10
    delta_t = check_every * cfg.dt
    u = Field.constant(mesh, sign * level)
    prev = u.values.copy()
    monotone = True
    t = 0.0
    while t < T_max:
        for _ in range(check_every):
            u = step(u, f, g, cfg, t)
            t += cfg.dt
        drift = sign * (u.values - prev)
        if np.max(drift) > 1e-9:
            monotone = False
        if float(np.max(np.abs(u.values - prev))) < tol * delta_t:
            return u, monotone
        prev = u.values.copy()
    raise NotSettled(f"no settling within T_max={T_max} from level "
                     f"{sign * level}")


def extremal_equilibria(level: float, T_max: float, tol: float, f, g,
                        cfg: StepConfig, mesh, *,
                        max_raises: int = 6) -> ExtremalPair:
    """Extremal stationary states by ordered integration from +/- level.

    The level doubles (up to ``max_raises`` times) until both runs are
    monotone in time, which certifies the constant really does start above
    (below) everything relevant.  Settled states are Newton-polished.
    """
    if not level > 0:
        raise ValueError(f"level must be positive, got {level}")
    m = level
    for _ in range(max_raises + 1):
        try:
            top, mono_top = _settle_from(m, +1, T_max, tol, f, g, cfg, mesh)
            bot, mono_bot = _settle_from(m, -1, T_max, tol, f, g, cfg, mesh)
        except NotSettled:
            raise
        if mono_top and mono_bot:
            phi_max = solve_equilibrium(top, f, g, tag=StabilityTag.FROM_ABOVE)
            phi_min = solve_equilibrium(bot, f, g, tag=StabilityTag.FROM_BELOW)
            if np.min(phi_max.field.values - phi_min.field.values) < -1e-9:
                raise NoConvergence("extremal pair came out unordered")
            return ExtremalPair(phi_min=phi_min, phi_max=phi_max, level=m)
        m *= 2.0
    raise NotSettled(f"runs stayed non-monotone up to level {m}")


def equilibria_order_check(found, pair: ExtremalPair,
                           tol: float = 1e-9) -> bool:
    """Every stationary state must sit inside the extremal bracket."""
    lo = pair.phi_min.field.values
    hi = pair.phi_max.field.values
    for eq in found:
        v = eq.field.values
        if np.min(v - lo) < -tol or np.min(hi - v) < -tol:
            return False
    return True


def absorbing_probe(data_set, epsilon: float, T: float, f, g,
                    cfg: StepConfig, clamp: float, *,
                    save_stride: int = 5) -> AbsorbingReport:
    """Late-window sup norms across initial data of very different size.

    Each datum is run through the clamped solver at the finest clamp of
    the schedule; a non-completed status here is a bug in a dissipative
    configuration, so it raises.  The spread quantifies how little the
    window sup depends on the data.
    """
    if not data_set:
        raise ValueError("data_set must be nonempty")
    if not 0 < epsilon < T:
        raise ValueError(f"need 0 < epsilon < T, got {epsilon}, {T}")
    sups = []
    for u0 in data_set:
        traj = solve_truncated(u0, f, g, clamp, T, cfg,
                               save_stride=save_stride, record_energy=False)
        if not traj.status.is_completed:
            raise RuntimeError(
                f"probe from sup={u0.sup_norm():.3g} ended "
                f"{traj.status.kind}: not expected in a dissipative setup")
        mask = traj.times >= epsilon - 1e-12
        sups.append(float(np.max(traj.sup_series[mask])))
    positive = [s for s in sups if s > 0]
    spread = (max(positive) / min(positive)) if positive else 1.0
    return AbsorbingReport(sup_norms=sups, uniform_bound=max(sups),
                           spread=spread)
