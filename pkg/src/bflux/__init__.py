"""Reaction-diffusion in 1D with a nonlinear boundary flux.

The solver integrates u_t - Lap(u) + f(u) = 0 with du/dn = g(u) on the
interval boundary, where f absorbs like |s|^(p-1)s and g feeds like
|s|^(q-1)s.  When p+1 > 2q the interior wins and the dynamics is
dissipative; rough initial data is handled through a ladder of problems
with slope-clamped flux, each bounded by an explicit linear comparison
flow.  The package verifies the quantitative side of that picture:
instantaneous smoothing bounds, per-step dissipation inequalities,
the blow-up dichotomy across the (p, q) plane, and extremal stationary
states bracketing the long-time behaviour.
"""

from .asymptotics import (AbsorbingReport, Equilibrium, ExtremalPair,
                          StabilityTag, absorbing_probe,
                          equilibria_order_check, extremal_equilibria,
                          solve_equilibrium)
from .cascade import (CascadeResult, EnergyConstants, decay_exponent_fit,
                      domination_check, energy_residual_monitor,
                      initial_continuity_check, k_limit, smoothing_bound,
                      smoothing_bound_check, solve_truncated,
                      trace_bound_check)
from .grid import (Field, InequalityReport, Mesh1D, grad_power_norm,
                   interior_norm, lebesgue_norm, poincare_check, trace_norm,
                   trace_inequality_check)
from .integrator import (BlowupVerdict, RobinLinearProblem, StepConfig,
                         Trajectory, TrajectoryStatus, detect_blowup,
                         integrate, solve_robin, step)
from .nonlinearity import (Balance, BalanceReport, PowerNonlinearity,
                           TruncatedNonlinearity, classify_balance,
                           envelope_pair, truncate)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
