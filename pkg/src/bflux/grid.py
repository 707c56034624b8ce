"""Uniform 1D mesh, nodal fields and quadrature norms.

The domain is the interval (0, length) with boundary {0, length}.  All
integrals use the trapezoid rule; gradients of transformed fields use
forward differences of the transformed nodal values, so the discrete
energy bookkeeping in the integrator telescopes exactly against the
ghost-node Laplacian.

The Poincare and trace checkers compare both sides of the respective
inequalities with constants frozen by the calibration protocol (see
``bflux.calibration``); a report records the numbers rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh with ``n`` nodes on (0, length)."""

    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"need at least 3 nodes, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n)


@dataclass(frozen=True)
class Field:
    """Nodal values on a mesh. Treat as immutable."""

    mesh: Mesh1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n,):
            raise ValueError(f"expected {self.mesh.n} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: Mesh1D, level: float) -> "Field":
        return cls(mesh, np.full(mesh.n, float(level)))

    @classmethod
    def from_function(cls, mesh: Mesh1D, fn) -> "Field":
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=float))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    constant_used: float
    satisfied: bool


# Frozen constants for the two functional inequalities on (0, 1), produced
# by bflux.calibration.calibrate_grid_constants (corpus of random
# trigonometric polynomials, tightest ratio, factor-2 margin).
POINCARE_C0 = 0.6367
TRACE_C_DELTA = {0.1: 6.129, 1.0: 4.0, 10.0: 4.0}


def lebesgue_norm(u: Field, sigma: float) -> float:
    """Trapezoid L^sigma norm over the whole interval."""
    if sigma < 1:
        raise ValueError(f"sigma must be >= 1, got {sigma}")
    power = np.trapezoid(np.abs(u.values) ** sigma, dx=u.mesh.h)
    return float(power ** (1.0 / sigma))


def interior_norm(u: Field, sigma: float, fraction: float) -> float:
    """L^sigma norm over the centered subinterval of the given length fraction."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    x = u.mesh.nodes
    half = 0.5 * u.mesh.length
    radius = 0.5 * fraction * u.mesh.length
    inside = (x >= half - radius - 1e-12) & (x <= half + radius + 1e-12)
    power = np.trapezoid(np.abs(u.values[inside]) ** sigma, dx=u.mesh.h)
    return float(power ** (1.0 / sigma))


def grad_power_norm(u: Field, sigma: float) -> float:
    """Squared L^2 norm of the gradient of |u|^(sigma/2), forward differences."""
    if sigma < 1:
        raise ValueError(f"sigma must be >= 1, got {sigma}")
    w = np.abs(u.values) ** (sigma / 2.0)
    h = u.mesh.h
    return float(np.sum(np.diff(w) ** 2) / h)


def trace_norm(u: Field, sigma: float) -> float:
    """Boundary integral of |u|^sigma; in 1D the two endpoint contributions."""
    v = u.values
    return float(np.abs(v[0]) ** sigma + np.abs(v[-1]) ** sigma)


def boundary_mean(u: Field) -> float:
    v = u.values
    return 0.5 * (v[0] + v[-1])


def poincare_check(u: Field, constant: float = POINCARE_C0) -> InequalityReport:
    """L^1 distance to the boundary mean against the L^1 gradient norm."""
    lhs = float(np.trapezoid(np.abs(u.values - boundary_mean(u)), dx=u.mesh.h))
    grad_l1 = float(np.sum(np.abs(np.diff(u.values))))
    rhs = constant * grad_l1
    return InequalityReport(lhs=lhs, rhs=rhs, constant_used=constant,
                            satisfied=lhs <= rhs + 1e-9)


def _trace_constant_for(delta: float) -> float:
    """Frozen constant valid for the requested delta.

    The constant shrinks as delta grows, so the entry calibrated at the
    largest tabulated delta not exceeding the request stays valid.
    """
    usable = [d for d in sorted(TRACE_C_DELTA) if d <= delta + 1e-12]
    if not usable:
        raise ValueError(f"no frozen trace constant for delta={delta}; "
                         f"tabulated deltas start at {min(TRACE_C_DELTA)}")
    return TRACE_C_DELTA[usable[-1]]


def trace_inequality_check(u: Field, sigma: float, delta: float,
                           constant: float | None = None) -> InequalityReport:
    """Boundary values of |u|^sigma against gradient and bulk terms."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    c = _trace_constant_for(delta) if constant is None else constant
    lhs = trace_norm(u, sigma)
    rhs = delta * grad_power_norm(u, sigma) + c * lebesgue_norm(u, sigma) ** sigma
    return InequalityReport(lhs=lhs, rhs=rhs, constant_used=c,
                            satisfied=lhs <= rhs + 1e-9)


def random_trig_field(mesh: Mesh1D, rng: np.random.Generator,
                      max_modes: int = 6, amplitude: float = 2.0) -> Field:
    """Random trigonometric polynomial; the corpus for constant calibration."""
    x = mesh.nodes / mesh.length
    vals = np.full(mesh.n, rng.uniform(-amplitude, amplitude))
    n_modes = int(rng.integers(1, max_modes + 1))
    for _ in range(n_modes):
        k = int(rng.integers(1, 9))
        a = rng.uniform(-amplitude, amplitude)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        vals = vals + a * np.sin(2.0 * np.pi * k * x + phase)
    return Field(mesh, vals)
