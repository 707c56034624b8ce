"""Reaction and boundary-flux models.

The canonical model family is

    s  ->  coeff * |s|^(exponent-1) * s  +  linear * s  +  offset

with ``coeff > 0`` and ``exponent > 1``.  An interior reaction f uses one
instance (growth exponent p), the boundary flux g another (growth exponent
q).  The derivative of any member is sandwiched between the pure power
derivative shifted down by ``max(0, -linear)`` and up by ``max(0, linear)``.

Slope-clamped truncations keep the flux identical on a symmetric interval
around zero and continue it linearly, with slope exactly equal to the
clamp, beyond the points where the derivative reaches the clamp.  The
product ``s * g_clamped(s)`` then never exceeds ``s * g(s)`` and grows with
the clamp, which is what the solver's comparison machinery relies on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidClamp


class Balance(enum.Enum):
    DISSIPATIVE = "dissipative"
    CRITICAL = "critical"
    EXPLOSIVE = "explosive"


@dataclass(frozen=True)
class PowerNonlinearity:
    """One member of the canonical family. Immutable; safe to share."""

    coeff: float
    exponent: float
    linear: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.coeff > 0:
            raise ValueError(f"coeff must be positive, got {self.coeff}")
        if not self.exponent > 1:
            raise ValueError(f"exponent must exceed 1, got {self.exponent}")

    @property
    def growth_floor(self) -> float:
        """Constant by which the derivative may dip below the pure power."""
        return max(0.0, -self.linear)

    @property
    def growth_ceil(self) -> float:
        """Constant by which the derivative may exceed the pure power."""
        return max(0.0, self.linear)

    def __call__(self, s):
        return self.eval_with_derivative(s)[0]

    def value(self, s):
        p = self.exponent
        return self.coeff * np.abs(s) ** (p - 1.0) * s + self.linear * s + self.offset

    def derivative(self, s):
        p = self.exponent
        return self.coeff * p * np.abs(s) ** (p - 1.0) + self.linear

    def eval_with_derivative(self, s):
        """Return (value, derivative); accepts scalars or arrays."""
        return self.value(s), self.derivative(s)

    def shifted(self, delta: float) -> "PowerNonlinearity":
        """Same shape, offset moved by ``delta``."""
        return PowerNonlinearity(self.coeff, self.exponent, self.linear,
                                 self.offset + delta)


@dataclass(frozen=True)
class TruncatedNonlinearity:
    """Flux with derivative clamped at ``clamp`` outside [cut_lo, cut_hi].

    Coincides with ``base`` on the cut interval and continues linearly with
    slope exactly ``clamp`` beyond it, so it is C^1 by construction and its
    derivative stays within [-base.growth_floor, clamp] everywhere.
    """

    base: PowerNonlinearity
    clamp: float
    cut_lo: float
    cut_hi: float

    def eval_with_derivative(self, s):
        s = np.asarray(s, dtype=float)
        v, dv = self.base.eval_with_derivative(np.clip(s, self.cut_lo, self.cut_hi))
        above = s > self.cut_hi
        below = s < self.cut_lo
        v = np.where(above, self.base.value(self.cut_hi) + self.clamp * (s - self.cut_hi), v)
        v = np.where(below, self.base.value(self.cut_lo) + self.clamp * (s - self.cut_lo), v)
        dv = np.where(above | below, self.clamp, dv)
        if v.ndim == 0:
            return float(v), float(dv)
        return v, dv

    def __call__(self, s):
        return self.eval_with_derivative(s)[0]

    def value(self, s):
        return self.eval_with_derivative(s)[0]

    def derivative(self, s):
        return self.eval_with_derivative(s)[1]


@dataclass(frozen=True)
class BalanceReport:
    """Outcome of weighing interior absorption against boundary forcing."""

    classification: Balance
    critical_exponent: float
    supercritical_range: tuple[float, float] | None


def truncate(g: PowerNonlinearity, clamp: float) -> TruncatedNonlinearity:
    """Clamp the derivative of ``g`` at ``clamp``.

    The cut points are where the derivative of the canonical family reaches
    the clamp, available in closed form:

        cut_hi = ((clamp - linear) / (exponent * coeff)) ** (1/(exponent-1))

    and ``cut_lo = -cut_hi`` since the derivative is even.  Raises
    ``InvalidClamp`` when ``clamp <= g.linear`` (the derivative never dips
    to the clamp, so no cut point exists).
    """
    if clamp <= g.linear:
        raise InvalidClamp(
            f"clamp {clamp} must exceed the derivative at zero ({g.linear})")
    q = g.exponent
    cut_hi = ((clamp - g.linear) / (q * g.coeff)) ** (1.0 / (q - 1.0))
    return TruncatedNonlinearity(base=g, clamp=clamp, cut_lo=-cut_hi, cut_hi=cut_hi)


def classify_balance(f: PowerNonlinearity, g: PowerNonlinearity,
                     dim: int = 1) -> BalanceReport:
    """Compare p+1 against 2q and report the critical data exponent.

    Interior absorption dominates (dissipative) when p+1 > 2q, boundary
    forcing dominates (explosive) when p+1 < 2q.  The critical exponent is
    max(dim*(p-1)/2, dim*(q-1)); rough data lives in the open interval
    between 1 and it, when that interval is nonempty.
    """
    p, q = f.exponent, g.exponent
    gap = (p + 1.0) - 2.0 * q
    if gap > 0:
        kind = Balance.DISSIPATIVE
    elif gap < 0:
        kind = Balance.EXPLOSIVE
    else:
        kind = Balance.CRITICAL
    r0 = max(dim * (p - 1.0) / 2.0, dim * (q - 1.0))
    rng = (1.0, r0) if r0 > 1.0 else None
    return BalanceReport(classification=kind, critical_exponent=r0,
                         supercritical_range=rng)


def envelope_pair(f: PowerNonlinearity, g: PowerNonlinearity,
                  clamp_schedule=(1.0, 4.0, 16.0, 64.0),
                  span: float = 100.0, samples: int = 4001):
    """Construct the four comparison envelopes by vertical offset shifts.

    Returns ``(f_minus, g_plus, f_plus, g_minus)`` where

    * ``f_minus <= f`` everywhere and ``f_minus(0) <= 0``,
    * ``f_plus  >= f`` everywhere and ``f_plus(0)  >= 0``,
    * ``g_plus(0) >= 0`` and ``g_plus`` dominates every clamped flux on
      ``s >= 0`` (where nonnegative comparison states live),
    * ``g_minus(0) <= 0`` and ``g_minus`` sits below every clamped flux on
      ``s <= 0``.

    Every inequality is re-verified on a dense sample after construction;
    violations raise ``AssertionError`` (they would indicate a broken
    truncation, not bad inputs).
    """
    f_minus = f.shifted(-max(0.0, f.value(0.0)))
    f_plus = f.shifted(max(0.0, -f.value(0.0)))
    g_plus = g.shifted(max(0.0, -g.value(0.0)))
    g_minus = g.shifted(-max(0.0, g.value(0.0)))

    s = np.linspace(-span, span, samples)
    tol = 1e-9
    assert f_minus.value(0.0) <= tol and np.all(f_minus.value(s) <= f.value(s) + tol)
    assert f_plus.value(0.0) >= -tol and np.all(f_plus.value(s) >= f.value(s) - tol)
    assert g_plus.value(0.0) >= -tol and g_minus.value(0.0) <= tol
    pos, neg = s[s >= 0.0], s[s <= 0.0]
    for clamp in clamp_schedule:
        if clamp <= g.linear:
            continue
        gk = truncate(g, clamp)
        assert np.all(g_plus.value(pos) >= gk.value(pos) - tol)
        assert np.all(g_minus.value(neg) <= gk.value(neg) + tol)
    return f_minus, g_plus, f_plus, g_minus
