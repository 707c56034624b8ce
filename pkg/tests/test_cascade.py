import numpy as np
import pytest

from bflux.calibration import (calibrate_separation_rate, calibration_data,
                               singular_spike_field)
from bflux.cascade import (EnergyConstants, decay_exponent_fit,
                           domination_check, energy_residual_monitor,
                           initial_continuity_check, k_limit,
                           separation_series, smoothing_bound,
                           smoothing_bound_check, solve_truncated,
                           trace_bound_check)
from bflux.errors import InsufficientSamples
from bflux.grid import Field, lebesgue_norm, random_trig_field
from bflux.integrator import StepConfig, integrate
from bflux.nonlinearity import PowerNonlinearity

from oracles import power_decay


@pytest.fixture(scope="module")
def stiff_pair():
    """Sextic absorption vs quadratic flux: widest supercritical window."""
    return PowerNonlinearity(1.0, 6.0), PowerNonlinearity(1.0, 2.0)


class TestSolveTruncated:
    def test_zero_is_invariant(self, mesh, cubic_reaction, sqrt_flux,
                               step_cfg):
        traj = solve_truncated(Field.constant(mesh, 0.0), cubic_reaction,
                               sqrt_flux, 8.0, 0.2, step_cfg)
        assert traj.status.is_completed
        assert np.max(np.abs(traj.snapshots)) == 0.0

    def test_nonnegative_data_stays_nonnegative(self, mesh, cubic_reaction,
                                                sqrt_flux, step_cfg, rng):
        u0 = Field(mesh, np.abs(random_trig_field(mesh, rng).values))
        traj = solve_truncated(u0, cubic_reaction, sqrt_flux, 8.0, 0.5,
                               step_cfg, save_stride=20)
        assert np.min(traj.snapshots) >= -1e-9

    def test_late_bound_uniform_across_clamps(self, mesh, cubic_reaction,
                                              sqrt_flux, step_cfg):
        u0 = Field.constant(mesh, 1e3)
        sups = []
        for clamp in (4.0, 8.0, 16.0, 32.0):
            traj = solve_truncated(u0, cubic_reaction, sqrt_flux, clamp, 0.5,
                                   step_cfg, save_stride=20)
            assert traj.status.is_completed
            late = traj.sup_series[traj.times >= 0.1]
            sups.append(float(np.max(late)))
        assert max(sups) <= 2.0 * min(sups)


class TestDomination:
    def test_zero_data_zero_gap(self, mesh, cubic_reaction, sqrt_flux,
                                step_cfg):
        violation = domination_check(Field.constant(mesh, 0.0),
                                     cubic_reaction, sqrt_flux, 4.0, 0.2,
                                     step_cfg)
        assert violation == pytest.approx(0.0, abs=1e-12)

    def test_flat_data(self, mesh, cubic_reaction, sqrt_flux, step_cfg):
        violation = domination_check(Field.constant(mesh, 1.0),
                                     cubic_reaction, sqrt_flux, 4.0, 0.25,
                                     step_cfg, save_stride=10)
        assert violation <= 1e-6

    def test_growing_clamp_never_inverts(self, mesh, cubic_reaction,
                                         sqrt_flux, step_cfg, rng):
        u0 = random_trig_field(mesh, rng)
        for clamp in (2.0, 4.0, 8.0):
            violation = domination_check(u0, cubic_reaction, sqrt_flux,
                                         clamp, 0.25, step_cfg,
                                         save_stride=10)
            assert violation <= 1e-6


class TestClampLadder:
    def test_zero_data_trivial(self, mesh, cubic_reaction, sqrt_flux,
                               step_cfg):
        res = k_limit(Field.constant(mesh, 0.0), cubic_reaction, sqrt_flux,
                      [4.0, 8.0, 16.0], 0.01, 0.1, [2.0], step_cfg)
        assert res.monotone
        assert np.all(res.cauchy_gaps[2.0] == 0.0)

    def test_gaps_contract_when_clamp_active(self, mesh, stiff_pair):
        f, g = stiff_pair
        res = k_limit(Field.constant(mesh, 50.0), f, g,
                      [4.0, 8.0, 16.0, 32.0], 0.01, 0.3, [2.0, 3.0],
                      StepConfig(dt=2e-4))
        for gaps in res.cauchy_gaps.values():
            assert gaps[0] > 0.0
            assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
        assert res.monotone
        assert res.limit.status.is_completed

    def test_spike_data_nonincreasing_gaps(self, mesh, step_cfg):
        # quartic absorption, mild flux: the profile from the spec'd shape
        f = PowerNonlinearity(1.0, 4.0)
        g = PowerNonlinearity(1.0, 1.5)
        spike = singular_spike_field(mesh, 0.4)
        res = k_limit(spike, f, g, [4.0, 8.0, 16.0, 32.0], 0.01, 0.2,
                      [2.0], step_cfg)
        gaps = res.cauchy_gaps[2.0]
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
        assert res.monotone

    def test_negative_data_reversed_ordering(self, mesh, step_cfg, rng):
        # downward source and outward flux at zero: clamping from below
        f = PowerNonlinearity(1.0, 3.0, offset=0.1)     # f(0) > 0
        g = PowerNonlinearity(1.0, 1.5, offset=-0.1)    # g(0) < 0
        u0 = Field(mesh, -np.abs(random_trig_field(mesh, rng).values))
        trajs = [solve_truncated(u0, f, g, clamp, 0.3, step_cfg,
                                 save_stride=20) for clamp in (4.0, 8.0, 16.0)]
        for lo, hi in zip(trajs, trajs[1:]):
            assert np.max(hi.snapshots - lo.snapshots) <= 1e-9

    def test_schedule_validation(self, mesh, cubic_reaction, sqrt_flux,
                                 step_cfg):
        u0 = Field.constant(mesh, 1.0)
        with pytest.raises(ValueError):
            k_limit(u0, cubic_reaction, sqrt_flux, [4.0, 8.0], 0.01, 0.1,
                    [2.0], step_cfg)
        with pytest.raises(ValueError):
            k_limit(u0, cubic_reaction, sqrt_flux, [4.0, 8.0, 16.0], 0.2,
                    0.1, [2.0], step_cfg)


class TestSmoothingBound:
    def test_bound_formula(self):
        consts = EnergyConstants(sigma=2.0, coercivity=1.0, source_bound=1.0,
                                 ode_source=1.0, ode_decay=1.0)
        assert smoothing_bound(1.0, consts, 3.0) == pytest.approx(2.0)

    def test_zero_trajectory_well_inside(self, mesh, cubic_reaction,
                                         sqrt_flux, step_cfg):
        traj = solve_truncated(Field.constant(mesh, 0.0), cubic_reaction,
                               sqrt_flux, 8.0, 0.2, step_cfg,
                               sigma_list=[2.0], save_stride=20)
        consts = EnergyConstants(sigma=2.0, coercivity=0.5, source_bound=1.0,
                                 ode_source=1.0, ode_decay=0.5)
        rep = smoothing_bound_check(traj, consts, 3.0)
        assert rep.max_residual < 0.0


class TestDecayFit:
    @pytest.mark.parametrize("p", [3.0, 4.0])
    def test_flat_large_data_rate(self, mesh, p):
        f = PowerNonlinearity(1.0, p)
        traj = integrate(Field.constant(mesh, 1e6), 1.0, f, None,
                         StepConfig(dt=1e-4), sigma_list=[2.0],
                         save_stride=10)
        slope = decay_exponent_fit(traj, 2.0, (0.05, 1.0))
        target = -1.0 / (p - 1.0)
        assert abs(slope - target) <= 0.15 * abs(target)
        # direct cross-check against the closed-form scalar flow
        t_end = traj.times[-1]
        assert traj.norms[2.0][-1] == pytest.approx(
            power_decay(1e6, 1.0, p, t_end), rel=1e-2)

    def test_stationary_state_flat_rate(self, mesh):
        f = PowerNonlinearity(1.0, 3.0, linear=-1.0)
        traj = integrate(Field.constant(mesh, 1.0), 1.0, f, None,
                         StepConfig(dt=1e-3), sigma_list=[2.0],
                         save_stride=10)
        assert abs(decay_exponent_fit(traj, 2.0, (0.05, 1.0))) <= 1e-6

    def test_too_few_samples(self, mesh, cubic_reaction):
        traj = integrate(Field.constant(mesh, 1.0), 1.0, cubic_reaction,
                         None, StepConfig(dt=1e-1), sigma_list=[2.0])
        with pytest.raises(InsufficientSamples):
            decay_exponent_fit(traj, 2.0, (0.9, 1.0))


class TestEnergyMonitor:
    def test_zero_trajectory(self, mesh, cubic_reaction, sqrt_flux,
                             step_cfg):
        traj = solve_truncated(Field.constant(mesh, 0.0), cubic_reaction,
                               sqrt_flux, 8.0, 0.1, step_cfg,
                               sigma_list=[2.0])
        consts = EnergyConstants(sigma=2.0, coercivity=0.5, source_bound=3.0,
                                 ode_source=1.0, ode_decay=0.5)
        assert energy_residual_monitor(traj, consts) == pytest.approx(-3.0)

    def test_missing_sigma_rejected(self, mesh, cubic_reaction, sqrt_flux,
                                    step_cfg):
        traj = solve_truncated(Field.constant(mesh, 1.0), cubic_reaction,
                               sqrt_flux, 8.0, 0.05, step_cfg,
                               sigma_list=[2.0])
        consts = EnergyConstants(sigma=4.0, coercivity=0.5, source_bound=3.0,
                                 ode_source=1.0, ode_decay=1.0)
        with pytest.raises(KeyError):
            energy_residual_monitor(traj, consts)


class TestTraceBound:
    def test_zero_trajectory(self, mesh, cubic_reaction, sqrt_flux,
                             step_cfg):
        traj = solve_truncated(Field.constant(mesh, 0.0), cubic_reaction,
                               sqrt_flux, 8.0, 0.2, step_cfg, save_stride=10)
        rep = trace_bound_check(traj, 2.0, 0.05, 0.2, constant=1.0)
        assert rep.lhs == 0.0 and rep.satisfied

    def test_steady_state_linear_growth(self, mesh):
        # zero-flux stationary level: boundary mass integrates exactly
        f = PowerNonlinearity(1.0, 3.0, linear=-1.0)
        traj = integrate(Field.constant(mesh, 1.0), 1.0, f, None,
                         StepConfig(dt=1e-3), save_stride=10)
        sigma = 2.0
        rep = trace_bound_check(traj, sigma, 0.1, 1.0, constant=2.0)
        # lhs = 2 * (T - eps), rhs = 2 T + ||u(eps)||^2
        assert rep.lhs == pytest.approx(2.0 * 0.9, rel=1e-9)
        assert rep.satisfied


class TestSeparation:
    def test_identical_data_never_separate(self, mesh, cubic_reaction,
                                           sqrt_flux, step_cfg, rng):
        u0 = random_trig_field(mesh, rng)
        ta = solve_truncated(u0, cubic_reaction, sqrt_flux, 8.0, 0.2,
                             step_cfg, save_stride=10)
        tb = solve_truncated(u0, cubic_reaction, sqrt_flux, 8.0, 0.2,
                             step_cfg, save_stride=10)
        _, sep = separation_series(ta, tb, 2.0)
        assert np.max(sep) == 0.0

    def test_calibrated_rate_bounds_fresh_pairs(self, mesh, cubic_reaction,
                                                sqrt_flux, step_cfg):
        rate = calibrate_separation_rate(cubic_reaction, sqrt_flux, 8.0,
                                         mesh, 2.0, 0.3, step_cfg,
                                         seed=11, n_pairs=5)
        rng = np.random.default_rng(12)
        for _ in range(5):
            a, b = (random_trig_field(mesh, rng) for _ in range(2))
            ta = solve_truncated(a, cubic_reaction, sqrt_flux, 8.0, 0.3,
                                 step_cfg, save_stride=10)
            tb = solve_truncated(b, cubic_reaction, sqrt_flux, 8.0, 0.3,
                                 step_cfg, save_stride=10)
            times, sep = separation_series(ta, tb, 2.0)
            assert np.all(sep <= np.exp(rate * times) * sep[0] + 1e-9)


class TestInitialContinuity:
    def test_smooth_data_first_order(self, mesh, stiff_pair):
        f, g = stiff_pair
        u0 = Field.from_function(mesh, lambda x: np.sin(np.pi * x))
        times_j = [2.0 ** -j for j in range(3, 11)]
        res = k_limit(u0, f, g, [4.0, 8.0, 16.0], 0.005, 0.2, [2.0],
                      StepConfig(dt=2e-4), extra_save_times=times_j)
        times, dists = initial_continuity_check(res, u0, 1.5, 0.5, times_j)
        assert np.all(np.diff(dists) > 0)
        small = times <= 0.02
        slope = np.polyfit(np.log(times[small]), np.log(dists[small]), 1)[0]
        assert 0.7 <= slope <= 1.3

    def test_equilibrium_data_never_moves(self, mesh, cubic_reaction,
                                          sqrt_flux, step_cfg):
        times_j = [2.0 ** -j for j in range(3, 8)]
        res = k_limit(Field.constant(mesh, 0.0), cubic_reaction, sqrt_flux,
                      [4.0, 8.0, 16.0], 0.005, 0.2, [2.0], step_cfg,
                      extra_save_times=times_j)
        _, dists = initial_continuity_check(res, Field.constant(mesh, 0.0),
                                            1.5, 0.5, times_j)
        assert np.max(dists) == 0.0


def test_calibration_suite_contains_rough_and_flat(mesh, rng):
    data = calibration_data(mesh, rng)
    sups = sorted(f.sup_norm() for f in data)
    assert sups[-1] == pytest.approx(100.0)
    spike = singular_spike_field(mesh, 0.45)
    assert spike.sup_norm() == pytest.approx(mesh.h ** -0.45, rel=1e-12)
    assert lebesgue_norm(spike, 2.0) < np.inf
