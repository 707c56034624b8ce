import numpy as np
import pytest

from bflux.errors import InconclusiveBlowup
from bflux.grid import Field, Mesh1D, random_trig_field
from bflux.integrator import (RobinLinearProblem, StepConfig, detect_blowup,
                              integrate, solve_robin, step)
from bflux.nonlinearity import PowerNonlinearity

from oracles import cubic_decay


class LinearReaction:
    """Handle for f(s) = s, which the power family cannot express."""

    def eval_with_derivative(self, s):
        return s, 1.0


class ConstantFlux:
    def __init__(self, value):
        self.value = value

    def eval_with_derivative(self, s):
        return self.value, 0.0


class NegativeSquare:
    """f(s) = -s|s|, turning the interior ODE into y' = y^2."""

    def eval_with_derivative(self, s):
        return -s * np.abs(s), -2.0 * np.abs(s)


class TestStep:
    def test_flat_heat_is_steady(self, mesh, step_cfg):
        v = step(Field.constant(mesh, 3.0), None, None, step_cfg)
        assert np.array_equal(v.values, np.full(mesh.n, 3.0))

    def test_linear_reaction_matches_scalar_solve(self, mesh):
        v = step(Field.constant(mesh, 1.0), LinearReaction(), None,
                 StepConfig(dt=0.1))
        assert np.allclose(v.values, 1.0 / 1.1, atol=1e-12)

    def test_constant_influx_mass_rate(self, mesh):
        cfg = StepConfig(dt=1e-4)
        v = step(Field.constant(mesh, 0.0), None, ConstantFlux(1.0), cfg)
        mean = np.trapezoid(v.values, dx=mesh.h) / mesh.length
        assert mean == pytest.approx(2.0 * cfg.dt / mesh.length, rel=1e-6)

    def test_order_preservation(self, mesh, cubic_reaction, sqrt_flux,
                                step_cfg, rng):
        worst = -np.inf
        for _ in range(100):
            lo = random_trig_field(mesh, rng)
            hi = Field(mesh, lo.values
                       + np.abs(random_trig_field(mesh, rng).values))
            v_lo = step(lo, cubic_reaction, sqrt_flux, step_cfg)
            v_hi = step(hi, cubic_reaction, sqrt_flux, step_cfg)
            worst = max(worst, float(np.max(v_lo.values - v_hi.values)))
        assert worst <= 1e-9


class TestIntegrate:
    def test_flat_cubic_decay_follows_scalar_oracle(self, mesh,
                                                    cubic_reaction):
        cfg = StepConfig(dt=1e-3)
        traj = integrate(Field.constant(mesh, 1.0), 10.0, cubic_reaction,
                         None, cfg, sigma_list=[2.0], save_stride=100)
        assert traj.status.is_completed
        assert np.all(np.diff(traj.sup_series) <= 1e-12)
        assert traj.sup_series[-1] == pytest.approx(cubic_decay(1.0, 10.0),
                                                    abs=5 * cfg.dt)

    def test_boundary_dominated_run_blows_up(self, mesh):
        f = PowerNonlinearity(0.1, 3.0)
        g = PowerNonlinearity(0.2, 2.5)
        cfg = StepConfig(dt=1e-3, blowup_threshold=30.0)
        traj = integrate(Field.constant(mesh, 10.0), 1.0, f, g, cfg)
        assert traj.status.is_blown_up
        assert traj.sup_series[-1] >= 30.0
        assert traj.status.t == pytest.approx(traj.times[-1])

    def test_mass_conserved_without_sources(self, mesh):
        u0 = Field.from_function(mesh,
                                 lambda x: np.sin(2 * np.pi * x) + 0.3)
        traj = integrate(u0, 1.0, None, None, StepConfig(dt=1e-3),
                         save_stride=1000)
        m0 = np.trapezoid(u0.values, dx=mesh.h)
        m1 = np.trapezoid(traj.snapshots[-1], dx=mesh.h)
        assert abs(m1 - m0) <= 1e-10

    def test_backward_euler_first_order(self, mesh, cubic_reaction):
        errors = []
        dts = [4e-3, 2e-3, 1e-3]
        for dt in dts:
            traj = integrate(Field.constant(mesh, 1.0), 1.0, cubic_reaction,
                             None, StepConfig(dt=dt), save_stride=10**6)
            errors.append(abs(traj.snapshots[-1][0] - cubic_decay(1.0, 1.0)))
        orders = [np.log2(a / b) for a, b in zip(errors, errors[1:])]
        assert all(0.9 <= o <= 1.1 for o in orders)

    def test_save_times_hit_exactly(self, mesh, cubic_reaction):
        wanted = [0.0013, 0.25, 0.999]
        traj = integrate(Field.constant(mesh, 1.0), 1.0, cubic_reaction, None,
                         StepConfig(dt=1e-3), save_times=wanted)
        for t in wanted:
            assert np.min(np.abs(traj.times - t)) <= 1e-12

    def test_energy_terms_nonnegative(self, mesh, cubic_reaction, sqrt_flux):
        traj = integrate(Field.constant(mesh, 2.0), 0.1, cubic_reaction,
                         sqrt_flux, StepConfig(dt=1e-3), sigma_list=[2.0])
        tr = traj.energy[2.0]
        assert np.all(np.asarray(tr.grad_pow) >= 0.0)
        assert np.all(np.asarray(tr.reaction_pow) >= 0.0)


class TestRobin:
    def test_neumann_steady_state(self, mesh, step_cfg):
        prob = RobinLinearProblem(0.0, 0.0, 0.0, 0.0,
                                  Field.constant(mesh, 4.0))
        traj = solve_robin(prob, 1.0, step_cfg, save_stride=100)
        assert np.allclose(traj.snapshots, 4.0, atol=1e-12)

    def test_exponential_growth_rate(self, mesh):
        cfg = StepConfig(dt=1e-3)
        prob = RobinLinearProblem(1.0, 0.0, 0.0, 0.0,
                                  Field.constant(mesh, 1.0))
        traj = solve_robin(prob, 1.0, cfg, save_stride=10**6)
        discrete_exact = (1.0 - cfg.dt) ** (-round(1.0 / cfg.dt))
        assert traj.snapshots[-1][0] == pytest.approx(discrete_exact,
                                                      rel=1e-12)
        assert traj.snapshots[-1][0] == pytest.approx(np.e, rel=2 * cfg.dt)

    def test_constant_source_integrates_linearly(self, mesh, step_cfg):
        prob = RobinLinearProblem(0.0, 1.0, 0.0, 0.0,
                                  Field.constant(mesh, 0.0))
        traj = solve_robin(prob, 1.0, step_cfg, save_stride=10**6)
        assert np.allclose(traj.snapshots[-1], 1.0, atol=1e-10)

    def test_nonnegative_data_stays_nonnegative(self, mesh, step_cfg, rng):
        u0 = Field(mesh, np.abs(random_trig_field(mesh, rng).values))
        prob = RobinLinearProblem(1.0, 0.5, 4.0, 0.25, u0)
        traj = solve_robin(prob, 0.5, step_cfg, save_stride=20)
        assert np.min(traj.snapshots) >= -1e-12

    def test_rate_too_stiff_for_dt_rejected(self, mesh):
        prob = RobinLinearProblem(2000.0, 0.0, 0.0, 0.0,
                                  Field.constant(mesh, 1.0))
        with pytest.raises(ValueError):
            solve_robin(prob, 1.0, StepConfig(dt=1e-3))


class TestDetectBlowup:
    def test_square_growth_confirmed(self, coarse_mesh):
        def factory(dt):
            cfg = StepConfig(dt=dt, blowup_threshold=100.0)
            return integrate(Field.constant(coarse_mesh, 1.0), 2.0,
                             NegativeSquare(), None, cfg, save_stride=10**6)

        verdict = detect_blowup(factory, [1e-2, 2.5e-3, 6.25e-4])
        assert verdict.confirmed
        # crossing the cutoff M happens at 1 - 1/M for the exact flow
        assert verdict.t_star_estimates[-1] == pytest.approx(0.99, abs=5e-3)

    def test_heat_flow_unconfirmed(self, coarse_mesh):
        def factory(dt):
            cfg = StepConfig(dt=dt, blowup_threshold=100.0)
            return integrate(Field.constant(coarse_mesh, 5.0), 0.5, None,
                             None, cfg, save_stride=10**6)

        verdict = detect_blowup(factory, [1e-2, 2.5e-3, 6.25e-4])
        assert not verdict.confirmed

    def test_dissipative_large_data_unconfirmed(self, coarse_mesh,
                                                cubic_reaction, sqrt_flux):
        def factory(dt):
            cfg = StepConfig(dt=dt, blowup_threshold=1e4)
            return integrate(Field.constant(coarse_mesh, 100.0), 0.5,
                             cubic_reaction, sqrt_flux, cfg,
                             save_stride=10**6)

        verdict = detect_blowup(factory, [2e-3, 1e-3, 5e-4])
        assert not verdict.confirmed

    def test_schedule_validation(self, coarse_mesh):
        with pytest.raises(ValueError):
            detect_blowup(lambda dt: None, [1e-2, 1e-3])
        with pytest.raises(ValueError):
            detect_blowup(lambda dt: None, [1e-3, 1e-2, 1e-4])

    def test_mixed_outcomes_flagged(self, coarse_mesh):
        class FakeTraj:
            def __init__(self, kind, t):
                from bflux.integrator import TrajectoryStatus
                self.status = TrajectoryStatus(kind, t)

        outcomes = iter([FakeTraj("blown_up", 0.5),
                         FakeTraj("completed", 1.0),
                         FakeTraj("blown_up", 0.4)])
        with pytest.raises(InconclusiveBlowup):
            detect_blowup(lambda dt: next(outcomes), [1e-2, 5e-3, 2.5e-3])
