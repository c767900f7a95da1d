import math

import numpy as np
import pytest

from extinctlab.profiles import ConstantPotential, OmegaProfile, PotentialField
from extinctlab.solver import (
    ProblemSpec,
    RadialGrid,
    Stepper,
    ode_extinction_time,
    positivity_probe,
    run,
    step,
)


def exact_ode(t, q=0.5, eps=1.0, u0=1.0):
    base = u0 ** (1 - q) - eps * (1 - q) * t
    return max(base, 0.0) ** (1.0 / (1.0 - q))


class TestGrid:
    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_total_volume(self, N):
        g = RadialGrid.uniform(257, radius=1.0, dimension=N)
        assert g.volumes.sum() == pytest.approx(g.total_volume, rel=1e-12)
        assert np.all(g.volumes > 0)
        assert np.all(np.diff(g.centers) > 0)

    def test_bad_faces_rejected(self):
        with pytest.raises(ValueError):
            RadialGrid.from_faces([0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            RadialGrid.from_faces([0.0, 0.2, 0.2])


class TestStep:
    def test_constant_is_heat_steady_state(self):
        g = RadialGrid.uniform(100)
        u = np.ones(100)
        for dt in (1e-4, 1e-2, 1.0):
            out = step(g, u, dt, potential=None, q=0.5)
            assert np.allclose(out, 1.0, atol=1e-13)

    @pytest.mark.parametrize("N", [1, 3])
    def test_mass_conserved_per_step(self, N):
        g = RadialGrid.uniform(300, dimension=N)
        rng = np.random.RandomState(0)
        u = rng.uniform(0.0, 2.0, 300)
        m0 = g.integrate(u)
        out = step(g, u, 1e-3, potential=None, q=0.5)
        assert g.integrate(out) == pytest.approx(m0, rel=1e-12)

    def test_spatially_constant_absorption_tracks_ode(self):
        # one semi-implicit step differs from the exact ODE flow by O(dt^2)
        g = RadialGrid.uniform(50)
        errs = []
        for dt in (2e-3, 1e-3, 5e-4):
            out = step(g, np.ones(50), dt, potential=ConstantPotential(1.0), q=0.5)
            errs.append(abs(out[0] - exact_ode(dt)))
        errs = np.array(errs)
        rates = np.log2(errs[:-1] / errs[1:])
        assert np.all(rates > 1.7)

    def test_nonnegativity_under_huge_dt(self):
        g = RadialGrid.uniform(64)
        rng = np.random.RandomState(1)
        u = rng.uniform(0.0, 1.0, 64)
        out = step(g, u, 10.0, potential=ConstantPotential(5.0), q=0.3)
        assert np.all(out >= 0.0)

    def test_maximum_principle_heat(self):
        g = RadialGrid.uniform(128, dimension=2)
        rng = np.random.RandomState(2)
        u = rng.uniform(0.5, 1.5, 128)
        out = step(g, u, 5e-3, potential=None, q=0.5)
        assert out.max() <= u.max() + 1e-12
        assert out.min() >= u.min() - 1e-12

    def test_energy_identity_per_step(self):
        # drop of the L2 energy matches dt * (gradient + absorption) to O(dt^2)
        prof = PotentialField(1.0, OmegaProfile.power(1.0))
        g = RadialGrid.uniform(400)
        u = 1.0 + np.cos(math.pi * g.centers)
        st = Stepper(g, prof, q=0.5)
        residuals = []
        for dt in (4e-3, 2e-3, 1e-3):
            u_star = st.diffuse(u, dt)
            u_new = st.absorb(u_star, dt)
            drop = 0.5 * (g.integrate(u**2) - g.integrate(u_new**2))
            dissip = dt * (st.gradient_energy(u_star) + st.absorption_energy(u_new))
            residuals.append(abs(drop - dissip))
        residuals = np.array(residuals)
        rates = np.log2(residuals[:-1] / residuals[1:])
        assert np.all(rates > 1.6)


class TestRun:
    def test_ode_regime_extinction_time(self):
        spec = ProblemSpec(q=0.5, potential=ConstantPotential(1.0), u0=1.0,
                           cells=200, dt=1e-3, horizon=2.5)
        traj = run(spec)
        assert traj.extinction_time is not None
        assert traj.extinction_time == pytest.approx(2.0, rel=1e-2)

    def test_heat_run_no_extinction(self):
        spec = ProblemSpec(q=0.5, potential=None, u0=1.0, cells=100,
                           dt=1e-2, horizon=1.0)
        traj = run(spec)
        assert traj.verdict == "horizon-reached"
        assert np.allclose(traj.linf, 1.0, atol=1e-12)

    def test_l2_monotone_decay(self):
        spec = ProblemSpec(q=0.5, potential=ConstantPotential(0.5),
                           u0="random", cells=200, dt=1e-3, horizon=0.5, seed=7)
        traj = run(spec)
        assert np.all(np.diff(traj.l2sq) <= 1e-14)

    def test_mass_conserved_over_many_steps(self):
        spec = ProblemSpec(q=0.5, potential=None, u0="random", cells=300,
                           dt=1e-3, horizon=1.0, seed=3)
        traj = run(spec)
        drift = np.abs(traj.mass - traj.mass[0]) / traj.mass[0]
        assert drift.max() < 1e-11

    def test_nonnegative_states(self):
        spec = ProblemSpec(q=0.5, potential=ConstantPotential(2.0),
                           u0="random", cells=150, dt=2e-3, horizon=1.0, seed=5)
        traj = run(spec)
        assert traj.umin.min() >= 0.0

    def test_decay_with_interior_absorption_patch(self):
        # absorption supported on an annulus still sends the L2 norm to zero
        patch = PotentialField(1.0, OmegaProfile.log_power(2.0))
        spec = ProblemSpec(q=0.5, potential=patch, u0=1.0, cells=400,
                           dt=2e-3, horizon=8.0)
        traj = run(spec)
        assert traj.l2sq[-1] < traj.l2sq[0]
        keep = traj.times > 1.0
        rate = -np.polyfit(traj.times[keep], np.log(traj.l2sq[keep]), 1)[0]
        assert rate > 0.0

    def test_temporal_convergence_order(self):
        ref = ode_extinction_time(1.0, 0.5, 1.0)
        errs = []
        for dt in (4e-3, 2e-3, 1e-3):
            spec = ProblemSpec(q=0.5, potential=ConstantPotential(1.0),
                               u0=1.0, cells=50, dt=dt, horizon=2.5)
            traj = run(spec)
            k = np.searchsorted(traj.times, 1.0)
            errs.append(abs(traj.linf[k] - exact_ode(traj.times[k])))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 0.8)  # first order in dt

    def test_spatial_convergence_order(self):
        # Neumann eigenmode cos(pi r) decays like exp(-pi^2 t) in 1-d
        errs = []
        t_end = 0.02
        for cells in (50, 100, 200):
            g = RadialGrid.uniform(cells)
            dt = t_end / math.ceil(t_end / (0.2 / cells**2))
            spec = ProblemSpec(q=0.5, potential=None,
                               u0=1.0 + np.cos(math.pi * g.centers),
                               cells=cells, dt=dt, horizon=t_end)
            traj = run(spec)
            exact = 1.0 + math.exp(-math.pi**2 * t_end) * np.cos(math.pi * g.centers)
            errs.append(np.max(np.abs(traj.snapshots[-1] - exact)))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 1.6)


class TestOdeExtinctionTime:
    def test_unit_case(self):
        assert ode_extinction_time(1.0, 0.5, 1.0) == pytest.approx(2.0)

    def test_zero_data(self):
        assert ode_extinction_time(1.0, 0.5, 0.0) == 0.0

    def test_scaling(self):
        assert ode_extinction_time(2.0, 0.5, 4.0) == pytest.approx(2.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ode_extinction_time(0.0, 0.5, 1.0)
        with pytest.raises(ValueError):
            ode_extinction_time(1.0, 1.5, 1.0)


class TestPositivityProbe:
    def test_no_absorption_keeps_floor(self):
        spec = ProblemSpec(q=0.5, potential=None, u0=0.3, floor=0.3,
                           cells=100, dt=1e-2, horizon=2.0)
        rep = positivity_probe(spec)
        assert not rep.collapsed
        assert rep.final_min == pytest.approx(0.3, rel=1e-12)
        assert abs(rep.decay_rate) < 1e-10

    def test_uniform_absorption_collapses_before_ode_time(self):
        spec = ProblemSpec(q=0.5, potential=ConstantPotential(1.0), u0=1.0,
                           floor=1.0, cells=100, dt=1e-3, horizon=3.0)
        rep = positivity_probe(spec)
        assert rep.collapsed
        assert rep.times[-1] <= ode_extinction_time(1.0, 0.5, 1.0) * 1.01

    def test_superflat_potential_keeps_positive(self):
        # omega unbounded at 0 confines the absorption to a boundary shell;
        # the minimum survives a desk-scale horizon
        pot = PotentialField(1.0, OmegaProfile.log_singular(25.0))
        spec = ProblemSpec(q=0.5, potential=pot, u0=1.0, floor=1.0,
                           cells=400, dt=5e-3, horizon=10.0)
        rep = positivity_probe(spec)
        assert not rep.collapsed
        assert rep.final_min > 1e-2
        assert rep.decay_rate < 0.2
