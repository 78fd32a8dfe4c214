
import numpy as np
import pytest

from chemolab.errors import CFLError, InconclusiveError, StepNumericError
from chemolab.model import (Constant, DecaySignal, Grid, HomogeneousPeriodic, ModelParams,
                            PeriodicSignal, SeparablePerturbed, integral)
from chemolab.ode import OdeState, equilibrium_constant_f, integrate_ode
from chemolab.pde import (PdeState, SchemeConfig, export_field, mass_balance_residual,
                          read_field, run, spatial_order_check, step, step_split)

P = ModelParams(D=1.0, chi=1.0, r=2.0, a=1.0)


def cosine_state(grid, u0=0.5, v0=0.5, eps=0.2):
    x = grid.centers()[0]
    return PdeState(u0 * (1 + eps * np.cos(np.pi * x)), v0 * (1 + eps * np.cos(2 * np.pi * x)),
                    0.0, grid)


def separable(grid):
    x = grid.centers()[0]
    return SeparablePerturbed(PeriodicSignal(1.0, 0.25), DecaySignal(1.0, 1.0),
                              np.cos(2 * np.pi * x), grid)


class TestState:
    def test_fields_are_read_only_copies(self):
        g = Grid.interval(4)
        u = np.ones(4)
        s = PdeState(u, np.ones(4), 0.0, g)
        u[0] = 5.0
        assert s.u[0] == 1.0
        with pytest.raises(ValueError):
            s.u[0] = 2.0

    def test_with_split(self):
        s = PdeState(np.ones(3), np.array([1.0, 2.0, 4.0]), 0.0, Grid.interval(3)).with_split()
        np.testing.assert_array_equal(s.w + s.z, s.v)

    def test_scheme_config_validation(self):
        with pytest.raises(ValueError):
            SchemeConfig(0.0)
        with pytest.raises(ValueError):
            SchemeConfig(1e-3, cfl_safety=1.5)
        with pytest.raises(ValueError):
            SchemeConfig(1e-3, theta_diffusion=0.5)


class TestStep:
    def test_zero_stays_zero(self):
        g = Grid.interval(16)
        s = PdeState(np.zeros(16), np.zeros(16), 0.0, g)
        out = step(s, P, Constant(0.0), SchemeConfig(1e-2))
        assert not out.u.any() and not out.v.any()
        assert out.t == pytest.approx(1e-2)

    @pytest.mark.parametrize("grid", [Grid.interval(32), Grid.rectangle(8, 6, lx=1.5)])
    def test_uniform_equilibrium_is_fixed(self, grid):
        us, vs = equilibrium_constant_f(P, 1.0).interior
        s = PdeState(np.full(grid.shape, us), np.full(grid.shape, vs), 0.0, grid)
        cfg = SchemeConfig(1e-2)
        for _ in range(5):
            s = step(s, P, Constant(1.0), cfg)
        assert np.max(np.abs(s.u - us)) <= 1e-10
        assert np.max(np.abs(s.v - vs)) <= 1e-10

    def test_backends_agree(self):
        g = Grid.interval(40)
        s0 = cosine_state(g)
        src = separable(g)
        a = run(s0, P, src, SchemeConfig(1e-3, backend="numba"), 1.0, 1.0)[-1][0]
        b = run(s0, P, src, SchemeConfig(1e-3, backend="numpy"), 1.0, 1.0)[-1][0]
        np.testing.assert_allclose(a.u, b.u, atol=1e-12)
        np.testing.assert_allclose(a.v, b.v, atol=1e-12)

    def test_2d_with_one_row_matches_1d(self):
        g1, g2 = Grid.interval(24), Grid((24, 1))
        s1 = cosine_state(g1)
        s2 = PdeState(s1.u.reshape(24, 1), s1.v.reshape(24, 1), 0.0, g2)
        cfg = SchemeConfig(1e-3)
        a = run(s1, P, Constant(1.0), cfg, 0.5, 0.5)[-1][0]
        b = run(s2, P, Constant(1.0), cfg, 0.5, 0.5)[-1][0]
        np.testing.assert_allclose(a.u, b.u.ravel(), atol=1e-10)

    def test_2d_symmetric_data_stays_symmetric(self):
        g = Grid.rectangle(12, 12)
        x, y = g.centers()
        u = 0.5 + 0.1 * np.cos(np.pi * x) * np.cos(np.pi * y)
        s = PdeState(u, 1.0 + 0.1 * np.cos(np.pi * x) * np.cos(np.pi * y), 0.0, g)
        out = run(s, P, Constant(1.0), SchemeConfig(1e-3), 0.2, 0.2)[-1][0]
        np.testing.assert_allclose(out.u, out.u.T, atol=1e-10)

    def test_cfl_violation(self):
        g = Grid.interval(64)
        x = g.centers()[0]
        s = PdeState(np.full(64, 0.5), 2 + 2 * np.cos(4 * np.pi * x), 0.0, g)
        p = ModelParams(D=1.0, chi=20.0, r=2.0)
        with pytest.raises(CFLError) as info:
            step(s, p, Constant(1.0), SchemeConfig(1e-2))
        assert 0 < info.value.suggested_dt < 1e-2
        # the suggested step goes through
        step(s, p, Constant(1.0), SchemeConfig(info.value.suggested_dt))

    def test_adaptive_halving_recovers(self):
        g = Grid.interval(64)
        x = g.centers()[0]
        s = PdeState(np.full(64, 0.5), 2 + 2 * np.cos(4 * np.pi * x), 0.0, g)
        p = ModelParams(D=1.0, chi=20.0, r=2.0)
        out = run(s, p, Constant(1.0), SchemeConfig(1e-2, adaptive=True), 0.1, 0.05)
        assert out[-1][0].t == pytest.approx(0.1)
        assert out[-1][0].u.min() >= -1e-12

    def test_positivity_loss_names_cell(self):
        # explicit reaction with a huge step overshoots below zero
        g = Grid.interval(4)
        s = PdeState(np.full(4, 0.5), np.full(4, 3.0), 0.0, g)
        with pytest.raises(StepNumericError) as info:
            step(s, ModelParams(1.0, 0.0, 1.0), Constant(3.0), SchemeConfig(5.0))
        assert info.value.cell is not None

    def test_positivity_under_cfl(self):
        rng = np.random.default_rng(1)
        g = Grid.interval(50)
        s = PdeState(rng.uniform(0, 1, 50), rng.uniform(0, 1, 50), 0.0, g)
        out = run(s, ModelParams(0.1, 2.0, 3.0, 1.0), Constant(0.5),
                  SchemeConfig(1e-4, adaptive=True), 0.5, 0.1)
        for state, _ in out:
            assert state.u.min() >= -1e-12 and state.v.min() >= -1e-12


class TestSplit:
    def test_identical_linear_parts(self):
        g = Grid.interval(32)
        s = cosine_state(g).with_split()
        p = ModelParams(1.0, 1.0, 2.0, 0.0)
        cfg = SchemeConfig(1e-3, track_split=True)
        for _ in range(20):
            s = step_split(s, p, Constant(0.0), cfg)
        np.testing.assert_array_equal(s.w, s.z)
        np.testing.assert_allclose(s.w + s.z, s.v, atol=1e-14)

    def test_split_fixed_points(self):
        g = Grid.interval(8)
        a, u, c = 0.7, 0.4, 1.3
        p = ModelParams(1.0, 1.0, 1.0, a)
        # r = 1 and v ~ a u + c > 1 - u, so u decays; pin it by reading only w, z limits
        s = PdeState(np.full(8, u), np.full(8, a * u + c), 0.0, g, np.full(8, a * u), np.full(8, c))
        out = step_split(s, p, Constant(c), SchemeConfig(1e-3))
        np.testing.assert_allclose(out.z, c, atol=1e-14)
        np.testing.assert_allclose(out.w, a * u, atol=1e-14)

    def test_split_defect_along_run(self):
        g = Grid.interval(64)
        s = cosine_state(g).with_split()
        out = run(s, ModelParams(1, 1, 6, 0.5), separable(g), SchemeConfig(1e-3, track_split=True),
                  5.0, 0.5)
        for state, _ in out:
            assert np.max(np.abs(state.w + state.z - state.v)) <= 1e-10 * (1 + np.max(np.abs(state.v)))

    def test_requires_split_fields(self):
        g = Grid.interval(4)
        with pytest.raises(ValueError):
            step_split(PdeState(np.ones(4), np.ones(4), 0.0, g), P, Constant(1.0), SchemeConfig(1e-3))


class TestMassBalance:
    def test_single_step(self):
        g = Grid.interval(64)
        s = cosine_state(g)
        dt = 1e-3
        out = step(s, P, separable(g), SchemeConfig(dt))
        assert mass_balance_residual(s, out, P, dt) <= 1e-12 * (1 + integral(s.u, g))

    def test_no_transport(self):
        g = Grid.interval(16)
        s = cosine_state(g)
        p = ModelParams(1.0, 0.0, 2.0, 1.0)
        out = step(s, p, Constant(1.0), SchemeConfig(1e-3))
        assert mass_balance_residual(s, out, p, 1e-3) <= 1e-14

    def test_random_steps(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            g = Grid.interval(int(rng.integers(4, 80)))
            s = PdeState(rng.uniform(0, 1, g.shape), rng.uniform(0, 1, g.shape), 0.0, g)
            p = ModelParams(rng.uniform(0.1, 2), rng.uniform(-2, 2), rng.uniform(0.5, 5), rng.uniform(0, 2))
            dt = 2e-5
            out = step(s, p, Constant(rng.uniform(0, 2)), SchemeConfig(dt, adaptive=True))
            worst = max(worst, mass_balance_residual(s, out, p, dt))
        assert worst <= 1e-11

    def test_2d(self):
        rng = np.random.default_rng(8)
        g = Grid.rectangle(10, 7, lx=0.8)
        s = PdeState(rng.uniform(0.2, 1, g.shape), rng.uniform(0.2, 1, g.shape), 0.0, g)
        out = step(s, P, Constant(1.0), SchemeConfig(1e-4))
        assert mass_balance_residual(s, out, P, 1e-4) <= 1e-11


class TestRun:
    def test_equilibrium_diagnostics_constant(self):
        g = Grid.interval(16)
        us, vs = equilibrium_constant_f(P, 1.0).interior
        s = PdeState(np.full(16, us), np.full(16, vs), 0.0, g)
        out = run(s, P, Constant(1.0), SchemeConfig(1e-2), 5.0, 1.0)
        assert len(out) == 6
        for _, rec in out:
            assert rec.mass_u == pytest.approx(us, abs=1e-12)
            assert rec.k1 <= 1e-20 and rec.k2 <= 1e-20 and rec.k3 <= 1e-20

    def test_perturbed_equilibrium_relaxes(self):
        g = Grid.interval(64)
        p = ModelParams(1.0, 1.0, 5.0, 1.0)
        us, vs = equilibrium_constant_f(p, 1.0).interior
        x = g.centers()[0]
        s = PdeState(us * (1 + 0.1 * np.cos(2 * np.pi * x)), np.full(64, vs), 0.0, g)
        out = run(s, p, Constant(1.0), SchemeConfig(1e-3), 30.0, 0.02)
        t = np.array([rec.t for _, rec in out])
        k1 = np.array([rec.k1 for _, rec in out])
        assert k1[t <= 0.2].max() == k1[0]
        # past the u/v mode exchange, monotone until it reaches round-off level
        live = k1[(t >= 0.3) & (k1 > 1e-24)]
        assert live.size > 10 and np.all(np.diff(live) <= 0)
        final = out[-1][0]
        assert max(np.max(np.abs(final.u - us)), np.max(np.abs(final.v - vs))) < 1e-4

    def test_supply_above_growth_kills_cells(self):
        g = Grid.interval(32)
        out = run(cosine_state(g), ModelParams(1, 1, 1, 0), Constant(2.0), SchemeConfig(1e-3), 40.0, 5.0)
        final = out[-1][0]
        assert final.u.max() < 1e-6
        np.testing.assert_allclose(final.v, 2.0, atol=1e-6)

    def test_uniform_data_tracks_ode(self):
        g = Grid.interval(8)
        spec = HomogeneousPeriodic(PeriodicSignal(1.0, 0.5))
        gaps = []
        for dt in (2e-3, 1e-3):
            s = PdeState(np.full(8, 0.5), np.full(8, 0.5), 0.0, g)
            out = run(s, P, spec, SchemeConfig(dt), 5.0, 0.5)
            ode = integrate_ode(OdeState(0.5, 0.5), P, spec, 5.0, [st.t for st, _ in out[1:-1]], 1e-12, 1e-14)
            gap = 0.0
            for (state, _), o in zip(out, ode.samples):
                assert np.ptp(state.u) <= 1e-13
                gap = max(gap, abs(state.u[0] - o.u_tilde), abs(state.v[0] - o.v_tilde))
            gaps.append(gap)
        assert gaps[0] / gaps[1] >= 1.8

    def test_mass_stays_below_logistic_cap(self):
        g = Grid.interval(64)
        for p, f in [(ModelParams(1, 1, 3, 0), Constant(0.5)), (ModelParams(0.5, 2, 6, 0), separable(g))]:
            s = cosine_state(g, u0=1.5)
            cap = max(integral(s.u, g), 1.0) + 0.05
            out = run(s, p, f, SchemeConfig(1e-3), 20.0, 0.5)
            assert max(rec.mass_u for _, rec in out) <= cap

    def test_deterministic(self):
        g = Grid.interval(32)
        a = run(cosine_state(g), P, separable(g), SchemeConfig(1e-3), 2.0, 0.5)
        b = run(cosine_state(g), P, separable(g), SchemeConfig(1e-3), 2.0, 0.5)
        for (sa, ra), (sb, rb) in zip(a, b):
            assert np.array_equal(sa.u, sb.u) and ra == rb

    def test_partial_results_on_failure(self):
        g = Grid.interval(64)
        x = g.centers()[0]
        s = PdeState(np.full(64, 0.5), 1 + 0.01 * np.cos(np.pi * x), 0.0, g)
        # chemical gradients steepen as a u feeds v, eventually breaking the CFL bound
        p = ModelParams(D=0.01, chi=30.0, r=2.0, a=20.0)
        with pytest.raises(CFLError) as info:
            run(s, p, Constant(0.0), SchemeConfig(2e-2), 50.0, 0.1)
        assert info.value.partial and info.value.partial[0][0].t == 0.0


class TestOrder:
    def test_pure_diffusion(self):
        order = spatial_order_check(ModelParams(1, 0, 1, 0), Constant(0.0), refinement_levels=3)
        assert order == pytest.approx(2.0, abs=0.2)

    def test_full_system(self):
        order = spatial_order_check(ModelParams(1, 0.2, 2, 1), Constant(1.0), refinement_levels=4,
                                    mode="full")
        assert order >= 1.5

    def test_needs_three_levels(self):
        with pytest.raises(InconclusiveError):
            spatial_order_check(ModelParams(1, 0, 1, 0), Constant(0.0), refinement_levels=1)


@pytest.mark.parametrize("binary", [False, True])
def test_export_round_trip(tmp_path, binary):
    g = Grid.rectangle(3, 4, lx=0.5)
    values = np.random.default_rng(2).uniform(size=g.shape)
    path = tmp_path / "u.dat"
    export_field(path, values, 1.25, g, binary=binary)
    t, dim, back = read_field(path)
    assert (t, dim) == (1.25, 2)
    assert np.array_equal(back, values.ravel())
    if not binary:
        assert path.read_text().splitlines()[0] == "t=1.25 n=12 dim=2"
