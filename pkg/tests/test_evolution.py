"""Tests for the time integrators and the simulation driver."""

import numpy as np
import pytest

import spheremap.evolution as evo
from spheremap.evolution import (
    SimConfig,
    default_dt,
    evolve_msm,
    free_propagator,
    rk4_update,
    run,
    sm_rhs,
    step_rk4_projected,
)
from spheremap.gauge import derive_psi
from spheremap.geometry import SphereField, coulomb_fix, projection_frame
from spheremap.initial_data import InitialDataSpec, generate_initial
from spheremap.spectral import Grid, laplacian, vector_apply

Q = np.array([0.0, 0.0, 1.0])


def coords(grid):
    return [np.broadcast_to(grid.coordinate(m), grid.shape) for m in range(1, grid.d + 1)]


def constant_field(grid):
    return SphereField(grid, np.broadcast_to(Q.reshape(3, 1, 1), (3,) + grid.shape).copy())


def bump_field(grid, eps=0.05, **kw):
    return generate_initial(InitialDataSpec(amplitude=eps, **kw), grid)


def evolve(s, dt, nsteps):
    for _ in range(nsteps):
        s = step_rk4_projected(s, dt)
    return s


class TestSmRhs:
    def test_constant_map(self):
        g = Grid(d=2, n=8)
        assert np.max(np.abs(sm_rhs(constant_field(g)))) < 1e-14

    def test_pointwise_orthogonality(self):
        g = Grid(d=2, n=16)
        s = bump_field(g, eps=0.3)
        rhs = sm_rhs(s)
        dots = np.sum(rhs * s.values, axis=0)
        assert np.max(np.abs(dots)) < 1e-12

    def test_linearization_slope(self):
        # rhs approaches q x Laplacian(s - q) at second order in the
        # amplitude; generic two-component data realizes the quadratic rate
        # (great-circle data is special and deviates only at third order)
        g = Grid(d=2, n=16)

        def deviation(eps):
            s = bump_field(g, eps=eps, kind="band-limited-random", seed=3)
            rhs = sm_rhs(s)
            diff = s.values - Q.reshape(3, 1, 1)
            lin = np.cross(
                np.broadcast_to(Q.reshape(3, 1, 1), diff.shape),
                vector_apply(lambda c: laplacian(g, c), diff).real,
                axisa=0,
                axisb=0,
                axis=0,
            )
            return np.max(np.abs(rhs - lin))

        e1, e2 = deviation(0.1), deviation(0.05)
        assert e1 / e2 == pytest.approx(4.0, rel=0.3)


class TestStepRk4Projected:
    def test_fixed_point(self):
        g = Grid(d=2, n=8)
        s = constant_field(g)
        out = step_rk4_projected(s, default_dt(g))
        assert np.array_equal(out.values, s.values)

    def test_richardson_order(self):
        g = Grid(d=2, n=16)
        s0 = bump_field(g, eps=0.1)
        dt = default_dt(g)
        ref = evolve(s0, dt / 8, 256)
        e1 = np.max(np.abs(evolve(s0, dt, 32).values - ref.values))
        e2 = np.max(np.abs(evolve(s0, dt / 2, 64).values - ref.values))
        assert e1 / e2 == pytest.approx(16.0, rel=0.2)

    def test_per_step_unit_violation(self):
        g = Grid(d=2, n=64)
        s = bump_field(g, eps=0.05)
        dt = default_dt(g)
        worst = 0.0
        for _ in range(10):
            raw = rk4_update(s, dt)
            worst = max(worst, float(np.max(np.abs(np.sqrt(np.sum(raw**2, axis=0)) - 1))))
            s = step_rk4_projected(s, dt)
        assert worst <= 1e-6

    def test_reversibility(self):
        g = Grid(d=2, n=16)
        s0 = bump_field(g, eps=0.1)
        dt = default_dt(g)
        # single-step truncation error, estimated by step halving
        fine = step_rk4_projected(step_rk4_projected(s0, dt / 2), dt / 2)
        tau = np.max(np.abs(step_rk4_projected(s0, dt).values - fine.values))
        back = step_rk4_projected(step_rk4_projected(s0, dt), -dt)
        assert np.max(np.abs(back.values - s0.values)) <= 10 * tau


class TestEvolveMsm:
    def test_zero_state(self):
        g = Grid(d=2, n=8)
        psi = np.zeros((2,) + g.shape, dtype=complex)
        out = evolve_msm(g, psi, 0.01)
        assert np.max(np.abs(out)) == 0.0

    def test_free_phase(self):
        g = Grid(d=2, n=16)
        x1 = coords(g)[0]
        psi = np.zeros((2,) + g.shape, dtype=complex)
        psi[0] = np.exp(1j * x1)
        dt = 0.37
        out = evolve_msm(g, psi, dt, nonlinear=False)
        expected = np.exp(-1j * dt) * np.exp(1j * x1)
        assert np.max(np.abs(out[0] - expected)) < 1e-14
        assert np.max(np.abs(free_propagator(g, psi, dt)[0] - expected)) < 1e-14

    def test_richardson_order(self):
        g = Grid(d=2, n=16)
        spec = InitialDataSpec(amplitude=0.15)
        s0 = generate_initial(spec, g)
        qp = np.cross(Q, spec.resolved_u())
        frame0, _, _ = coulomb_fix(projection_frame(s0, qp))
        psi0 = derive_psi(frame0)
        dt = default_dt(g)

        def msm_evolve(psi, step, n):
            for _ in range(n):
                psi = evolve_msm(g, psi, step)
            return psi

        ref = msm_evolve(psi0, dt / 8, 128)
        e1 = np.max(np.abs(msm_evolve(psi0, dt, 16) - ref))
        e2 = np.max(np.abs(msm_evolve(psi0, dt / 2, 32) - ref))
        assert e1 / e2 == pytest.approx(16.0, rel=0.2)


class TestScalingSymmetry:
    def test_parabolic_rescaling_exact(self):
        # run A on (n, L) with step dt versus run B on (n, L/2) with step
        # dt/4 and rescaled data: snapshots at matched times coincide
        g_a = Grid(d=2, n=24, length=2 * np.pi)
        g_b = Grid(d=2, n=24, length=np.pi)
        sa = bump_field(g_a, eps=0.05)
        sb = SphereField(g_b, sa.values.copy(), q=sa.q)
        dta = default_dt(g_a)
        worst = 0.0
        for _ in range(5):
            for _ in range(8):
                sa = step_rk4_projected(sa, dta)
                sb = step_rk4_projected(sb, dta / 4)
            worst = max(worst, float(np.max(np.abs(sa.values - sb.values))))
        # measured truncation error of run A at one matched time
        ref = evolve(bump_field(g_a, eps=0.05), dta / 2, 80)
        tau = np.max(np.abs(evolve(bump_field(g_a, eps=0.05), dta, 40).values - ref.values))
        assert worst <= 10 * max(tau, 1e-15)


class TestSimConfig:
    def test_stability_bound_enforced(self):
        g = Grid(d=2, n=16)
        with pytest.raises(ValueError, match="stability"):
            SimConfig(grid=g, dt=10.0 * default_dt(g), steps=1)

    def test_unknown_integrator(self):
        g = Grid(d=2, n=16)
        with pytest.raises(ValueError, match="integrator"):
            SimConfig(grid=g, integrator="leapfrog")

    def test_negative_steps(self):
        g = Grid(d=2, n=16)
        with pytest.raises(ValueError, match="steps"):
            SimConfig(grid=g, steps=-1)

    def test_default_dt_is_stable(self):
        for d, n in ((2, 16), (3, 12), (4, 8)):
            g = Grid(d=d, n=n)
            assert default_dt(g) * g.k_max**2 <= 2.8 + 1e-12


class TestRun:
    def test_zero_steps_returns_initial(self):
        g = Grid(d=2, n=16)
        config = SimConfig(grid=g, initial=InitialDataSpec(amplitude=0.05), steps=0)
        record = run(config)
        assert len(record.rows) == 1
        assert len(record.snapshots) == 1
        s0 = generate_initial(config.initial, g)
        assert np.array_equal(record.snapshots[0][1].values, s0.values)

    def test_row_cadence(self):
        g = Grid(d=2, n=16)
        config = SimConfig(grid=g, initial=InitialDataSpec(amplitude=0.02), steps=8, cadence=2)
        record = run(config)
        assert len(record.rows) == 1 + 8 // 2
        assert record.times == pytest.approx(
            [0.0] + [k * config.resolved_dt() for k in (2, 4, 6, 8)]
        )

    def test_determinism(self):
        g = Grid(d=2, n=16)
        config = SimConfig(grid=g, initial=InitialDataSpec(amplitude=0.05, seed=7), steps=6)
        r1, r2 = run(config), run(config)
        assert [a.as_tuple() for a in r1.rows] == [b.as_tuple() for b in r2.rows]
        assert np.array_equal(r1.snapshots[-1][1].values, r2.snapshots[-1][1].values)

    @pytest.mark.parametrize("d,n,width", [(2, 16, None), (3, 12, 0.8)])
    def test_msm_dual_track(self, d, n, width):
        # the wider bump keeps the coarse d=3 lattice resolved, so the
        # mismatch measures the integrators rather than spatial truncation
        g = Grid(d=d, n=n)
        config = SimConfig(
            grid=g,
            initial=InitialDataSpec(amplitude=0.02, width=width),
            steps=10,
            cadence=5,
            integrator="strang-msm",
        )
        record = run(config)
        assert record.msm_mismatch is not None
        assert len(record.msm_mismatch) == len(record.rows)
        assert record.msm_mismatch[0] == 0.0
        assert all(m < 1e-3 for m in record.msm_mismatch)

    def test_blowup_aborts_with_partial_record(self, monkeypatch, tmp_path):
        g = Grid(d=2, n=16)
        config = SimConfig(
            grid=g,
            initial=InitialDataSpec(amplitude=0.05),
            steps=10,
            cadence=1,
            out_dir=str(tmp_path),
        )
        counter = {"n": 0}
        real_update = evo.rk4_update

        def failing_update(s, dt):
            counter["n"] += 1
            out = real_update(s, dt)
            if counter["n"] >= 4:
                out = out * 5.0  # push lengths outside [1/2, 2]
            return out

        monkeypatch.setattr(evo, "rk4_update", failing_update)
        record = run(config)
        assert record.aborted
        assert "length" in record.abort_reason
        assert len(record.rows) == 4  # t = 0 plus three completed steps
        assert (tmp_path / "diagnostics.csv").exists()
